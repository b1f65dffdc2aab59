//! Hybrid quantum-classical state sensing.
//!
//! A driven-dissipative Bose-Hubbard lattice with on-site Kerr interaction is
//! simulated in the positive-P representation. Input quantum states are
//! injected through a cascaded source mode, node occupations are turned into
//! binned feature vectors, and classical readouts (a linear baseline and a
//! feed-forward network) are trained on classification, regression and
//! Wigner tomography benchmarks.
//!
//! Numerical kernels are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the benchmarks use.

pub mod bench;
pub mod error;
pub mod features;
pub mod learn;
pub mod oracle;
pub mod reservoir;
pub mod seed;
pub mod states;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

pub use error::{Error, Result};

/// Floating point scalar used by the numerical kernels.
pub trait Real: NdFloat + FromPrimitive + Default + Sum + Debug + Display {
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Complex<T> = num_complex::Complex<T>;

pub type AmplitudePair64 = states::AmplitudePair<f64>;
pub type ReservoirConfig64 = reservoir::ReservoirConfig<f64>;
pub type ResponseRecord64 = reservoir::ResponseRecord<f64>;
pub type TrajectoryState64 = reservoir::TrajectoryState<f64>;
pub type FeatureVector64 = features::FeatureVector<f64>;
pub type Standardizer64 = features::Standardizer<f64>;
pub type Mlp64 = learn::Mlp<f64>;
pub type LinearModel64 = learn::LinearModel<f64>;
pub type AdamState64 = learn::AdamState<f64>;

#[inline]
pub(crate) fn finite<T: Real>(z: &Complex<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
