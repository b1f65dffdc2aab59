use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Softmax,
    Identity,
}

/// Exact GELU, `x Phi(x)`.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let x64 = x.as_f64();
    T::lit(0.5 * x64 * (1.0 + libm::erf(x64 * FRAC_1_SQRT_2)))
}

/// `Phi(x) + x phi(x)`.
#[inline]
pub fn gelu_derivative<T: Real>(x: T) -> T {
    let x64 = x.as_f64();
    let cdf = 0.5 * (1.0 + libm::erf(x64 * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x64 * x64).exp() / (2.0 * PI).sqrt();
    T::lit(cdf + x64 * pdf)
}

impl HiddenActivation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            HiddenActivation::Gelu => gelu(x),
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match self {
            HiddenActivation::Gelu => gelu_derivative(x),
        }
    }
}

pub fn softmax<T: Real>(logits: ArrayView1<'_, T>) -> Array1<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = logits.mapv(|z| (z - max).exp());
    let total = out.sum();
    out.mapv_inplace(|p| p / total);
    out
}

/// Row-wise softmax of a `(batch, classes)` matrix.
pub fn softmax_rows<T: Real>(logits: ArrayView2<'_, T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let p = softmax(row.view());
        row.assign(&p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0_f64), 0.0);
        assert!((gelu(1.0_f64) - 0.841345).abs() < 1e-5);
        assert!(gelu(-10.0_f64).abs() < 1e-8);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5_f64] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(array![0.0, 0.0, 0.0_f64].view());
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(array![1000.0, 0.0_f64].view());
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(array![0.3, -1.2, 2.0_f64].view());
        let b = softmax(array![7.3, 5.8, 9.0_f64].view());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.sum() - 1.0).abs() < 1e-12);
    }
}
