//! Positive-P phase-space samples for the input states.
//!
//! Each sampler returns pairs `(alpha, alpha_tilde)` whose ensemble reproduces
//! normally ordered moments, e.g. `<n> = Re <alpha alpha_tilde*>`.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Complex, Error, Real, Result};

/// Attempts allowed per accepted cat sample before giving up.
const MAX_CAT_ATTEMPTS: usize = 10_000;
const MIN_CAT_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Coherent,
    SqueezedVacuum,
    Cat,
}

impl StateKind {
    pub fn name(self) -> &'static str {
        match self {
            StateKind::Coherent => "coherent",
            StateKind::SqueezedVacuum => "squeezed_vacuum",
            StateKind::Cat => "cat",
        }
    }
}

impl std::str::FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(StateKind::Coherent),
            "squeezed" | "squeezed_vacuum" => Ok(StateKind::SqueezedVacuum),
            "cat" => Ok(StateKind::Cat),
            other => Err(Error::invalid(format!("unknown state kind `{other}`"))),
        }
    }
}

/// Description of a pure input state.
///
/// Coherent and cat states use `beta = amplitude_mag * exp(i amplitude_phase)`;
/// the cat is `N (|beta> + exp(i cat_phase) |-beta>)`. The squeezed vacuum is
/// `S(zeta)|0>` with `zeta = squeeze_mag * exp(2 i squeeze_phase)`. Fields that
/// do not belong to `kind` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub kind: StateKind,
    #[serde(default)]
    pub amplitude_mag: f64,
    #[serde(default)]
    pub amplitude_phase: f64,
    #[serde(default)]
    pub squeeze_mag: f64,
    #[serde(default)]
    pub squeeze_phase: f64,
    #[serde(default)]
    pub cat_phase: f64,
}

impl StateSpec {
    pub fn coherent(mag: f64, phase: f64) -> Self {
        Self {
            kind: StateKind::Coherent,
            amplitude_mag: mag,
            amplitude_phase: phase,
            ..Self::vacuum()
        }
    }

    pub fn squeezed(r: f64, theta: f64) -> Self {
        Self {
            kind: StateKind::SqueezedVacuum,
            squeeze_mag: r,
            squeeze_phase: theta,
            ..Self::vacuum()
        }
    }

    /// Even cat (`cat_phase = 0`).
    pub fn cat(mag: f64, phase: f64) -> Self {
        Self::cat_with_phase(mag, phase, 0.0)
    }

    pub fn cat_with_phase(mag: f64, phase: f64, cat_phase: f64) -> Self {
        Self {
            kind: StateKind::Cat,
            amplitude_mag: mag,
            amplitude_phase: phase,
            cat_phase,
            ..Self::vacuum()
        }
    }

    pub fn vacuum() -> Self {
        Self {
            kind: StateKind::Coherent,
            amplitude_mag: 0.0,
            amplitude_phase: 0.0,
            squeeze_mag: 0.0,
            squeeze_phase: 0.0,
            cat_phase: 0.0,
        }
    }

    /// Coherent amplitude `beta` (coherent and cat states).
    pub fn beta(&self) -> Complex<f64> {
        Complex::from_polar(self.amplitude_mag, self.amplitude_phase)
    }

    /// Complex squeezing parameter `zeta = r exp(2 i theta)`.
    pub fn zeta(&self) -> Complex<f64> {
        Complex::from_polar(self.squeeze_mag, 2.0 * self.squeeze_phase)
    }

    /// Cat normalisation `[2 (1 + exp(-2|beta|^2) cos(cat_phase))]^{-1/2}`.
    pub fn cat_normalization(&self) -> f64 {
        let b2 = self.amplitude_mag * self.amplitude_mag;
        (2.0 * (1.0 + (-2.0 * b2).exp() * self.cat_phase.cos()))
            .sqrt()
            .recip()
    }

    /// Closed-form mean photon number.
    pub fn mean_photon_closed_form(&self) -> f64 {
        match self.kind {
            StateKind::Coherent => self.amplitude_mag.powi(2),
            StateKind::SqueezedVacuum => self.squeeze_mag.sinh().powi(2),
            StateKind::Cat => {
                let b2 = self.amplitude_mag.powi(2);
                let overlap = (-2.0 * b2).exp() * self.cat_phase.cos();
                b2 * (1.0 - overlap) / (1.0 + overlap)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("amplitude_mag", self.amplitude_mag),
            ("amplitude_phase", self.amplitude_phase),
            ("squeeze_mag", self.squeeze_mag),
            ("squeeze_phase", self.squeeze_phase),
            ("cat_phase", self.cat_phase),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be finite")));
        }
        if self.amplitude_mag < 0.0 {
            return Err(Error::invalid("amplitude_mag must be non-negative"));
        }
        if self.squeeze_mag < 0.0 {
            return Err(Error::invalid("squeeze_mag must be non-negative"));
        }
        Ok(())
    }
}

/// One doubled-phase-space coordinate for a single mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AmplitudePair<T> {
    pub alpha: Complex<T>,
    pub alpha_tilde: Complex<T>,
}

impl<T: Real> AmplitudePair<T> {
    pub fn new(alpha: Complex<T>, alpha_tilde: Complex<T>) -> Self {
        Self { alpha, alpha_tilde }
    }

    pub fn vacuum() -> Self {
        Self::default()
    }

    /// `alpha * conj(alpha_tilde)`; its real part estimates the occupation.
    #[inline]
    pub fn cross(&self) -> Complex<T> {
        self.alpha * self.alpha_tilde.conj()
    }

    pub fn is_finite(&self) -> bool {
        crate::finite(&self.alpha) && crate::finite(&self.alpha_tilde)
    }

    fn from_c64(alpha: Complex<f64>, alpha_tilde: Complex<f64>) -> Self {
        Self {
            alpha: Complex::new(T::lit(alpha.re), T::lit(alpha.im)),
            alpha_tilde: Complex::new(T::lit(alpha_tilde.re), T::lit(alpha_tilde.im)),
        }
    }
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `(q1 + i q2) / sqrt(2)` with unit-variance real parts.
#[inline]
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex<f64> {
    Complex::new(normal(rng), normal(rng)) * FRAC_1_SQRT_2
}

/// A prepared sampler for one state; draws one pair at a time.
#[derive(Debug, Clone, Copy)]
pub struct PhaseSpaceSampler {
    spec: StateSpec,
    /// Squeezed: standard deviations of the two real components of `nu`.
    nu_std: (f64, f64),
}

impl PhaseSpaceSampler {
    pub fn new(spec: &StateSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind == StateKind::Cat && spec.amplitude_mag <= 0.0 {
            return Err(Error::invalid("cat state needs |beta| > 0"));
        }
        let r = spec.squeeze_mag;
        let nu_std = (
            (((-r).exp() * r.cosh()) / 2.0).sqrt(),
            ((r.exp() * r.cosh()) / 2.0).sqrt(),
        );
        Ok(Self {
            spec: *spec,
            nu_std,
        })
    }

    pub fn spec(&self) -> &StateSpec {
        &self.spec
    }

    /// Draw one pair; `coherent` states consume no randomness.
    pub fn draw<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AmplitudePair<T>> {
        match self.spec.kind {
            StateKind::Coherent => {
                let beta = self.spec.beta();
                Ok(AmplitudePair::from_c64(beta, beta))
            }
            StateKind::SqueezedVacuum => Ok(self.draw_squeezed(rng)),
            StateKind::Cat => self.draw_cat(rng).map(|(pair, _)| pair),
        }
    }

    fn draw_squeezed<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> AmplitudePair<T> {
        let delta = complex_gaussian(rng);
        let nu = Complex::new(self.nu_std.0 * normal(rng), self.nu_std.1 * normal(rng));
        let rotated = Complex::from_polar(1.0, self.spec.squeeze_phase) * nu;
        AmplitudePair::from_c64(rotated + delta, rotated - delta)
    }

    /// Rejection sampling of the Husimi-type `mu` marginal against an equal
    /// mixture of unit complex Gaussians at `+beta` and `-beta`.
    ///
    /// Target over proposal is `1 + cos(2 Im(mu* beta) - cat_phase) / cosh(2 Re(mu* beta))`
    /// up to a constant, which never exceeds 2, so the envelope is exact.
    fn draw_cat<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(AmplitudePair<T>, usize)> {
        let beta = self.spec.beta();
        let theta = self.spec.cat_phase;
        for attempt in 1..=MAX_CAT_ATTEMPTS {
            let centre = if rng.random::<bool>() { beta } else { -beta };
            let mu = centre + complex_gaussian(rng);
            let overlap = mu.conj() * beta;
            let accept = 0.5 * (1.0 + (2.0 * overlap.im - theta).cos() / (2.0 * overlap.re).cosh());
            if rng.random::<f64>() < accept {
                let delta = complex_gaussian(rng);
                return Ok((AmplitudePair::from_c64(mu + delta, mu - delta), attempt));
            }
        }
        Err(Error::NumericalDegeneracy(format!(
            "cat rejection sampler accepted nothing in {MAX_CAT_ATTEMPTS} attempts"
        )))
    }
}

fn expect_kind(spec: &StateSpec, kind: StateKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::invalid(format!(
            "expected a {} state, got {}",
            kind.name(),
            spec.kind.name()
        )));
    }
    Ok(())
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    Ok(())
}

/// `count` copies of `(beta, beta)`.
pub fn sample_coherent<T: Real>(spec: &StateSpec, count: usize) -> Result<Vec<AmplitudePair<T>>> {
    expect_kind(spec, StateKind::Coherent)?;
    check_count(count)?;
    spec.validate()?;
    let beta = spec.beta();
    Ok(vec![AmplitudePair::from_c64(beta, beta); count])
}

/// Squeezed vacuum: `alpha = e^{i theta} nu + delta`, `alpha_tilde = e^{i theta} nu - delta`.
pub fn sample_squeezed<T: Real, R: Rng + ?Sized>(
    spec: &StateSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<AmplitudePair<T>>> {
    expect_kind(spec, StateKind::SqueezedVacuum)?;
    check_count(count)?;
    let sampler = PhaseSpaceSampler::new(spec)?;
    Ok((0..count).map(|_| sampler.draw_squeezed(rng)).collect())
}

pub fn sample_cat<T: Real, R: Rng + ?Sized>(
    spec: &StateSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<AmplitudePair<T>>> {
    expect_kind(spec, StateKind::Cat)?;
    check_count(count)?;
    let sampler = PhaseSpaceSampler::new(spec)?;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    for _ in 0..count {
        let (pair, n) = sampler.draw_cat(rng)?;
        attempts += n;
        out.push(pair);
    }
    let rate = count as f64 / attempts as f64;
    if rate < MIN_CAT_ACCEPTANCE {
        return Err(Error::NumericalDegeneracy(format!(
            "cat acceptance rate {rate:.2e} below {MIN_CAT_ACCEPTANCE:e}"
        )));
    }
    Ok(out)
}

/// Dispatch on `spec.kind`.
pub fn sample<T: Real, R: Rng + ?Sized>(
    spec: &StateSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<AmplitudePair<T>>> {
    match spec.kind {
        StateKind::Coherent => sample_coherent(spec, count),
        StateKind::SqueezedVacuum => sample_squeezed(spec, count, rng),
        StateKind::Cat => sample_cat(spec, count, rng),
    }
}

/// Mean of `Re(alpha alpha_tilde*)` and its standard error.
pub fn ensemble_occupation<T: Real>(pairs: &[AmplitudePair<T>]) -> Result<(T, T)> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let values: Vec<T> = pairs.iter().map(|p| p.cross().re).collect();
    Ok(mean_and_se(&values))
}

/// Complex ensemble mean of `alpha alpha_tilde*` with separate standard
/// errors for the real and imaginary parts.
pub fn ensemble_cross_moment<T: Real>(pairs: &[AmplitudePair<T>]) -> Result<(Complex<T>, T, T)> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let re: Vec<T> = pairs.iter().map(|p| p.cross().re).collect();
    let im: Vec<T> = pairs.iter().map(|p| p.cross().im).collect();
    let (mr, sr) = mean_and_se(&re);
    let (mi, si) = mean_and_se(&im);
    Ok((Complex::new(mr, mi), sr, si))
}

pub(crate) fn mean_and_se<T: Real>(values: &[T]) -> (T, T) {
    let n = T::from_usize(values.len()).unwrap();
    let mean = values.iter().copied().sum::<T>() / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let var = ss / (n - T::one());
    (mean, (var / n).sqrt())
}
