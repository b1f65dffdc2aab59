//! Truncated Fock-basis reference for the input states.
//!
//! Used as ground truth for the phase-space samplers and to produce the
//! Wigner-function targets of the tomography task. Everything here is `f64`:
//! the expansions involve factorials up to `cutoff!`, which overflow `f32`.
//!
//! Quadratures follow `x = sqrt(2) Re(alpha)`, `p = sqrt(2) Im(alpha)`, so the
//! vacuum has variance 1/2 in each and `W_vac(0, 0) = 1/pi`.

use std::f64::consts::{FRAC_1_PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::states::{StateKind, StateSpec};
use crate::{Complex, Error, Result};

pub const DEFAULT_CUTOFF: usize = 40;
pub const DEFAULT_GRID_SIZE: usize = 32;
pub const DEFAULT_EXTENT: f64 = 5.0;

/// Retained norm below which the expansion is rejected.
const MIN_RETAINED_NORM: f64 = 0.999;
/// Amplitudes smaller than this are dropped from the Wigner sum.
const NEGLIGIBLE_AMPLITUDE: f64 = 1e-17;

#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amplitudes: Vec<Complex<f64>>,
}

impl FockVector {
    pub fn cutoff(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex<f64>] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn mean_photon(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Pure-state density matrix `rho_mn = c_m conj(c_n)`, row-major.
    pub fn density_matrix(&self) -> Vec<Complex<f64>> {
        let n = self.cutoff();
        let mut rho = vec![Complex::new(0.0, 0.0); n * n];
        for (m, cm) in self.amplitudes.iter().enumerate() {
            for (k, ck) in self.amplitudes.iter().enumerate() {
                rho[m * n + k] = cm * ck.conj();
            }
        }
        rho
    }
}

fn coherent_amplitudes(beta: Complex<f64>, cutoff: usize) -> Vec<Complex<f64>> {
    let mut out = Vec::with_capacity(cutoff);
    let mut c = Complex::new((-beta.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..cutoff {
        if n > 0 {
            c = c * beta / (n as f64).sqrt();
        }
        out.push(c);
    }
    out
}

fn squeezed_amplitudes(zeta: Complex<f64>, cutoff: usize) -> Vec<Complex<f64>> {
    // S(zeta)|0> = cosh(r)^{-1/2} sum_n (-e^{i phi} tanh r)^n sqrt((2n)!)/(2^n n!) |2n>
    let r = zeta.norm();
    let ratio = -Complex::from_polar(r.tanh(), zeta.arg());
    let mut out = vec![Complex::new(0.0, 0.0); cutoff];
    let mut a = Complex::new(r.cosh().sqrt().recip(), 0.0);
    let mut n = 0usize;
    while 2 * n < cutoff {
        if n > 0 {
            let two_n = (2 * n) as f64;
            a = a * ratio * (two_n * (two_n - 1.0)).sqrt() / two_n;
        }
        out[2 * n] = a;
        n += 1;
    }
    out
}

fn raw_amplitudes(spec: &StateSpec, cutoff: usize) -> Vec<Complex<f64>> {
    match spec.kind {
        StateKind::Coherent => coherent_amplitudes(spec.beta(), cutoff),
        StateKind::SqueezedVacuum => squeezed_amplitudes(spec.zeta(), cutoff),
        StateKind::Cat => {
            let plus = coherent_amplitudes(spec.beta(), cutoff);
            let minus = coherent_amplitudes(-spec.beta(), cutoff);
            let rel = Complex::from_polar(1.0, spec.cat_phase);
            let norm = spec.cat_normalization();
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p + rel * m) * norm)
                .collect()
        }
    }
}

/// Smallest cutoff (at least `floor`) whose discarded tail holds at most
/// `leak` of the norm. The tail is summed from the far end so leaks far
/// below machine epsilon are resolved.
fn cutoff_with_leakage(spec: &StateSpec, floor: usize, leak: f64) -> usize {
    let hint = ((4.0 * spec.mean_photon_closed_form() + 20.0).ceil() as usize).max(floor);
    let probe = raw_amplitudes(spec, hint.max(64) * 8);
    let total: f64 = probe.iter().map(|c| c.norm_sqr()).sum();
    let mut tail = 0.0;
    for (n, c) in probe.iter().enumerate().rev() {
        tail += c.norm_sqr();
        if tail > leak * total {
            return (n + 1).max(hint);
        }
    }
    hint
}

fn required_cutoff(spec: &StateSpec) -> usize {
    cutoff_with_leakage(spec, 0, 1e-9)
}

/// Cutoff used for dataset targets: [`DEFAULT_CUTOFF`], raised until the
/// discarded norm is below `1e-20` (amplitudes below `1e-10`).
pub fn adequate_cutoff(spec: &StateSpec) -> usize {
    cutoff_with_leakage(spec, DEFAULT_CUTOFF, 1e-20)
}

/// Normalised Fock expansion of `spec` truncated to `cutoff` levels.
pub fn fock_vector(spec: &StateSpec, cutoff: usize) -> Result<FockVector> {
    spec.validate()?;
    if cutoff == 0 {
        return Err(Error::invalid("cutoff must be positive"));
    }
    let mut amplitudes = raw_amplitudes(spec, cutoff);
    let retained: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
    if !(retained >= MIN_RETAINED_NORM) {
        return Err(Error::Truncation {
            retained,
            required_cutoff: required_cutoff(spec),
        });
    }
    let scale = retained.sqrt().recip();
    amplitudes.iter_mut().for_each(|c| *c *= scale);
    Ok(FockVector { amplitudes })
}

pub fn mean_photon(spec: &StateSpec, cutoff: usize) -> Result<f64> {
    Ok(fock_vector(spec, cutoff)?.mean_photon())
}

/// An `M x M` Wigner function sample on `[-extent, extent)^2`.
///
/// Nodes sit at `-extent + i * 2 extent / M`, so the origin is node `M / 2`
/// when `M` is even. `values` is row-major with rows indexed by `p` and
/// columns by `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub size: usize,
    pub extent: f64,
    pub cell_area: f64,
    pub values: Vec<f64>,
}

impl WignerGrid {
    pub fn spacing(&self) -> f64 {
        grid_spacing(self.size, self.extent)
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.spacing()
    }

    /// `W(x_col, p_row)`.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size + col]
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann estimate of the symmetric-ordered `<(x^2 + p^2) / 2>`.
    pub fn mean_energy(&self) -> f64 {
        let mut acc = 0.0;
        for row in 0..self.size {
            let p = self.coord(row);
            for col in 0..self.size {
                let x = self.coord(col);
                acc += 0.5 * (x * x + p * p) * self.at(row, col);
            }
        }
        acc * self.cell_area
    }
}

fn grid_spacing(size: usize, extent: f64) -> f64 {
    2.0 * extent / size as f64
}

/// Wigner function of `spec` on the standard grid.
pub fn wigner(spec: &StateSpec, size: usize, extent: f64, cutoff: usize) -> Result<WignerGrid> {
    let psi = fock_vector(spec, cutoff)?;
    let keep = psi
        .amplitudes()
        .iter()
        .rposition(|c| c.norm() > NEGLIGIBLE_AMPLITUDE)
        .map_or(1, |i| i + 1);
    let trimmed = FockVector {
        amplitudes: psi.amplitudes()[..keep].to_vec(),
    };
    wigner_from_density(&trimmed.density_matrix(), keep, size, extent)
}

/// Wigner function of a density matrix (row-major `dim x dim`) via the
/// Laguerre expansion of `|m><n|`.
pub fn wigner_from_density(
    rho: &[Complex<f64>],
    dim: usize,
    size: usize,
    extent: f64,
) -> Result<WignerGrid> {
    if rho.len() != dim * dim || dim == 0 {
        return Err(Error::invalid(
            "density matrix shape does not match its dimension",
        ));
    }
    if size == 0 || !(extent > 0.0) {
        return Err(Error::invalid("grid size and extent must be positive"));
    }
    let mut asymmetry: f64 = 0.0;
    for m in 0..dim {
        for n in m..dim {
            asymmetry = asymmetry.max((rho[m * dim + n] - rho[n * dim + m].conj()).norm());
        }
    }
    if asymmetry >= 1e-6 {
        return Err(Error::NumericalConsistency(format!(
            "density matrix is not Hermitian (asymmetry {asymmetry:.3e})"
        )));
    }
    // Hermiticity pairs |m><m+k| with its adjoint, so only real parts
    // survive: W = Re sum_k (2 alpha)^k sum_m w[k][m] L_m^(k)(4|alpha|^2)
    // with w[k][m] = c_k (-1)^m sqrt(m! / (m + k)!) rho[m][m + k]
    let weights: Vec<Vec<Complex<f64>>> = (0..dim)
        .map(|k| {
            let mut ratio = (1..=k).fold(1.0, |acc, j| acc / (j as f64).sqrt());
            let double = if k == 0 { 1.0 } else { 2.0 };
            (0..dim - k)
                .map(|m| {
                    if m > 0 {
                        ratio *= (m as f64 / (m + k) as f64).sqrt();
                    }
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    rho[m * dim + m + k] * (double * sign * ratio)
                })
                .collect()
        })
        .collect();
    // parity-definite states leave every other k empty
    let active: Vec<bool> = weights
        .iter()
        .map(|w| w.iter().any(|c| c.norm_sqr() > 0.0))
        .collect();
    let h = grid_spacing(size, extent);
    let mut values = Vec::with_capacity(size * size);
    let mut laguerre = vec![0.0; dim];
    for row in 0..size {
        let p = -extent + row as f64 * h;
        for col in 0..size {
            let x = -extent + col as f64 * h;
            let alpha = Complex::new(x, p) / SQRT_2;
            let b = 4.0 * alpha.norm_sqr();
            let two_alpha = alpha * 2.0;
            let mut total = 0.0;
            let mut power = Complex::new(1.0, 0.0);
            for (k, w) in weights.iter().enumerate() {
                if k > 0 {
                    power *= two_alpha;
                }
                if !active[k] {
                    continue;
                }
                laguerre_column(k, b, &mut laguerre[..w.len()]);
                let inner: Complex<f64> = w.iter().zip(&laguerre).map(|(c, l)| c * l).sum();
                total += (power * inner).re;
            }
            values.push(total * (-b / 2.0).exp() * FRAC_1_PI);
        }
    }
    Ok(WignerGrid {
        size,
        extent,
        cell_area: h * h,
        values,
    })
}

/// Fill `out[m] = L_m^{(k)}(b)` for `m = 0..out.len()`.
fn laguerre_column(k: usize, b: f64, out: &mut [f64]) {
    let k = k as f64;
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = 1.0 + k - b;
    }
    for m in 1..out.len().saturating_sub(1) {
        let mf = m as f64;
        out[m + 1] = ((2.0 * mf + 1.0 + k - b) * out[m] - (mf + k) * out[m - 1]) / (mf + 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn vacuum_vector() {
        let v = fock_vector(&StateSpec::coherent(0.0, 0.0), 10).unwrap();
        assert_eq!(v.amplitudes()[0], Complex::new(1.0, 0.0));
        assert!(v.amplitudes()[1..].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn parity_of_even_states() {
        let sq = fock_vector(&StateSpec::squeezed(1.0, 0.3), DEFAULT_CUTOFF).unwrap();
        let cat = fock_vector(&StateSpec::cat(1.2, 0.4), DEFAULT_CUTOFF).unwrap();
        for v in [sq, cat] {
            assert!(v
                .amplitudes()
                .iter()
                .skip(1)
                .step_by(2)
                .all(|c| c.norm() < 1e-15));
            assert!((v.norm_sqr() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_photon_matches_closed_forms() {
        assert!(
            (mean_photon(&StateSpec::coherent(2.0, 0.0), DEFAULT_CUTOFF).unwrap() - 4.0).abs()
                < 1e-9
        );
        let spec = StateSpec::squeezed(1.0, 0.0);
        let sq = mean_photon(&spec, adequate_cutoff(&spec)).unwrap();
        assert!((sq - 1f64.sinh().powi(2)).abs() < 1e-6);
        assert!((sq - 1.3811).abs() < 1e-4);
        let b2: f64 = 1.44;
        let cat = mean_photon(&StateSpec::cat(1.2, 0.0), DEFAULT_CUTOFF).unwrap();
        assert!((cat - b2 * b2.tanh()).abs() < 1e-6);
    }

    #[test]
    fn truncation_is_reported() {
        match fock_vector(&StateSpec::coherent(3.0, 0.0), 5) {
            Err(Error::Truncation {
                retained,
                required_cutoff,
            }) => {
                assert!(retained < 0.999);
                assert!(required_cutoff >= 56);
                assert!(fock_vector(&StateSpec::coherent(3.0, 0.0), required_cutoff).is_ok());
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn strong_squeezing_raises_the_target_cutoff() {
        let spec = StateSpec::squeezed(1.1, 0.7);
        let cutoff = adequate_cutoff(&spec);
        assert!(cutoff > DEFAULT_CUTOFF);
        let g = wigner(&spec, 64, 5.0, cutoff).unwrap();
        assert!(g.min() > -1e-9, "min {}", g.min());
        assert_eq!(adequate_cutoff(&StateSpec::coherent(1.0, 0.0)), DEFAULT_CUTOFF);
    }

    #[test]
    fn vacuum_wigner_peak() {
        let g = wigner(&StateSpec::vacuum(), 64, 5.0, DEFAULT_CUTOFF).unwrap();
        assert!((g.at(32, 32) - FRAC_1_PI).abs() < 1e-6);
        assert_eq!(g.coord(32), 0.0);
        assert!((g.max() - FRAC_1_PI).abs() < 1e-12);
    }

    #[test]
    fn coherent_wigner_matches_displaced_gaussian() {
        let g = wigner(&StateSpec::coherent(1.0, 0.0), 64, 5.0, DEFAULT_CUTOFF).unwrap();
        let (x0, p0) = (SQRT_2, 0.0);
        for row in (0..64).step_by(5) {
            for col in (0..64).step_by(3) {
                let (x, p) = (g.coord(col), g.coord(row));
                let expect = (-(x - x0).powi(2) - (p - p0).powi(2)).exp() / PI;
                assert!((g.at(row, col) - expect).abs() < 1e-9, "({x},{p})");
            }
        }
    }

    #[test]
    fn cat_has_negative_fringes_and_mirror_symmetry() {
        let g = wigner(&StateSpec::cat(1.25, 0.0), 64, 5.0, DEFAULT_CUTOFF).unwrap();
        assert!(g.min() < 0.0);
        // p -> -p maps row i to row M - i (row 0 has no partner)
        for row in 1..64 {
            for col in 0..64 {
                assert!((g.at(row, col) - g.at(64 - row, col)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_hermitian_density_is_rejected() {
        let rho = vec![
            Complex::new(0.5, 0.0),
            Complex::new(0.0, 0.3),
            Complex::new(0.0, 0.3),
            Complex::new(0.5, 0.0),
        ];
        assert!(matches!(
            wigner_from_density(&rho, 2, 8, 3.0),
            Err(Error::NumericalConsistency(_))
        ));
    }

    #[test]
    fn energy_moment_matches_photon_number() {
        for spec in [
            StateSpec::squeezed(1.0, 0.4),
            StateSpec::cat(1.3, 0.7),
            StateSpec::coherent(1.2, 1.0),
        ] {
            let g = wigner(&spec, 128, 6.0, DEFAULT_CUTOFF).unwrap();
            let n = mean_photon(&spec, DEFAULT_CUTOFF).unwrap();
            assert!((g.mean_energy() - 0.5 - n).abs() < 0.02, "{spec:?}");
        }
    }
}
