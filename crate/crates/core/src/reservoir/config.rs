use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

use crate::{seed, Complex, Error, Real, Result};

pub const DEFAULT_DRIVE: f64 = 0.5;
pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_T_FINAL: f64 = 25.0;
pub const DEFAULT_WINDOW: (f64, f64) = (10.0, 15.0);
pub const DEFAULT_MIDPOINT_ITERATIONS: usize = 4;
pub const MAX_DT: f64 = 0.05;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;

/// Physical and numerical parameters of one reservoir realisation.
///
/// Rates are in units of the node decay `gamma` (which defaults to 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReservoirConfig<T> {
    pub n_nodes: usize,
    pub kerr: T,
    pub decay: Vec<T>,
    pub detuning: Vec<T>,
    /// Real symmetric hopping matrix, zero diagonal.
    pub coupling: Array2<T>,
    pub drive: Complex<T>,
    pub source_decay: T,
    pub input_weights: Vec<T>,
    pub eta: T,
    pub injection_window: (T, T),
    pub dt: T,
    pub t_final: T,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Add the Ito-to-Stratonovich drift `+ i U / 2 alpha` before midpoint
    /// integration.
    pub stratonovich_correction: bool,
    pub midpoint_iterations: usize,
    /// Set when the random couplings had zero spectral radius and were
    /// replaced by `J = 0`.
    pub coupling_degenerate: bool,
}

impl<T: Real> ReservoirConfig<T> {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).as_f64().round() as usize
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.n_steps())
            .map(|k| T::from_usize(k).unwrap() * self.dt)
            .collect()
    }

    /// Replace the input weights and keep `eta` consistent.
    pub fn set_input_weights(&mut self, weights: Vec<T>) {
        self.eta = weights.iter().map(|&w| w * w).sum();
        self.input_weights = weights;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes;
        if n == 0 {
            return Err(Error::invalid("n_nodes must be positive"));
        }
        for (name, len) in [
            ("decay", self.decay.len()),
            ("detuning", self.detuning.len()),
            ("input_weights", self.input_weights.len()),
        ] {
            if len != n {
                return Err(Error::invalid(format!(
                    "{name} has length {len}, expected {n}"
                )));
            }
        }
        if self.coupling.dim() != (n, n) {
            return Err(Error::invalid("coupling must be n_nodes x n_nodes"));
        }
        for i in 0..n {
            if self.coupling[[i, i]] != T::zero() {
                return Err(Error::invalid("coupling diagonal must be zero"));
            }
            for j in 0..i {
                if self.coupling[[i, j]] != self.coupling[[j, i]] {
                    return Err(Error::invalid("coupling must be symmetric"));
                }
            }
        }
        if !(self.kerr >= T::zero()) {
            return Err(Error::invalid("kerr must be non-negative"));
        }
        if self.decay.iter().any(|&g| !(g > T::zero())) || !(self.source_decay > T::zero()) {
            return Err(Error::invalid("decay rates must be positive"));
        }
        if self
            .input_weights
            .iter()
            .any(|&w| !(w >= T::zero() && w <= T::one()))
        {
            return Err(Error::invalid("input weights must lie in [0, 1]"));
        }
        let eta: T = self.input_weights.iter().map(|&w| w * w).sum();
        if (eta - self.eta).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::invalid(
                "eta must equal the sum of squared input weights",
            ));
        }
        if !(self.dt > T::zero() && self.dt <= T::lit(MAX_DT) * (T::one() + T::epsilon())) {
            return Err(Error::invalid(format!("dt must lie in (0, {MAX_DT}]")));
        }
        let steps = self.t_final / self.dt;
        if !(steps >= T::one()) || (steps - steps.round()).abs() > T::lit(1e-6) {
            return Err(Error::invalid("t_final must be a positive multiple of dt"));
        }
        let (on, off) = self.injection_window;
        if !(on < off && off <= self.t_final && on >= T::zero()) {
            return Err(Error::invalid(
                "injection window must satisfy 0 <= t_on < t_off <= t_final",
            ));
        }
        if self.n_trajectories == 0 {
            return Err(Error::invalid("n_trajectories must be positive"));
        }
        if self.midpoint_iterations == 0 {
            return Err(Error::invalid("midpoint_iterations must be positive"));
        }
        let finite = self
            .detuning
            .iter()
            .chain(&self.decay)
            .all(|v| v.is_finite())
            && self.coupling.iter().all(|v| v.is_finite())
            && crate::finite(&self.drive)
            && self.kerr.is_finite();
        if !finite {
            return Err(Error::invalid("reservoir parameters must be finite"));
        }
        Ok(())
    }
}

/// Nearest-neighbour links of `n` sites filled row by row into the most
/// square grid (`ceil(sqrt(n))` columns; the last row may be short).
pub fn lattice_links(n: usize) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let mut links = Vec::new();
    for site in 0..n {
        let col = site % cols;
        if col + 1 < cols && site + 1 < n {
            links.push((site, site + 1));
        }
        if site + cols < n {
            links.push((site, site + cols));
        }
    }
    links
}

/// Largest eigenvalue modulus of a real symmetric matrix.
///
/// Power iteration on `M^2` (so `+lambda` and `-lambda` do not compete) from a
/// fixed start vector, stopped when the eigen-residual falls below `1e-10`
/// relative to the estimate.
pub fn spectral_radius<T: Real>(matrix: &Array2<T>) -> Result<T> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(Error::invalid("spectral radius needs a square matrix"));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix entries must be finite"));
    }
    let n = rows;
    if n == 0 {
        return Ok(T::zero());
    }
    let m = matrix.mapv(|v| v.as_f64());
    let sq = m.dot(&m);
    // irrational offsets keep the start vector off any eigenvector's orthogonal complement
    let mut v: ndarray::Array1<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract())
        .collect();
    let norm = v.dot(&v).sqrt();
    v /= norm;
    for _ in 0..POWER_MAX_ITER {
        let w = sq.dot(&v);
        let rayleigh = v.dot(&w);
        let w_norm = w.dot(&w).sqrt();
        if w_norm == 0.0 {
            return Ok(T::zero());
        }
        let residual = (&w - &(&v * rayleigh)).dot(&(&w - &(&v * rayleigh))).sqrt();
        if residual <= POWER_TOL * rayleigh.abs() {
            return Ok(T::lit(rayleigh.max(0.0).sqrt()));
        }
        v = w / w_norm;
    }
    Err(Error::Convergence(format!(
        "power iteration did not converge in {POWER_MAX_ITER} iterations"
    )))
}

/// Random reservoir on the near-square lattice.
///
/// Couplings are uniform in `(-1, 1)` on nearest-neighbour links and scaled
/// to unit spectral radius; detunings are uniform in `(0, 0.1 gamma)`; input
/// weights uniform in `(0, 1)`. All other fields take the documented
/// defaults and can be overwritten before use.
pub fn build_reservoir<T: Real>(
    n_nodes: usize,
    kerr: T,
    drive: Complex<T>,
    n_trajectories: usize,
    master_seed: u64,
) -> Result<ReservoirConfig<T>> {
    if n_nodes == 0 {
        return Err(Error::invalid("n_nodes must be at least 1"));
    }
    let gamma = 1.0;
    let mut rng = seed::stream(seed::derive(master_seed, &[seed::label::RESERVOIR]), 0);
    let mut coupling = Array2::<f64>::zeros((n_nodes, n_nodes));
    for (i, j) in lattice_links(n_nodes) {
        let value = rng.random_range(-1.0..1.0);
        coupling[[i, j]] = value;
        coupling[[j, i]] = value;
    }
    let detuning: Vec<f64> = (0..n_nodes)
        .map(|_| rng.random_range(0.0..0.1 * gamma))
        .collect();
    let weights: Vec<f64> = (0..n_nodes).map(|_| rng.random::<f64>()).collect();

    let radius = spectral_radius(&coupling)?;
    let coupling_degenerate = radius == 0.0;
    if coupling_degenerate {
        coupling.fill(0.0);
    } else {
        coupling /= radius;
    }

    let mut config = ReservoirConfig {
        n_nodes,
        kerr,
        decay: vec![T::lit(gamma); n_nodes],
        detuning: detuning.into_iter().map(T::lit).collect(),
        coupling: coupling.mapv(T::lit),
        drive,
        source_decay: T::one(),
        input_weights: Vec::new(),
        eta: T::zero(),
        injection_window: (T::lit(DEFAULT_WINDOW.0), T::lit(DEFAULT_WINDOW.1)),
        dt: T::lit(DEFAULT_DT),
        t_final: T::lit(DEFAULT_T_FINAL),
        n_trajectories,
        master_seed,
        stratonovich_correction: true,
        midpoint_iterations: DEFAULT_MIDPOINT_ITERATIONS,
        coupling_degenerate,
    };
    config.set_input_weights(weights.into_iter().map(T::lit).collect());
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spectral_radius_small_cases() {
        let a: Array2<f64> = array![[0.0, 1.0], [1.0, 0.0]];
        assert!((spectral_radius(&a).unwrap() - 1.0).abs() < 1e-10);
        let b: Array2<f64> = array![[0.0, 2.0], [2.0, 0.0]];
        assert!((spectral_radius(&b).unwrap() - 2.0).abs() < 1e-10);
        assert_eq!(spectral_radius(&Array2::<f64>::zeros((3, 3))).unwrap(), 0.0);
    }

    #[test]
    fn lattice_shapes() {
        assert!(lattice_links(1).is_empty());
        assert_eq!(lattice_links(2), vec![(0, 1)]);
        // 0 1 2
        // 3 4
        let five = lattice_links(5);
        assert_eq!(five, vec![(0, 1), (0, 3), (1, 2), (1, 4), (3, 4)]);
        assert_eq!(lattice_links(4).len(), 4);
        assert_eq!(lattice_links(9).len(), 12);
    }

    #[test]
    fn single_node_has_no_coupling() {
        let c = build_reservoir::<f64>(1, 0.05, Complex::new(0.5, 0.0), 10, 3).unwrap();
        assert_eq!(c.coupling, Array2::<f64>::zeros((1, 1)));
        assert!(c.coupling_degenerate);
    }

    #[test]
    fn build_is_deterministic_and_normalised() {
        let a = build_reservoir::<f64>(5, 0.05, Complex::new(0.5, 0.0), 10, 42).unwrap();
        let b = build_reservoir::<f64>(5, 0.05, Complex::new(0.5, 0.0), 10, 42).unwrap();
        assert_eq!(a, b);
        for n in 2..=9 {
            let c = build_reservoir::<f64>(n, 0.05, Complex::new(0.5, 0.0), 10, n as u64).unwrap();
            assert!((spectral_radius(&c.coupling).unwrap() - 1.0).abs() < 1e-6);
            assert!(c.detuning.iter().all(|&d| (0.0..=0.1).contains(&d)));
            let eta: f64 = c.input_weights.iter().map(|w| w * w).sum();
            assert!((eta - c.eta).abs() < 1e-12);
            assert!(!c.coupling_degenerate);
        }
    }

    #[test]
    fn validation_catches_bad_fields() {
        let good = build_reservoir::<f64>(3, 0.05, Complex::new(0.5, 0.0), 10, 1).unwrap();
        let mut bad = good.clone();
        bad.coupling[[0, 1]] += 0.1;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.dt = 0.1;
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.injection_window = (20.0, 30.0);
        assert!(bad.validate().is_err());
        let mut bad = good.clone();
        bad.eta += 1.0;
        assert!(bad.validate().is_err());
        let mut bad = good;
        bad.kerr = -0.1;
        assert!(bad.validate().is_err());
    }
}
