use crate::states::AmplitudePair;
use crate::{Complex, Error, Real, Result};

use super::ReservoirConfig;

/// Amplitude magnitude beyond which a trajectory counts as diverged.
pub(crate) const DIVERGENCE_LIMIT: f64 = 1e6;

/// Node and source amplitudes of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState<T> {
    pub node_pairs: Vec<AmplitudePair<T>>,
    pub source_pair: AmplitudePair<T>,
    pub time: T,
}

impl<T: Real> TrajectoryState<T> {
    pub fn vacuum(n_nodes: usize) -> Self {
        Self {
            node_pairs: vec![AmplitudePair::vacuum(); n_nodes],
            source_pair: AmplitudePair::vacuum(),
            time: T::zero(),
        }
    }

    pub fn with_source(n_nodes: usize, source: AmplitudePair<T>) -> Self {
        Self {
            source_pair: source,
            ..Self::vacuum(n_nodes)
        }
    }

    pub fn is_diverged(&self) -> bool {
        let limit = T::lit(DIVERGENCE_LIMIT);
        let bad = |c: &Complex<T>| !crate::finite(c) || c.norm() > limit;
        self.node_pairs
            .iter()
            .any(|p| bad(&p.alpha) || bad(&p.alpha_tilde))
            || bad(&self.source_pair.alpha)
            || bad(&self.source_pair.alpha_tilde)
    }
}

/// Rectangular injection envelope, `1` on `[t_on, t_off)`.
#[inline]
pub fn envelope<T: Real>(window: (T, T), t: T) -> T {
    if t >= window.0 && t < window.1 {
        T::one()
    } else {
        T::zero()
    }
}

/// Precomputed coefficients for integrating one reservoir realisation.
#[derive(Debug, Clone)]
pub struct Kernel<T> {
    n: usize,
    /// `A_i = i Delta_i - gamma_i / 2`
    linear: Vec<Complex<T>>,
    /// `-i U`
    kerr: Complex<T>,
    /// `-i F`
    drive: Complex<T>,
    /// `sqrt(-i U)`, principal branch
    noise: Complex<T>,
    /// `i U / 2` when the Stratonovich correction is enabled
    correction: Complex<T>,
    /// Neighbour lists `(k, J_ik)` in CSR form.
    offsets: Vec<usize>,
    neighbours: Vec<(usize, T)>,
    /// `sqrt(gamma_s gamma_i) W_i`
    injection: Vec<T>,
    /// `gamma_s eta / 2`
    source_rate: T,
    window: (T, T),
    dt: T,
    iterations: usize,
}

impl<T: Real> Kernel<T> {
    pub fn new(config: &ReservoirConfig<T>) -> Self {
        let n = config.n_nodes;
        let i = Complex::new(T::zero(), T::one());
        let half = T::lit(0.5);
        let linear = (0..n)
            .map(|k| Complex::new(-half * config.decay[k], config.detuning[k]))
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbours = Vec::new();
        offsets.push(0);
        for row in 0..n {
            for col in 0..n {
                let j = config.coupling[[row, col]];
                if j != T::zero() {
                    neighbours.push((col, j));
                }
            }
            offsets.push(neighbours.len());
        }
        let injection = (0..n)
            .map(|k| (config.source_decay * config.decay[k]).sqrt() * config.input_weights[k])
            .collect();
        let u = config.kerr;
        Self {
            n,
            linear,
            kerr: -i * u,
            drive: -i * config.drive,
            noise: Complex::from_polar(u.sqrt(), -T::lit(std::f64::consts::FRAC_PI_4)),
            correction: if config.stratonovich_correction {
                i * u * half
            } else {
                Complex::new(T::zero(), T::zero())
            },
            offsets,
            neighbours,
            injection,
            source_rate: config.source_decay * config.eta * half,
            window: config.injection_window,
            dt: config.dt,
            iterations: config.midpoint_iterations,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Whether stochastic increments enter the dynamics at all.
    pub fn is_noisy(&self) -> bool {
        self.noise.norm() != T::zero()
    }

    pub fn envelope_at(&self, t: T) -> T {
        envelope(self.window, t)
    }

    /// Deterministic rates with per-node linear coefficients `lin` (and
    /// `lin_t` for the twin amplitudes). A zero envelope skips the source.
    #[inline]
    fn rates(
        &self,
        nodes: &[AmplitudePair<T>],
        source: &AmplitudePair<T>,
        f: T,
        lin: &[Complex<T>],
        lin_t: &[Complex<T>],
        out: &mut [AmplitudePair<T>],
    ) -> AmplitudePair<T> {
        let i = Complex::new(T::zero(), T::one());
        let injecting = f != T::zero();
        for k in 0..self.n {
            let a = nodes[k].alpha;
            let at = nodes[k].alpha_tilde;
            let mut hop = Complex::new(T::zero(), T::zero());
            let mut hop_t = Complex::new(T::zero(), T::zero());
            for &(col, j) in &self.neighbours[self.offsets[k]..self.offsets[k + 1]] {
                hop += nodes[col].alpha * j;
                hop_t += nodes[col].alpha_tilde * j;
            }
            let mut da = lin[k] * a + self.kerr * a * a * at.conj() + self.drive + i * hop;
            let mut dat = lin_t[k] * at + self.kerr * at * at * a.conj() + self.drive + i * hop_t;
            if injecting {
                let g = self.injection[k] * f.sqrt();
                da -= source.alpha * g;
                dat -= source.alpha_tilde * g;
            }
            out[k] = AmplitudePair::new(da, dat);
        }
        if injecting {
            let rate = -self.source_rate * f;
            AmplitudePair::new(source.alpha * rate, source.alpha_tilde * rate)
        } else {
            AmplitudePair::vacuum()
        }
    }

    /// Ito drift of the positive-P equations at time `t`.
    pub fn drift_into(&self, state: &TrajectoryState<T>, t: T, out: &mut TrajectoryState<T>) {
        let f = self.envelope_at(t);
        out.source_pair = self.rates(
            &state.node_pairs,
            &state.source_pair,
            f,
            &self.linear,
            &self.linear,
            &mut out.node_pairs,
        );
        out.time = t;
    }

    /// One semi-implicit midpoint step of length `dt` from `state` (at time
    /// `state.time`), in place. `normals` holds `2 N` standard normal draws
    /// ordered `[xi_1, xi_tilde_1, xi_2, ...]`; it is ignored for `U = 0`.
    pub fn step_in_place(
        &self,
        state: &mut TrajectoryState<T>,
        normals: &[T],
        scratch: &mut StepScratch<T>,
    ) {
        let n = self.n;
        let half_dt = self.dt * T::lit(0.5);
        let f = self.envelope_at(state.time + half_dt);
        // xi = z / sqrt(dt); the update multiplies by dt / 2
        let scale = self.dt.sqrt().recip();
        for k in 0..n {
            let base = self.linear[k] + self.correction;
            if self.is_noisy() {
                scratch.lin[k] = base + self.noise * (normals[2 * k] * scale);
                scratch.lin_t[k] = base + self.noise * (normals[2 * k + 1] * scale);
            } else {
                scratch.lin[k] = base;
                scratch.lin_t[k] = base;
            }
        }
        scratch.bar.clear();
        scratch.bar.extend_from_slice(&state.node_pairs);
        let mut bar_source = state.source_pair;
        for _ in 0..self.iterations {
            let ds = self.rates(
                &scratch.bar,
                &bar_source,
                f,
                &scratch.lin,
                &scratch.lin_t,
                &mut scratch.rate,
            );
            for k in 0..n {
                scratch.bar[k].alpha = state.node_pairs[k].alpha + scratch.rate[k].alpha * half_dt;
                scratch.bar[k].alpha_tilde =
                    state.node_pairs[k].alpha_tilde + scratch.rate[k].alpha_tilde * half_dt;
            }
            if f != T::zero() {
                bar_source.alpha = state.source_pair.alpha + ds.alpha * half_dt;
                bar_source.alpha_tilde = state.source_pair.alpha_tilde + ds.alpha_tilde * half_dt;
            }
        }
        let two = T::lit(2.0);
        for k in 0..n {
            let y = &mut state.node_pairs[k];
            y.alpha = scratch.bar[k].alpha * two - y.alpha;
            y.alpha_tilde = scratch.bar[k].alpha_tilde * two - y.alpha_tilde;
        }
        if f != T::zero() {
            let s = &mut state.source_pair;
            s.alpha = bar_source.alpha * two - s.alpha;
            s.alpha_tilde = bar_source.alpha_tilde * two - s.alpha_tilde;
        }
        state.time = state.time + self.dt;
    }
}

/// Reusable buffers for [`Kernel::step_in_place`].
#[derive(Debug, Clone)]
pub struct StepScratch<T> {
    lin: Vec<Complex<T>>,
    lin_t: Vec<Complex<T>>,
    bar: Vec<AmplitudePair<T>>,
    rate: Vec<AmplitudePair<T>>,
}

impl<T: Real> StepScratch<T> {
    pub fn new(n: usize) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            lin: vec![zero; n],
            lin_t: vec![zero; n],
            bar: Vec::with_capacity(n),
            rate: vec![AmplitudePair::vacuum(); n],
        }
    }
}

fn check_shape<T: Real>(state: &TrajectoryState<T>, config: &ReservoirConfig<T>) -> Result<()> {
    if state.node_pairs.len() != config.n_nodes {
        return Err(Error::invalid(format!(
            "state has {} nodes, reservoir has {}",
            state.node_pairs.len(),
            config.n_nodes
        )));
    }
    Ok(())
}

/// Deterministic (Ito) part of the positive-P equations at time `t`.
pub fn drift<T: Real>(
    state: &TrajectoryState<T>,
    config: &ReservoirConfig<T>,
    t: T,
) -> Result<TrajectoryState<T>> {
    check_shape(state, config)?;
    let kernel = Kernel::new(config);
    let mut out = TrajectoryState::vacuum(config.n_nodes);
    kernel.drift_into(state, t, &mut out);
    Ok(out)
}

/// One midpoint step from `state` at time `t`; see [`Kernel::step_in_place`].
pub fn step_midpoint<T: Real>(
    state: &TrajectoryState<T>,
    config: &ReservoirConfig<T>,
    t: T,
    noise_draws: &[T],
) -> Result<TrajectoryState<T>> {
    check_shape(state, config)?;
    if noise_draws.len() != 2 * config.n_nodes {
        return Err(Error::invalid(format!(
            "expected {} noise draws, got {}",
            2 * config.n_nodes,
            noise_draws.len()
        )));
    }
    let kernel = Kernel::new(config);
    let mut next = state.clone();
    next.time = t;
    kernel.step_in_place(
        &mut next,
        noise_draws,
        &mut StepScratch::new(config.n_nodes),
    );
    Ok(next)
}
