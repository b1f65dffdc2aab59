use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::states::{AmplitudePair, PhaseSpaceSampler, StateSpec};
use crate::{seed, Complex, Error, Real, Result};

use super::dynamics::{Kernel, StepScratch, TrajectoryState};
use super::ReservoirConfig;

/// Trajectories per work unit. Fixed so the reduction tree does not depend
/// on the number of worker threads.
const CHUNK: usize = 64;
/// Largest accepted fraction of diverged trajectories.
const MAX_DIVERGED_FRACTION: f64 = 0.01;

/// Per-node occupation time series of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord<T> {
    pub times: Vec<T>,
    /// `Re <alpha_i alpha_tilde_i*>`, shape `(n_nodes, n_times)`.
    pub occupations: Array2<T>,
    pub standard_errors: Array2<T>,
    /// `Im <alpha_i alpha_tilde_i*>`; zero in expectation.
    pub imag_occupations: Array2<T>,
    pub imag_standard_errors: Array2<T>,
    pub n_trajectories: usize,
    pub diverged_count: usize,
}

impl<T: Real> ResponseRecord<T> {
    pub fn n_nodes(&self) -> usize {
        self.occupations.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }
}

/// `|F|^2 / (Delta^2 + gamma^2 / 4)`, the `U = 0` single-node steady state.
pub fn analytic_linear_occupation<T: Real>(detuning: T, decay: T, drive: Complex<T>) -> T {
    drive.norm_sqr() / (detuning * detuning + decay * decay / T::lit(4.0))
}

/// Welford moments for a block of cells sharing one sample count.
#[derive(Debug, Clone)]
struct Moments<T> {
    count: usize,
    mean_re: Vec<T>,
    m2_re: Vec<T>,
    mean_im: Vec<T>,
    m2_im: Vec<T>,
}

impl<T: Real> Moments<T> {
    fn new(cells: usize) -> Self {
        Self {
            count: 0,
            mean_re: vec![T::zero(); cells],
            m2_re: vec![T::zero(); cells],
            mean_im: vec![T::zero(); cells],
            m2_im: vec![T::zero(); cells],
        }
    }

    fn push(&mut self, samples: &[Complex<T>]) {
        self.count += 1;
        let n = T::from_usize(self.count).unwrap();
        for (cell, z) in samples.iter().enumerate() {
            let d = z.re - self.mean_re[cell];
            self.mean_re[cell] += d / n;
            self.m2_re[cell] += d * (z.re - self.mean_re[cell]);
            let d = z.im - self.mean_im[cell];
            self.mean_im[cell] += d / n;
            self.m2_im[cell] += d * (z.im - self.mean_im[cell]);
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let (na, nb) = (
            T::from_usize(self.count).unwrap(),
            T::from_usize(other.count).unwrap(),
        );
        let n = na + nb;
        for cell in 0..self.mean_re.len() {
            let d = other.mean_re[cell] - self.mean_re[cell];
            self.mean_re[cell] += d * nb / n;
            self.m2_re[cell] += other.m2_re[cell] + d * d * na * nb / n;
            let d = other.mean_im[cell] - self.mean_im[cell];
            self.mean_im[cell] += d * nb / n;
            self.m2_im[cell] += other.m2_im[cell] + d * d * na * nb / n;
        }
        self.count += other.count;
        self
    }

    fn standard_error(&self, m2: T) -> T {
        if self.count < 2 {
            return T::zero();
        }
        let n = T::from_usize(self.count).unwrap();
        (m2 / (n - T::one()) / n).sqrt()
    }
}

/// Pairwise reduction in index order.
fn tree_merge<T: Real>(mut items: Vec<Moments<T>>, cells: usize) -> Moments<T> {
    match items.len() {
        0 => Moments::new(cells),
        1 => items.pop().unwrap(),
        len => {
            let right = items.split_off(len / 2);
            tree_merge(items, cells).merge(tree_merge(right, cells))
        }
    }
}

/// Trajectory state just before the first injection step.
#[derive(Debug, Clone)]
struct Checkpoint<T> {
    state: TrajectoryState<T>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
struct PrefixChunk<T> {
    start: usize,
    len: usize,
    /// `None` for trajectories that diverged before injection.
    checkpoints: Vec<Option<Checkpoint<T>>>,
    stats: Moments<T>,
}

/// The ensemble integrated up to the start of the injection window.
///
/// Before injection the source is decoupled, so every run of the same
/// reservoir (reference or perturbed) shares this prefix bit for bit.
#[derive(Debug, Clone)]
pub struct SimulationPrefix<T> {
    config: ReservoirConfig<T>,
    kernel: Kernel<T>,
    times: Vec<T>,
    /// Index of the last recorded time before the source couples in.
    inject_index: usize,
    chunks: Vec<PrefixChunk<T>>,
}

impl<T: Real> SimulationPrefix<T> {
    pub fn config(&self) -> &ReservoirConfig<T> {
        &self.config
    }

    pub fn inject_index(&self) -> usize {
        self.inject_index
    }
}

struct Runner<'a, T> {
    config: &'a ReservoirConfig<T>,
    kernel: &'a Kernel<T>,
    times: &'a [T],
    noise_seed: u64,
}

impl<T: Real> Runner<'_, T> {
    fn n(&self) -> usize {
        self.config.n_nodes
    }

    fn noise_rng(&self, trajectory: usize) -> ChaCha8Rng {
        seed::stream(self.noise_seed, trajectory as u64)
    }

    /// Step from time index `from` to `to`, writing `alpha alpha_tilde*` of
    /// every node at indices `from + 1 ..= to` into `record`. Returns false
    /// if the trajectory diverged.
    fn advance(
        &self,
        state: &mut TrajectoryState<T>,
        rng: &mut ChaCha8Rng,
        from: usize,
        to: usize,
        record: &mut [Complex<T>],
        scratch: &mut StepScratch<T>,
        normals: &mut [T],
    ) -> bool {
        let n = self.n();
        let noisy = self.kernel.is_noisy();
        for k in from..to {
            if noisy {
                for z in normals.iter_mut() {
                    *z = T::lit(rng.sample::<f64, _>(StandardNormal));
                }
            }
            state.time = self.times[k];
            self.kernel.step_in_place(state, normals, scratch);
            if state.is_diverged() {
                return false;
            }
            let row = (k - from) * n;
            for (node, pair) in state.node_pairs.iter().enumerate() {
                record[row + node] = pair.cross();
            }
        }
        true
    }

    /// Integrate trajectories `start..start + len` over the prefix, skipping
    /// those flagged in `exclude`.
    fn prefix_chunk(
        &self,
        start: usize,
        len: usize,
        inject_index: usize,
        exclude: &[bool],
    ) -> PrefixChunk<T> {
        let n = self.n();
        let cells = n * (inject_index + 1);
        let mut stats = Moments::new(cells);
        let mut checkpoints = Vec::with_capacity(len);
        let mut record = vec![Complex::new(T::zero(), T::zero()); cells];
        let mut scratch = StepScratch::new(n);
        let mut normals = vec![T::zero(); 2 * n];
        for offset in 0..len {
            if exclude.get(offset).copied().unwrap_or(false) {
                checkpoints.push(None);
                continue;
            }
            let mut state = TrajectoryState::vacuum(n);
            let mut rng = self.noise_rng(start + offset);
            for (node, pair) in state.node_pairs.iter().enumerate() {
                record[node] = pair.cross();
            }
            let ok = self.advance(
                &mut state,
                &mut rng,
                0,
                inject_index,
                &mut record[n..],
                &mut scratch,
                &mut normals,
            );
            if ok {
                stats.push(&record);
                checkpoints.push(Some(Checkpoint { state, rng }));
            } else {
                checkpoints.push(None);
            }
        }
        PrefixChunk {
            start,
            len,
            checkpoints,
            stats,
        }
    }
}

/// Integrate every trajectory of `config` up to the injection start.
pub fn simulate_prefix<T: Real>(config: &ReservoirConfig<T>) -> Result<SimulationPrefix<T>> {
    config.validate()?;
    let kernel = Kernel::new(config);
    let times = config.times();
    let n_steps = config.n_steps();
    let half_dt = config.dt * T::lit(0.5);
    let inject_index = (0..n_steps)
        .find(|&k| kernel.envelope_at(times[k] + half_dt) != T::zero())
        .unwrap_or(n_steps);
    let noise_seed = seed::derive(config.master_seed, &[seed::label::NOISE]);
    let runner = Runner {
        config,
        kernel: &kernel,
        times: &times,
        noise_seed,
    };
    let starts: Vec<usize> = (0..config.n_trajectories).step_by(CHUNK).collect();
    let chunks = starts
        .par_iter()
        .map(|&start| {
            let len = CHUNK.min(config.n_trajectories - start);
            runner.prefix_chunk(start, len, inject_index, &[])
        })
        .collect();
    Ok(SimulationPrefix {
        config: config.clone(),
        kernel: kernel.clone(),
        times,
        inject_index,
        chunks,
    })
}

struct ChunkResult<T> {
    prefix: Moments<T>,
    post: Moments<T>,
    diverged: usize,
}

impl<T: Real> SimulationPrefix<T> {
    /// Continue every surviving trajectory to `t_final` with the source
    /// prepared in `input` (vacuum when `None`).
    ///
    /// Trajectory `j` draws its source pair from stream `j` of
    /// `source_seed`, so runs sharing a seed use common random numbers.
    pub fn resume(&self, input: Option<&StateSpec>, source_seed: u64) -> Result<ResponseRecord<T>> {
        let sampler = input.map(PhaseSpaceSampler::new).transpose()?;
        let config = &self.config;
        let n = config.n_nodes;
        let n_steps = config.n_steps();
        let post_len = n_steps - self.inject_index;
        let runner = Runner {
            config,
            kernel: &self.kernel,
            times: &self.times,
            noise_seed: seed::derive(config.master_seed, &[seed::label::NOISE]),
        };
        let results: Vec<ChunkResult<T>> = self
            .chunks
            .par_iter()
            .map(|chunk| -> Result<ChunkResult<T>> {
                let mut post = Moments::new(n * post_len);
                let mut record = vec![Complex::new(T::zero(), T::zero()); n * post_len];
                let mut scratch = StepScratch::new(n);
                let mut normals = vec![T::zero(); 2 * n];
                let mut dead = vec![false; chunk.len];
                let mut newly_dead = false;
                for (offset, checkpoint) in chunk.checkpoints.iter().enumerate() {
                    let Some(cp) = checkpoint else {
                        dead[offset] = true;
                        continue;
                    };
                    let trajectory = chunk.start + offset;
                    let mut state = cp.state.clone();
                    let mut rng = cp.rng.clone();
                    if let Some(sampler) = &sampler {
                        let mut src = seed::stream(source_seed, trajectory as u64);
                        state.source_pair = sampler.draw::<T, _>(&mut src)?;
                    }
                    let ok = runner.advance(
                        &mut state,
                        &mut rng,
                        self.inject_index,
                        n_steps,
                        &mut record,
                        &mut scratch,
                        &mut normals,
                    );
                    if ok {
                        post.push(&record);
                    } else {
                        dead[offset] = true;
                        newly_dead = true;
                    }
                }
                let prefix = if newly_dead {
                    runner
                        .prefix_chunk(chunk.start, chunk.len, self.inject_index, &dead)
                        .stats
                } else {
                    chunk.stats.clone()
                };
                let diverged = dead.iter().filter(|&&d| d).count();
                Ok(ChunkResult {
                    prefix,
                    post,
                    diverged,
                })
            })
            .collect::<Result<_>>()?;

        let diverged: usize = results.iter().map(|r| r.diverged).sum();
        let total = config.n_trajectories;
        if diverged as f64 >= MAX_DIVERGED_FRACTION * total as f64 {
            return Err(Error::Divergence { diverged, total });
        }
        let (prefix, post): (Vec<_>, Vec<_>) =
            results.into_iter().map(|r| (r.prefix, r.post)).unzip();
        let prefix = tree_merge(prefix, n * (self.inject_index + 1));
        let post = tree_merge(post, n * post_len);
        Ok(assemble(
            &self.times,
            n,
            self.inject_index,
            &prefix,
            &post,
            total,
            diverged,
        ))
    }
}

fn assemble<T: Real>(
    times: &[T],
    n: usize,
    inject_index: usize,
    prefix: &Moments<T>,
    post: &Moments<T>,
    n_trajectories: usize,
    diverged_count: usize,
) -> ResponseRecord<T> {
    let n_times = times.len();
    let mut occupations = Array2::zeros((n, n_times));
    let mut standard_errors = Array2::zeros((n, n_times));
    let mut imag_occupations = Array2::zeros((n, n_times));
    let mut imag_standard_errors = Array2::zeros((n, n_times));
    for t in 0..n_times {
        let (block, local) = if t <= inject_index {
            (prefix, t)
        } else {
            (post, t - inject_index - 1)
        };
        for node in 0..n {
            let cell = local * n + node;
            occupations[[node, t]] = block.mean_re[cell];
            standard_errors[[node, t]] = block.standard_error(block.m2_re[cell]);
            imag_occupations[[node, t]] = block.mean_im[cell];
            imag_standard_errors[[node, t]] = block.standard_error(block.m2_im[cell]);
        }
    }
    ResponseRecord {
        times: times.to_vec(),
        occupations,
        standard_errors,
        imag_occupations,
        imag_standard_errors,
        n_trajectories,
        diverged_count,
    }
}

/// Full ensemble from vacuum; `input = None` gives the reference run.
pub fn simulate_ensemble<T: Real>(
    config: &ReservoirConfig<T>,
    input: Option<&StateSpec>,
    source_seed: u64,
) -> Result<ResponseRecord<T>> {
    simulate_prefix(config)?.resume(input, source_seed)
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<S: Send + Sync>() {}
    check::<SimulationPrefix<f64>>();
    check::<AmplitudePair<f32>>();
}
