//! End-to-end acceptance checks A1-A10.
//!
//! Runs as a plain binary (no libtest harness) so every criterion prints one
//! `PASS`/`FAIL` line in order. Pass criterion ids (`A5 A8`) as arguments to
//! run a subset.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use qrc_core::bench::{
    generate_dataset_with, run_readouts, sweep, Predictions, Readout, RepeatSeeds, Series,
    SweepAxis, SweepBase, Task, TaskResult,
};
use qrc_core::learn::{LossKind, Mlp, OutputActivation, Targets};
use qrc_core::reservoir::{analytic_linear_occupation, build_reservoir, simulate_ensemble};
use qrc_core::states::{ensemble_occupation, sample_cat, sample_squeezed, StateKind, StateSpec};
use qrc_core::{oracle, seed, Complex};
use rand::Rng;
use rand_distr::StandardNormal;

const MASTER_SEED: u64 = 2024;
const REPEATS: usize = 10;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Allowance for the deterministic error at `U = 0`, where every trajectory
/// is identical and the standard error vanishes: the `e^{-t/2}` transient
/// and the time discretisation.
const DETERMINISTIC_SLACK: f64 = 1e-4;

fn a1() -> Check {
    let start = Instant::now();
    let drive = Complex::new(0.5, 0.0);
    let mut config = build_reservoir::<f64>(1, 0.0, drive, 10_000, 1).map_err(|e| e.to_string())?;
    config.detuning = vec![0.0];
    let record = simulate_ensemble(&config, None, 0).map_err(|e| e.to_string())?;
    let last = record.n_times() - 1;
    let (n, se) = (record.occupations[[0, last]], record.standard_errors[[0, last]]);
    let exact = analytic_linear_occupation(0.0, 1.0, drive);
    let elapsed = start.elapsed();
    ensure(
        (n - exact).abs() <= 3.0 * se + DETERMINISTIC_SLACK
            && se < 0.02
            && elapsed < Duration::from_secs(60),
        format!(
            "n(25) = {n:.6} vs {exact}, deviation {:.1e}, SE {se:.1e}, {elapsed:.1?}",
            (n - exact).abs()
        ),
    )
}

fn a2() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (k, r) in [0.9, 1.0, 1.1].into_iter().enumerate() {
        let spec = StateSpec::squeezed(r, 0.7);
        let pairs = sample_squeezed::<f64, _>(&spec, 100_000, &mut seed::stream(11, k as u64))
            .map_err(|e| e.to_string())?;
        let (n, se) = ensemble_occupation(&pairs).map_err(|e| e.to_string())?;
        worst = worst.max((n - r.sinh().powi(2)).abs() / se);
    }
    for (k, mag) in [1.12, 1.25, 1.38].into_iter().enumerate() {
        let spec = StateSpec::cat(mag, 0.4);
        let pairs = sample_cat::<f64, _>(&spec, 100_000, &mut seed::stream(12, k as u64))
            .map_err(|e| e.to_string())?;
        let (n, se) = ensemble_occupation(&pairs).map_err(|e| e.to_string())?;
        let exact = oracle::mean_photon(&spec, 40).map_err(|e| e.to_string())?;
        worst = worst.max((n - exact).abs() / se);
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= 4.0 && elapsed < Duration::from_secs(60),
        format!("largest deviation {worst:.2} SE over 6 states, {elapsed:.1?}"),
    )
}

fn a3() -> Check {
    let (size, extent) = (64, 5.0);
    let grid = |spec: &StateSpec, size: usize, extent: f64| {
        oracle::wigner(spec, size, extent, oracle::adequate_cutoff(spec)).map_err(|e| e.to_string())
    };
    let seeds = RepeatSeeds::new(MASTER_SEED, 0);
    let mut specs = Vec::new();
    for task in [Task::Classification, Task::Regression, Task::Tomography] {
        let base = SweepBase::desk_scale(task);
        let d = generate_dataset_with(task, base.n_samples, seeds.dataset, &base.grid)
            .map_err(|e| e.to_string())?;
        specs.extend(d.specs());
    }
    // an anti-squeezed quadrature of width e^r / sqrt 2 leaves up to 2% of
    // the mass outside +-5; normalisation is checked on a window holding the
    // state, at the same node spacing
    let (wide_size, wide_extent) = (96, 7.5);
    let mut norm_err: f64 = 0.0;
    let mut window_loss: f64 = 0.0;
    let mut cat_max_min = f64::NEG_INFINITY;
    let mut squeezed_min = f64::INFINITY;
    for spec in &specs {
        let w = grid(spec, size, extent)?;
        window_loss = window_loss.max(1.0 - w.integral());
        let total = match spec.kind {
            StateKind::SqueezedVacuum => grid(spec, wide_size, wide_extent)?.integral(),
            _ => w.integral(),
        };
        norm_err = norm_err.max((total - 1.0).abs());
        match spec.kind {
            StateKind::Cat => cat_max_min = cat_max_min.max(w.min()),
            StateKind::SqueezedVacuum => squeezed_min = squeezed_min.min(w.min()),
            StateKind::Coherent => {}
        }
    }
    let vacuum = grid(&StateSpec::vacuum(), size, extent)?;
    let peak = vacuum.at(size / 2, size / 2);
    let peak_err = (peak - std::f64::consts::FRAC_1_PI).abs();
    ensure(
        norm_err <= 0.01 && peak_err <= 1e-6 && cat_max_min < 0.0 && squeezed_min >= -1e-9,
        format!(
            "{} states: |norm - 1| <= {norm_err:.1e} (mass outside +-5 up to {window_loss:.1e}), \
             vacuum peak error {peak_err:.1e}, largest cat minimum {cat_max_min:.3e}, \
             smallest squeezed minimum {squeezed_min:.1e}",
            specs.len()
        ),
    )
}

/// `sum_entries [l(plus) - l(minus)] / n` for the mean losses, formed entry
/// by entry so the difference does not cancel against the loss magnitude.
fn loss_difference(plus: &Array2<f64>, minus: &Array2<f64>, y: &Array2<f64>, labels: &[usize], loss: LossKind) -> f64 {
    match loss {
        LossKind::CrossEntropy => {
            let total: f64 = labels
                .iter()
                .enumerate()
                .map(|(i, &c)| minus[[i, c]].ln() - plus[[i, c]].ln())
                .sum();
            total / labels.len() as f64
        }
        _ => {
            let total: f64 = ndarray::Zip::from(plus)
                .and(minus)
                .and(y)
                .fold(0.0, |acc, &p, &m, &t| acc + (p - m) * (p + m - 2.0 * t));
            total / y.len() as f64
        }
    }
}

fn gradient_error(sizes: &[usize], output: OutputActivation, loss: LossKind, s: u64) -> Result<f64, String> {
    let mut rng = seed::stream(s, 0);
    let batch = 8;
    let n_out = *sizes.last().expect("layers");
    let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array2::from_shape_fn((batch, n_out), |_| rng.sample::<f64, _>(StandardNormal));
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n_out)).collect();
    let targets = match loss {
        LossKind::CrossEntropy => Targets::Classes(&labels),
        _ => Targets::Values(y.view()),
    };
    let mut mlp = Mlp::glorot(sizes, output, s).map_err(|e| e.to_string())?;
    let (_, grads) = mlp.gradient(x.view(), targets, loss).map_err(|e| e.to_string())?;
    let analytic = grads.flatten();
    let params = mlp.parameters();
    // the entry-wise difference must describe the library's loss
    let zero = Array2::zeros((batch, n_out));
    let out = mlp.predict(x.view()).map_err(|e| e.to_string())?;
    let direct = mlp.loss(x.view(), targets, loss).map_err(|e| e.to_string())?;
    let rebuilt = match loss {
        LossKind::CrossEntropy => loss_difference(&out, &Array2::ones((batch, n_out)), &y, &labels, loss),
        _ => loss_difference(&out, &zero, &y, &labels, loss) + y.mapv(|t| t * t).mean().expect("non-empty"),
    };
    if (rebuilt - direct).abs() > 1e-12 * direct.abs().max(1.0) {
        return Err(format!("{sizes:?}: reference loss {rebuilt} differs from {direct}"));
    }
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let i = rng.random_range(0..params.len());
        let mut p = params.clone();
        let mut at = |v: f64| -> Result<Array2<f64>, String> {
            p[i] = v;
            mlp.set_parameters(&p).map_err(|e| e.to_string())?;
            mlp.predict(x.view()).map_err(|e| e.to_string())
        };
        let (plus, minus) = (at(params[i] + h)?, at(params[i] - h)?);
        let numeric = loss_difference(&plus, &minus, &y, &labels, loss) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs());
        let err = if scale == 0.0 { 0.0 } else { (numeric - analytic[i]).abs() / scale };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn a4() -> Check {
    let cases = [
        (vec![50, 300, 3], OutputActivation::Softmax, LossKind::CrossEntropy),
        (vec![50, 250, 1], OutputActivation::Identity, LossKind::Mse),
        (
            vec![50, 100, 100, 100, 100, 200, 64, 1024],
            OutputActivation::Identity,
            LossKind::Mse,
        ),
    ];
    let mut worst: f64 = 0.0;
    for (k, (sizes, output, loss)) in cases.iter().enumerate() {
        worst = worst.max(gradient_error(sizes, *output, *loss, 40 + k as u64)?);
    }
    ensure(
        worst < 1e-5,
        format!("largest relative error {worst:.2e} over 3 x 100 probes"),
    )
}

struct Comparison {
    eqss: f64,
    linear: f64,
    eqss_u0: f64,
    elapsed: Duration,
}

fn classification() -> &'static Result<Comparison, String> {
    static CELL: OnceLock<Result<Comparison, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let base = SweepBase::desk_scale(Task::Classification);
        let cells = sweep(
            SweepAxis::Kerr,
            &[base.kerr],
            REPEATS,
            &base,
            Task::Classification,
            MASTER_SEED,
        )
        .map_err(|e| e.to_string())?;
        let mean = |series: Series| -> Result<f64, String> {
            let cell = cells
                .iter()
                .find(|c| c.series == series)
                .ok_or("missing series")?;
            if !cell.valid {
                return Err(format!("{} failed: {:?}", series.name(), cell.errors));
            }
            Ok(cell.mean)
        };
        Ok(Comparison {
            eqss: mean(Series::Eqss)?,
            linear: mean(Series::LinearQrc)?,
            eqss_u0: mean(Series::EqssLinearReservoir)?,
            elapsed: start.elapsed(),
        })
    })
}

fn a5() -> Check {
    let c = classification().as_ref().map_err(Clone::clone)?;
    ensure(
        c.eqss - c.linear >= 0.05 && c.linear > 0.40 && c.eqss > 0.40,
        format!(
            "mean accuracy EQSS {:.3} vs LinearQRC {:.3} over {REPEATS} repeats ({:.0?} with the U = 0 control)",
            c.eqss, c.linear, c.elapsed
        ),
    )
}

fn a8() -> Check {
    let c = classification().as_ref().map_err(Clone::clone)?;
    ensure(
        c.eqss_u0 < c.eqss,
        format!(
            "mean EQSS accuracy U = 0: {:.3}, U = 0.05: {:.3}",
            c.eqss_u0, c.eqss
        ),
    )
}

/// Both readouts on the default desk-scale setup, one entry per repeat.
fn repeats(task: Task) -> Result<Vec<(TaskResult, TaskResult, Vec<StateSpec>)>, String> {
    let base = SweepBase::desk_scale(task);
    (0..REPEATS)
        .map(|r| {
            let seeds = RepeatSeeds::new(MASTER_SEED, r);
            let dataset = generate_dataset_with(task, base.n_samples, seeds.dataset, &base.grid)
                .map_err(|e| e.to_string())?;
            let config = base
                .reservoir(base.n_nodes, base.kerr, seeds.reservoir)
                .map_err(|e| e.to_string())?;
            let mut results = run_readouts(
                &config,
                &dataset,
                &[Readout::LinearQrc, Readout::Eqss],
                &base.readout,
                seeds.readout,
            )
            .map_err(|e| e.to_string())?;
            let eqss = results.pop().expect("two readouts");
            let linear = results.pop().expect("two readouts");
            let test_specs = dataset.test.iter().map(|&i| dataset.samples[i].spec).collect();
            Ok((linear, eqss, test_specs))
        })
        .collect()
}

fn a6() -> Check {
    let runs = repeats(Task::Regression)?;
    let mean = |f: fn(&(TaskResult, TaskResult, Vec<StateSpec>)) -> f64| {
        runs.iter().map(f).sum::<f64>() / runs.len() as f64
    };
    let linear = mean(|r| r.0.metric);
    let eqss = mean(|r| r.1.metric);
    ensure(
        eqss <= 0.5 * linear,
        format!("mean test MSE EQSS {eqss:.4e} vs LinearQRC {linear:.4e} (ratio {:.2})", eqss / linear),
    )
}

/// Sum and count of the smallest reconstructed grid value over squeezed
/// test states.
fn squeezed_minimum(result: &TaskResult, specs: &[StateSpec]) -> (f64, usize) {
    let Predictions::Values(grids) = &result.predictions else {
        return (f64::NAN, 0);
    };
    let minima: Vec<f64> = grids
        .rows()
        .into_iter()
        .zip(specs)
        .filter(|(_, s)| s.kind == StateKind::SqueezedVacuum)
        .map(|(row, _)| row.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    (minima.iter().sum::<f64>(), minima.len())
}

fn a7() -> Check {
    let runs = repeats(Task::Tomography)?;
    let wins = runs.iter().filter(|r| r.1.metric < r.0.metric).count();
    let (mut lin, mut net, mut count) = (0.0, 0.0, 0);
    for (linear, eqss, specs) in &runs {
        let (l, n) = squeezed_minimum(linear, specs);
        lin += l;
        net += squeezed_minimum(eqss, specs).0;
        count += n;
    }
    let (lin, net) = (lin / count as f64, net / count as f64);
    ensure(
        wins >= 8 && count > 0 && net > lin,
        format!(
            "EQSS grid MSE lower in {wins}/{REPEATS} repeats; mean squeezed-grid minimum \
             EQSS {net:.4} vs LinearQRC {lin:.4} ({count} states)"
        ),
    )
}

const SMALL_RUN: &str = r#"
task = "classification"
seed = 5

[reservoir]
n_nodes = 3
n_trajectories = 256

[dataset]
n_samples = 40

[readout]
max_epochs = 200

[sweep]
values = [0.0, 0.05]
repeats = 2
"#;

fn tree(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(root).expect("inside root").display().to_string();
                out.push((name, fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn a9() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("experiment.toml");
    fs::write(&config, SMALL_RUN).map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = tmp.path().join(format!("threads_{threads}"));
        for command in ["run", "sweep"] {
            let status = Command::new(env!("CARGO_BIN_EXE_qrc-sensor"))
                .args([command, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(out.join(command))
                .args(["--threads", threads])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!(
                    "{command} at {threads} threads failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
        }
        trees.push(tree(&out)?);
    }
    let files = trees[0].len();
    ensure(
        files > 0 && trees.iter().all(|t| *t == trees[0]),
        format!("run + sweep outputs ({files} files) identical at 1, 2 and 8 threads"),
    )
}

/// `integral_0^tau e^{-z u} du`.
fn phi(z: Complex<f64>, tau: f64) -> Complex<f64> {
    if z.norm() * tau < 1e-8 {
        Complex::new(tau, 0.0)
    } else {
        (Complex::new(1.0, 0.0) - (-z * tau).exp()) / z
    }
}

fn a10() -> Check {
    let beta = 1.2;
    let mut config = build_reservoir::<f64>(1, 0.0, Complex::new(0.0, 0.0), 64, 3)
        .map_err(|e| e.to_string())?;
    config.set_input_weights(vec![1.0]);
    config.source_decay = 1.0;
    let record = simulate_ensemble(&config, Some(&StateSpec::coherent(beta, 0.0)), 0)
        .map_err(|e| e.to_string())?;
    // da = A a - c s, ds = -kappa s on [t_on, t_off); a(t_on) = 0
    let a = Complex::new(-config.decay[0] / 2.0, config.detuning[0]);
    let kappa = config.source_decay * config.eta / 2.0;
    let c = (config.source_decay * config.decay[0]).sqrt() * config.input_weights[0];
    let (t_on, t_off) = config.injection_window;
    let alpha = |t: f64| -> Complex<f64> {
        let during = |tau: f64| -(a * tau).exp() * phi(a + kappa, tau) * (c * beta);
        if t <= t_on {
            Complex::new(0.0, 0.0)
        } else if t <= t_off {
            during(t - t_on)
        } else {
            during(t_off - t_on) * (a * (t - t_off)).exp()
        }
    };
    let worst = record
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| (record.occupations[[0, k]] - alpha(t).norm_sqr()).abs())
        .fold(0.0, f64::max);
    let peak = record.occupations.iter().copied().fold(0.0, f64::max);
    ensure(
        worst <= 1e-3 && peak > 0.1,
        format!(
            "largest pointwise deviation {worst:.2e} over {} times (peak occupation {peak:.3})",
            record.n_times()
        ),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, &str, fn() -> Check); 10] = [
        ("A1", "linear steady state", a1),
        ("A2", "sampler moments", a2),
        ("A3", "Wigner oracle", a3),
        ("A4", "gradient fidelity", a4),
        ("A5", "end-to-end classification", a5),
        ("A6", "regression", a6),
        ("A7", "tomography", a7),
        ("A8", "nonlinearity matters", a8),
        ("A9", "determinism across thread counts", a9),
        ("A10", "injection physics", a10),
    ];
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (id, name, check) in checks {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{elapsed:.1?}]"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name}: {detail} [{elapsed:.1?}]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
