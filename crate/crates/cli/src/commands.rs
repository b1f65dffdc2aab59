use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qrc_core::bench::{
    self, evaluate_readout, features_from_responses, fit_readout, generate_dataset_with,
    simulate_responses, Dataset, FeatureSet, FittedReadout, Predictions, Readout, RepeatSeeds,
    Responses, Task, TaskResult,
};
use qrc_core::oracle::{adequate_cutoff, wigner, WignerGrid};
use qrc_core::states::StateSpec;
use serde::Serialize;

use crate::artifacts::{self, content_hash, fmt, write_bytes, write_json, Table};
use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const FAILED: &str = "FAILED";
pub const SUMMARY: &str = "summary.txt";
pub const RESULTS: &str = "results.csv";
pub const SWEEP: &str = "sweep.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";

pub fn repeat_dir(root: &Path, repeat: usize) -> PathBuf {
    root.join(format!("repeat_{repeat:03}"))
}

pub fn model_file(readout: Readout) -> String {
    format!("model_{}.ckpt", readout.name())
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// An experiment bound to its run directory.
pub struct Run {
    pub config: ExperimentConfig,
    pub root: PathBuf,
}

impl Run {
    pub fn open(config: ExperimentConfig, root: PathBuf) -> Result<Self, CliError> {
        create_dir(&root)?;
        let failed = root.join(FAILED);
        if failed.exists() {
            fs::remove_file(&failed).map_err(|e| CliError::io(&failed, e))?;
        }
        Ok(Self { config, root })
    }

    fn seeds(&self, repeat: usize) -> RepeatSeeds {
        RepeatSeeds::new(self.config.seed, repeat)
    }

    fn repeat(&self, repeat: usize) -> Result<PathBuf, CliError> {
        let dir = repeat_dir(&self.root, repeat);
        create_dir(&dir)?;
        Ok(dir)
    }

    /// Refuse to mix artifacts produced under a different configuration.
    fn check_upstream(&self, key: fn(&ExperimentConfig) -> String) -> Result<(), CliError> {
        let path = self.root.join(CONFIG);
        artifacts::require(&path, "simulate")?;
        let stored = ExperimentConfig::load(&path)?;
        if key(&stored) != key(&self.config) {
            return Err(CliError::Config {
                key: CONFIG.into(),
                message: format!(
                    "{} was produced by a different configuration",
                    self.root.display()
                ),
            });
        }
        Ok(())
    }

    fn save_config(&self) -> Result<(), CliError> {
        write_bytes(&self.root.join(CONFIG), self.config.to_toml().as_bytes())
    }

    pub fn mark_failed(&self, error: &CliError) {
        // best effort: the original error is what the caller reports
        let _ = fs::write(self.root.join(FAILED), format!("{error}\n"));
    }

    // --- stages for one repeat ---

    fn simulate_repeat(&self, repeat: usize) -> Result<(Dataset, Responses), CliError> {
        let c = &self.config;
        let seeds = self.seeds(repeat);
        let dir = self.repeat(repeat)?;
        let dataset = generate_dataset_with(c.task, c.n_samples(), seeds.dataset, &c.grid())?;
        artifacts::save_dataset(&dir, &dataset)?;
        let reservoir = c.reservoir_config(seeds.reservoir)?;
        let responses = simulate_responses(&reservoir, &dataset, seeds.readout)?;
        artifacts::save_responses(&dir, &responses, c.output.responses)?;
        Ok((dataset, responses))
    }

    fn features_repeat(
        &self,
        repeat: usize,
        dataset: &Dataset,
        responses: &Responses,
    ) -> Result<FeatureSet, CliError> {
        let features = features_from_responses(responses, &self.config.readout_options())?;
        artifacts::save_features(&self.repeat(repeat)?, dataset, &features)?;
        Ok(features)
    }

    fn train_repeat(
        &self,
        repeat: usize,
        dataset: &Dataset,
        features: &FeatureSet,
    ) -> Result<Vec<(FittedReadout, TaskResult)>, CliError> {
        let dir = self.repeat(repeat)?;
        let options = self.config.readout_options();
        let seed = self.seeds(repeat).readout;
        let mut out = Vec::new();
        for &readout in &self.config.readouts {
            let fitted = fit_readout(dataset, features, readout, &options, seed)?;
            checkpoint::save(&dir.join(model_file(readout)), &fitted)?;
            let result = evaluate_readout(dataset, features, &fitted)?;
            let report = TrainReport::new(repeat, &fitted, &result);
            write_json(&dir.join(format!("train_{}.json", readout.name())), &report)?;
            out.push((fitted, result));
        }
        Ok(out)
    }

    fn evaluate_repeat(
        &self,
        repeat: usize,
        dataset: &Dataset,
        features: &FeatureSet,
        fitted: &[FittedReadout],
    ) -> Result<Vec<TaskResult>, CliError> {
        let dir = self.repeat(repeat)?;
        let mut results = Vec::new();
        for f in fitted {
            let result = evaluate_readout(dataset, features, f)?;
            save_predictions(&dir, dataset, &result)?;
            results.push(result);
        }
        Ok(results)
    }

    fn load_inputs(&self, repeat: usize) -> Result<(Dataset, FeatureSet), CliError> {
        let dir = repeat_dir(&self.root, repeat);
        Ok((
            artifacts::load_dataset(&dir)?,
            artifacts::load_features(&dir)?,
        ))
    }

    // --- subcommands ---

    pub fn simulate(&self) -> Result<(), CliError> {
        self.save_config()?;
        for r in 0..self.config.repeats {
            self.simulate_repeat(r)?;
        }
        self.write_manifest("simulate")
    }

    pub fn features(&self) -> Result<(), CliError> {
        self.check_upstream(ExperimentConfig::upstream_key)?;
        for r in 0..self.config.repeats {
            let dir = repeat_dir(&self.root, r);
            let dataset = artifacts::load_dataset(&dir)?;
            let responses = artifacts::load_responses(&dir)?;
            self.features_repeat(r, &dataset, &responses)?;
        }
        self.save_config()?;
        self.write_manifest("features")
    }

    pub fn train(&self) -> Result<(), CliError> {
        self.check_upstream(ExperimentConfig::features_key)?;
        for r in 0..self.config.repeats {
            let (dataset, features) = self.load_inputs(r)?;
            self.train_repeat(r, &dataset, &features)?;
        }
        self.save_config()?;
        self.write_manifest("train")
    }

    pub fn evaluate(&self) -> Result<(), CliError> {
        self.check_upstream(ExperimentConfig::features_key)?;
        let mut all = Vec::new();
        for r in 0..self.config.repeats {
            let (dataset, features) = self.load_inputs(r)?;
            let dir = repeat_dir(&self.root, r);
            let fitted = self
                .config
                .readouts
                .iter()
                .map(|&ro| checkpoint::load(&dir.join(model_file(ro))))
                .collect::<Result<Vec<_>, _>>()?;
            all.push(self.evaluate_repeat(r, &dataset, &features, &fitted)?);
        }
        self.finish(&all, "evaluate")
    }

    /// All stages in one process, without reading intermediate artifacts
    /// back.
    pub fn run(&self) -> Result<(), CliError> {
        self.save_config()?;
        let mut all = Vec::new();
        for r in 0..self.config.repeats {
            let (dataset, responses) = self.simulate_repeat(r)?;
            let features = self.features_repeat(r, &dataset, &responses)?;
            drop(responses);
            let fitted: Vec<FittedReadout> = self
                .train_repeat(r, &dataset, &features)?
                .into_iter()
                .map(|(f, _)| f)
                .collect();
            all.push(self.evaluate_repeat(r, &dataset, &features, &fitted)?);
        }
        self.finish(&all, "run")
    }

    fn finish(&self, per_repeat: &[Vec<TaskResult>], command: &str) -> Result<(), CliError> {
        let c = &self.config;
        let mut table = Table::new(&["task", "readout", "repeat", "metric"]);
        for (r, results) in per_repeat.iter().enumerate() {
            for res in results {
                table.row([
                    c.task.name().to_string(),
                    res.readout.name().to_string(),
                    r.to_string(),
                    fmt(res.metric),
                ]);
            }
        }
        table.save(&self.root.join(RESULTS))?;
        let mut aggregated = Vec::new();
        for (i, &readout) in c.readouts.iter().enumerate() {
            let runs: Vec<TaskResult> = per_repeat.iter().map(|rs| rs[i].clone()).collect();
            let agg = TaskResult::aggregate(&runs)?;
            if let Some(confusion) = &agg.confusion {
                save_confusion(
                    &self.root.join(format!("confusion_{}.csv", readout.name())),
                    confusion,
                )?;
            }
            aggregated.push(agg);
        }
        write_bytes(
            &self.root.join(SUMMARY),
            self.summary(&aggregated).as_bytes(),
        )?;
        self.write_manifest(command)
    }

    fn summary(&self, results: &[TaskResult]) -> String {
        let c = &self.config;
        let r = &c.reservoir;
        let metric = match c.task {
            Task::Classification => "test accuracy",
            Task::Regression | Task::Tomography => "test MSE",
        };
        let mut s = String::new();
        let _ = writeln!(s, "qrc-sensor {} {}", env!("CARGO_PKG_VERSION"), c.task);
        let _ = writeln!(
            s,
            "seed {}, {} repeat(s), {} samples",
            c.seed,
            c.repeats,
            c.n_samples()
        );
        let _ = writeln!(
            s,
            "reservoir: {} nodes, U = {}, F = {}, {} trajectories",
            r.n_nodes, r.kerr, r.drive, r.n_trajectories
        );
        let _ = writeln!(s, "\n{metric} (mean +- sample std over repeats)");
        for res in results {
            let _ = writeln!(
                s,
                "  {:<12} {:.6} +- {:.6}",
                res.readout.name(),
                res.mean,
                res.std
            );
        }
        for res in results {
            if let Some(m) = &res.confusion {
                let _ = writeln!(
                    s,
                    "\nconfusion ({}, rows true, columns predicted, summed over repeats)",
                    res.readout
                );
                for row in m {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:>5}")).collect();
                    let _ = writeln!(s, "  {}", cells.join(" "));
                }
            }
        }
        s
    }

    pub fn sweep(&self) -> Result<(), CliError> {
        let c = &self.config;
        let s = &c.sweep;
        self.save_config()?;
        let cells = bench::sweep(
            s.axis,
            &s.values,
            s.repeats,
            &c.sweep_base(),
            c.task,
            c.seed,
        )?;
        let mut table = Table::new(&["task", "axis", "value", "repeat", "readout", "metric"]);
        let mut summary = Table::new(&[
            "task", "axis", "value", "readout", "mean", "std", "n_valid", "valid",
        ]);
        let mut errors = String::new();
        for cell in &cells {
            for (r, m) in cell.metrics.iter().enumerate() {
                table.row([
                    cell.task.name().to_string(),
                    cell.axis.name().to_string(),
                    fmt(cell.value),
                    r.to_string(),
                    cell.series.name().to_string(),
                    m.map_or_else(|| "NaN".to_string(), fmt),
                ]);
            }
            summary.row([
                cell.task.name().to_string(),
                cell.axis.name().to_string(),
                fmt(cell.value),
                cell.series.name().to_string(),
                fmt(cell.mean),
                fmt(cell.std),
                cell.metrics.iter().flatten().count().to_string(),
                cell.valid.to_string(),
            ]);
            for e in &cell.errors {
                let _ = writeln!(
                    errors,
                    "  {} = {} {}: {e}",
                    cell.axis.name(),
                    cell.value,
                    cell.series.name()
                );
            }
        }
        table.save(&self.root.join(SWEEP))?;
        summary.save(&self.root.join(SWEEP_SUMMARY))?;
        let mut text = format!(
            "qrc-sensor {} sweep of {} over {:?}, {} repeat(s), seed {}\n\n",
            env!("CARGO_PKG_VERSION"),
            s.axis.name(),
            s.values,
            s.repeats,
            c.seed
        );
        for cell in &cells {
            let _ = writeln!(
                text,
                "  {:>8} {:<10} {:.6} +- {:.6}",
                cell.value,
                cell.series.name(),
                cell.mean,
                cell.std
            );
        }
        if !errors.is_empty() {
            let _ = write!(text, "\nfailed cells:\n{errors}");
        }
        write_bytes(&self.root.join(SUMMARY), text.as_bytes())?;
        self.write_manifest("sweep")?;
        match cells.iter().find_map(|c| c.errors.first()) {
            Some(e) => Err(CliError::Core(qrc_core::Error::NumericalConsistency(
                format!("sweep cell failed: {e}"),
            ))),
            None => Ok(()),
        }
    }

    fn write_manifest(&self, command: &str) -> Result<(), CliError> {
        let c = &self.config;
        let repeats = if command == "sweep" {
            c.sweep.repeats
        } else {
            c.repeats
        };
        let toml = c.to_toml();
        let manifest = Manifest {
            format_version: crate::config::FORMAT_VERSION,
            tool: "qrc-sensor",
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_hash: content_hash(toml.as_bytes()),
            config: c.clone(),
            seed: c.seed,
            repeat_seeds: (0..repeats)
                .map(|r| (r, RepeatSeeds::new(c.seed, r)))
                .map(SeedEntry::from)
                .collect(),
            artifacts: list_artifacts(&self.root)?,
        };
        write_json(&self.root.join(MANIFEST), &manifest)
    }
}

#[derive(Serialize)]
struct TrainReport {
    task: Task,
    readout: Readout,
    repeat: usize,
    metric: f64,
    model: &'static str,
    n_parameters: usize,
    regularization: Option<f64>,
}

impl TrainReport {
    fn new(repeat: usize, fitted: &FittedReadout, result: &TaskResult) -> Self {
        use qrc_core::bench::ReadoutModel;
        let (model, n_parameters, regularization) = match &fitted.model {
            ReadoutModel::Network(m) => ("network", m.n_parameters(), None),
            ReadoutModel::Linear(m) => (
                "linear",
                m.weights.len() + m.bias.len(),
                Some(m.regularization),
            ),
        };
        Self {
            task: fitted.task,
            readout: fitted.readout,
            repeat,
            metric: result.metric,
            model,
            n_parameters,
            regularization,
        }
    }
}

#[derive(Serialize)]
struct SeedEntry {
    repeat: usize,
    reservoir: u64,
    dataset: u64,
    readout: u64,
}

impl From<(usize, RepeatSeeds)> for SeedEntry {
    fn from((repeat, s): (usize, RepeatSeeds)) -> Self {
        Self {
            repeat,
            reservoir: s.reservoir,
            dataset: s.dataset,
            readout: s.readout,
        }
    }
}

#[derive(Serialize)]
struct ArtifactEntry {
    path: String,
    bytes: u64,
    hash: String,
}

#[derive(Serialize)]
struct Manifest {
    format_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: String,
    config_hash: String,
    config: ExperimentConfig,
    seed: u64,
    repeat_seeds: Vec<SeedEntry>,
    artifacts: Vec<ArtifactEntry>,
}

fn list_artifacts(root: &Path) -> Result<Vec<ArtifactEntry>, CliError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
        for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = entry.map_err(|e| CliError::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let mut entries = Vec::new();
    for path in files {
        let rel = path
            .strip_prefix(root)
            .expect("under root")
            .to_string_lossy()
            .replace('\\', "/");
        if rel == MANIFEST || rel == FAILED || rel.ends_with(".partial") {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        entries.push(ArtifactEntry {
            path: rel,
            bytes: bytes.len() as u64,
            hash: content_hash(&bytes),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

fn save_confusion(path: &Path, confusion: &[Vec<usize>]) -> Result<(), CliError> {
    let mut header = vec!["true_class".to_string()];
    header.extend((0..confusion.len()).map(|j| format!("predicted_{j}")));
    let mut table = Table::new(&header);
    for (i, row) in confusion.iter().enumerate() {
        table.row(std::iter::once(i.to_string()).chain(row.iter().map(|v| v.to_string())));
    }
    table.save(path)
}

#[derive(Serialize)]
struct WignerPair<'a> {
    sample: usize,
    spec: &'a StateSpec,
    target: &'a [f64],
    reconstruction: Vec<f64>,
}

#[derive(Serialize)]
struct WignerPairs<'a> {
    format_version: u32,
    readout: Readout,
    #[serde(rename = "M")]
    size: usize,
    extent: f64,
    cell_area: f64,
    pairs: Vec<WignerPair<'a>>,
}

fn save_predictions(dir: &Path, dataset: &Dataset, result: &TaskResult) -> Result<(), CliError> {
    let name = result.readout.name();
    match &result.predictions {
        Predictions::Classes(pred) => {
            let labels = dataset.classes(&result.test_indices)?;
            let mut table = Table::new(&["sample", "kind", "target", "prediction"]);
            for ((&i, &t), &p) in result.test_indices.iter().zip(&labels).zip(pred) {
                let kind = dataset.samples[i].spec.kind.name();
                table.row([
                    i.to_string(),
                    kind.to_string(),
                    t.to_string(),
                    p.to_string(),
                ]);
            }
            table.save(&dir.join(format!("predictions_{name}.csv")))
        }
        Predictions::Values(values) if dataset.task == Task::Regression => {
            let target = dataset.target_rows(&result.test_indices)?;
            let mut table = Table::new(&["sample", "target", "prediction"]);
            for (k, &i) in result.test_indices.iter().enumerate() {
                table.row([i.to_string(), fmt(target[[k, 0]]), fmt(values[[k, 0]])]);
            }
            table.save(&dir.join(format!("predictions_{name}.csv")))
        }
        Predictions::Values(values) => {
            let mut pairs = Vec::new();
            let mut geometry = None;
            for (k, &i) in result.test_indices.iter().enumerate() {
                let sample = &dataset.samples[i];
                let qrc_core::bench::Label::Grid(grid) = &sample.label else {
                    return Err(CliError::Usage(format!("sample {i} has no Wigner target")));
                };
                geometry.get_or_insert((grid.size, grid.extent, grid.cell_area));
                pairs.push(WignerPair {
                    sample: i,
                    spec: &sample.spec,
                    target: &grid.values,
                    reconstruction: values.row(k).to_vec(),
                });
            }
            let (size, extent, cell_area) = geometry.unwrap_or((0, 0.0, 0.0));
            let doc = WignerPairs {
                format_version: crate::config::FORMAT_VERSION,
                readout: result.readout,
                size,
                extent,
                cell_area,
                pairs,
            };
            write_json(&dir.join(format!("wigner_pairs_{name}.json")), &doc)
        }
    }
}

#[derive(Serialize)]
struct WignerFile<'a> {
    format_version: u32,
    #[serde(rename = "M")]
    size: usize,
    extent: f64,
    cell_area: f64,
    cutoff: usize,
    state: &'a StateSpec,
    /// Row-major, rows indexed by `p`, columns by `x`.
    values: &'a [f64],
}

/// Target Wigner grid of one state, written to `<out>/wigner_<kind>.json`.
pub fn write_wigner(
    out: &Path,
    spec: &StateSpec,
    size: usize,
    extent: f64,
    cutoff: Option<usize>,
) -> Result<(PathBuf, WignerGrid), CliError> {
    spec.validate()?;
    let cutoff = cutoff.unwrap_or_else(|| adequate_cutoff(spec));
    let grid = wigner(spec, size, extent, cutoff)?;
    create_dir(out)?;
    let path = out.join(format!("wigner_{}.json", spec.kind.name()));
    let file = WignerFile {
        format_version: crate::config::FORMAT_VERSION,
        size: grid.size,
        extent: grid.extent,
        cell_area: grid.cell_area,
        cutoff,
        state: spec,
        values: &grid.values,
    };
    write_json(&path, &file)?;
    Ok((path, grid))
}
