//! Experiment configuration file.

use std::path::{Path, PathBuf};

use qrc_core::bench::{GridOptions, Readout, ReadoutOptions, SweepAxis, SweepBase, Task};
use qrc_core::learn::{LossKind, TrainConfig, WeightDecay, DEFAULT_HUBER_DELTA};
use qrc_core::reservoir::{build_reservoir, ReservoirConfig, MAX_DT};
use qrc_core::Complex;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    /// Independent repeats of the fused pipeline.
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "all_readouts")]
    pub readouts: Vec<Readout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub reservoir: ReservoirSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

fn one() -> usize {
    1
}

fn all_readouts() -> Vec<Readout> {
    vec![Readout::LinearQrc, Readout::Eqss]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirSection {
    pub n_nodes: usize,
    pub kerr: f64,
    pub drive: f64,
    pub dt: f64,
    pub t_final: f64,
    pub injection_window: (f64, f64),
    pub n_trajectories: usize,
    pub stratonovich_correction: bool,
    pub midpoint_iterations: usize,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        let base = SweepBase::desk_scale(Task::Classification);
        Self {
            n_nodes: base.n_nodes,
            kerr: base.kerr,
            drive: base.drive,
            dt: base.dt,
            t_final: base.t_final,
            injection_window: base.injection_window,
            n_trajectories: base.n_trajectories,
            stratonovich_correction: true,
            midpoint_iterations: qrc_core::reservoir::DEFAULT_MIDPOINT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Defaults to the task's benchmark size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    pub grid_size: usize,
    pub grid_extent: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let grid = GridOptions::default();
        Self {
            n_samples: None,
            grid_size: grid.size,
            grid_extent: grid.extent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionLoss {
    Mse,
    Huber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub n_bins: usize,
    pub feature_window: (f64, f64),
    /// Network hidden widths; the task's benchmark architecture when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay: WeightDecay,
    pub max_epochs: usize,
    pub patience: usize,
    pub regression_loss: RegressionLoss,
    pub huber_delta: f64,
    pub validation_fraction: f64,
    pub logistic_lambdas: Vec<f64>,
    pub ridge_lambdas: Vec<f64>,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        let o = ReadoutOptions::default();
        Self {
            n_bins: o.n_bins,
            feature_window: o.feature_window,
            hidden: o.hidden,
            learning_rate: o.train.learning_rate,
            weight_decay: o.train.weight_decay,
            decay: o.train.decay,
            max_epochs: o.train.max_epochs,
            patience: o.train.patience,
            regression_loss: RegressionLoss::Mse,
            huber_delta: DEFAULT_HUBER_DELTA,
            validation_fraction: o.validation_fraction,
            logistic_lambdas: o.logistic_lambdas,
            ridge_lambdas: o.ridge_lambdas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub repeats: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Kerr,
            values: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Write the full per-sample response tables.
    pub responses: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { responses: true }
    }
}

fn config_error(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn check(ok: bool, key: &str, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(config_error(key, message))
    }
}

fn check_lambdas(values: &[f64], key: &str) -> Result<(), CliError> {
    check(!values.is_empty(), key, "must not be empty")?;
    check(
        values.iter().all(|l| l.is_finite() && *l >= 0.0),
        key,
        "values must be finite and >= 0",
    )
}

impl ExperimentConfig {
    /// Defaults for `task`.
    pub fn new(task: Task) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            task,
            seed: 0,
            repeats: 1,
            readouts: all_readouts(),
            out_dir: None,
            reservoir: ReservoirSection::default(),
            dataset: DatasetSection::default(),
            readout: ReadoutSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_error("", e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            config_error(
                if key == "." { "" } else { &key },
                e.into_inner().message().trim().to_string(),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn n_samples(&self) -> usize {
        self.dataset
            .n_samples
            .unwrap_or_else(|| self.task.default_samples())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check(
            self.format_version == FORMAT_VERSION,
            "format_version",
            "unsupported format version",
        )?;
        check(self.repeats >= 1, "repeats", "must be at least 1")?;
        check(!self.readouts.is_empty(), "readouts", "must not be empty")?;
        let mut seen = self.readouts.clone();
        seen.sort_by_key(|r| r.name());
        seen.dedup();
        check(
            seen.len() == self.readouts.len(),
            "readouts",
            "must not repeat a readout",
        )?;

        let r = &self.reservoir;
        check(r.n_nodes >= 1, "reservoir.n_nodes", "must be at least 1")?;
        check(
            r.kerr.is_finite() && r.kerr >= 0.0,
            "reservoir.kerr",
            "must be finite and >= 0",
        )?;
        check(r.drive.is_finite(), "reservoir.drive", "must be finite")?;
        check(
            r.dt > 0.0 && r.dt <= MAX_DT,
            "reservoir.dt",
            &format!("must lie in (0, {MAX_DT}]"),
        )?;
        check(
            r.t_final.is_finite() && r.t_final > 0.0,
            "reservoir.t_final",
            "must be positive",
        )?;
        let (a, b) = r.injection_window;
        check(
            a >= 0.0 && a < b && b <= r.t_final,
            "reservoir.injection_window",
            "must satisfy 0 <= start < end <= t_final",
        )?;
        check(
            r.n_trajectories >= 1,
            "reservoir.n_trajectories",
            "must be at least 1",
        )?;
        check(
            r.midpoint_iterations >= 1,
            "reservoir.midpoint_iterations",
            "must be at least 1",
        )?;

        let d = &self.dataset;
        let kinds = self.task.kinds().len();
        let (p, q) = self.task.split_ratio();
        let n = self.n_samples();
        check(
            n > 0 && n.is_multiple_of(kinds) && n.is_multiple_of(p + q),
            "dataset.n_samples",
            &format!("must be a positive multiple of {kinds} and of {}", p + q),
        )?;
        check(d.grid_size >= 2, "dataset.grid_size", "must be at least 2")?;
        check(
            d.grid_extent.is_finite() && d.grid_extent > 0.0,
            "dataset.grid_extent",
            "must be positive",
        )?;

        let o = &self.readout;
        check(o.n_bins >= 1, "readout.n_bins", "must be at least 1")?;
        let (a, b) = o.feature_window;
        check(
            a >= 0.0 && a < b && b <= r.t_final,
            "readout.feature_window",
            "must satisfy 0 <= start < end <= t_final",
        )?;
        if let Some(h) = &o.hidden {
            check(
                h.iter().all(|&w| w > 0),
                "readout.hidden",
                "widths must be positive",
            )?;
        }
        check(
            o.learning_rate.is_finite() && o.learning_rate > 0.0,
            "readout.learning_rate",
            "must be positive",
        )?;
        check(
            o.weight_decay.is_finite() && o.weight_decay >= 0.0,
            "readout.weight_decay",
            "must be >= 0",
        )?;
        check(
            o.max_epochs >= 1,
            "readout.max_epochs",
            "must be at least 1",
        )?;
        check(o.patience >= 1, "readout.patience", "must be at least 1")?;
        check(
            o.huber_delta.is_finite() && o.huber_delta > 0.0,
            "readout.huber_delta",
            "must be positive",
        )?;
        check(
            o.validation_fraction > 0.0 && o.validation_fraction < 1.0,
            "readout.validation_fraction",
            "must lie in (0, 1)",
        )?;
        check_lambdas(&o.logistic_lambdas, "readout.logistic_lambdas")?;
        check_lambdas(&o.ridge_lambdas, "readout.ridge_lambdas")?;

        let s = &self.sweep;
        check(!s.values.is_empty(), "sweep.values", "must not be empty")?;
        check(s.repeats >= 1, "sweep.repeats", "must be at least 1")?;
        match s.axis {
            SweepAxis::Kerr => check(
                s.values.iter().all(|v| v.is_finite() && *v >= 0.0),
                "sweep.values",
                "Kerr values must be >= 0",
            )?,
            SweepAxis::Size => check(
                s.values.iter().all(|v| *v >= 1.0 && v.fract() == 0.0),
                "sweep.values",
                "lattice sizes must be positive integers",
            )?,
        }
        Ok(())
    }

    pub fn grid(&self) -> GridOptions {
        GridOptions {
            size: self.dataset.grid_size,
            extent: self.dataset.grid_extent,
        }
    }

    pub fn readout_options(&self) -> ReadoutOptions {
        let o = &self.readout;
        let regression_loss = match o.regression_loss {
            RegressionLoss::Mse => LossKind::Mse,
            RegressionLoss::Huber => LossKind::Huber {
                delta: o.huber_delta,
            },
        };
        ReadoutOptions {
            n_bins: o.n_bins,
            feature_window: o.feature_window,
            hidden: o.hidden.clone(),
            train: TrainConfig {
                learning_rate: o.learning_rate,
                weight_decay: o.weight_decay,
                decay: o.decay,
                max_epochs: o.max_epochs,
                patience: o.patience,
                ..TrainConfig::default()
            },
            regression_loss,
            validation_fraction: o.validation_fraction,
            logistic_lambdas: o.logistic_lambdas.clone(),
            ridge_lambdas: o.ridge_lambdas.clone(),
        }
    }

    pub fn sweep_base(&self) -> SweepBase {
        let r = &self.reservoir;
        SweepBase {
            n_nodes: r.n_nodes,
            kerr: r.kerr,
            drive: r.drive,
            n_trajectories: r.n_trajectories,
            n_samples: self.n_samples(),
            grid: self.grid(),
            readout: self.readout_options(),
            dt: r.dt,
            t_final: r.t_final,
            injection_window: r.injection_window,
        }
    }

    /// Reservoir realisation drawn from `reservoir_seed`.
    pub fn reservoir_config(&self, reservoir_seed: u64) -> Result<ReservoirConfig<f64>, CliError> {
        let r = &self.reservoir;
        let mut config = build_reservoir(
            r.n_nodes,
            r.kerr,
            Complex::new(r.drive, 0.0),
            r.n_trajectories,
            reservoir_seed,
        )?;
        config.dt = r.dt;
        config.t_final = r.t_final;
        config.injection_window = r.injection_window;
        config.stratonovich_correction = r.stratonovich_correction;
        config.midpoint_iterations = r.midpoint_iterations;
        config.validate()?;
        Ok(config)
    }

    /// Everything that upstream artifacts depend on, for consistency checks
    /// between stages.
    pub fn upstream_key(&self) -> String {
        let mut c = self.clone();
        c.readouts = all_readouts();
        c.out_dir = None;
        c.readout = ReadoutSection::default();
        c.sweep = SweepSection::default();
        c.output = OutputSection::default();
        c.to_toml()
    }

    pub fn features_key(&self) -> String {
        let mut c = self.clone();
        c.readout = ReadoutSection {
            n_bins: self.readout.n_bins,
            feature_window: self.readout.feature_window,
            ..ReadoutSection::default()
        };
        c.upstream_key() + &toml::to_string(&c.readout).expect("TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_fills_defaults() {
        let c = ExperimentConfig::parse("task = \"classification\"").unwrap();
        assert_eq!(c, ExperimentConfig::new(Task::Classification));
        assert_eq!(c.n_samples(), 250);
        assert_eq!(c.readout_options(), ReadoutOptions::default());
        assert_eq!(c.sweep_base(), SweepBase::desk_scale(Task::Classification));
    }

    #[test]
    fn negative_kerr_names_key() {
        let err = ExperimentConfig::parse("task = \"classification\"\n[reservoir]\nkerr = -0.1\n")
            .unwrap_err();
        assert!(err.to_string().contains("kerr"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let err = ExperimentConfig::parse("task = \"regression\"\n[reservoir]\nkerrr = 0.1\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("reservoir") && msg.contains("kerrr"), "{msg}");
    }

    #[test]
    fn missing_task_is_an_error() {
        let err = ExperimentConfig::parse("seed = 3").unwrap_err();
        assert!(err.to_string().contains("task"), "{err}");
    }

    #[test]
    fn round_trip() {
        let text = r#"
task = "tomography"
seed = 17
repeats = 3
readouts = ["eqss"]

[reservoir]
n_nodes = 3
kerr = 0.07
injection_window = [5.0, 7.5]
n_trajectories = 123

[dataset]
n_samples = 60
grid_size = 16

[readout]
hidden = [8, 4]
regression_loss = "huber"
ridge_lambdas = [0.1, 0.30000000000000004]

[sweep]
axis = "size"
values = [1.0, 2.0, 5.0]
"#;
        let c = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_toml(), again.to_toml());
        assert_eq!(c.readout.ridge_lambdas[1], 0.30000000000000004);
    }

    #[test]
    fn sample_count_must_fit_split() {
        let err = ExperimentConfig::parse("task = \"classification\"\n[dataset]\nn_samples = 41\n")
            .unwrap_err();
        assert!(err.to_string().contains("dataset.n_samples"), "{err}");
    }

    #[test]
    fn sweep_sizes_must_be_integers() {
        let err = ExperimentConfig::parse(
            "task = \"classification\"\n[sweep]\naxis = \"size\"\nvalues = [2.5]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("sweep.values"), "{err}");
    }
}
