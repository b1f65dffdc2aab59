use serde::{Deserialize, Serialize};

use super::task::{
    evaluate_readout, fit_readout, mean_std, simulate_features, Readout, ReadoutOptions,
};
use super::{generate_dataset_with, GridOptions, Task};
use crate::reservoir::{build_reservoir, ReservoirConfig};
use crate::{seed, Complex, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Kerr,
    Size,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Kerr => "kerr",
            SweepAxis::Size => "size",
        }
    }
}

/// One result series in a sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Eqss,
    LinearQrc,
    /// Network readout on a `U = 0` reservoir.
    EqssLinearReservoir,
}

impl Series {
    pub fn name(self) -> &'static str {
        match self {
            Series::Eqss => "eqss",
            Series::LinearQrc => "linear_qrc",
            Series::EqssLinearReservoir => "eqss_u0",
        }
    }

    pub const ALL: [Series; 3] = [Series::Eqss, Series::LinearQrc, Series::EqssLinearReservoir];
}

/// Everything a sweep holds fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBase {
    pub n_nodes: usize,
    pub kerr: f64,
    pub drive: f64,
    pub n_trajectories: usize,
    pub n_samples: usize,
    pub grid: GridOptions,
    pub readout: ReadoutOptions,
    /// Applied to every reservoir after construction.
    pub dt: f64,
    pub t_final: f64,
    pub injection_window: (f64, f64),
}

impl SweepBase {
    pub fn desk_scale(task: Task) -> Self {
        use crate::reservoir::{DEFAULT_DRIVE, DEFAULT_DT, DEFAULT_T_FINAL, DEFAULT_WINDOW};
        Self {
            n_nodes: 5,
            kerr: 0.05,
            drive: DEFAULT_DRIVE,
            n_trajectories: 2000,
            n_samples: task.default_samples(),
            grid: GridOptions::default(),
            readout: ReadoutOptions::default(),
            dt: DEFAULT_DT,
            t_final: DEFAULT_T_FINAL,
            injection_window: DEFAULT_WINDOW,
        }
    }

    /// Reservoir for one repeat; the realisation depends only on
    /// `(n_nodes, reservoir_seed)`.
    pub fn reservoir(
        &self,
        n_nodes: usize,
        kerr: f64,
        reservoir_seed: u64,
    ) -> Result<ReservoirConfig<f64>> {
        let mut config = build_reservoir(
            n_nodes,
            kerr,
            Complex::new(self.drive, 0.0),
            self.n_trajectories,
            reservoir_seed,
        )?;
        config.dt = self.dt;
        config.t_final = self.t_final;
        config.injection_window = self.injection_window;
        config.validate()?;
        Ok(config)
    }
}

/// Seeds for one repeat: reservoir realisation, dataset and readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatSeeds {
    pub reservoir: u64,
    pub dataset: u64,
    pub readout: u64,
}

impl RepeatSeeds {
    pub fn new(master: u64, repeat: usize) -> Self {
        let base = seed::derive(master, &[seed::label::REPEAT, repeat as u64]);
        Self {
            reservoir: seed::derive(base, &[seed::label::RESERVOIR]),
            dataset: seed::derive(base, &[seed::label::DATASET]),
            readout: seed::derive(base, &[seed::label::SHUFFLE]),
        }
    }
}

/// Mean and spread of one series at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub task: Task,
    pub axis: SweepAxis,
    pub value: f64,
    pub series: Series,
    /// Per-repeat metric; `None` where that repeat failed.
    pub metrics: Vec<Option<f64>>,
    pub errors: Vec<String>,
    pub mean: f64,
    pub std: f64,
    /// False when any repeat failed.
    pub valid: bool,
}

/// Metrics of both readouts (and optionally the `U = 0` control) at one
/// configuration and repeat.
fn run_point(
    task: Task,
    base: &SweepBase,
    n_nodes: usize,
    kerr: f64,
    seeds: RepeatSeeds,
    series: &[Series],
) -> Vec<(Series, Result<f64>)> {
    let dataset = match generate_dataset_with(task, base.n_samples, seeds.dataset, &base.grid) {
        Ok(d) => d,
        Err(e) => {
            return series
                .iter()
                .map(|&s| (s, Err(Error::invalid(e.to_string()))))
                .collect()
        }
    };
    let mut out = Vec::new();
    let mut shared = None;
    for &s in series {
        let (u, readout) = match s {
            Series::Eqss => (kerr, Readout::Eqss),
            Series::LinearQrc => (kerr, Readout::LinearQrc),
            Series::EqssLinearReservoir => (0.0, Readout::Eqss),
        };
        let features = if u == kerr && shared.is_some() {
            shared.clone().expect("checked")
        } else {
            let f = base
                .reservoir(n_nodes, u, seeds.reservoir)
                .and_then(|c| simulate_features(&c, &dataset, &base.readout, seeds.readout));
            match f {
                Ok(f) => f,
                Err(e) => {
                    out.push((s, Err(e)));
                    continue;
                }
            }
        };
        let metric = fit_readout(&dataset, &features, readout, &base.readout, seeds.readout)
            .and_then(|fitted| evaluate_readout(&dataset, &features, &fitted))
            .map(|r| r.metric);
        if u == kerr {
            shared = Some(features);
        }
        out.push((s, metric));
    }
    out
}

/// Sweep the Kerr strength or the lattice size. Each repeat draws a fresh
/// reservoir realisation, dataset and split (shared across axis values);
/// failures mark the affected cell invalid and the sweep continues.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    repeats: usize,
    base: &SweepBase,
    task: Task,
    master_seed: u64,
) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    if repeats == 0 {
        return Err(Error::invalid("sweep needs at least one repeat"));
    }
    if axis == SweepAxis::Size && values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
        return Err(Error::invalid("lattice sizes must be positive integers"));
    }
    let mut cells: Vec<SweepCell> = values
        .iter()
        .flat_map(|&value| {
            Series::ALL.iter().map(move |&series| SweepCell {
                task,
                axis,
                value,
                series,
                metrics: Vec::new(),
                errors: Vec::new(),
                mean: f64::NAN,
                std: f64::NAN,
                valid: true,
            })
        })
        .collect();
    for repeat in 0..repeats {
        let seeds = RepeatSeeds::new(master_seed, repeat);
        // the U = 0 control is the same for every Kerr value
        let mut kerr_control: Option<Result<f64, String>> = None;
        for (vi, &value) in values.iter().enumerate() {
            let (n_nodes, kerr) = match axis {
                SweepAxis::Kerr => (base.n_nodes, value),
                SweepAxis::Size => (value as usize, base.kerr),
            };
            let reuse_control = axis == SweepAxis::Kerr && kerr_control.is_some();
            let wanted: Vec<Series> = Series::ALL
                .iter()
                .copied()
                .filter(|&s| !(reuse_control && s == Series::EqssLinearReservoir))
                .collect();
            let mut results: Vec<(Series, Result<f64, String>)> =
                run_point(task, base, n_nodes, kerr, seeds, &wanted)
                    .into_iter()
                    .map(|(s, r)| (s, r.map_err(|e| e.to_string())))
                    .collect();
            if axis == SweepAxis::Kerr {
                match &kerr_control {
                    Some(c) => results.push((Series::EqssLinearReservoir, c.clone())),
                    None => {
                        kerr_control = results
                            .iter()
                            .find(|(s, _)| *s == Series::EqssLinearReservoir)
                            .map(|(_, r)| r.clone());
                    }
                }
            }
            for (series, result) in results {
                let si = Series::ALL
                    .iter()
                    .position(|&s| s == series)
                    .expect("known series");
                let cell = &mut cells[vi * Series::ALL.len() + si];
                match result {
                    Ok(m) => cell.metrics.push(Some(m)),
                    Err(e) => {
                        cell.metrics.push(None);
                        cell.errors.push(format!("repeat {repeat}: {e}"));
                        cell.valid = false;
                    }
                }
            }
        }
    }
    for cell in &mut cells {
        let ok: Vec<f64> = cell.metrics.iter().flatten().copied().collect();
        (cell.mean, cell.std) = mean_std(&ok);
    }
    Ok(cells)
}
