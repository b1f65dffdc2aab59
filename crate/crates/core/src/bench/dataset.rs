use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::{self, WignerGrid, DEFAULT_EXTENT, DEFAULT_GRID_SIZE};
use crate::states::{StateKind, StateSpec};
use crate::{seed, Error, Result};

/// Cat amplitude range `|beta|`.
pub const CAT_AMPLITUDE: (f64, f64) = (1.12, 1.38);
pub const CAT_PHASE: (f64, f64) = (0.0, FRAC_PI_2);
pub const SQUEEZE_MAGNITUDE: (f64, f64) = (0.9, 1.1);
pub const SQUEEZE_PHASE: (f64, f64) = (0.0, FRAC_PI_2);
pub const COHERENT_AMPLITUDE: (f64, f64) = (1.03, 1.34);
/// Coherent phases are not restricted by the dataset definition.
pub const COHERENT_PHASE: (f64, f64) = (0.0, FRAC_PI_2);

/// `C_1` region for cats: `(|beta| - 2.35)^2 + (phi - 1.15)^2 < 1.2^2`.
pub const CAT_REGION: (f64, f64, f64) = (2.35, 1.15, 1.2);
/// `C_1` region for squeezed states: `(r - 0.05)^2 + (theta - 0.7)^2 < 1`.
pub const SQUEEZED_REGION: (f64, f64, f64) = (0.05, 0.7, 1.0);

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
    Tomography,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
            Task::Tomography => "tomography",
        }
    }

    /// State kinds drawn for this task.
    pub fn kinds(self) -> &'static [StateKind] {
        match self {
            Task::Classification => &[StateKind::SqueezedVacuum, StateKind::Cat],
            Task::Regression => &[StateKind::SqueezedVacuum],
            Task::Tomography => &[
                StateKind::Coherent,
                StateKind::SqueezedVacuum,
                StateKind::Cat,
            ],
        }
    }

    /// Training-to-testing ratio.
    pub fn split_ratio(self) -> (usize, usize) {
        match self {
            Task::Classification => (1, 1),
            Task::Regression => (3, 10),
            Task::Tomography => (14, 1),
        }
    }

    /// Desk-scale dataset size.
    pub fn default_samples(self) -> usize {
        match self {
            Task::Classification => 250,
            Task::Regression => 130,
            Task::Tomography => 300,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            "tomography" => Ok(Task::Tomography),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Class(usize),
    Value(f64),
    Grid(WignerGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub spec: StateSpec,
    pub label: Label,
}

/// Tomography target grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOptions {
    pub size: usize,
    pub extent: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            size: DEFAULT_GRID_SIZE,
            extent: DEFAULT_EXTENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub samples: Vec<Sample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn specs(&self) -> Vec<StateSpec> {
        self.samples.iter().map(|s| s.spec).collect()
    }

    /// Class labels; errors unless this is a classification set.
    pub fn classes(&self, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| match self.samples[i].label {
                Label::Class(c) => Ok(c),
                _ => Err(Error::invalid("dataset does not carry class labels")),
            })
            .collect()
    }

    /// Real targets as rows: one column for regression, `M^2` for tomography.
    pub fn target_rows(&self, indices: &[usize]) -> Result<ndarray::Array2<f64>> {
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| match &self.samples[i].label {
                Label::Value(v) => Ok(vec![*v]),
                Label::Grid(g) => Ok(g.values.clone()),
                Label::Class(_) => Err(Error::invalid(
                    "dataset carries class labels, not real targets",
                )),
            })
            .collect::<Result<_>>()?;
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid("targets have different lengths"));
        }
        ndarray::Array2::from_shape_vec((rows.len(), width), rows.concat())
            .map_err(|e| Error::invalid(e.to_string()))
    }

    /// Per-class counts over `indices`.
    pub fn class_counts(&self, indices: &[usize]) -> Result<Vec<usize>> {
        let mut counts = vec![0; N_CLASSES];
        for c in self.classes(indices)? {
            counts[c] += 1;
        }
        Ok(counts)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.samples.len()];
        for &i in self.train.iter().chain(&self.test) {
            if i >= seen.len() || seen[i] {
                return Err(Error::invalid(
                    "split indices must be disjoint and in range",
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("split does not cover every sample"));
        }
        Ok(())
    }
}

/// Uniform draw from the open interval `(lo, hi)`.
fn open_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

fn draw_spec(kind: StateKind, rng: &mut ChaCha8Rng) -> StateSpec {
    match kind {
        StateKind::Coherent => StateSpec::coherent(
            open_uniform(rng, COHERENT_AMPLITUDE),
            open_uniform(rng, COHERENT_PHASE),
        ),
        StateKind::SqueezedVacuum => StateSpec::squeezed(
            open_uniform(rng, SQUEEZE_MAGNITUDE),
            open_uniform(rng, SQUEEZE_PHASE),
        ),
        StateKind::Cat => StateSpec::cat(
            open_uniform(rng, CAT_AMPLITUDE),
            open_uniform(rng, CAT_PHASE),
        ),
    }
}

/// Class index: 0 = `C_1` (inside the kind's region), 1 = `C_2` (squeezed
/// outside), 2 = `C_3` (cat outside). The region boundary is outside.
pub fn classification_label(spec: &StateSpec) -> Result<usize> {
    let inside = |a: f64, b: f64, (a0, b0, radius): (f64, f64, f64)| {
        (a - a0).powi(2) + (b - b0).powi(2) < radius * radius
    };
    match spec.kind {
        StateKind::Cat => Ok(
            if inside(spec.amplitude_mag, spec.amplitude_phase, CAT_REGION) {
                0
            } else {
                2
            },
        ),
        StateKind::SqueezedVacuum => Ok(
            if inside(spec.squeeze_mag, spec.squeeze_phase, SQUEEZED_REGION) {
                0
            } else {
                1
            },
        ),
        StateKind::Coherent => Err(Error::invalid(
            "coherent states are not part of the classification task",
        )),
    }
}

fn label_for(task: Task, spec: &StateSpec, grid: &GridOptions) -> Result<Label> {
    match task {
        Task::Classification => classification_label(spec).map(Label::Class),
        Task::Regression => Ok(Label::Value(spec.squeeze_phase)),
        Task::Tomography => {
            oracle::wigner(spec, grid.size, grid.extent, oracle::adequate_cutoff(spec))
                .map(Label::Grid)
        }
    }
}

pub fn generate_dataset(task: Task, n_samples: usize, seed: u64) -> Result<Dataset> {
    generate_dataset_with(task, n_samples, seed, &GridOptions::default())
}

/// Equal numbers of each state kind used by `task`, parameters uniform in
/// the dataset ranges, and a seeded shuffle split at the task ratio.
pub fn generate_dataset_with(
    task: Task,
    n_samples: usize,
    seed: u64,
    grid: &GridOptions,
) -> Result<Dataset> {
    let kinds = task.kinds();
    if n_samples == 0 || !n_samples.is_multiple_of(kinds.len()) {
        return Err(Error::invalid(format!(
            "{task} needs a positive sample count divisible by {}, got {n_samples}",
            kinds.len()
        )));
    }
    let (a, b) = task.split_ratio();
    if !n_samples.is_multiple_of(a + b) {
        return Err(Error::invalid(format!(
            "{task} needs a sample count divisible by {} for the {a}:{b} split",
            a + b
        )));
    }
    let mut rng = seed::stream(seed::derive(seed, &[seed::label::DATASET]), 0);
    let per_kind = n_samples / kinds.len();
    let mut samples = Vec::with_capacity(n_samples);
    for &kind in kinds {
        for _ in 0..per_kind {
            let spec = draw_spec(kind, &mut rng);
            samples.push(Sample {
                spec,
                label: label_for(task, &spec, grid)?,
            });
        }
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut seed::stream(
        seed::derive(seed, &[seed::label::SPLIT]),
        0,
    ));
    let n_train = n_samples / (a + b) * a;
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Dataset {
        task,
        samples,
        train,
        test,
        seed,
    })
}

/// Confusion counts: entry `(i, j)` counts true class `i` predicted as `j`.
pub fn confusion_matrix(
    preds: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if preds.len() != labels.len() {
        return Err(Error::invalid("predictions and labels differ in length"));
    }
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::invalid(format!(
                "class index out of range for {n_classes} classes"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_examples() {
        assert_eq!(
            classification_label(&StateSpec::cat(2.35, 1.15)).unwrap(),
            0
        );
        assert_eq!(
            classification_label(&StateSpec::squeezed(0.05, 0.7)).unwrap(),
            0
        );
        assert_eq!(
            classification_label(&StateSpec::cat(1.12, 0.01)).unwrap(),
            2
        );
        assert_eq!(
            classification_label(&StateSpec::squeezed(1.09, 1.5)).unwrap(),
            1
        );
        assert!(classification_label(&StateSpec::coherent(1.0, 0.0)).is_err());
    }

    #[test]
    fn region_boundary_is_excluded() {
        // (1.05 - 0.05)^2 + 0 = 1, not < 1
        assert_eq!(
            classification_label(&StateSpec::squeezed(1.05, 0.7)).unwrap(),
            1
        );
    }

    #[test]
    fn split_sizes() {
        let d = generate_dataset(Task::Classification, 250, 3).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (125, 125));
        assert!(d.class_counts(&d.test).unwrap().iter().all(|&c| c >= 1));
        d.validate().unwrap();
        let d = generate_dataset(Task::Regression, 130, 3).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (30, 100));
        assert!(generate_dataset(Task::Regression, 131, 3).is_err());
        assert!(generate_dataset(Task::Classification, 251, 3).is_err());
    }

    #[test]
    fn kinds_balanced_and_in_range() {
        let d = generate_dataset(Task::Classification, 250, 8).unwrap();
        let cats = d
            .samples
            .iter()
            .filter(|s| s.spec.kind == StateKind::Cat)
            .count();
        assert_eq!(cats, 125);
        for s in &d.samples {
            match s.spec.kind {
                StateKind::Cat => {
                    assert!(s.spec.amplitude_mag > 1.12 && s.spec.amplitude_mag < 1.38);
                    assert!(s.spec.amplitude_phase > 0.0 && s.spec.amplitude_phase < FRAC_PI_2);
                }
                StateKind::SqueezedVacuum => {
                    assert!(s.spec.squeeze_mag > 0.9 && s.spec.squeeze_mag < 1.1);
                }
                StateKind::Coherent => unreachable!(),
            }
        }
    }

    #[test]
    fn regeneration_is_identical() {
        assert_eq!(
            generate_dataset(Task::Regression, 130, 17).unwrap(),
            generate_dataset(Task::Regression, 130, 17).unwrap()
        );
        assert_ne!(
            generate_dataset(Task::Regression, 130, 17).unwrap(),
            generate_dataset(Task::Regression, 130, 18).unwrap()
        );
    }

    #[test]
    fn confusion_examples() {
        let m = confusion_matrix(&[0, 1, 1, 1, 2, 0], &[0, 0, 1, 1, 2, 2], 3).unwrap();
        assert_eq!(m, vec![vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 1]]);
        let m = confusion_matrix(&[0, 0, 0], &[0, 1, 2], 3).unwrap();
        assert!(m.iter().all(|row| row[1] == 0 && row[2] == 0));
        assert!(confusion_matrix(&[3], &[0], 3).is_err());
    }
}
