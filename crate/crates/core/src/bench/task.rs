use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{confusion_matrix, Dataset, Task, N_CLASSES};
use crate::features::{
    bin_features, feature_matrix, subtract_reference, FeatureVector, Standardizer,
};
use crate::features::{DEFAULT_BINS, DEFAULT_FEATURE_WINDOW};
use crate::learn::{
    accuracy, fit_multinomial_logistic, fit_ridge, lambda_grid, train_mlp, LinearModel, LossKind,
    Mlp, OutputActivation, Targets, TrainConfig,
};
use crate::reservoir::{simulate_prefix, ReservoirConfig, ResponseRecord};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Linear readout: logistic regression for classification, ridge
    /// otherwise.
    LinearQrc,
    /// Feed-forward network readout.
    Eqss,
}

impl Readout {
    pub fn name(self) -> &'static str {
        match self {
            Readout::LinearQrc => "linear_qrc",
            Readout::Eqss => "eqss",
        }
    }
}

impl std::fmt::Display for Readout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hidden layer widths of the network readout.
pub fn default_hidden(task: Task) -> Vec<usize> {
    match task {
        Task::Classification => vec![300],
        Task::Regression => vec![250],
        Task::Tomography => vec![100, 100, 100, 100, 200, 64],
    }
}

fn default_ridge_grid() -> Vec<f64> {
    (-4..=3).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutOptions {
    pub n_bins: usize,
    pub feature_window: (f64, f64),
    /// Network hidden widths; `None` selects [`default_hidden`].
    pub hidden: Option<Vec<usize>>,
    pub train: TrainConfig,
    /// Regression losses for the network (cross-entropy is always used for
    /// classification).
    pub regression_loss: LossKind,
    /// Fraction of the training split held out for early stopping and for
    /// choosing the ridge strength.
    pub validation_fraction: f64,
    pub logistic_lambdas: Vec<f64>,
    pub ridge_lambdas: Vec<f64>,
}

impl Default for ReadoutOptions {
    fn default() -> Self {
        Self {
            n_bins: DEFAULT_BINS,
            feature_window: DEFAULT_FEATURE_WINDOW,
            hidden: None,
            train: TrainConfig::default(),
            regression_loss: LossKind::Mse,
            validation_fraction: 0.2,
            logistic_lambdas: lambda_grid(),
            ridge_lambdas: default_ridge_grid(),
        }
    }
}

impl ReadoutOptions {
    pub fn layer_sizes(&self, task: Task, n_inputs: usize, n_outputs: usize) -> Vec<usize> {
        let mut sizes = vec![n_inputs];
        sizes.extend(self.hidden.clone().unwrap_or_else(|| default_hidden(task)));
        sizes.push(n_outputs);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::invalid("n_bins must be positive"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
        }
        if self.logistic_lambdas.is_empty() || self.ridge_lambdas.is_empty() {
            return Err(Error::invalid("lambda grids must be non-empty"));
        }
        if self
            .logistic_lambdas
            .iter()
            .chain(&self.ridge_lambdas)
            .any(|&l| !(l >= 0.0) || !l.is_finite())
        {
            return Err(Error::invalid(
                "lambda values must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Raw (unstandardised) features of every dataset sample, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub features: Vec<FeatureVector<f64>>,
    pub n_trajectories: usize,
    pub diverged: usize,
}

impl FeatureSet {
    pub fn matrix(&self, indices: &[usize]) -> Result<Array2<f64>> {
        let rows: Vec<FeatureVector<f64>> =
            indices.iter().map(|&i| self.features[i].clone()).collect();
        feature_matrix(&rows)
    }
}

/// Reference and per-sample responses of one reservoir realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Responses {
    pub reference: ResponseRecord<f64>,
    pub samples: Vec<ResponseRecord<f64>>,
}

/// Source-sampler seed of dataset sample `index`.
pub fn source_seed(seed: u64, index: usize) -> u64 {
    seed::derive(seed, &[seed::label::SOURCE, index as u64])
}

/// Simulate the reference run once and every sample of `dataset` on the
/// same reservoir realisation. All runs share the trajectory noise; each
/// sample draws its input state from its own stream.
pub fn simulate_responses(
    config: &ReservoirConfig<f64>,
    dataset: &Dataset,
    seed: u64,
) -> Result<Responses> {
    let prefix = simulate_prefix(config)?;
    let reference = prefix.resume(None, seed::derive(seed, &[seed::label::SOURCE]))?;
    let samples = dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| prefix.resume(Some(&s.spec), source_seed(seed, i)))
        .collect::<Result<_>>()?;
    Ok(Responses { reference, samples })
}

/// Reference-subtracted, binned features of every response.
pub fn features_from_responses(
    responses: &Responses,
    options: &ReadoutOptions,
) -> Result<FeatureSet> {
    let features = responses
        .samples
        .iter()
        .map(|r| {
            bin_features(
                &subtract_reference(r, &responses.reference)?,
                options.feature_window,
                options.n_bins,
            )
        })
        .collect::<Result<_>>()?;
    let diverged = responses.reference.diverged_count
        + responses
            .samples
            .iter()
            .map(|r| r.diverged_count)
            .sum::<usize>();
    Ok(FeatureSet {
        features,
        n_trajectories: responses.reference.n_trajectories,
        diverged,
    })
}

/// Features without keeping the full responses in memory.
pub fn simulate_features(
    config: &ReservoirConfig<f64>,
    dataset: &Dataset,
    options: &ReadoutOptions,
    seed: u64,
) -> Result<FeatureSet> {
    let prefix = simulate_prefix(config)?;
    let reference = prefix.resume(None, seed::derive(seed, &[seed::label::SOURCE]))?;
    let mut diverged = reference.diverged_count;
    let mut features = Vec::with_capacity(dataset.len());
    for (i, sample) in dataset.samples.iter().enumerate() {
        let record = prefix.resume(Some(&sample.spec), source_seed(seed, i))?;
        diverged += record.diverged_count;
        let corrected = subtract_reference(&record, &reference)?;
        features.push(bin_features(
            &corrected,
            options.feature_window,
            options.n_bins,
        )?);
    }
    Ok(FeatureSet {
        features,
        n_trajectories: config.n_trajectories,
        diverged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictions {
    Classes(Vec<usize>),
    /// One row per test sample, in original target units.
    Values(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: Task,
    pub readout: Readout,
    /// Test accuracy (classification) or test MSE.
    pub metric: f64,
    pub confusion: Option<Vec<Vec<usize>>>,
    pub test_indices: Vec<usize>,
    pub predictions: Predictions,
    pub repeats: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl TaskResult {
    fn single(
        task: Task,
        readout: Readout,
        metric: f64,
        confusion: Option<Vec<Vec<usize>>>,
        test_indices: Vec<usize>,
        predictions: Predictions,
    ) -> Self {
        Self {
            task,
            readout,
            metric,
            confusion,
            test_indices,
            predictions,
            repeats: vec![metric],
            mean: metric,
            std: 0.0,
        }
    }

    /// Fold per-repeat results; predictions and confusion come from the
    /// first repeat, the confusion matrix is summed over repeats.
    pub fn aggregate(results: &[TaskResult]) -> Result<TaskResult> {
        let first = results
            .first()
            .ok_or_else(|| Error::invalid("nothing to aggregate"))?;
        if results
            .iter()
            .any(|r| r.task != first.task || r.readout != first.readout)
        {
            return Err(Error::invalid(
                "cannot aggregate results of different tasks or readouts",
            ));
        }
        let repeats: Vec<f64> = results.iter().map(|r| r.metric).collect();
        let (mean, std) = mean_std(&repeats);
        let confusion = first.confusion.as_ref().map(|c0| {
            let mut total = vec![vec![0; c0.len()]; c0.len()];
            for c in results.iter().filter_map(|r| r.confusion.as_ref()) {
                for (i, row) in c.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        total[i][j] += v;
                    }
                }
            }
            total
        });
        Ok(TaskResult {
            metric: mean,
            confusion,
            repeats,
            mean,
            std,
            ..first.clone()
        })
    }
}

/// A trained readout together with its preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedReadout {
    pub task: Task,
    pub readout: Readout,
    pub scaler: Standardizer<f64>,
    /// Target standardiser for regression and tomography.
    pub target_scaler: Option<Standardizer<f64>>,
    pub model: ReadoutModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutModel {
    Linear(LinearModel<f64>),
    Network(Mlp<f64>),
}

impl FittedReadout {
    /// Predictions for raw feature rows.
    pub fn predict(&self, raw: &Array2<f64>) -> Result<Predictions> {
        let x = self.scaler.apply_rows(raw);
        match self.task {
            Task::Classification => {
                let classes = match &self.model {
                    ReadoutModel::Linear(m) => m.predict_classes(x.view())?,
                    ReadoutModel::Network(m) => m.predict_classes(x.view())?,
                };
                Ok(Predictions::Classes(classes))
            }
            Task::Regression | Task::Tomography => {
                let z = match &self.model {
                    ReadoutModel::Linear(m) => m.predict(x.view())?,
                    ReadoutModel::Network(m) => m.predict(x.view())?,
                };
                let scaler = self
                    .target_scaler
                    .as_ref()
                    .ok_or_else(|| Error::invalid("missing target scaler"))?;
                Ok(Predictions::Values(scaler.invert_rows(&z)))
            }
        }
    }
}

/// Seeded split of `indices` into (fit, validation).
fn holdout(indices: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut seed::stream(seed, 0));
    let n_val = ((indices.len() as f64 * fraction).round() as usize).max(1);
    if n_val >= indices.len() {
        return Err(Error::invalid(
            "training split too small to hold out a validation set",
        ));
    }
    let (val, fit) = shuffled.split_at(n_val);
    let (mut fit, mut val) = (fit.to_vec(), val.to_vec());
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

fn positions(subset: &[usize], within: &[usize]) -> Vec<usize> {
    subset
        .iter()
        .map(|i| within.binary_search(i).expect("subset of sorted indices"))
        .collect()
}

fn ridge_with_validation(
    x: &Array2<f64>,
    y: &Array2<f64>,
    grid: &[f64],
    fit: &[usize],
    val: &[usize],
) -> Result<LinearModel<f64>> {
    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let (xf, yf) = (x.select(Axis(0), fit), y.select(Axis(0), fit));
        let (xv, yv) = (x.select(Axis(0), val), y.select(Axis(0), val));
        let mut best = (f64::INFINITY, grid[0]);
        for &lambda in grid {
            let Ok(model) = fit_ridge(xf.view(), yf.view(), lambda) else {
                continue;
            };
            let err = (&model.predict(xv.view())? - &yv)
                .mapv(|e| e * e)
                .mean()
                .unwrap_or(f64::INFINITY);
            if err < best.0 {
                best = (err, lambda);
            }
        }
        best.1
    };
    fit_ridge(x.view(), y.view(), lambda)
}

/// Fit `readout` on the training split of `dataset` using precomputed
/// features.
pub fn fit_readout(
    dataset: &Dataset,
    features: &FeatureSet,
    readout: Readout,
    options: &ReadoutOptions,
    seed: u64,
) -> Result<FittedReadout> {
    options.validate()?;
    let task = dataset.task;
    let train = &dataset.train;
    let raw = features.matrix(train)?;
    let scaler = Standardizer::fit_rows(&raw)?;
    let x = scaler.apply_rows(&raw);
    let split_seed = seed::derive(seed, &[seed::label::SPLIT, readout as u64]);
    let init_seed = seed::derive(seed, &[seed::label::INIT]);
    let (fit, val) = holdout(train, options.validation_fraction, split_seed)?;
    let (fit, val) = (positions(&fit, train), positions(&val, train));
    match task {
        Task::Classification => {
            let labels = dataset.classes(train)?;
            let model = match readout {
                Readout::LinearQrc => ReadoutModel::Linear(fit_multinomial_logistic(
                    x.view(),
                    &labels,
                    &options.logistic_lambdas,
                    split_seed,
                )?),
                Readout::Eqss => {
                    let sizes = options.layer_sizes(task, x.ncols(), N_CLASSES);
                    let mlp = Mlp::glorot(&sizes, OutputActivation::Softmax, init_seed)?;
                    let (xf, xv) = (x.select(Axis(0), &fit), x.select(Axis(0), &val));
                    let lf: Vec<usize> = fit.iter().map(|&i| labels[i]).collect();
                    let lv: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
                    let cfg = TrainConfig {
                        loss: LossKind::CrossEntropy,
                        ..options.train
                    };
                    let trained = train_mlp(
                        mlp,
                        (xf.view(), Targets::Classes(&lf)),
                        (xv.view(), Targets::Classes(&lv)),
                        &cfg,
                    )?;
                    ReadoutModel::Network(trained.mlp)
                }
            };
            Ok(FittedReadout {
                task,
                readout,
                scaler,
                target_scaler: None,
                model,
            })
        }
        Task::Regression | Task::Tomography => {
            let raw_y = dataset.target_rows(train)?;
            let target_scaler = Standardizer::fit_rows(&raw_y)?;
            let y = target_scaler.apply_rows(&raw_y);
            let model = match readout {
                Readout::LinearQrc => ReadoutModel::Linear(ridge_with_validation(
                    &x,
                    &y,
                    &options.ridge_lambdas,
                    &fit,
                    &val,
                )?),
                Readout::Eqss => {
                    let sizes = options.layer_sizes(task, x.ncols(), y.ncols());
                    let mlp = Mlp::glorot(&sizes, OutputActivation::Identity, init_seed)?;
                    let (xf, xv) = (x.select(Axis(0), &fit), x.select(Axis(0), &val));
                    let (yf, yv) = (y.select(Axis(0), &fit), y.select(Axis(0), &val));
                    let cfg = TrainConfig {
                        loss: options.regression_loss,
                        ..options.train
                    };
                    let trained = train_mlp(
                        mlp,
                        (xf.view(), Targets::Values(yf.view())),
                        (xv.view(), Targets::Values(yv.view())),
                        &cfg,
                    )?;
                    ReadoutModel::Network(trained.mlp)
                }
            };
            Ok(FittedReadout {
                task,
                readout,
                scaler,
                target_scaler: Some(target_scaler),
                model,
            })
        }
    }
}

/// Score a fitted readout on the test split.
pub fn evaluate_readout(
    dataset: &Dataset,
    features: &FeatureSet,
    fitted: &FittedReadout,
) -> Result<TaskResult> {
    let test = &dataset.test;
    let predictions = fitted.predict(&features.matrix(test)?)?;
    match &predictions {
        Predictions::Classes(pred) => {
            let labels = dataset.classes(test)?;
            let confusion = confusion_matrix(pred, &labels, N_CLASSES)?;
            let metric = accuracy(pred, &labels);
            Ok(TaskResult::single(
                dataset.task,
                fitted.readout,
                metric,
                Some(confusion),
                test.clone(),
                predictions,
            ))
        }
        Predictions::Values(values) => {
            let target = dataset.target_rows(test)?;
            let metric = (values - &target)
                .mapv(|e| e * e)
                .mean()
                .expect("non-empty test split");
            Ok(TaskResult::single(
                dataset.task,
                fitted.readout,
                metric,
                None,
                test.clone(),
                predictions,
            ))
        }
    }
}

/// Fit and score every readout on one shared simulation.
pub fn run_readouts(
    config: &ReservoirConfig<f64>,
    dataset: &Dataset,
    readouts: &[Readout],
    options: &ReadoutOptions,
    seed: u64,
) -> Result<Vec<TaskResult>> {
    dataset.validate()?;
    let features = simulate_features(config, dataset, options, seed)?;
    readouts
        .iter()
        .map(|&r| {
            evaluate_readout(
                dataset,
                &features,
                &fit_readout(dataset, &features, r, options, seed)?,
            )
        })
        .collect()
}

/// Simulate, fit `readout` on the training split and evaluate on the test
/// split.
pub fn run_task(
    task: Task,
    config: &ReservoirConfig<f64>,
    dataset: &Dataset,
    readout: Readout,
    seed: u64,
) -> Result<TaskResult> {
    if dataset.task != task {
        return Err(Error::invalid(format!(
            "dataset was generated for {}, not {task}",
            dataset.task
        )));
    }
    let mut results = run_readouts(
        config,
        dataset,
        &[readout],
        &ReadoutOptions::default(),
        seed,
    )?;
    Ok(results.remove(0))
}
