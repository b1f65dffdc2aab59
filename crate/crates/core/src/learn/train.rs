use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{
    AdamState, LossKind, Mlp, Targets, WeightDecay, DEFAULT_LEARNING_RATE, DEFAULT_WEIGHT_DECAY,
};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub decay: WeightDecay,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: DEFAULT_LEARNING_RATE,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            decay: WeightDecay::Decoupled,
            max_epochs: 2000,
            patience: 200,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn with_loss(loss: LossKind) -> Self {
        Self {
            loss,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History<T> {
    /// Training loss before each update.
    pub train_loss: Vec<T>,
    /// Validation loss after each update.
    pub validation_loss: Vec<T>,
    /// Index into `validation_loss` of the returned parameters.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub mlp: Mlp<T>,
    pub history: History<T>,
}

/// Full-batch Adam with early stopping on the validation loss. Returns the
/// best-validation parameters.
pub fn train_mlp<T: Real>(
    mut mlp: Mlp<T>,
    train: (ArrayView2<'_, T>, Targets<'_, T>),
    validation: (ArrayView2<'_, T>, Targets<'_, T>),
    config: &TrainConfig,
) -> Result<Trained<T>> {
    let (x, y) = train;
    let (xv, yv) = validation;
    if x.nrows() == 0 || xv.nrows() == 0 {
        return Err(Error::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    if config.max_epochs == 0 {
        return Err(Error::invalid("max_epochs must be positive"));
    }
    let mut adam = AdamState::for_mlp(
        &mlp,
        T::lit(config.learning_rate),
        T::lit(config.weight_decay),
    );
    adam.decay = config.decay;
    let mut history = History {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best = (T::infinity(), mlp.clone());
    for epoch in 0..config.max_epochs {
        let (loss, grads) = mlp.gradient(x, y, config.loss)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDivergence(format!(
                "training loss became {loss} at epoch {epoch}"
            )));
        }
        mlp.adam_step(&grads, &mut adam)?;
        let val = mlp.loss(xv, yv, config.loss)?;
        if !val.is_finite() {
            return Err(Error::TrainingDivergence(format!(
                "validation loss became {val} at epoch {epoch}"
            )));
        }
        history.train_loss.push(loss);
        history.validation_loss.push(val);
        if val < best.0 {
            best = (val, mlp.clone());
            history.best_epoch = epoch;
        } else if epoch - history.best_epoch >= config.patience {
            history.stopped_early = true;
            break;
        }
    }
    Ok(Trained {
        mlp: best.1,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::OutputActivation;
    use ndarray::Array2;

    fn separable() -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::zeros((40, 2));
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            let class = i % 2;
            let offset = if class == 0 { -1.0 } else { 1.0 };
            x[[i, 0]] = offset + 0.3 * (7.0 * t).sin();
            x[[i, 1]] = 0.5 * (13.0 * t).cos();
            y.push(class);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let (x, y) = separable();
        let mlp = Mlp::glorot(&[2, 8, 2], OutputActivation::Softmax, 1).unwrap();
        let cfg = TrainConfig {
            max_epochs: 500,
            ..TrainConfig::default()
        };
        let t = train_mlp(
            mlp,
            (x.view(), Targets::Classes(&y)),
            (x.view(), Targets::Classes(&y)),
            &cfg,
        )
        .unwrap();
        let pred = t.mlp.predict_classes(x.view()).unwrap();
        assert_eq!(pred, y);
    }

    #[test]
    fn identity_regression() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| -1.0 + 2.0 * i as f64 / 99.0);
        let xv = Array2::from_shape_fn((25, 1), |(i, _)| -0.95 + 1.9 * i as f64 / 24.0);
        let mlp = Mlp::glorot(&[1, 16, 1], OutputActivation::Identity, 2).unwrap();
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::with_loss(LossKind::Mse)
        };
        let t = train_mlp(
            mlp,
            (x.view(), Targets::Values(x.view())),
            (xv.view(), Targets::Values(xv.view())),
            &cfg,
        )
        .unwrap();
        let best = t.history.validation_loss[t.history.best_epoch];
        assert!(best < 1e-4, "validation mse {best}");
    }

    #[test]
    fn deterministic_history() {
        let (x, y) = separable();
        let run = || {
            let mlp = Mlp::glorot(&[2, 5, 2], OutputActivation::Softmax, 4).unwrap();
            let cfg = TrainConfig {
                max_epochs: 50,
                ..TrainConfig::default()
            };
            train_mlp(
                mlp,
                (x.view(), Targets::Classes(&y)),
                (x.view(), Targets::Classes(&y)),
                &cfg,
            )
            .unwrap()
        };
        assert_eq!(run().history, run().history);
    }
}
