use ndarray::{Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::OutputActivation;
use crate::{Error, Real, Result};

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;
/// Probabilities are clamped here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    CrossEntropy,
    Mse,
    Huber { delta: f64 },
}

impl LossKind {
    pub fn huber() -> Self {
        LossKind::Huber {
            delta: DEFAULT_HUBER_DELTA,
        }
    }
}

/// Training targets: class indices or a `(batch, outputs)` matrix.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, T> {
    Classes(&'a [usize]),
    Values(ArrayView2<'a, T>),
}

impl<T> Targets<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_same<T>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} does not match target shape {:?}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

fn check_labels<T>(probs: &ArrayView2<'_, T>, labels: &[usize]) -> Result<()> {
    if probs.nrows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= probs.ncols()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} classes",
            probs.ncols()
        )));
    }
    Ok(())
}

/// Mean over samples of `-ln p[label]`.
pub fn loss_cross_entropy<T: Real>(probs: ArrayView2<'_, T>, labels: &[usize]) -> Result<T> {
    check_labels(&probs, labels)?;
    let floor = T::lit(PROB_FLOOR);
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| -probs[[i, c]].max(floor).ln())
        .sum();
    Ok(total / T::lit(labels.len() as f64))
}

/// Mean over all entries of the squared error.
pub fn loss_mse<T: Real>(pred: ArrayView2<'_, T>, target: ArrayView2<'_, T>) -> Result<T> {
    check_same(&pred, &target)?;
    let total: T = pred
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(total / T::lit(pred.len() as f64))
}

#[inline]
fn huber_term<T: Real>(e: T, delta: T) -> T {
    let a = e.abs();
    if a <= delta {
        T::lit(0.5) * e * e
    } else {
        delta * (a - T::lit(0.5) * delta)
    }
}

pub fn loss_huber<T: Real>(
    pred: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    delta: T,
) -> Result<T> {
    check_same(&pred, &target)?;
    if !(delta > T::zero()) {
        return Err(Error::invalid("huber delta must be positive"));
    }
    let total: T = pred
        .iter()
        .zip(target.iter())
        .map(|(&p, &t)| huber_term(p - t, delta))
        .sum();
    Ok(total / T::lit(pred.len() as f64))
}

/// Loss value and its gradient with respect to the output pre-activations.
pub(crate) fn loss_and_delta<T: Real>(
    kind: LossKind,
    output: OutputActivation,
    outputs: ArrayView2<'_, T>,
    targets: Targets<'_, T>,
) -> Result<(T, Array2<T>)> {
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::Classes(labels)) => {
            if output != OutputActivation::Softmax {
                return Err(Error::invalid("cross-entropy needs a softmax output"));
            }
            let loss = loss_cross_entropy(outputs, labels)?;
            // fused softmax + cross-entropy: (p - onehot) / batch
            let inv = T::lit(labels.len() as f64).recip();
            let mut delta = outputs.to_owned();
            for (i, &c) in labels.iter().enumerate() {
                delta[[i, c]] -= T::one();
            }
            delta.mapv_inplace(|d| d * inv);
            Ok((loss, delta))
        }
        (LossKind::Mse, Targets::Values(target)) => {
            let loss = loss_mse(outputs, target)?;
            let scale = T::lit(2.0 / outputs.len() as f64);
            let grad = Zip::from(&outputs)
                .and(&target)
                .map_collect(|&p, &t| (p - t) * scale);
            Ok((loss, through_output(output, outputs, grad)))
        }
        (LossKind::Huber { delta }, Targets::Values(target)) => {
            let d = T::lit(delta);
            let loss = loss_huber(outputs, target, d)?;
            let scale = T::lit(outputs.len() as f64).recip();
            let grad = Zip::from(&outputs)
                .and(&target)
                .map_collect(|&p, &t| (p - t).max(-d).min(d) * scale);
            Ok((loss, through_output(output, outputs, grad)))
        }
        (LossKind::CrossEntropy, Targets::Values(_)) => {
            Err(Error::invalid("cross-entropy needs class targets"))
        }
        (_, Targets::Classes(_)) => Err(Error::invalid("regression losses need value targets")),
    }
}

/// Chain a gradient with respect to the outputs back through the output
/// activation.
fn through_output<T: Real>(
    output: OutputActivation,
    outputs: ArrayView2<'_, T>,
    mut grad: Array2<T>,
) -> Array2<T> {
    match output {
        OutputActivation::Identity => grad,
        OutputActivation::Softmax => {
            for (mut g, p) in grad.axis_iter_mut(Axis(0)).zip(outputs.axis_iter(Axis(0))) {
                let dot: T = g.iter().zip(p.iter()).map(|(&a, &b)| a * b).sum();
                g.zip_mut_with(&p, |gi, &pi| *gi = pi * (*gi - dot));
            }
            grad
        }
    }
}
