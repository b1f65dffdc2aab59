use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::argmax_rows;
use super::{loss_cross_entropy, softmax_rows};
use crate::{seed, Error, Real, Result};

pub const LOGISTIC_TOLERANCE: f64 = 1e-6;
pub const LOGISTIC_MAX_ITERATIONS: usize = 10_000;
const ARMIJO: f64 = 1e-4;
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Ridge,
    MultinomialLogistic,
}

/// Affine readout `x -> W x + b`, followed by softmax for the logistic kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    /// `(outputs, features)`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub regularization: T,
    pub kind: LinearKind,
    /// False when the solver stopped at its iteration cap.
    pub converged: bool,
}

impl<T: Real> LinearModel<T> {
    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn decision(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if x.ncols() != self.n_features() {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        Ok(x.dot(&self.weights.t()) + &self.bias)
    }

    /// Ridge: fitted values. Logistic: class probabilities.
    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let z = self.decision(x)?;
        Ok(match self.kind {
            LinearKind::Ridge => z,
            LinearKind::MultinomialLogistic => softmax_rows(z.view()),
        })
    }

    pub fn predict_classes(&self, x: ArrayView2<'_, T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.decision(x)?.view()))
    }
}

/// `{1e-4, 1e-3, ..., 1e1}`
pub fn lambda_grid() -> Vec<f64> {
    (-4..=1).map(|e| 10f64.powi(e)).collect()
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / pred.len() as f64
}

/// Solve `A X = B` for symmetric positive definite `A` by Cholesky.
/// Returns `None` when a pivot is not safely positive.
fn cholesky_solve<T: Real>(mut a: Array2<T>, b: &Array2<T>) -> Option<Array2<T>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit(n as f64) * scale.max(T::min_positive_value());
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > tol) {
            return None;
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
    }
    let mut x = b.clone();
    for mut col in x.axis_iter_mut(Axis(1)) {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= a[[i, k]] * col[k];
            }
            col[i] = s / a[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= a[[k, i]] * col[k];
            }
            col[i] = s / a[[i, i]];
        }
    }
    Some(x)
}

fn ridge_solve<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView2<'_, T>,
    lambda: T,
) -> Result<Array2<T>> {
    let mut gram = x.t().dot(&x);
    for i in 0..gram.nrows() {
        gram[[i, i]] += lambda;
    }
    let rhs = x.t().dot(&y);
    let w = cholesky_solve(gram, &rhs).ok_or_else(|| {
        Error::NumericalDegeneracy(format!(
            "normal equations are singular or badly conditioned at lambda = {lambda}; use lambda > 0"
        ))
    })?;
    Ok(w.reversed_axes())
}

fn check_ridge<T: Real>(x: &ArrayView2<'_, T>, y: &ArrayView2<'_, T>, lambda: T) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("ridge needs at least one row"));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} target rows",
            x.nrows(),
            y.nrows()
        )));
    }
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite and non-negative"));
    }
    Ok(())
}

/// Ridge regression with an unregularised bias: solves
/// `(Xc^T Xc + lambda I) W^T = Xc^T Yc` on centred data.
pub fn fit_ridge<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView2<'_, T>,
    lambda: T,
) -> Result<LinearModel<T>> {
    check_ridge(&x, &y, lambda)?;
    let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean_axis(Axis(0)).expect("non-empty");
    let xc = &x - &x_mean;
    let yc = &y - &y_mean;
    let weights = ridge_solve(xc.view(), yc.view(), lambda)?;
    let bias = &y_mean - &weights.dot(&x_mean);
    Ok(LinearModel {
        weights,
        bias,
        regularization: lambda,
        kind: LinearKind::Ridge,
        converged: true,
    })
}

/// Ridge regression without a bias term.
pub fn fit_ridge_through_origin<T: Real>(
    x: ArrayView2<'_, T>,
    y: ArrayView2<'_, T>,
    lambda: T,
) -> Result<LinearModel<T>> {
    check_ridge(&x, &y, lambda)?;
    let weights = ridge_solve(x, y, lambda)?;
    let bias = Array1::zeros(y.ncols());
    Ok(LinearModel {
        weights,
        bias,
        regularization: lambda,
        kind: LinearKind::Ridge,
        converged: true,
    })
}

fn one_hot<T: Real>(labels: &[usize], n_classes: usize) -> Array2<T> {
    let mut y = Array2::zeros((labels.len(), n_classes));
    for (i, &c) in labels.iter().enumerate() {
        y[[i, c]] = T::one();
    }
    y
}

struct Logistic<'a, T> {
    x: ArrayView2<'a, T>,
    y: Array2<T>,
    labels: &'a [usize],
    lambda: T,
}

impl<T: Real> Logistic<'_, T> {
    fn objective(&self, w: &Array2<T>, b: &Array1<T>) -> Result<T> {
        let p = softmax_rows((self.x.dot(&w.t()) + b).view());
        let ce = loss_cross_entropy(p.view(), self.labels)?;
        Ok(ce + T::lit(0.5) * self.lambda * w.iter().map(|&v| v * v).sum::<T>())
    }

    fn gradient(&self, w: &Array2<T>, b: &Array1<T>) -> (Array2<T>, Array1<T>) {
        let inv = T::lit(self.x.nrows() as f64).recip();
        let residual = (softmax_rows((self.x.dot(&w.t()) + b).view()) - &self.y) * inv;
        let gw = residual.t().dot(&self.x) + &(w * self.lambda);
        (gw, residual.sum_axis(Axis(0)))
    }
}

/// Multinomial logistic regression at a single `lambda`: minimises the mean
/// cross-entropy plus `(lambda / 2) ||W||^2` by gradient descent with a
/// backtracking line search. The bias is not penalised.
pub fn fit_logistic<T: Real>(
    x: ArrayView2<'_, T>,
    labels: &[usize],
    n_classes: usize,
    lambda: T,
) -> Result<LinearModel<T>> {
    if x.nrows() != labels.len() || x.nrows() == 0 {
        return Err(Error::invalid(
            "logistic regression needs one label per (non-empty) feature row",
        ));
    }
    if n_classes < 2 {
        return Err(Error::invalid(
            "logistic regression needs at least two classes",
        ));
    }
    if labels.iter().any(|&c| c >= n_classes) {
        return Err(Error::invalid("label out of range"));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let problem = Logistic {
        x,
        y: one_hot(labels, n_classes),
        labels,
        lambda,
    };
    let mut w = Array2::zeros((n_classes, x.ncols()));
    let mut b = Array1::zeros(n_classes);
    let mut f = problem.objective(&w, &b)?;
    let mut step = T::one();
    let tol = T::lit(LOGISTIC_TOLERANCE);
    let mut converged = false;
    for _ in 0..LOGISTIC_MAX_ITERATIONS {
        let (gw, gb) = problem.gradient(&w, &b);
        let g2 = gw.iter().chain(gb.iter()).map(|&g| g * g).sum::<T>();
        if g2.sqrt() < tol {
            converged = true;
            break;
        }
        step = step * T::lit(2.0);
        loop {
            let w_new = &w - &(&gw * step);
            let b_new = &b - &(&gb * step);
            let f_new = problem.objective(&w_new, &b_new)?;
            if f_new <= f - T::lit(ARMIJO) * step * g2 {
                w = w_new;
                b = b_new;
                f = f_new;
                break;
            }
            step = step * T::lit(0.5);
            if step < T::lit(1e-20) {
                return Err(Error::Convergence("logistic line search collapsed".into()));
            }
        }
    }
    if !converged {
        let (gw, gb) = problem.gradient(&w, &b);
        converged = gw.iter().chain(gb.iter()).map(|&g| g * g).sum::<T>().sqrt() < tol;
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        regularization: lambda,
        kind: LinearKind::MultinomialLogistic,
        converged,
    })
}

/// Stratified split of row indices into (fit, validation).
fn stratified_split(labels: &[usize], n_classes: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::stream(seed, 0);
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        let n_val = if idx.len() >= 2 {
            ((idx.len() as f64 * VALIDATION_FRACTION).round() as usize).max(1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        fit.extend_from_slice(&idx[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Select `lambda` from `grid` by accuracy on a stratified 80/20 split of
/// the training rows (ties go to the lower validation cross-entropy), then
/// refit on all rows.
pub fn fit_multinomial_logistic<T: Real>(
    x: ArrayView2<'_, T>,
    labels: &[usize],
    grid: &[f64],
    seed: u64,
) -> Result<LinearModel<T>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty lambda grid"));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let present = (0..n_classes).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::invalid("at least two classes must be present"));
    }
    let lambda = if grid.len() == 1 {
        grid[0]
    } else {
        let (fit, val) = stratified_split(labels, n_classes, seed);
        let xf = x.select(Axis(0), &fit);
        let xv = x.select(Axis(0), &val);
        let lf: Vec<usize> = fit.iter().map(|&i| labels[i]).collect();
        let lv: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
        let mut best: Option<(f64, f64, f64)> = None;
        for &lambda in grid {
            let model = fit_logistic(xf.view(), &lf, n_classes, T::lit(lambda))?;
            let acc = accuracy(&model.predict_classes(xv.view())?, &lv);
            let ce = loss_cross_entropy(model.predict(xv.view())?.view(), &lv)?.as_f64();
            let better = match best {
                None => true,
                Some((a, c, _)) => acc > a || (acc == a && ce < c),
            };
            if better {
                best = Some((acc, ce, lambda));
            }
        }
        best.expect("non-empty grid").2
    };
    fit_logistic(x, labels, n_classes, T::lit(lambda))
}
