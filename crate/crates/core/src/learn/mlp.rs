use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::loss_and_delta;
use super::{softmax_rows, AdamState, HiddenActivation, LossKind, OutputActivation, Targets};
use crate::{seed, Error, Real, Result};

/// Feed-forward network `f(x) = phi_L(A_L(... phi_1(A_1 x)))` with affine
/// maps `A_l(x) = W_l x + b_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layer_sizes: Vec<usize>,
    /// `W_l` has shape `(n_l, n_{l-1})`.
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

/// Pre-activations and activations of every layer for one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `z_l` for `l = 1..=L`.
    pub pre: Vec<Array2<T>>,
    /// `a_0 = x` followed by `a_l = phi_l(z_l)`.
    pub post: Vec<Array2<T>>,
}

impl<T: Real> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        self.post.last().expect("at least the input")
    }
}

/// Gradients shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Real> Gradients<T> {
    /// Flattened in the same order as [`Mlp::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn norm(&self) -> T {
        self.flatten().iter().map(|&g| g * g).sum::<T>().sqrt()
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::invalid(
            "an MLP needs at least an input and an output layer",
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::invalid("layer sizes must be positive"));
    }
    Ok(())
}

impl<T: Real> Mlp<T> {
    pub fn from_parts(
        weights: Vec<Array2<T>>,
        biases: Vec<Array1<T>>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let first = weights.first().ok_or_else(|| Error::invalid("no layers"))?;
        let mut layer_sizes = vec![first.ncols()];
        layer_sizes.extend(weights.iter().map(|w| w.nrows()));
        let mlp = Self {
            layer_sizes,
            weights,
            biases,
            hidden_activation,
            output_activation,
        };
        mlp.validate()?;
        Ok(mlp)
    }

    /// All parameters zero.
    pub fn zeros(layer_sizes: &[usize], output_activation: OutputActivation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            hidden_activation: HiddenActivation::Gelu,
            output_activation,
        })
    }

    /// Weights uniform in `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn glorot(
        layer_sizes: &[usize],
        output_activation: OutputActivation,
        seed: u64,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes, output_activation)?;
        let mut rng = seed::stream(seed, 0);
        for w in &mut mlp.weights {
            let (fan_out, fan_in) = w.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.mapv_inplace(|_| T::lit(rng.random_range(-a..a)));
        }
        Ok(mlp)
    }

    pub fn validate(&self) -> Result<()> {
        check_sizes(&self.layer_sizes)?;
        let layers = self.layer_sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::invalid("parameter count does not match layer_sizes"));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let want = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            if w.dim() != want || b.len() != want.0 {
                return Err(Error::invalid(format!(
                    "layer {} has shape {:?}, expected {:?}",
                    l + 1,
                    w.dim(),
                    want
                )));
            }
        }
        if !self.parameters().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// `[W_1, b_1, W_2, b_2, ...]`, each weight matrix row-major.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.n_parameters() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.n_parameters(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            w.iter_mut()
                .chain(b.iter_mut())
                .for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::invalid(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.n_inputs()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<'_, T>) -> Result<ForwardCache<T>> {
        self.check_input(&x)?;
        let last = self.n_layers() - 1;
        let mut pre = Vec::with_capacity(self.n_layers());
        let mut post = Vec::with_capacity(self.n_layers() + 1);
        post.push(x.to_owned());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = post[l].dot(&w.t()) + b;
            let a = if l < last {
                let act = self.hidden_activation;
                z.mapv(|v| act.apply(v))
            } else {
                match self.output_activation {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Softmax => softmax_rows(z.view()),
                }
            };
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardCache { pre, post })
    }

    pub fn predict(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward(x)?.post.pop().expect("output layer"))
    }

    /// Arg-max class per row.
    pub fn predict_classes(&self, x: ArrayView2<'_, T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(self.predict(x)?.view()))
    }

    pub fn loss(&self, x: ArrayView2<'_, T>, targets: Targets<'_, T>, kind: LossKind) -> Result<T> {
        let cache = self.forward(x)?;
        Ok(loss_and_delta(kind, self.output_activation, cache.output().view(), targets)?.0)
    }

    /// Mean loss over the batch and its exact gradient by backpropagation.
    pub fn gradient(
        &self,
        x: ArrayView2<'_, T>,
        targets: Targets<'_, T>,
        kind: LossKind,
    ) -> Result<(T, Gradients<T>)> {
        if targets.len() != x.nrows() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                x.nrows(),
                targets.len()
            )));
        }
        let cache = self.forward(x)?;
        let (loss, mut delta) =
            loss_and_delta(kind, self.output_activation, cache.output().view(), targets)?;
        let layers = self.n_layers();
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = delta.t().dot(&cache.post[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let act = self.hidden_activation;
                let mut back = delta.dot(&self.weights[l]);
                back.zip_mut_with(&cache.pre[l - 1], |d, &z| *d = *d * act.derivative(z));
                delta = back;
            }
        }
        Ok((
            loss,
            Gradients {
                weights: gw,
                biases: gb,
            },
        ))
    }

    /// One Adam update; biases are never decayed.
    pub fn adam_step(&mut self, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
        let mut params: Vec<&mut [T]> = Vec::with_capacity(2 * self.n_layers());
        let mut decayed = Vec::with_capacity(2 * self.n_layers());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            params.push(
                w.as_slice_mut()
                    .ok_or_else(|| Error::invalid("non-contiguous weights"))?,
            );
            decayed.push(true);
            params.push(
                b.as_slice_mut()
                    .ok_or_else(|| Error::invalid("non-contiguous biases"))?,
            );
            decayed.push(false);
        }
        let mut g: Vec<&[T]> = Vec::with_capacity(params.len());
        for (w, b) in grads.weights.iter().zip(&grads.biases) {
            g.push(
                w.as_slice()
                    .ok_or_else(|| Error::invalid("non-contiguous gradient"))?,
            );
            g.push(
                b.as_slice()
                    .ok_or_else(|| Error::invalid("non-contiguous gradient"))?,
            );
        }
        state.step(&mut params, &g, &decayed)
    }
}

pub(crate) fn argmax_rows<T: Real>(scores: ArrayView2<'_, T>) -> Vec<usize> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, concatenate};

    #[test]
    fn identity_network() {
        let w = Array2::<f64>::eye(3);
        let mlp = Mlp::from_parts(
            vec![w],
            vec![Array1::zeros(3)],
            HiddenActivation::Gelu,
            OutputActivation::Identity,
        )
        .unwrap();
        let x = array![[0.5, -2.0, 3.0]];
        assert_eq!(mlp.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_softmax_network_is_uniform() {
        let mlp = Mlp::<f64>::zeros(&[4, 6, 3], OutputActivation::Softmax).unwrap();
        let p = mlp.predict(array![[1.0, -3.0, 0.2, 9.0]].view()).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_equals_rowwise() {
        let mlp = Mlp::<f64>::glorot(&[3, 5, 2], OutputActivation::Identity, 11).unwrap();
        let a = array![[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]];
        let b = array![[2.0, 0.0, 0.7]];
        let joint = mlp.predict(concatenate![Axis(0), a, b].view()).unwrap();
        let split = concatenate![
            Axis(0),
            mlp.predict(a.view()).unwrap(),
            mlp.predict(b.view()).unwrap()
        ];
        for (x, y) in joint.iter().zip(split.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let mlp = Mlp::<f64>::glorot(&[2, 4, 2], OutputActivation::Identity, 3).unwrap();
        let x = array![[0.3, -0.2], [1.5, 0.4]];
        let y = mlp.predict(x.view()).unwrap();
        let (loss, g) = mlp
            .gradient(x.view(), Targets::Values(y.view()), LossKind::Mse)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let mlp = Mlp::<f64>::glorot(&[3, 4, 3], OutputActivation::Softmax, 5).unwrap();
        let x = array![[0.3, -0.2, 1.0], [1.5, 0.4, -0.6]];
        let labels = [2, 0];
        let (_, g1) = mlp
            .gradient(x.view(), Targets::Classes(&labels), LossKind::CrossEntropy)
            .unwrap();
        let xx = concatenate![Axis(0), x, x];
        let (_, g2) = mlp
            .gradient(
                xx.view(),
                Targets::Classes(&[2, 0, 2, 0]),
                LossKind::CrossEntropy,
            )
            .unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mlp = Mlp::<f64>::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        assert!(matches!(
            mlp.predict(array![[1.0, 2.0]].view()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn parameter_round_trip() {
        let mut mlp = Mlp::<f64>::glorot(&[3, 4, 2], OutputActivation::Identity, 9).unwrap();
        let p = mlp.parameters();
        let mut q = p.clone();
        q[0] += 1.0;
        mlp.set_parameters(&q).unwrap();
        assert_eq!(mlp.weights[0][[0, 0]], p[0] + 1.0);
        assert_eq!(mlp.n_parameters(), 3 * 4 + 4 + 4 * 2 + 2);
    }
}
