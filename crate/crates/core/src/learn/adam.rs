use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.004;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecay {
    /// `p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)`
    #[default]
    Decoupled,
    /// `g <- g + wd p` before the moment updates.
    L2,
}

/// Adam moments and hyperparameters. Moments are stored per parameter
/// tensor, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub learning_rate: T,
    pub weight_decay: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub decay: WeightDecay,
}

impl<T: Real> AdamState<T> {
    /// Zero moments for tensors of the given lengths.
    pub fn new(lengths: &[usize], learning_rate: T, weight_decay: T) -> Self {
        Self {
            first_moment: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            step_count: 0,
            learning_rate,
            weight_decay,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            decay: WeightDecay::Decoupled,
        }
    }

    /// Moments for an MLP in `[W_1, b_1, W_2, ...]` order.
    pub fn for_mlp(mlp: &super::Mlp<T>, learning_rate: T, weight_decay: T) -> Self {
        let lengths: Vec<usize> = mlp
            .weights
            .iter()
            .zip(&mlp.biases)
            .flat_map(|(w, b)| [w.len(), b.len()])
            .collect();
        Self::new(&lengths, learning_rate, weight_decay)
    }

    /// Update every tensor in `params`; `decayed[k]` selects whether weight
    /// decay applies to tensor `k`.
    pub fn step(
        &mut self,
        params: &mut [&mut [T]],
        grads: &[&[T]],
        decayed: &[bool],
    ) -> Result<()> {
        if params.len() != self.first_moment.len()
            || grads.len() != params.len()
            || decayed.len() != params.len()
        {
            return Err(Error::invalid("Adam tensor count mismatch"));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[k].len() || g.len() != p.len() {
                return Err(Error::invalid(format!(
                    "Adam tensor {k} has mismatched length"
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let wd = if decayed[k] {
                self.weight_decay
            } else {
                T::zero()
            };
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                let mut gi = grads[k][i];
                if self.decay == WeightDecay::L2 {
                    gi += wd * p[i];
                }
                m[i] = self.beta1 * m[i] + (one - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (one - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                let mut update = m_hat / (v_hat.sqrt() + self.epsilon);
                if self.decay == WeightDecay::Decoupled {
                    update += wd * p[i];
                }
                p[i] -= self.learning_rate * update;
            }
        }
        Ok(())
    }
}
