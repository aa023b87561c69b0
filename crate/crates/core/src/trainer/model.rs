use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TrainerError;
use crate::dld::{softmax_in_place, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub hidden: usize,
    /// Standard deviation of the first-layer weights.
    pub init_scale_1: f64,
    /// Second-layer weights have standard deviation `init_scale_2 / sqrt(hidden)`.
    pub init_scale_2: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: 256, init_scale_1: 0.01, init_scale_2: 0.1 }
    }
}

/// `x -> W2^T relu(W1^T x + b1) + b2`, weights stored row-major
/// (`w1` is `dim x hidden`, `w2` is `hidden x classes`).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dim: usize,
    hidden: usize,
    classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(dim: usize, hidden: usize, classes: usize) -> Result<Self, TrainerError> {
        if dim == 0 || hidden == 0 || classes < 2 {
            return Err(TrainerError::InvalidParams("model needs dim >= 1, hidden >= 1, classes >= 2"));
        }
        Ok(Self {
            dim,
            hidden,
            classes,
            w1: vec![0.0; dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * classes],
            b2: vec![0.0; classes],
        })
    }

    /// Gaussian weights, zero biases.
    pub fn init(dim: usize, classes: usize, spec: &ModelSpec, seed: u64) -> Result<Self, TrainerError> {
        let mut m = Self::zeros(dim, spec.hidden, classes)?;
        let s1 = spec.init_scale_1;
        if !(s1.is_finite() && spec.init_scale_2.is_finite()) {
            return Err(TrainerError::InvalidParams("init scales must be finite"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in m.w1.iter_mut() {
            *w = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        let s2 = spec.init_scale_2 / libm::sqrt(spec.hidden as f64);
        for w in m.w2.iter_mut() {
            *w = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameter blocks in the order `w1, b1, w2, b2`.
    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }

    /// `param -= lr * grad`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        let g = [&grads.w1, &grads.b1, &grads.w2, &grads.b2];
        for (block, gb) in self.blocks_mut().into_iter().zip(g) {
            for (p, d) in block.iter_mut().zip(gb) {
                *p -= lr * d;
            }
        }
    }

    fn hidden_pre(&self, x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.b1);
        for (i, xi) in x.iter().enumerate() {
            let row = &self.w1[i * self.hidden..(i + 1) * self.hidden];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
    }

    fn logits_from_hidden(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b2);
        for (j, zj) in z.iter().enumerate() {
            if *zj > 0.0 {
                let row = &self.w2[j * self.classes..(j + 1) * self.classes];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += zj * w;
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.classes];
        self.hidden_pre(x, &mut z);
        self.logits_from_hidden(&z, &mut out);
        out
    }

    /// Index of the largest logit.
    pub fn predict(&self, x: &[f64]) -> usize {
        crate::dld::argmax(&self.logits(x))
    }
}

/// Softmax class probabilities for one input.
pub fn forward(model: &MlpModel, x: &[f64]) -> ProbVector {
    ProbVector::softmax(&model.logits(x))
}

/// Parameter gradients, same layout as [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &MlpModel) -> Self {
        Self { w1: vec![0.0; m.w1.len()], b1: vec![0.0; m.b1.len()], w2: vec![0.0; m.w2.len()], b2: vec![0.0; m.b2.len()] }
    }

    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

/// Cached pre-activations and probabilities of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchActivations {
    /// `len x hidden`, before the rectifier.
    pub pre: Vec<f64>,
    /// `len x classes`.
    pub probs: Vec<f64>,
    pub len: usize,
}

impl BatchActivations {
    pub fn probs_of(&self, i: usize, classes: usize) -> &[f64] {
        &self.probs[i * classes..(i + 1) * classes]
    }
}

/// Forward pass over row-major inputs `xs` (`len x dim`).
pub fn forward_batch(model: &MlpModel, xs: &[f64]) -> BatchActivations {
    let len = xs.len() / model.dim;
    let mut pre = vec![0.0; len * model.hidden];
    let mut probs = vec![0.0; len * model.classes];
    for i in 0..len {
        let z = &mut pre[i * model.hidden..(i + 1) * model.hidden];
        model.hidden_pre(&xs[i * model.dim..(i + 1) * model.dim], z);
        let p = &mut probs[i * model.classes..(i + 1) * model.classes];
        model.logits_from_hidden(z, p);
        softmax_in_place(p);
    }
    BatchActivations { pre, probs, len }
}

impl MlpModel {
    /// Gradients of `sum_i w_i * l_i / len`, where `l_i` is cross-entropy
    /// against the target `(1 - eps) * onehot(label) + eps / C`.
    ///
    /// The output-layer error for sample `i` is `w_i * (p_i - t_i) / len`.
    pub fn backward_from(&self, acts: &BatchActivations, xs: &[f64], labels: &[usize], weights: &[f64], epsilon: f64) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        let (h, c, d) = (self.hidden, self.classes, self.dim);
        let n = acts.len as f64;
        let off = epsilon / c as f64;
        let mut delta = vec![0.0; c];
        let mut gh = vec![0.0; h];
        for i in 0..acts.len {
            let p = acts.probs_of(i, c);
            let scale = weights[i] / n;
            for (k, dk) in delta.iter_mut().enumerate() {
                let t = if k == labels[i] { 1.0 - epsilon + off } else { off };
                *dk = scale * (p[k] - t);
            }
            for (gb, dk) in g.b2.iter_mut().zip(&delta) {
                *gb += dk;
            }
            let z = &acts.pre[i * h..(i + 1) * h];
            for j in 0..h {
                let row = &self.w2[j * c..(j + 1) * c];
                if z[j] > 0.0 {
                    let grow = &mut g.w2[j * c..(j + 1) * c];
                    let mut back = 0.0;
                    for k in 0..c {
                        grow[k] += z[j] * delta[k];
                        back += row[k] * delta[k];
                    }
                    gh[j] = back;
                } else {
                    gh[j] = 0.0;
                }
            }
            for (gb, v) in g.b1.iter_mut().zip(&gh) {
                *gb += v;
            }
            let x = &xs[i * d..(i + 1) * d];
            for (a, xa) in x.iter().enumerate() {
                let grow = &mut g.w1[a * h..(a + 1) * h];
                for (gw, v) in grow.iter_mut().zip(&gh) {
                    *gw += xa * v;
                }
            }
        }
        g
    }
}

/// Gradients of the weighted mean cross-entropy `sum_i w_i * l_i / len`.
pub fn backward(model: &MlpModel, xs: &[f64], labels: &[usize], weights: &[f64]) -> Gradients {
    let acts = forward_batch(model, xs);
    model.backward_from(&acts, xs, labels, weights, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dld::smoothed_ce;

    fn weighted_loss(m: &MlpModel, xs: &[f64], labels: &[usize], w: &[f64], eps: f64) -> f64 {
        let acts = forward_batch(m, xs);
        let c = m.classes();
        (0..acts.len).map(|i| w[i] * smoothed_ce(acts.probs_of(i, c), labels[i], eps)).sum::<f64>() / acts.len as f64
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(3, 5, 4).unwrap();
        for p in forward(&m, &[1.0, -2.0, 3.0]).as_slice() {
            assert_eq!(*p, 0.25);
        }
    }

    #[test]
    fn huge_logit_is_stable() {
        let mut m = MlpModel::zeros(1, 1, 4).unwrap();
        m.b2[0] = 1000.0;
        let p = forward(&m, &[0.0]);
        assert!((p.as_slice()[0] - 1.0).abs() < 1e-9);
        assert!(p.as_slice().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn output_layer_gradient_is_outer_product() {
        // single sample through a frozen identity-like hidden layer: dL/dW2 = h (p - a)^T
        let mut m = MlpModel::init(2, 3, &ModelSpec { hidden: 2, ..ModelSpec::default() }, 1).unwrap();
        m.w1 = vec![1.0, 0.0, 0.0, 1.0];
        m.b1 = vec![0.0, 0.0];
        let x = [0.7, 1.3];
        let g = backward(&m, &x, &[2], &[1.0]);
        let p = forward(&m, &x);
        for j in 0..2 {
            for k in 0..3 {
                let a = if k == 2 { 1.0 } else { 0.0 };
                assert!((g.w2[j * 3 + k] - x[j] * (p.as_slice()[k] - a)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perfect_prediction_has_no_gradient() {
        // p equals the smoothed target exactly when all logits are equal and eps = 1
        let m = MlpModel::init(3, 4, &ModelSpec { hidden: 8, init_scale_1: 1.0, init_scale_2: 0.0 }, 2).unwrap();
        let acts = forward_batch(&m, &[0.1, 0.2, 0.3]);
        let g = m.backward_from(&acts, &[0.1, 0.2, 0.3], &[1], &[1.0], 1.0);
        assert!(g.blocks().iter().all(|b| b.iter().all(|v| v.abs() < 1e-15)));
    }

    #[test]
    fn finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MlpModel::init(3, 4, &ModelSpec { hidden: 8, init_scale_1: 1.0, init_scale_2: 2.0 }, 11).unwrap();
        let mut m = m;
        for b in m.blocks_mut()[1..].iter_mut().step_by(2) {
            for v in b.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal) * 0.5;
            }
        }
        let xs: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
        let labels = [0, 3, 1, 2, 3];
        let w = [1.0, 0.3, 1.0, 0.05, 2.0];
        for eps in [0.0, 0.1] {
            let acts = forward_batch(&m, &xs);
            let g = m.backward_from(&acts, &xs, &labels, &w, eps);
            let h = 1e-5;
            for b in 0..4 {
                for i in 0..g.blocks()[b].len() {
                    let mut plus = m.clone();
                    plus.blocks_mut()[b][i] += h;
                    let mut minus = m.clone();
                    minus.blocks_mut()[b][i] -= h;
                    let fd = (weighted_loss(&plus, &xs, &labels, &w, eps) - weighted_loss(&minus, &xs, &labels, &w, eps)) / (2.0 * h);
                    let an = g.blocks()[b][i];
                    let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                    assert!(rel < 1e-5, "block {b} index {i}: {an} vs {fd}");
                }
            }
        }
    }
}
