//! Per-sample classification losses and dynamic loss decay.
//!
//! Before the early-learning endpoint the objective is the plain mean
//! cross-entropy. From the endpoint on, the `K` largest per-sample losses in a
//! batch are scaled by a decay factor `alpha` and the rest are kept:
//!
//! ```text
//! L = (alpha * sum_{top K} l_i + sum_{rest} l_i) / N_b
//! ```
//!
//! Two schedules for `alpha` are available. [`Schedule::ExpDecay`] (default)
//! gives `exp(-(ec - el) / tau)`, which is 1 at the endpoint and shrinks
//! afterwards. [`Schedule::PaperLiteral`] gives `exp(10 / (ec - el))`, which is
//! undefined at `ec == el` and larger than 1 afterwards; it is kept for
//! fidelity experiments only.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default top-K fraction.
pub const DEFAULT_K_FRACTION: f64 = 0.05;

/// Top-K fraction that works better at 40% label noise.
pub const HIGH_NOISE_K_FRACTION: f64 = 0.07;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("probabilities must be finite, non-negative and sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },
    #[error("a probability vector needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("losses and indices differ in length ({losses} vs {indices})")]
    LengthMismatch { losses: usize, indices: usize },
    #[error("loss {0} at position {1} is not a finite non-negative number")]
    BadLoss(f64, usize),
    #[error("the literal decay factor exp(10 / (ec - el)) is undefined at ec == el == {0}")]
    ScheduleSingular(u32),
    #[error("invalid decay configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Class probabilities for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self, LossError> {
        if p.len() < 2 {
            return Err(LossError::TooFewClasses(p.len()));
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(LossError::NotNormalized { sum });
        }
        Ok(Self(p))
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Self {
        let mut p = logits.to_vec();
        softmax_in_place(&mut p);
        Self(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn check_label(p: &ProbVector, label: usize) -> Result<(), LossError> {
    if label >= p.classes() {
        return Err(LossError::LabelOutOfRange { label, classes: p.classes() });
    }
    Ok(())
}

#[inline]
pub(crate) fn neg_log(p: f64) -> f64 {
    -libm::log(p.max(PROB_FLOOR))
}

/// Cross-entropy `-log p[label]`.
pub fn ce_loss(p: &ProbVector, label: usize) -> Result<f64, LossError> {
    check_label(p, label)?;
    Ok(neg_log(p.0[label]))
}

/// Cross-entropy against the smoothed target `(1 - eps) * onehot + eps / C`.
pub fn ls_loss(p: &ProbVector, label: usize, epsilon: f64) -> Result<f64, LossError> {
    check_label(p, label)?;
    if !(0.0..1.0).contains(&epsilon) {
        return Err(LossError::InvalidConfig("label smoothing epsilon must lie in [0, 1)"));
    }
    Ok(smoothed_ce(&p.0, label, epsilon))
}

pub(crate) fn smoothed_ce(p: &[f64], label: usize, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        return neg_log(p[label]);
    }
    let off = epsilon / p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(c, &pc)| {
            let t = if c == label { 1.0 - epsilon + off } else { off };
            t * neg_log(pc)
        })
        .sum()
}

/// Per-sample losses of one batch together with the dataset index of each
/// sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    losses: Vec<f64>,
    indices: Vec<usize>,
}

impl LossBatch {
    pub fn new(losses: Vec<f64>, indices: Vec<usize>) -> Result<Self, LossError> {
        if losses.len() != indices.len() {
            return Err(LossError::LengthMismatch { losses: losses.len(), indices: indices.len() });
        }
        if let Some((i, &l)) = losses.iter().enumerate().find(|(_, l)| !l.is_finite() || **l < 0.0) {
            return Err(LossError::BadLoss(l, i));
        }
        Ok(Self { losses, indices })
    }

    /// Batch whose sample indices are simply `0..n`.
    pub fn from_losses(losses: Vec<f64>) -> Result<Self, LossError> {
        let n = losses.len();
        Self::new(losses, (0..n).collect())
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.losses.iter().sum::<f64>() / self.len() as f64
    }
}

/// `ceil(k_fraction * n)`, tolerant to binary rounding (0.07 * 100 is 7, not 8).
pub fn top_k_size(n: usize, k_fraction: f64) -> usize {
    if k_fraction <= 0.0 {
        return 0;
    }
    let raw = libm::ceil(k_fraction * n as f64 - 1e-9);
    (raw.max(0.0) as usize).min(n)
}

/// Positions (into the batch) of the largest losses, plus the remaining
/// positions. Both lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKSplit {
    pub top: Vec<usize>,
    pub rest: Vec<usize>,
}

/// Ranks losses in descending order, with equal losses ordered by ascending
/// sample index, and takes the first `ceil(k_fraction * N_b)`.
pub fn select_top_k(batch: &LossBatch, k_fraction: f64) -> TopKSplit {
    let k = top_k_size(batch.len(), k_fraction);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| rank_desc(batch.losses[a], batch.indices[a], batch.losses[b], batch.indices[b]));
    let mut in_top = vec![false; batch.len()];
    for &p in &order[..k] {
        in_top[p] = true;
    }
    let (top, rest) = (0..batch.len()).partition(|&p| in_top[p]);
    TopKSplit { top, rest }
}

pub(crate) fn rank_desc(la: f64, ia: usize, lb: f64, ib: usize) -> Ordering {
    lb.total_cmp(&la).then(ia.cmp(&ib))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// `exp(10 / (ec - el))`.
    PaperLiteral,
    /// `exp(-(ec - el) / tau)`.
    ExpDecay { tau: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::ExpDecay { tau: 10.0 }
    }
}

/// Whether the top-K set is chosen inside each batch or once per epoch over
/// the whole training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionScope {
    #[default]
    PerBatch,
    PerEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DldConfig {
    pub k_fraction: f64,
    /// Epoch (1-based) at which decay starts.
    pub el: u32,
    pub schedule: Schedule,
    pub selection_scope: SelectionScope,
}

impl DldConfig {
    pub fn new(k_fraction: f64, el: u32) -> Self {
        Self { k_fraction, el, schedule: Schedule::default(), selection_scope: SelectionScope::default() }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.k_fraction) {
            return Err(LossError::InvalidConfig("k_fraction must lie in [0, 1]"));
        }
        if self.el < 1 {
            return Err(LossError::InvalidConfig("el must be at least 1"));
        }
        if let Schedule::ExpDecay { tau } = self.schedule {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(LossError::InvalidConfig("tau must be positive"));
            }
        }
        Ok(())
    }
}

impl Default for DldConfig {
    fn default() -> Self {
        Self::new(DEFAULT_K_FRACTION, 1)
    }
}

/// Decay factor for the top-K losses at epoch `ec`. Epochs before `el` get 1.
pub fn alpha(ec: u32, el: u32, schedule: Schedule) -> Result<f64, LossError> {
    if ec < el {
        return Ok(1.0);
    }
    let gap = f64::from(ec - el);
    match schedule {
        Schedule::ExpDecay { tau } => Ok(libm::exp(-gap / tau)),
        Schedule::PaperLiteral if ec == el => Err(LossError::ScheduleSingular(el)),
        Schedule::PaperLiteral => Ok(libm::exp(10.0 / gap)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DldOutput {
    pub loss: f64,
    /// Weight applied to each batch position; `loss == sum(w * l) / N_b`.
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub top_k: usize,
}

/// Weighted mean of `losses` divided by the full batch size.
pub fn weighted_mean(losses: &[f64], weights: &[f64]) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    let total: f64 = losses.iter().zip(weights).map(|(l, w)| w * l).sum();
    total / losses.len() as f64
}

/// The two-phase objective for one batch at epoch `ec`.
pub fn dld_loss(batch: &LossBatch, ec: u32, cfg: &DldConfig) -> Result<DldOutput, LossError> {
    cfg.validate()?;
    let mut weights = vec![1.0; batch.len()];
    if ec < cfg.el {
        return Ok(DldOutput { loss: weighted_mean(&batch.losses, &weights), weights, alpha: 1.0, top_k: 0 });
    }
    let a = alpha(ec, cfg.el, cfg.schedule)?;
    let split = select_top_k(batch, cfg.k_fraction);
    for &p in &split.top {
        weights[p] = a;
    }
    Ok(DldOutput { loss: weighted_mean(&batch.losses, &weights), weights, alpha: a, top_k: split.top.len() })
}
