use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::SyntheticDataset;
use super::model::{forward_batch, MlpModel, ModelSpec};
use super::TrainerError;
use crate::dld::{alpha, dld_loss, select_top_k, smoothed_ce, weighted_mean, DldConfig, LossBatch, Schedule, SelectionScope};
use crate::dynamics::{detect_el, ElParams, EpochSeries};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u32,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { learning_rate: 0.05, batch_size: 64, epochs: 36 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossMode {
    Baseline,
    LabelSmoothing { epsilon: f64 },
    /// The `el` field of the config is ignored; the endpoint comes from
    /// [`ElSource`].
    Dld(DldConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElSource {
    Fixed(u32),
    /// Re-run [`detect_el`] on the ACC series after every epoch until it
    /// fires; DLD starts with the following epoch.
    Auto(ElParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerSpec,
    pub loss_mode: LossMode,
    pub el_source: ElSource,
    /// Standardize features with the training-set mean and deviation.
    pub standardize_inputs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            optimizer: OptimizerSpec::default(),
            loss_mode: LossMode::Baseline,
            el_source: ElSource::Auto(ElParams::default()),
            standardize_inputs: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return Err(TrainerError::InvalidParams("learning rate must be positive"));
        }
        if o.batch_size == 0 {
            return Err(TrainerError::InvalidParams("batch size must be at least 1"));
        }
        if o.epochs == 0 {
            return Err(TrainerError::InvalidParams("need at least one epoch"));
        }
        if self.model.hidden == 0 {
            return Err(TrainerError::InvalidParams("hidden width must be at least 1"));
        }
        match self.loss_mode {
            LossMode::LabelSmoothing { epsilon } if !(0.0..1.0).contains(&epsilon) => {
                return Err(TrainerError::InvalidParams("label smoothing epsilon must lie in [0, 1)"));
            }
            LossMode::Dld(cfg) => DldConfig { el: 1, ..cfg }.validate()?,
            _ => {}
        }
        match self.el_source {
            ElSource::Fixed(0) => Err(TrainerError::InvalidParams("fixed EL must be at least 1")),
            ElSource::Auto(p) if !(p.eta > 0.0 && p.eta.is_finite()) => Err(TrainerError::InvalidParams("eta must be positive")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: u32,
    /// Agreement with the noisy training labels.
    pub acc: f64,
    pub clean_acc: f64,
    /// Accuracy on samples whose label was not corrupted.
    pub correct_subset_acc: f64,
    /// Fraction of corrupted samples predicted as their corrupted label.
    pub corrupted_fit: f64,
    /// Mean over the epoch of `w_i * l_i`.
    pub loss: f64,
    /// Decay factor applied to the top-K losses; 1 when nothing was decayed.
    pub alpha: f64,
    /// Number of decayed samples in the epoch.
    pub topk_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
    /// The early-learning endpoint in effect: the fixed value, or the detected
    /// epoch (recorded in every loss mode).
    pub el: Option<u32>,
    /// Auto detection never fired, so DLD never activated.
    pub el_missing: bool,
}

impl TrainLog {
    pub fn acc_series(&self) -> EpochSeries {
        EpochSeries::new("acc", self.rows.iter().map(|r| (r.epoch, r.acc)).collect()).expect("epochs increase from 1")
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    /// Row with the highest clean accuracy; the earliest on ties.
    pub fn best_clean(&self) -> Option<&EpochRow> {
        self.rows.iter().fold(None, |best: Option<&EpochRow>, r| match best {
            Some(b) if b.clean_acc >= r.clean_acc => Some(b),
            _ => Some(r),
        })
    }
}

/// What one SGD step saw.
#[derive(Debug)]
pub struct BatchEvent<'a> {
    pub epoch: u32,
    pub batch: usize,
    pub indices: &'a [usize],
    pub losses: &'a [f64],
    pub weights: &'a [f64],
    /// The objective that was differentiated, `sum(w * l) / len`.
    pub loss: f64,
}

pub trait TrainObserver {
    fn on_batch(&mut self, event: &BatchEvent<'_>);
}

pub struct NoObserver;

impl TrainObserver for NoObserver {
    fn on_batch(&mut self, _: &BatchEvent<'_>) {}
}

pub fn train(dataset: &SyntheticDataset, config: &TrainConfig) -> Result<TrainLog, TrainerError> {
    train_with_observer(dataset, config, &mut NoObserver)
}

fn gather(xs: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        out.extend_from_slice(&xs[i * dim..(i + 1) * dim]);
    }
    out
}

fn sample_losses(model: &MlpModel, xs: &[f64], labels: &[usize], epsilon: f64) -> (super::model::BatchActivations, Vec<f64>) {
    let acts = forward_batch(model, xs);
    let c = model.classes();
    let losses = (0..acts.len).map(|i| smoothed_ce(acts.probs_of(i, c), labels[i], epsilon)).collect();
    (acts, losses)
}

fn evaluate(model: &MlpModel, xs: &[f64], ds: &SyntheticDataset) -> (f64, f64, f64, f64) {
    let (clean, noisy) = (ds.clean_labels(), ds.noisy_labels());
    let (mut acc, mut cl, mut ok_clean, mut n_clean, mut fit, mut n_bad) = (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    let d = ds.dim();
    for i in 0..ds.len() {
        let pred = model.predict(&xs[i * d..(i + 1) * d]);
        acc += (pred == noisy[i]) as usize;
        cl += (pred == clean[i]) as usize;
        if ds.is_corrupted(i) {
            n_bad += 1;
            fit += (pred == noisy[i]) as usize;
        } else {
            n_clean += 1;
            ok_clean += (pred == clean[i]) as usize;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(acc, ds.len()), frac(cl, ds.len()), frac(ok_clean, n_clean), frac(fit, n_bad))
}

/// Trains a fresh model with plain SGD and logs one row per epoch.
///
/// Shuffling and initialization are drawn from independent streams seeded by
/// `config.seed`, so a run is a pure function of `(dataset, config)`.
pub fn train_with_observer(
    dataset: &SyntheticDataset,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainLog, TrainerError> {
    config.validate()?;
    let d = dataset.dim();
    let xs = if config.standardize_inputs { dataset.standardized_features() } else { dataset.features().to_vec() };
    let labels = dataset.noisy_labels();
    let mut model = MlpModel::init(d, dataset.classes(), &config.model, config.seed)?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(1);

    let epsilon = match config.loss_mode {
        LossMode::LabelSmoothing { epsilon } => epsilon,
        _ => 0.0,
    };
    let dld = match config.loss_mode {
        LossMode::Dld(cfg) => Some(cfg),
        _ => None,
    };
    let mut el = match config.el_source {
        ElSource::Fixed(e) => Some(e),
        ElSource::Auto(_) => None,
    };

    let mut log = TrainLog::default();
    let mut series = EpochSeries::new("acc", Vec::new())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for ec in 1..=config.optimizer.epochs {
        // A phase switch needs a resolved EL. Under the literal schedule the
        // endpoint epoch itself is singular and trains as baseline.
        let phase = match (dld, el) {
            (Some(cfg), Some(e)) if ec >= e && !(cfg.schedule == Schedule::PaperLiteral && ec == e) => {
                Some(DldConfig { el: e, ..cfg })
            }
            _ => None,
        };

        let epoch_weights = match phase {
            Some(cfg) if cfg.selection_scope == SelectionScope::PerEpoch => {
                let (_, losses) = sample_losses(&model, &xs, labels, epsilon);
                let split = select_top_k(&LossBatch::new(losses, (0..dataset.len()).collect())?, cfg.k_fraction);
                let a = alpha(ec, cfg.el, cfg.schedule)?;
                let mut w = vec![1.0; dataset.len()];
                for &p in &split.top {
                    w[p] = a;
                }
                Some((w, a, split.top.len()))
            }
            _ => None,
        };

        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut decayed = 0usize;
        let mut used_alpha = 1.0;
        for (b, idx) in order.chunks(config.optimizer.batch_size).enumerate() {
            let bx = gather(&xs, d, idx);
            let by: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (acts, losses) = sample_losses(&model, &bx, &by, epsilon);

            let (weights, loss) = match (phase, &epoch_weights) {
                (Some(_), Some((w, a, k))) => {
                    let w: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
                    if *k > 0 {
                        used_alpha = *a;
                    }
                    let l = weighted_mean(&losses, &w);
                    (w, l)
                }
                (Some(cfg), None) => {
                    let out = dld_loss(&LossBatch::new(losses.clone(), idx.to_vec())?, ec, &cfg)?;
                    decayed += out.top_k;
                    if out.top_k > 0 {
                        used_alpha = out.alpha;
                    }
                    (out.weights, out.loss)
                }
                _ => {
                    let w = vec![1.0; idx.len()];
                    let l = weighted_mean(&losses, &w);
                    (w, l)
                }
            };

            if !loss.is_finite() {
                return Err(TrainerError::Divergence { epoch: ec, batch: b, partial: Box::new(log) });
            }
            observer.on_batch(&BatchEvent { epoch: ec, batch: b, indices: idx, losses: &losses, weights: &weights, loss });
            loss_sum += loss * idx.len() as f64;
            let grads = model.backward_from(&acts, &bx, &by, &weights, epsilon);
            model.sgd_step(&grads, config.optimizer.learning_rate);
        }
        if let Some((_, _, k)) = &epoch_weights {
            decayed = *k;
        }

        if !model.is_finite() {
            return Err(TrainerError::Divergence { epoch: ec, batch: order.len().div_ceil(config.optimizer.batch_size), partial: Box::new(log) });
        }
        let (acc, clean_acc, correct_subset_acc, corrupted_fit) = evaluate(&model, &xs, dataset);
        log.rows.push(EpochRow {
            epoch: ec,
            acc,
            clean_acc,
            correct_subset_acc,
            corrupted_fit,
            loss: loss_sum / dataset.len() as f64,
            alpha: if decayed > 0 { used_alpha } else { 1.0 },
            topk_size: decayed,
        });

        series.push(ec, acc)?;
        if let (ElSource::Auto(params), None) = (config.el_source, el) {
            if ec as usize >= params.effective_min_epochs().max(params.degree + 1) {
                el = detect_el(&series, &params)?.el;
            }
        }
    }
    log.el = el;
    log.el_missing = el.is_none();
    Ok(log)
}
