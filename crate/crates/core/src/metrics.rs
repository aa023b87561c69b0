//! Detection evaluation over oriented boxes.
//!
//! - AP/mAP follows the VOC protocol: detections are visited in descending
//!   score (ties by input order) and each claims the unmatched ground truth of
//!   its class with the highest IoU at or above the threshold.
//! - ACC is top-1 agreement with the annotation labels. Matching is
//!   class-agnostic, so localization and classification are decoupled: each GT
//!   is paired one-to-one with the highest-scoring detection that overlaps it
//!   enough, and counts as correct when the detected category equals the
//!   annotated one. Unmatched GT count against ACC.
//! - The correct/incorrect subset mAP restricts GT to instances a noise record
//!   left alone, or to the ones it relabelled (scored against the corrupted
//!   label).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::annotations::{partition_by_record, AnnotationError, ImageAnnotations, Instance, NoiseRecord};
use crate::geometry::{quad_iou, QuadCorners};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("detection in image {image:?} has category {category:?}, which is not in the evaluation vocabulary")]
    UnknownCategory { image: String, category: String },
    #[error("detections reference image {0:?}, which has no ground truth")]
    UnknownImage(String),
    #[error("detection score {0} is not in [0, 1]")]
    InvalidScore(f64),
    #[error("IoU threshold must lie strictly between 0 and 1, got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Record(#[from] AnnotationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMode {
    /// Mean of the interpolated precision at recall 0, 0.1, ..., 1.
    #[default]
    Voc07ElevenPoint,
    /// Area under the monotone precision envelope.
    AllPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub ap_mode: ApMode,
    /// Difficult GT are left out of AP denominators and detections matched to
    /// them are neither TP nor FP.
    pub ignore_difficult: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5, ap_mode: ApMode::default(), ignore_difficult: true }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.iou_threshold > 0.0 && self.iou_threshold < 1.0 {
            Ok(())
        } else {
            Err(MetricsError::InvalidThreshold(self.iou_threshold))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub corners: QuadCorners,
    pub category: String,
    pub score: f64,
}

impl Detection {
    pub fn new(corners: QuadCorners, category: impl Into<String>, score: f64) -> Result<Self, MetricsError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(MetricsError::InvalidScore(score));
        }
        Ok(Self { corners, category: category.into(), score })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched a difficult GT while `ignore_difficult` is set.
    Ignored,
}

/// Descending score, then ascending position.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy one-to-one assignment of detections to GT. Returns, for each
/// detection in score order, the index of the GT it claimed.
fn greedy_assign(dets: &[Detection], gts: &[Instance], threshold: f64, sticky: impl Fn(&Instance) -> bool) -> Vec<(usize, Option<usize>)> {
    let mut taken = alloc::vec![false; gts.len()];
    score_order(dets)
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = quad_iou(&dets[d].corners, &gt.corners);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                if sticky(&gts[g]) {
                    taken[g] = true;
                }
            }
            (d, best.map(|(g, _)| g))
        })
        .collect()
}

/// TP/FP flags for detections of one class in one image, aligned with `dets`.
///
/// Callers pass only the GT of the same class.
pub fn match_detections(dets: &[Detection], gts: &[Instance], cfg: &EvalConfig) -> Vec<MatchOutcome> {
    let is_ignored = |gt: &Instance| cfg.ignore_difficult && gt.difficulty != 0;
    let mut out = alloc::vec![MatchOutcome::FalsePositive; dets.len()];
    for (d, g) in greedy_assign(dets, gts, cfg.iou_threshold, |gt| !is_ignored(gt)) {
        out[d] = match g {
            Some(g) if is_ignored(&gts[g]) => MatchOutcome::Ignored,
            Some(_) => MatchOutcome::TruePositive,
            None => MatchOutcome::FalsePositive,
        };
    }
    out
}

/// AP of a ranked list of TP (`true`) / FP (`false`) flags. Returns 0 when
/// `num_gt == 0`.
pub fn average_precision(flags: &[bool], num_gt: usize, mode: ApMode) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let (recall, precision) = pr_curve(flags, num_gt);
    match mode {
        ApMode::AllPoint => {
            let env = envelope(&precision);
            let mut ap = 0.0;
            let mut prev_r = 0.0;
            for (r, p) in recall.iter().zip(&env) {
                if *r > prev_r {
                    ap += (r - prev_r) * p;
                    prev_r = *r;
                }
            }
            ap
        }
        ApMode::Voc07ElevenPoint => (0..=10).map(|i| interpolated_precision(&recall, &precision, i as f64 / 10.0)).sum::<f64>() / 11.0,
    }
}

pub(crate) fn pr_curve(flags: &[bool], num_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += f as usize;
            (tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64)
        })
        .unzip()
}

fn envelope(precision: &[f64]) -> Vec<f64> {
    let mut env = precision.to_vec();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    env
}

/// Highest precision at any rank whose recall reaches `level`, or 0.
pub fn interpolated_precision(recall: &[f64], precision: &[f64], level: f64) -> f64 {
    recall
        .iter()
        .zip(precision)
        .filter(|(r, _)| **r >= level)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassStats {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    pub num_gt: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapSummary {
    /// Every class of the evaluation vocabulary, including classes with no GT.
    pub classes: BTreeMap<String, ClassStats>,
    /// Unweighted mean AP over classes with at least one counted GT.
    pub map: f64,
    /// No class had any counted GT, so `map` is 0 by convention.
    pub empty: bool,
}

#[derive(Debug, Clone, Default)]
struct ClassEntries {
    /// (score, sequence number, is TP)
    ranked: Vec<(f64, u64, bool)>,
    num_gt: usize,
}

/// Order-independent accumulation of matching results.
///
/// Images can be added in any grouping and accumulators merged; AP is only
/// computed in [`ApAccumulator::finish`]. Score ties are broken by the order
/// in which detections were added (merged accumulators follow their own).
#[derive(Debug, Clone)]
pub struct ApAccumulator {
    cfg: EvalConfig,
    vocabulary: BTreeSet<String>,
    classes: BTreeMap<String, ClassEntries>,
    next_seq: u64,
}

impl ApAccumulator {
    pub fn new<I, S>(vocabulary: I, cfg: EvalConfig) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        cfg.validate()?;
        let vocabulary: BTreeSet<String> = vocabulary.into_iter().map(Into::into).collect();
        let classes = vocabulary.iter().map(|c| (c.clone(), ClassEntries::default())).collect();
        Ok(Self { cfg, vocabulary, classes, next_seq: 0 })
    }

    pub fn add_image(&mut self, image_id: &str, dets: &[Detection], gts: &[Instance]) -> Result<(), MetricsError> {
        for d in dets {
            if !self.vocabulary.contains(&d.category) {
                return Err(MetricsError::UnknownCategory { image: image_id.to_string(), category: d.category.clone() });
            }
        }
        for (class, entries) in self.classes.iter_mut() {
            let class_dets: Vec<Detection> = dets.iter().filter(|d| d.category == *class).cloned().collect();
            let class_gts: Vec<Instance> = gts.iter().filter(|g| g.category == *class).cloned().collect();
            entries.num_gt += class_gts
                .iter()
                .filter(|g| !(self.cfg.ignore_difficult && g.difficulty != 0))
                .count();
            let outcomes = match_detections(&class_dets, &class_gts, &self.cfg);
            for (d, o) in class_dets.iter().zip(outcomes) {
                if o != MatchOutcome::Ignored {
                    entries.ranked.push((d.score, self.next_seq, o == MatchOutcome::TruePositive));
                }
                self.next_seq += 1;
            }
            // every detection gets a sequence number in input order
        }
        Ok(())
    }

    /// Appends `other`'s results after this accumulator's.
    pub fn merge(&mut self, other: ApAccumulator) {
        let offset = self.next_seq;
        for (class, entries) in other.classes {
            let mine = self.classes.entry(class.clone()).or_default();
            self.vocabulary.insert(class);
            mine.num_gt += entries.num_gt;
            mine.ranked.extend(entries.ranked.into_iter().map(|(s, q, t)| (s, q + offset, t)));
        }
        self.next_seq += other.next_seq;
    }

    pub fn finish(mut self) -> MapSummary {
        let mut classes = BTreeMap::new();
        let mut sum = 0.0;
        let mut counted = 0usize;
        for (class, entries) in self.classes.iter_mut() {
            entries
                .ranked
                .sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(Ordering::Equal));
            let flags: Vec<bool> = entries.ranked.iter().map(|e| e.2).collect();
            let tp = flags.iter().filter(|f| **f).count();
            let ap = average_precision(&flags, entries.num_gt, self.cfg.ap_mode);
            if entries.num_gt > 0 {
                sum += ap;
                counted += 1;
            }
            classes.insert(class.clone(), ClassStats { ap, tp, fp: flags.len() - tp, num_gt: entries.num_gt });
        }
        let map = if counted > 0 { sum / counted as f64 } else { 0.0 };
        MapSummary { classes, map, empty: counted == 0 }
    }
}

fn align<'a>(
    dets: &'a [ImageDetections],
    gts: &'a [ImageAnnotations],
) -> Result<Vec<(&'a ImageAnnotations, &'a [Detection])>, MetricsError> {
    let by_id: BTreeMap<&str, &[Detection]> = dets.iter().map(|d| (d.image_id.as_str(), d.detections.as_slice())).collect();
    let known: BTreeSet<&str> = gts.iter().map(|g| g.image_id.as_str()).collect();
    if let Some(missing) = by_id.keys().find(|id| !known.contains(*id)) {
        return Err(MetricsError::UnknownImage((*missing).to_string()));
    }
    Ok(gts.iter().map(|g| (g, by_id.get(g.image_id.as_str()).copied().unwrap_or(&[]))).collect())
}

fn gt_vocabulary(gts: &[ImageAnnotations]) -> BTreeSet<String> {
    gts.iter().flat_map(|a| a.instances.iter().map(|i| i.category.clone())).collect()
}

/// mAP with an explicit vocabulary; detections outside it are an error.
pub fn mean_ap_with_vocabulary(
    dets: &[ImageDetections],
    gts: &[ImageAnnotations],
    vocabulary: &BTreeSet<String>,
    cfg: &EvalConfig,
) -> Result<MapSummary, MetricsError> {
    let mut acc = ApAccumulator::new(vocabulary.iter().cloned(), *cfg)?;
    for (gt, d) in align(dets, gts)? {
        acc.add_image(&gt.image_id, d, &gt.instances)?;
    }
    Ok(acc.finish())
}

/// mAP over the categories present in `gts`.
pub fn mean_ap(dets: &[ImageDetections], gts: &[ImageAnnotations], cfg: &EvalConfig) -> Result<MapSummary, MetricsError> {
    mean_ap_with_vocabulary(dets, gts, &gt_vocabulary(gts), cfg)
}

/// Fraction of annotated instances whose class-agnostically matched detection
/// carries the annotated category. Every GT counts, difficult or not.
pub fn acc_against_labels(dets: &[ImageDetections], gts: &[ImageAnnotations], cfg: &EvalConfig) -> Result<f64, MetricsError> {
    cfg.validate()?;
    let mut total = 0usize;
    let mut agree = 0usize;
    for (gt, d) in align(dets, gts)? {
        total += gt.instances.len();
        for (det, g) in greedy_assign(d, &gt.instances, cfg.iou_threshold, |_| true) {
            if let Some(g) = g {
                agree += (d[det].category == gt.instances[g].category) as usize;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { agree as f64 / total as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    /// Instances whose labels the record left alone.
    Correct,
    /// Instances the record relabelled, scored against the corrupted label.
    Incorrect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetMap {
    pub value: f64,
    /// The chosen subset had no counted GT; `value` is 0 by convention.
    pub empty: bool,
    pub summary: MapSummary,
}

/// mAP with GT restricted to one side of a noise record. Detections are not
/// filtered.
pub fn subset_map(
    dets: &[ImageDetections],
    annotations: &[ImageAnnotations],
    record: &NoiseRecord,
    which: Subset,
    cfg: &EvalConfig,
) -> Result<SubsetMap, MetricsError> {
    let (correct, incorrect) = partition_by_record(annotations, record)?;
    let mut vocabulary = gt_vocabulary(annotations);
    vocabulary.extend(record.vocabulary.iter().cloned());
    vocabulary.extend(record.changes.iter().flat_map(|c| [c.original.clone(), c.corrupted.clone()]));
    let subset = match which {
        Subset::Correct => correct,
        Subset::Incorrect => incorrect,
    };
    let summary = mean_ap_with_vocabulary(dets, &subset, &vocabulary, cfg)?;
    Ok(SubsetMap { value: summary.map, empty: summary.empty, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: MapSummary,
    pub acc: f64,
    pub map_correct: Option<SubsetMap>,
    pub map_incorrect: Option<SubsetMap>,
}

impl EvalReport {
    pub fn map(&self) -> f64 {
        self.summary.map
    }
}

/// mAP and ACC against `gts`, plus the subset split when a record is given.
pub fn evaluate(
    dets: &[ImageDetections],
    gts: &[ImageAnnotations],
    record: Option<&NoiseRecord>,
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    let summary = mean_ap(dets, gts, cfg)?;
    let acc = acc_against_labels(dets, gts, cfg)?;
    let (map_correct, map_incorrect) = match record {
        Some(r) => (
            Some(subset_map(dets, gts, r, Subset::Correct, cfg)?),
            Some(subset_map(dets, gts, r, Subset::Incorrect, cfg)?),
        ),
        None => (None, None),
    };
    Ok(EvalReport { summary, acc, map_correct, map_incorrect })
}
