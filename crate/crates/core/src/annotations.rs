//! DOTA-style annotations and category-label noise injection.
//!
//! A label file holds optional `imagesource:` / `gsd:` header lines followed by
//! one instance per line: `x1 y1 x2 y2 x3 y3 x4 y4 category difficulty`.
//!
//! Noise injection selects `floor(ratio * N)` instances uniformly without
//! replacement across the whole dataset and replaces each selected category
//! with a uniformly drawn *different* category. Boxes and difficulty flags are
//! never touched.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::QuadCorners;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: empty category")]
    EmptyCategory { line: usize },
    #[error("vocabulary has {size} categories; at least 2 are needed to draw a new label")]
    VocabularyTooSmall { size: usize },
    #[error("noise ratio must lie in [0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("noise record does not match dataset: {0}")]
    RecordMismatch(String),
}

/// One annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub corners: QuadCorners,
    pub category: String,
    /// 0 = normal, 1 = difficult.
    pub difficulty: u8,
}

impl Instance {
    pub fn new(corners: QuadCorners, category: impl Into<String>, difficulty: u8) -> Result<Self, AnnotationError> {
        let category = category.into();
        if category.is_empty() {
            return Err(AnnotationError::EmptyCategory { line: 0 });
        }
        Ok(Self { corners, category, difficulty })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageAnnotations {
    pub image_id: String,
    /// Raw metadata lines (`imagesource:...`, `gsd:...`) in file order.
    pub header: Vec<String>,
    pub instances: Vec<Instance>,
}

impl ImageAnnotations {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self { image_id: image_id.into(), ..Self::default() }
    }
}

fn is_header(line: &str) -> bool {
    line.starts_with("imagesource:") || line.starts_with("gsd:")
}

/// Parses one DOTA label file. Line numbers in errors are 1-based and count
/// every physical line of `text`.
pub fn parse_dota(text: &str, image_id: &str) -> Result<ImageAnnotations, AnnotationError> {
    let mut ann = ImageAnnotations::new(image_id);
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if is_header(line) {
            ann.header.push(line.to_string());
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 10 {
            return Err(AnnotationError::MalformedLine {
                line: line_no,
                reason: alloc::format!("expected 10 fields, found {}", tokens.len()),
            });
        }
        let mut coords = [0.0; 8];
        for (c, tok) in coords.iter_mut().zip(&tokens[..8]) {
            *c = match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(AnnotationError::MalformedLine {
                        line: line_no,
                        reason: alloc::format!("invalid coordinate {tok:?}"),
                    })
                }
            };
        }
        let category = tokens[8];
        if category.is_empty() {
            return Err(AnnotationError::EmptyCategory { line: line_no });
        }
        let difficulty = match tokens[9] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(AnnotationError::MalformedLine {
                    line: line_no,
                    reason: alloc::format!("difficulty must be 0 or 1, found {other:?}"),
                })
            }
        };
        ann.instances.push(Instance {
            corners: QuadCorners::from_flat(coords),
            category: category.to_string(),
            difficulty,
        });
    }
    Ok(ann)
}

/// Serializes annotations. Coordinates use the shortest representation that
/// parses back to the same `f64`.
pub fn write_dota(ann: &ImageAnnotations) -> String {
    let mut out = String::new();
    for h in &ann.header {
        out.push_str(h);
        out.push('\n');
    }
    for inst in &ann.instances {
        let _ = writeln!(out, "{} {} {}", inst.corners, inst.category, inst.difficulty);
    }
    out
}

/// One relabelled instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseChange {
    pub image_id: String,
    pub instance_index: usize,
    pub original: String,
    pub corrupted: String,
}

/// Everything needed to reproduce or undo one noise injection.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord {
    pub ratio: f64,
    pub seed: u64,
    pub vocabulary: Vec<String>,
    pub changes: Vec<NoiseChange>,
}

impl NoiseRecord {
    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}

/// `floor(ratio * n)`, with a small allowance so that ratios such as 0.29 of
/// 100 are not undercounted by binary rounding.
pub fn corrupted_count(n: usize, ratio: f64) -> usize {
    let raw = libm::floor(ratio * n as f64 + 1e-9);
    (raw.max(0.0) as usize).min(n)
}

pub(crate) fn check_ratio(ratio: f64) -> Result<(), AnnotationError> {
    if ratio.is_finite() && (0.0..=1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(AnnotationError::InvalidRatio(ratio))
    }
}

/// Chooses `corrupted_count(n, ratio)` distinct positions out of `n`, returned
/// in ascending order.
pub fn select_for_corruption<R: Rng + ?Sized>(rng: &mut R, n: usize, ratio: f64) -> Vec<usize> {
    let mut picked = index::sample(rng, n, corrupted_count(n, ratio)).into_vec();
    picked.sort_unstable();
    picked
}

/// Draws uniformly from `0..k` excluding `exclude`. If `exclude >= k` the draw
/// is uniform over all of `0..k`.
pub fn draw_other<R: Rng + ?Sized>(rng: &mut R, k: usize, exclude: usize) -> usize {
    if exclude >= k {
        return rng.random_range(0..k);
    }
    let r = rng.random_range(0..k - 1);
    if r >= exclude {
        r + 1
    } else {
        r
    }
}

/// Sorted set of categories present in `dataset`.
pub fn vocabulary_of(dataset: &[ImageAnnotations]) -> Vec<String> {
    let set: BTreeSet<&str> = dataset
        .iter()
        .flat_map(|a| a.instances.iter().map(|i| i.category.as_str()))
        .collect();
    set.into_iter().map(String::from).collect()
}

/// Corrupts category labels of a dataset.
///
/// The draw sequence is: one sample of instance positions (global, across all
/// images in the given order), then one replacement draw per selected instance
/// in ascending position order. Same inputs and seed give identical output.
pub fn inject_noise(
    dataset: &[ImageAnnotations],
    ratio: f64,
    seed: u64,
    vocabulary: Option<&[String]>,
) -> Result<(Vec<ImageAnnotations>, NoiseRecord), AnnotationError> {
    check_ratio(ratio)?;
    let vocabulary = match vocabulary {
        Some(v) => {
            let set: BTreeSet<&String> = v.iter().collect();
            set.into_iter().cloned().collect()
        }
        None => vocabulary_of(dataset),
    };
    let positions: Vec<(usize, usize)> = dataset
        .iter()
        .enumerate()
        .flat_map(|(img, a)| (0..a.instances.len()).map(move |k| (img, k)))
        .collect();
    let count = corrupted_count(positions.len(), ratio);
    if count > 0 && vocabulary.len() < 2 {
        return Err(AnnotationError::VocabularyTooSmall { size: vocabulary.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.to_vec();
    let mut changes = Vec::with_capacity(count);
    for pos in select_for_corruption(&mut rng, positions.len(), ratio) {
        let (img, k) = positions[pos];
        let image_id = out[img].image_id.clone();
        let inst = &mut out[img].instances[k];
        let current = vocabulary
            .iter()
            .position(|c| *c == inst.category)
            .unwrap_or(vocabulary.len());
        let new = vocabulary[draw_other(&mut rng, vocabulary.len(), current)].clone();
        changes.push(NoiseChange {
            image_id,
            instance_index: k,
            original: core::mem::replace(&mut inst.category, new.clone()),
            corrupted: new,
        });
    }
    Ok((out, NoiseRecord { ratio, seed, vocabulary, changes }))
}

type ChangeIndex<'a> = BTreeMap<(&'a str, usize), &'a NoiseChange>;

fn index_record<'a>(dataset: &[ImageAnnotations], record: &'a NoiseRecord) -> Result<ChangeIndex<'a>, AnnotationError> {
    let by_id: BTreeMap<&str, &ImageAnnotations> = dataset.iter().map(|a| (a.image_id.as_str(), a)).collect();
    let mut idx = BTreeMap::new();
    for ch in &record.changes {
        let ann = by_id
            .get(ch.image_id.as_str())
            .ok_or_else(|| AnnotationError::RecordMismatch(alloc::format!("unknown image {:?}", ch.image_id)))?;
        let inst = ann.instances.get(ch.instance_index).ok_or_else(|| {
            AnnotationError::RecordMismatch(alloc::format!(
                "image {:?} has no instance {}",
                ch.image_id, ch.instance_index
            ))
        })?;
        if inst.category != ch.original && inst.category != ch.corrupted {
            return Err(AnnotationError::RecordMismatch(alloc::format!(
                "image {:?} instance {} is {:?}, expected {:?} or {:?}",
                ch.image_id, ch.instance_index, inst.category, ch.original, ch.corrupted
            )));
        }
        if idx.insert((ch.image_id.as_str(), ch.instance_index), ch).is_some() {
            return Err(AnnotationError::RecordMismatch(alloc::format!(
                "duplicate entry for image {:?} instance {}",
                ch.image_id, ch.instance_index
            )));
        }
    }
    Ok(idx)
}

/// Re-applies a record to a clean dataset, producing the corrupted labels.
pub fn apply_noise_record(
    dataset: &[ImageAnnotations],
    record: &NoiseRecord,
) -> Result<Vec<ImageAnnotations>, AnnotationError> {
    let idx = index_record(dataset, record)?;
    let mut out = dataset.to_vec();
    for ann in &mut out {
        for (k, inst) in ann.instances.iter_mut().enumerate() {
            if let Some(ch) = idx.get(&(ann.image_id.as_str(), k)) {
                inst.category = ch.corrupted.clone();
            }
        }
    }
    Ok(out)
}

/// Splits a dataset into instances the record left alone and instances it
/// relabelled.
///
/// Both halves keep every image (possibly with no instances) so image ids stay
/// aligned with detections. Relabelled instances carry the corrupted category,
/// whichever version of the dataset (clean or noisy) is passed in.
pub fn partition_by_record(
    dataset: &[ImageAnnotations],
    record: &NoiseRecord,
) -> Result<(Vec<ImageAnnotations>, Vec<ImageAnnotations>), AnnotationError> {
    let idx = index_record(dataset, record)?;
    let mut clean = Vec::with_capacity(dataset.len());
    let mut corrupted = Vec::with_capacity(dataset.len());
    for ann in dataset {
        let mut c = ImageAnnotations { image_id: ann.image_id.clone(), header: ann.header.clone(), instances: Vec::new() };
        let mut n = c.clone();
        for (k, inst) in ann.instances.iter().enumerate() {
            match idx.get(&(ann.image_id.as_str(), k)) {
                Some(ch) => n.instances.push(Instance { category: ch.corrupted.clone(), ..inst.clone() }),
                None => c.instances.push(inst.clone()),
            }
        }
        clean.push(c);
        corrupted.push(n);
    }
    Ok((clean, corrupted))
}
