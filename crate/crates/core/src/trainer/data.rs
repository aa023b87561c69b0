use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TrainerError;
use crate::annotations::{draw_other, select_for_corruption};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    /// Distance between class means.
    pub separation: f64,
    pub noise_ratio: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { classes: 4, dim: 2, samples: 2000, separation: 4.0, noise_ratio: 0.4, seed: 0 }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.classes < 2 {
            return Err(TrainerError::InvalidParams("need at least 2 classes"));
        }
        if self.dim < 1 {
            return Err(TrainerError::InvalidParams("dimension must be at least 1"));
        }
        if self.samples < self.classes {
            return Err(TrainerError::InvalidParams("need at least one sample per class"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(TrainerError::InvalidParams("separation must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.noise_ratio) {
            return Err(TrainerError::InvalidParams("noise ratio must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Labelled samples with clean and noisy labels. Features are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    spec: DatasetSpec,
    means: Vec<Vec<f64>>,
    features: Vec<f64>,
    clean: Vec<usize>,
    noisy: Vec<usize>,
}

impl SyntheticDataset {
    pub fn spec(&self) -> &DatasetSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.spec.dim..(i + 1) * self.spec.dim]
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy
    }

    pub fn is_corrupted(&self, i: usize) -> bool {
        self.clean[i] != self.noisy[i]
    }

    pub fn corrupted_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_corrupted(i)).count()
    }

    /// Features shifted and scaled to zero mean and unit variance per
    /// coordinate. Constant coordinates are only centred.
    pub fn standardized_features(&self) -> Vec<f64> {
        let d = self.spec.dim;
        let n = self.len() as f64;
        let mut out = self.features.clone();
        for j in 0..d {
            let mean = (0..self.len()).map(|i| self.features[i * d + j]).sum::<f64>() / n;
            let var = (0..self.len()).map(|i| (self.features[i * d + j] - mean).powi(2)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            for i in 0..self.len() {
                out[i * d + j] = (self.features[i * d + j] - mean) * scale;
            }
        }
        out
    }
}

/// Class means with pairwise distance `separation` where the dimension allows.
///
/// - `dim >= classes`: shifted simplex vertices in the first `classes`
///   coordinates, all pairs equidistant.
/// - `2 <= dim < classes`: a regular polygon in the first two coordinates with
///   adjacent vertices `separation` apart.
/// - `dim == 1`: evenly spaced points on the line, centred at 0.
pub fn class_means(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let c = classes as f64;
    (0..classes)
        .map(|k| {
            let mut m = vec![0.0; dim];
            if dim >= classes {
                let s = separation / core::f64::consts::SQRT_2;
                for (j, v) in m.iter_mut().take(classes).enumerate() {
                    *v = s * (if j == k { 1.0 } else { 0.0 } - 1.0 / c);
                }
            } else if dim >= 2 {
                let r = separation / (2.0 * libm::sin(core::f64::consts::PI / c));
                let theta = 2.0 * core::f64::consts::PI * k as f64 / c;
                m[0] = r * libm::cos(theta);
                m[1] = r * libm::sin(theta);
            } else {
                m[0] = separation * (k as f64 - (c - 1.0) / 2.0);
            }
            m
        })
        .collect()
}

/// Balanced classes (sample `i` has clean label `i % classes`), isotropic
/// unit-variance Gaussian features, and symmetric label noise on
/// `floor(noise_ratio * samples)` uniformly chosen samples.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset, TrainerError> {
    spec.validate()?;
    let means = class_means(spec.classes, spec.dim, spec.separation);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clean: Vec<usize> = (0..spec.samples).map(|i| i % spec.classes).collect();
    let mut features = Vec::with_capacity(spec.samples * spec.dim);
    for &y in &clean {
        for mu in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(mu + z);
        }
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(1);
    let mut noisy = clean.clone();
    for i in select_for_corruption(&mut noise_rng, spec.samples, spec.noise_ratio) {
        noisy[i] = draw_other(&mut noise_rng, spec.classes, clean[i]);
    }

    Ok(SyntheticDataset { spec: *spec, means, features, clean, noisy })
}
