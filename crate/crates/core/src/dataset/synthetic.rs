use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FeatureDataset;
use crate::error::{KanError, Result};

/// Gaussian blobs, one per class, for desk-scale experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_samples: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
    /// Offset of each class center along its own axis.
    pub separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n_samples: 200,
            feature_dim: 8,
            n_classes: 3,
            separation: 6.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

/// Class `c` is centered at `separation · e_{c mod dim}`, shifted by
/// `separation · (c / dim)` along every axis when there are more classes than
/// dimensions. Labels cycle `0, 1, …, n_classes − 1` so classes are balanced.
pub fn generate_blobs(spec: &BlobSpec) -> Result<FeatureDataset> {
    if spec.n_classes < 2 || spec.feature_dim == 0 || spec.n_samples == 0 {
        return Err(KanError::Domain(format!(
            "blob dataset needs ≥2 classes, ≥1 dimension and ≥1 sample, got {spec:?}"
        )));
    }
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| KanError::Domain(format!("noise_std {}: {e}", spec.noise_std)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.feature_dim;
    let mut features = Vec::with_capacity(spec.n_samples * dim);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let c = i % spec.n_classes;
        let shift = spec.separation * (c / dim) as f64;
        for d in 0..dim {
            let center = if d == c % dim { spec.separation } else { 0.0 } + shift;
            features.push((center + noise.sample(&mut rng)) as f32);
        }
        labels.push(c);
    }
    let names = (0..spec.n_classes).map(|c| format!("blob_{c}")).collect();
    FeatureDataset::new(
        features,
        dim,
        labels,
        names,
        format!(
            "synthetic-blobs:sep={}:std={}:seed={}",
            spec.separation, spec.noise_std, spec.seed
        ),
    )
}
