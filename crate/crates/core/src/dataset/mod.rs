//! Frozen-backbone feature datasets: storage, normalization and splitting.

mod format;
mod split;
mod synthetic;

pub use format::{
    decode_kfv1, encode_kfv1, load_features, save_features, KFV1_MAGIC, KFV1_VERSION,
};
pub use split::{stratified_split, DatasetSplit, SplitFractions};
pub use synthetic::{generate_blobs, BlobSpec};

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::matrix::Matrix;

/// The ten EuroSAT land-cover classes, in label order.
pub const EUROSAT_CLASSES: [&str; 10] = [
    "AnnualCrop",
    "Forest",
    "HerbaceousVegetation",
    "Highway",
    "Industrial",
    "Pasture",
    "PermanentCrop",
    "Residential",
    "River",
    "SeaLake",
];

/// Feature vectors with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    /// `[n_samples × feature_dim]`, row-major
    features: Vec<f32>,
    feature_dim: usize,
    labels: Vec<usize>,
    class_names: Vec<String>,
    backbone_tag: String,
    /// Set once a record has been fit on this dataset's training rows.
    pub normalization: Option<Normalization>,
}

impl FeatureDataset {
    /// Validates shapes and labels. Needs at least two classes.
    pub fn new(
        features: Vec<f32>,
        feature_dim: usize,
        labels: Vec<usize>,
        class_names: Vec<String>,
        backbone_tag: impl Into<String>,
    ) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(KanError::Format(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        if feature_dim == 0 && !labels.is_empty() {
            return Err(KanError::Format("feature_dim must be positive".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(KanError::Format(format!(
                "{} feature values do not fill {} samples of width {}",
                features.len(),
                labels.len(),
                feature_dim
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(KanError::Label {
                label,
                n_classes: class_names.len(),
            });
        }
        Ok(FeatureDataset {
            features,
            feature_dim,
            labels,
            class_names,
            backbone_tag: backbone_tag.into(),
            normalization: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn backbone_tag(&self) -> &str {
        &self.backbone_tag
    }

    /// Samples per class, indexed by label.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Labels of the given rows, in order.
    pub fn labels_of(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }

    /// Same samples, labels and class table, ignoring any fitted normalization.
    pub fn same_content(&self, other: &FeatureDataset) -> bool {
        self.feature_dim == other.feature_dim
            && self.labels == other.labels
            && self.class_names == other.class_names
            && self.backbone_tag == other.backbone_tag
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Per-dimension affine map `x' = (x − center) / scale` into the spline grid
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub per_dimension: bool,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Smallest standard deviation used when building `scale`.
pub const STD_FLOOR: f64 = 1e-8;

impl Normalization {
    /// Fits center = mean and scale = 3·std (population std, floored at
    /// [`STD_FLOOR`]) on the given rows only.
    pub fn fit(dataset: &FeatureDataset, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(KanError::Domain(
                "cannot fit normalization on zero rows".into(),
            ));
        }
        let dim = dataset.feature_dim();
        let n = rows.len() as f64;
        let mut mean = vec![0.0f64; dim];
        for &r in rows {
            for (m, &x) in mean.iter_mut().zip(dataset.feature_row(r)) {
                *m += f64::from(x);
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0f64; dim];
        for &r in rows {
            for ((v, &x), m) in var.iter_mut().zip(dataset.feature_row(r)).zip(&mean) {
                let d = f64::from(x) - m;
                *v += d * d;
            }
        }
        let scale = var
            .iter()
            .map(|v| 3.0 * (v / n).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Normalization {
            per_dimension: true,
            center: mean,
            scale,
        })
    }

    /// Normalized `f64` copies of the given rows.
    pub fn apply(&self, dataset: &FeatureDataset, rows: &[usize]) -> Result<Matrix> {
        let dim = dataset.feature_dim();
        if self.center.len() != dim || self.scale.len() != dim {
            return Err(KanError::shape(
                format!("normalization of width {dim}"),
                format!("width {}", self.center.len()),
            ));
        }
        let mut out = Vec::with_capacity(rows.len() * dim);
        for &r in rows {
            for ((&x, c), s) in dataset
                .feature_row(r)
                .iter()
                .zip(&self.center)
                .zip(&self.scale)
            {
                out.push((f64::from(x) - c) / s);
            }
        }
        Matrix::from_vec(rows.len(), dim, out)
    }
}
