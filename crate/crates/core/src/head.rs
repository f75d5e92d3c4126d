//! Two-layer classifier heads over backbone features.
//!
//! The KAN head chains two [`KanLinearLayer`]s directly; the learnable edges
//! are the only nonlinearity. The MLP head is `Linear + ReLU` followed by
//! `Linear + Identity`.

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::kan::{ForwardCache, KanLinearLayer};
use crate::matrix::Matrix;
use crate::mlp::{Activation, MlpCache, MlpLinearLayer};
use crate::spline::KnotGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Kan,
    Mlp,
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeadKind::Kan => write!(f, "kan"),
            HeadKind::Mlp => write!(f, "mlp"),
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = KanError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kan" => Ok(HeadKind::Kan),
            "mlp" => Ok(HeadKind::Mlp),
            other => Err(KanError::Config(format!("unknown head kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Kan {
        hidden: KanLinearLayer,
        output: KanLinearLayer,
    },
    Mlp {
        hidden: MlpLinearLayer,
        output: MlpLinearLayer,
    },
}

#[derive(Debug, Clone)]
pub enum HeadCache {
    Kan(ForwardCache, ForwardCache),
    Mlp(MlpCache, MlpCache),
}

impl Head {
    /// `feature_dim → hidden_width → n_classes`. The hidden layer is seeded
    /// with `seed`, the output layer with `seed + 1`.
    pub fn build(
        kind: HeadKind,
        feature_dim: usize,
        hidden_width: usize,
        n_classes: usize,
        grid: &KnotGrid,
        seed: u64,
    ) -> Result<Self> {
        let out_seed = seed.wrapping_add(1);
        Ok(match kind {
            HeadKind::Kan => Head::Kan {
                hidden: KanLinearLayer::new(feature_dim, hidden_width, grid.clone(), seed)?,
                output: KanLinearLayer::new(hidden_width, n_classes, grid.clone(), out_seed)?,
            },
            HeadKind::Mlp => Head::Mlp {
                hidden: MlpLinearLayer::new(feature_dim, hidden_width, Activation::Relu, seed)?,
                output: MlpLinearLayer::new(
                    hidden_width,
                    n_classes,
                    Activation::Identity,
                    out_seed,
                )?,
            },
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Kan { .. } => HeadKind::Kan,
            Head::Mlp { .. } => HeadKind::Mlp,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Kan { hidden, .. } => hidden.in_dim(),
            Head::Mlp { hidden, .. } => hidden.in_dim(),
        }
    }

    pub fn hidden_width(&self) -> usize {
        match self {
            Head::Kan { hidden, .. } => hidden.out_dim(),
            Head::Mlp { hidden, .. } => hidden.out_dim(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Head::Kan { output, .. } => output.out_dim(),
            Head::Mlp { output, .. } => output.out_dim(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Head::Kan { hidden, output } => hidden.parameter_count() + output.parameter_count(),
            Head::Mlp { hidden, output } => hidden.parameter_count() + output.parameter_count(),
        }
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, HeadCache)> {
        match self {
            Head::Kan { hidden, output } => {
                let (h, c1) = hidden.forward(input)?;
                let (logits, c2) = output.forward(&h)?;
                Ok((logits, HeadCache::Kan(c1, c2)))
            }
            Head::Mlp { hidden, output } => {
                let (h, c1) = hidden.forward(input)?;
                let (logits, c2) = output.forward(&h)?;
                Ok((logits, HeadCache::Mlp(c1, c2)))
            }
        }
    }

    /// Logits without caching intermediates.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        match self {
            Head::Kan { hidden, output } => output.predict(&hidden.predict(input)?),
            Head::Mlp { hidden, output } => output.predict(&hidden.predict(input)?),
        }
    }

    /// Parameter gradients in the order of [`parameters_mut`](Self::parameters_mut).
    pub fn backward(&self, cache: &HeadCache, grad_logits: &Matrix) -> Result<Vec<Vec<f64>>> {
        match (self, cache) {
            (Head::Kan { hidden, output }, HeadCache::Kan(c1, c2)) => {
                let g2 = output.backward(c2, grad_logits)?;
                let g1 = hidden.backward(c1, &g2.input)?;
                Ok(vec![
                    g1.edge_weight,
                    g1.spline_coeff,
                    g2.edge_weight,
                    g2.spline_coeff,
                ])
            }
            (Head::Mlp { hidden, output }, HeadCache::Mlp(c1, c2)) => {
                let g2 = output.backward(c2, grad_logits)?;
                let g1 = hidden.backward(c1, &g2.input)?;
                Ok(vec![g1.weight, g1.bias, g2.weight, g2.bias])
            }
            _ => Err(KanError::StaleCache(
                "cache was produced by a different head kind".into(),
            )),
        }
    }

    /// Hidden-layer tensors first, then output-layer tensors.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Head::Kan { hidden, output } => {
                let [a, b] = hidden.parameters_mut();
                let [c, d] = output.parameters_mut();
                vec![a, b, c, d]
            }
            Head::Mlp { hidden, output } => {
                let [a, b] = hidden.parameters_mut();
                let [c, d] = output.parameters_mut();
                vec![a, b, c, d]
            }
        }
    }

    pub fn parameter_lens(&mut self) -> Vec<usize> {
        self.parameters_mut().iter().map(|p| p.len()).collect()
    }
}
