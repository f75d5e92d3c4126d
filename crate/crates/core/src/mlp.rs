//! Dense affine layers with a fixed activation, used as the baseline head.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative; the ReLU subgradient at 0 is 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpLinearLayer {
    in_dim: usize,
    out_dim: usize,
    /// `[out_dim × in_dim]`
    weight: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Matrix,
    pre_activation: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: Matrix,
}

impl MlpLinearLayer {
    /// Weights uniform on `[−1/√in_dim, 1/√in_dim]`, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(KanError::Domain(format!(
                "layer dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        let s = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-s, s).expect("s is finite and positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = (0..out_dim * in_dim)
            .map(|_| dist.sample(&mut rng))
            .collect();
        Ok(MlpLinearLayer {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn parameters_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.out_dim * self.in_dim + self.out_dim
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.in_dim {
            return Err(KanError::shape(
                format!("input width {}", self.in_dim),
                format!("width {}", input.cols()),
            ));
        }
        Ok(())
    }

    fn affine_row(&self, x: &[f64], z: &mut [f64]) {
        for (o, zo) in z.iter_mut().enumerate() {
            let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *zo = acc;
        }
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_input(input)?;
        let mut pre = Matrix::zeros(input.rows(), self.out_dim);
        for b in 0..input.rows() {
            self.affine_row(input.row(b), pre.row_mut(b));
        }
        let mut out = pre.clone();
        for v in out.as_mut_slice() {
            *v = self.activation.apply(*v);
        }
        Ok((
            out,
            MlpCache {
                input: input.clone(),
                pre_activation: pre,
            },
        ))
    }

    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut out = Matrix::zeros(input.rows(), self.out_dim);
        for b in 0..input.rows() {
            let row = out.row_mut(b);
            self.affine_row(input.row(b), row);
            for v in row.iter_mut() {
                *v = self.activation.apply(*v);
            }
        }
        Ok(out)
    }

    pub fn backward(&self, cache: &MlpCache, grad_output: &Matrix) -> Result<MlpGradients> {
        let batch = cache.input.rows();
        if cache.input.cols() != self.in_dim || cache.pre_activation.cols() != self.out_dim {
            return Err(KanError::StaleCache(format!(
                "cache is {}x{}, layer is {} -> {}",
                batch,
                cache.input.cols(),
                self.in_dim,
                self.out_dim
            )));
        }
        if grad_output.rows() != batch || grad_output.cols() != self.out_dim {
            return Err(KanError::shape(
                format!("grad_output {batch}x{}", self.out_dim),
                format!("{}x{}", grad_output.rows(), grad_output.cols()),
            ));
        }
        let mut grad_w = vec![0.0; self.out_dim * self.in_dim];
        let mut grad_b = vec![0.0; self.out_dim];
        let mut grad_in = Matrix::zeros(batch, self.in_dim);
        for b in 0..batch {
            let x = cache.input.row(b);
            let z = cache.pre_activation.row(b);
            let g = grad_output.row(b);
            let gin = grad_in.row_mut(b);
            for o in 0..self.out_dim {
                let gz = g[o] * self.activation.derivative(z[o]);
                grad_b[o] += gz;
                let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                let gw = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    gw[i] += gz * x[i];
                    gin[i] += gz * w[i];
                }
            }
        }
        Ok(MlpGradients {
            weight: grad_w,
            bias: grad_b,
            input: grad_in,
        })
    }
}
