//! The KAN linear layer: one learnable edge function per (input, output) pair.
//!
//! Edge `(q, p)` computes `w_qp · (silu(x) + Σ_i c_qpi · B_i(x))`, and output `q`
//! sums its incoming edges over `p`. All edges share one [`KnotGrid`].
//! Sums run over `p` ascending, then `i` ascending, so a sample's output does
//! not depend on what else is in its batch.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KanError, Result};
use crate::matrix::Matrix;
use crate::spline::KnotGrid;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x · σ(x)`.
#[inline]
pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// `σ(x) · (1 + x · (1 − σ(x)))`.
#[inline]
pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanLinearLayer {
    in_dim: usize,
    out_dim: usize,
    grid: KnotGrid,
    /// `[out_dim × in_dim]`
    edge_weight: Vec<f64>,
    /// `[out_dim × in_dim × basis_count]`
    spline_coeff: Vec<f64>,
}

/// Everything [`KanLinearLayer::backward`] needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    /// `[batch × in_dim × basis_count]`
    basis: Vec<f64>,
    /// same layout as `basis`
    basis_deriv: Vec<f64>,
    output: Matrix,
}

impl ForwardCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn basis_derivatives(&self) -> &[f64] {
        &self.basis_deriv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanGradients {
    /// `[out_dim × in_dim]`
    pub edge_weight: Vec<f64>,
    /// `[out_dim × in_dim × basis_count]`
    pub spline_coeff: Vec<f64>,
    pub input: Matrix,
}

impl KanLinearLayer {
    /// Unit edge weights and spline coefficients drawn uniformly from
    /// `[−s, s]`, `s = 0.1 / √basis_count`, from a ChaCha8 stream seeded by
    /// `seed`.
    pub fn new(in_dim: usize, out_dim: usize, grid: KnotGrid, seed: u64) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(KanError::Domain(format!(
                "layer dimensions must be positive, got {in_dim} -> {out_dim}"
            )));
        }
        let nb = grid.basis_count();
        let s = 0.1 / (nb as f64).sqrt();
        let dist = Uniform::new_inclusive(-s, s).expect("s is finite and positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spline_coeff = (0..out_dim * in_dim * nb)
            .map(|_| dist.sample(&mut rng))
            .collect();
        Ok(KanLinearLayer {
            in_dim,
            out_dim,
            grid,
            edge_weight: vec![1.0; out_dim * in_dim],
            spline_coeff,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn basis_count(&self) -> usize {
        self.grid.basis_count()
    }

    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weight
    }

    pub fn edge_weights_mut(&mut self) -> &mut [f64] {
        &mut self.edge_weight
    }

    pub fn spline_coeffs(&self) -> &[f64] {
        &self.spline_coeff
    }

    pub fn spline_coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.spline_coeff
    }

    /// Both parameter tensors, weights first.
    pub fn parameters_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.edge_weight, &mut self.spline_coeff]
    }

    pub fn parameter_count(&self) -> usize {
        self.out_dim * self.in_dim * (self.basis_count() + 1)
    }

    fn check_edge(&self, q: usize, p: usize) -> Result<()> {
        if q >= self.out_dim {
            return Err(KanError::Index {
                what: "output q",
                index: q,
                bound: self.out_dim,
            });
        }
        if p >= self.in_dim {
            return Err(KanError::Index {
                what: "input p",
                index: p,
                bound: self.in_dim,
            });
        }
        Ok(())
    }

    /// Coefficient vector `c_qp`.
    pub fn edge_coeffs(&self, q: usize, p: usize) -> Result<&[f64]> {
        self.check_edge(q, p)?;
        let nb = self.basis_count();
        let start = (q * self.in_dim + p) * nb;
        Ok(&self.spline_coeff[start..start + nb])
    }

    pub fn edge_weight(&self, q: usize, p: usize) -> Result<f64> {
        self.check_edge(q, p)?;
        Ok(self.edge_weight[q * self.in_dim + p])
    }

    /// `φ_qp(x) = w_qp · (silu(x) + Σ_i c_qpi B_i(x))`.
    pub fn edge_eval(&self, q: usize, p: usize, x: f64) -> Result<f64> {
        let coeffs = self.edge_coeffs(q, p)?;
        let w = self.edge_weight[q * self.in_dim + p];
        let basis = self.grid.basis_values(x);
        let spline: f64 = coeffs.iter().zip(&basis).map(|(c, b)| c * b).sum();
        Ok(w * (silu(x) + spline))
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.in_dim {
            return Err(KanError::shape(
                format!("input width {}", self.in_dim),
                format!("width {}", input.cols()),
            ));
        }
        if !input.all_finite() {
            return Err(KanError::Numeric("non-finite value in layer input".into()));
        }
        Ok(())
    }

    /// Accumulates one sample's outputs from its precomputed basis rows.
    fn output_row(&self, x: &[f64], basis: &[f64], out: &mut [f64]) {
        let nb = self.basis_count();
        for (q, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (p, &xp) in x.iter().enumerate() {
                let edge = q * self.in_dim + p;
                let coeffs = &self.spline_coeff[edge * nb..(edge + 1) * nb];
                let b = &basis[p * nb..(p + 1) * nb];
                let mut spline = 0.0;
                for i in 0..nb {
                    spline += coeffs[i] * b[i];
                }
                acc += self.edge_weight[edge] * (silu(xp) + spline);
            }
            *o = acc;
        }
    }

    /// Forward pass over a batch, keeping what the backward pass needs.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(input)?;
        let nb = self.basis_count();
        let batch = input.rows();
        let row_len = self.in_dim * nb;
        let mut basis = vec![0.0; batch * row_len];
        let mut basis_deriv = vec![0.0; batch * row_len];
        let mut output = Matrix::zeros(batch, self.out_dim);
        for b in 0..batch {
            let x = input.row(b);
            let brow = &mut basis[b * row_len..(b + 1) * row_len];
            let drow = &mut basis_deriv[b * row_len..(b + 1) * row_len];
            for (p, &xp) in x.iter().enumerate() {
                self.grid.basis_and_derivatives_into(
                    xp,
                    &mut brow[p * nb..(p + 1) * nb],
                    &mut drow[p * nb..(p + 1) * nb],
                );
            }
            self.output_row(x, brow, output.row_mut(b));
        }
        let cache = ForwardCache {
            input: input.clone(),
            basis,
            basis_deriv,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Forward pass without a cache; bitwise equal to [`forward`](Self::forward).
    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let nb = self.basis_count();
        let mut basis = vec![0.0; self.in_dim * nb];
        let mut output = Matrix::zeros(input.rows(), self.out_dim);
        for b in 0..input.rows() {
            let x = input.row(b);
            for (p, &xp) in x.iter().enumerate() {
                self.grid
                    .basis_values_into(xp, &mut basis[p * nb..(p + 1) * nb]);
            }
            self.output_row(x, &basis, output.row_mut(b));
        }
        Ok(output)
    }

    /// Analytic gradients of `Σ grad_output ⊙ output` with respect to edge
    /// weights, spline coefficients and the layer input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<KanGradients> {
        let nb = self.basis_count();
        let batch = cache.input.rows();
        let row_len = self.in_dim * nb;
        if cache.input.cols() != self.in_dim
            || cache.output.cols() != self.out_dim
            || cache.basis.len() != batch * row_len
            || cache.basis_deriv.len() != batch * row_len
        {
            return Err(KanError::StaleCache(format!(
                "cache holds {}x{} input with {} basis entries, layer is {} -> {} with {} bases",
                batch,
                cache.input.cols(),
                cache.basis.len(),
                self.in_dim,
                self.out_dim,
                nb
            )));
        }
        if grad_output.rows() != batch || grad_output.cols() != self.out_dim {
            return Err(KanError::shape(
                format!("grad_output {batch}x{}", self.out_dim),
                format!("{}x{}", grad_output.rows(), grad_output.cols()),
            ));
        }

        let mut grad_w = vec![0.0; self.out_dim * self.in_dim];
        let mut grad_c = vec![0.0; self.out_dim * self.in_dim * nb];
        let mut grad_in = Matrix::zeros(batch, self.in_dim);
        let mut base = vec![0.0; self.in_dim];
        let mut base_deriv = vec![0.0; self.in_dim];

        for b in 0..batch {
            let x = cache.input.row(b);
            for p in 0..self.in_dim {
                base[p] = silu(x[p]);
                base_deriv[p] = silu_derivative(x[p]);
            }
            let brow = &cache.basis[b * row_len..(b + 1) * row_len];
            let drow = &cache.basis_deriv[b * row_len..(b + 1) * row_len];
            let g_row = grad_output.row(b);
            let gin = grad_in.row_mut(b);
            for (q, &g) in g_row.iter().enumerate() {
                for p in 0..self.in_dim {
                    let edge = q * self.in_dim + p;
                    let coeffs = &self.spline_coeff[edge * nb..(edge + 1) * nb];
                    let bvals = &brow[p * nb..(p + 1) * nb];
                    let dvals = &drow[p * nb..(p + 1) * nb];
                    let mut spline = 0.0;
                    let mut dspline = 0.0;
                    for i in 0..nb {
                        spline += coeffs[i] * bvals[i];
                        dspline += coeffs[i] * dvals[i];
                    }
                    let w = self.edge_weight[edge];
                    grad_w[edge] += g * (base[p] + spline);
                    let gw = g * w;
                    let gc = &mut grad_c[edge * nb..(edge + 1) * nb];
                    for i in 0..nb {
                        gc[i] += gw * bvals[i];
                    }
                    gin[p] += gw * (base_deriv[p] + dspline);
                }
            }
        }

        Ok(KanGradients {
            edge_weight: grad_w,
            spline_coeff: grad_c,
            input: grad_in,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_tensor;
    use crate::spline::make_uniform_grid;
    use rand::Rng;

    fn cubic() -> KnotGrid {
        make_uniform_grid(-1.0, 1.0, 5, 3).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng, scale: f64) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn randomized_layer(in_dim: usize, out_dim: usize, seed: u64) -> KanLinearLayer {
        let mut layer = KanLinearLayer::new(in_dim, out_dim, cubic(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for w in layer.edge_weights_mut() {
            *w = rng.random_range(-1.5..1.5);
        }
        for c in layer.spline_coeffs_mut() {
            *c = rng.random_range(-1.0..1.0);
        }
        layer
    }

    #[test]
    fn silu_reference_values() {
        assert_eq!(silu(0.0), 0.0);
        // 1 / (1 + e^-1) to 15 digits, computed independently with mpmath
        assert!((silu(1.0) - 0.731058578630005).abs() < 1e-14);
        assert!(silu(-800.0).abs() < 1e-300);
        assert!((silu(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn silu_derivative_matches_difference() {
        for x in [-4.0, -1.0, -0.2, 0.0, 0.3, 2.5] {
            let h = 1e-6;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn edge_eval_reduces_to_weighted_silu() {
        let mut layer = KanLinearLayer::new(2, 2, cubic(), 1).unwrap();
        layer.spline_coeffs_mut().fill(0.0);
        assert_eq!(layer.edge_eval(0, 0, 0.0).unwrap(), 0.0);
        let one = layer.edge_eval(1, 1, 1.0).unwrap();
        assert!((one - 0.731058578630005).abs() < 1e-14);
        layer.edge_weights_mut()[3] = 2.0;
        assert_eq!(layer.edge_eval(1, 1, 1.0).unwrap(), 2.0 * one);
    }

    #[test]
    fn edge_eval_index_errors() {
        let layer = KanLinearLayer::new(2, 3, cubic(), 1).unwrap();
        assert!(matches!(
            layer.edge_eval(3, 0, 0.0),
            Err(KanError::Index { .. })
        ));
        assert!(matches!(
            layer.edge_eval(0, 2, 0.0),
            Err(KanError::Index { .. })
        ));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = KanLinearLayer::new(4, 3, cubic(), 42).unwrap();
        let b = KanLinearLayer::new(4, 3, cubic(), 42).unwrap();
        let c = KanLinearLayer::new(4, 3, cubic(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.spline_coeffs(), c.spline_coeffs());
        assert!(a.edge_weights().iter().all(|&w| w == 1.0));
        let s = 0.1 / 8f64.sqrt();
        assert!(a.spline_coeffs().iter().all(|c| c.abs() <= s));
        assert_eq!(a.parameter_count(), 108);
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(KanLinearLayer::new(0, 3, cubic(), 0).is_err());
        assert!(KanLinearLayer::new(3, 0, cubic(), 0).is_err());
    }

    #[test]
    fn parameter_counts() {
        let count = |i, o| {
            KanLinearLayer::new(i, o, cubic(), 0)
                .unwrap()
                .parameter_count()
        };
        assert_eq!(count(1, 1), 9);
        assert_eq!(count(768, 32), 221_184);
        assert_eq!(count(32, 10), 2_880);
    }

    #[test]
    fn zero_input_zero_output() {
        let mut layer = KanLinearLayer::new(2, 1, cubic(), 0).unwrap();
        layer.spline_coeffs_mut().fill(0.0);
        let x = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let (out, _) = layer.forward(&x).unwrap();
        assert_eq!(out.as_slice(), &[0.0]);
    }

    #[test]
    fn forward_matches_naive_edge_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = randomized_layer(3, 2, 11);
        let x = random_matrix(6, 3, &mut rng, 1.3);
        let (out, _) = layer.forward(&x).unwrap();
        for b in 0..6 {
            for q in 0..2 {
                let mut naive = 0.0;
                for p in 0..3 {
                    naive += layer.edge_eval(q, p, x.get(b, p)).unwrap();
                }
                assert!((out.get(b, q) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_rows_give_duplicated_outputs() {
        let layer = randomized_layer(3, 4, 3);
        let x = Matrix::from_rows(&[vec![0.1, -0.4, 0.9], vec![0.1, -0.4, 0.9]]).unwrap();
        let (out, _) = layer.forward(&x).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn predict_is_bitwise_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = randomized_layer(5, 3, 2);
        let x = random_matrix(7, 5, &mut rng, 2.5);
        let (out, _) = layer.forward(&x).unwrap();
        assert_eq!(out, layer.predict(&x).unwrap());
    }

    #[test]
    fn forward_rejects_bad_input() {
        let layer = randomized_layer(3, 2, 0);
        let narrow = Matrix::zeros(2, 2);
        assert!(matches!(
            layer.forward(&narrow),
            Err(KanError::Shape { .. })
        ));
        let mut bad = Matrix::zeros(1, 3);
        bad.set(0, 1, f64::NAN);
        assert!(matches!(layer.forward(&bad), Err(KanError::Numeric(_))));
        bad.set(0, 1, f64::INFINITY);
        assert!(matches!(layer.predict(&bad), Err(KanError::Numeric(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = randomized_layer(3, 2, 5);
        let x = random_matrix(4, 3, &mut rng, 1.0);
        let (_, cache) = layer.forward(&x).unwrap();
        let grads = layer.backward(&cache, &Matrix::zeros(4, 2)).unwrap();
        assert!(grads.edge_weight.iter().all(|&g| g == 0.0));
        assert!(grads.spline_coeff.iter().all(|&g| g == 0.0));
        assert!(grads.input.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn weight_gradient_is_silu_without_spline() {
        let mut layer = KanLinearLayer::new(3, 1, cubic(), 0).unwrap();
        layer.spline_coeffs_mut().fill(0.0);
        let xs = [0.3, -0.8, 1.7];
        let x = Matrix::from_rows(&[xs.to_vec()]).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let grads = layer
            .backward(&cache, &Matrix::from_rows(&[vec![1.0]]).unwrap())
            .unwrap();
        for (g, x) in grads.edge_weight.iter().zip(xs) {
            assert_eq!(*g, silu(x));
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let small = randomized_layer(3, 2, 0);
        let other = randomized_layer(4, 2, 0);
        let (_, cache) = small.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            other.backward(&cache, &Matrix::zeros(2, 2)),
            Err(KanError::StaleCache(_))
        ));
        assert!(matches!(
            small.backward(&cache, &Matrix::zeros(3, 2)),
            Err(KanError::Shape { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (step, rel, abs) = (1e-5, 1e-4, 1e-7);
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let layer = randomized_layer(3, 2, seed);
            let x = random_matrix(4, 3, &mut rng, 1.2);
            let upstream = random_matrix(4, 2, &mut rng, 1.0);
            let (_, cache) = layer.forward(&x).unwrap();
            let grads = layer.backward(&cache, &upstream).unwrap();
            let scalar = |l: &KanLinearLayer, x: &Matrix| -> f64 {
                let out = l.predict(x).unwrap();
                out.as_slice()
                    .iter()
                    .zip(upstream.as_slice())
                    .map(|(a, b)| a * b)
                    .sum()
            };

            let mut w = layer.edge_weights().to_vec();
            let r = check_tensor(&mut w, &grads.edge_weight, step, rel, abs, |v| {
                let mut l = layer.clone();
                l.edge_weights_mut().copy_from_slice(v);
                scalar(&l, &x)
            });
            assert!(r.passed(), "seed {seed} weights {r:?}");

            let mut c = layer.spline_coeffs().to_vec();
            let r = check_tensor(&mut c, &grads.spline_coeff, step, rel, abs, |v| {
                let mut l = layer.clone();
                l.spline_coeffs_mut().copy_from_slice(v);
                scalar(&l, &x)
            });
            assert!(r.passed(), "seed {seed} coeffs {r:?}");

            let mut xin = x.as_slice().to_vec();
            let r = check_tensor(&mut xin, grads.input.as_slice(), step, rel, abs, |v| {
                let m = Matrix::from_vec(4, 3, v.to_vec()).unwrap();
                scalar(&layer, &m)
            });
            assert!(r.passed(), "seed {seed} input {r:?}");
        }
    }
}
