//! Uniform B-spline bases evaluated with the Cox–de Boor recursion.
//!
//! A [`KnotGrid`] covers `[g_min, g_max]` with `intervals` uniform cells and is
//! extended by `degree` extra knots on each side, so every point of the modeled
//! range sees a full set of `degree + 1` active basis functions.

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};

/// Uniform extended knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    g_min: f64,
    g_max: f64,
    intervals: usize,
    degree: usize,
    knots: Vec<f64>,
}

/// Builds the uniform grid over `[g_min, g_max]` with `intervals` cells and
/// `degree` extension knots on each side.
pub fn make_uniform_grid(
    g_min: f64,
    g_max: f64,
    intervals: usize,
    degree: usize,
) -> Result<KnotGrid> {
    KnotGrid::uniform(g_min, g_max, intervals, degree)
}

impl KnotGrid {
    pub fn uniform(g_min: f64, g_max: f64, intervals: usize, degree: usize) -> Result<Self> {
        if !(g_min.is_finite() && g_max.is_finite()) {
            return Err(KanError::Domain(format!(
                "grid range must be finite, got [{g_min}, {g_max}]"
            )));
        }
        if g_max <= g_min {
            return Err(KanError::Domain(format!(
                "grid range is empty: g_max {g_max} <= g_min {g_min}"
            )));
        }
        if intervals == 0 {
            return Err(KanError::Domain("grid needs at least one interval".into()));
        }
        let h = (g_max - g_min) / intervals as f64;
        let n_knots = intervals + 2 * degree + 1;
        let knots = (0..n_knots)
            .map(|j| {
                // pin the range edges exactly; arithmetic may be off by an ulp
                if j == degree {
                    g_min
                } else if j == degree + intervals {
                    g_max
                } else {
                    g_min + (j as f64 - degree as f64) * h
                }
            })
            .collect();
        Ok(KnotGrid {
            g_min,
            g_max,
            intervals,
            degree,
            knots,
        })
    }

    pub fn g_min(&self) -> f64 {
        self.g_min
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Uniform knot spacing.
    pub fn spacing(&self) -> f64 {
        (self.g_max - self.g_min) / self.intervals as f64
    }

    pub fn basis_count(&self) -> usize {
        self.intervals + self.degree
    }

    /// Index `j` of the knot interval `[t_j, t_{j+1})` holding `x`, or `None`
    /// when `x` lies outside the extended knot span. `x == g_max` maps to the
    /// last interval of the modeled range (left limit).
    fn span(&self, x: f64) -> Option<usize> {
        let t = &self.knots;
        let last = t.len() - 1;
        if x == self.g_max {
            return Some(self.degree + self.intervals - 1);
        }
        if !(x >= t[0] && x < t[last]) {
            return None;
        }
        let mut j = (((x - t[0]) / self.spacing()).floor() as usize).min(last - 1);
        while j > 0 && x < t[j] {
            j -= 1;
        }
        while j + 1 < last && x >= t[j + 1] {
            j += 1;
        }
        Some(j)
    }

    /// Runs the recursion up to `degree` on the interval `span`. Returns the
    /// window of degree-`degree` values and, when requested, the
    /// degree-`degree − 1` window. Entry `r` of a degree-`d` window is
    /// `B_{span − d + r}^d`.
    fn local_windows(&self, x: f64, span: usize, keep_lower: bool) -> (Vec<f64>, Vec<f64>) {
        let t = &self.knots;
        let k = self.degree;
        let n_knots = t.len();
        let mut current = vec![0.0; k + 1];
        current[0] = 1.0;
        let mut lower = Vec::new();
        for d in 1..=k {
            if keep_lower && d == k {
                lower = current[..d].to_vec();
            }
            let mut next = vec![0.0; k + 1];
            for (r, slot) in next.iter_mut().enumerate().take(d + 1) {
                let Some(i) = (span + r).checked_sub(d) else {
                    continue;
                };
                // B_i^d exists only for i + d + 1 < n_knots
                if i + d + 1 >= n_knots {
                    continue;
                }
                let mut value = 0.0;
                if r >= 1 {
                    value += ratio(x - t[i], t[i + d] - t[i]) * current[r - 1];
                }
                if r < d {
                    value += ratio(t[i + d + 1] - x, t[i + d + 1] - t[i + 1]) * current[r];
                }
                *slot = value;
            }
            current = next;
        }
        (current, lower)
    }

    /// `B_i(x)` for every `i` in `0..basis_count()`.
    pub fn basis_values(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.basis_count()];
        self.basis_values_into(x, &mut out);
        out
    }

    /// Writes the basis values into `out`, which must hold `basis_count()`
    /// entries.
    pub fn basis_values_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.basis_count());
        out.fill(0.0);
        let Some(span) = self.span(x) else {
            return;
        };
        let (window, _) = self.local_windows(x, span, false);
        self.scatter(span, &window, out);
    }

    /// `dB_i/dx` for every `i`. All zeros for degree 0.
    pub fn basis_derivatives(&self, x: f64) -> Vec<f64> {
        let mut values = vec![0.0; self.basis_count()];
        let mut derivs = vec![0.0; self.basis_count()];
        self.basis_and_derivatives_into(x, &mut values, &mut derivs);
        derivs
    }

    /// Fills basis values and their derivatives in one pass of the recursion.
    pub fn basis_and_derivatives_into(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        debug_assert_eq!(values.len(), self.basis_count());
        debug_assert_eq!(derivs.len(), self.basis_count());
        values.fill(0.0);
        derivs.fill(0.0);
        let Some(span) = self.span(x) else {
            return;
        };
        let k = self.degree;
        let (window, lower) = self.local_windows(x, span, true);
        self.scatter(span, &window, values);
        if k == 0 {
            return;
        }
        let t = &self.knots;
        let kf = k as f64;
        let mut dwindow = vec![0.0; k + 1];
        for (r, slot) in dwindow.iter_mut().enumerate() {
            let Some(i) = (span + r).checked_sub(k) else {
                continue;
            };
            if i + k + 1 >= t.len() {
                continue;
            }
            // lower[r'] is B_{span - (k-1) + r'}^{k-1}; B_i^{k-1} sits at r' = r - 1
            let left = if r >= 1 { lower[r - 1] } else { 0.0 };
            let right = if r < k { lower[r] } else { 0.0 };
            *slot = kf * (ratio(left, t[i + k] - t[i]) - ratio(right, t[i + k + 1] - t[i + 1]));
        }
        self.scatter(span, &dwindow, derivs);
    }

    fn scatter(&self, span: usize, window: &[f64], out: &mut [f64]) {
        let k = self.degree;
        for (r, &v) in window.iter().enumerate() {
            if let Some(i) = (span + r).checked_sub(k) {
                if i < out.len() {
                    out[i] = v;
                }
            }
        }
    }
}

/// `num / den` with the 0/0 = 0 convention.
#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive Cox–de Boor over the full knot vector. Independent
    /// of the windowed evaluation above.
    fn naive_basis(t: &[f64], i: usize, d: usize, x: f64, left_limit: bool) -> f64 {
        if d == 0 {
            let inside = if left_limit {
                t[i] < x && x <= t[i + 1]
            } else {
                t[i] <= x && x < t[i + 1]
            };
            return if inside { 1.0 } else { 0.0 };
        }
        let left = {
            let den = t[i + d] - t[i];
            if den == 0.0 {
                0.0
            } else {
                (x - t[i]) / den * naive_basis(t, i, d - 1, x, left_limit)
            }
        };
        let right = {
            let den = t[i + d + 1] - t[i + 1];
            if den == 0.0 {
                0.0
            } else {
                (t[i + d + 1] - x) / den * naive_basis(t, i + 1, d - 1, x, left_limit)
            }
        };
        left + right
    }

    fn naive_all(grid: &KnotGrid, x: f64) -> Vec<f64> {
        let left_limit = x == grid.g_max();
        (0..grid.basis_count())
            .map(|i| naive_basis(grid.knots(), i, grid.degree(), x, left_limit))
            .collect()
    }

    #[test]
    fn degree_zero_grid_is_the_partition() {
        let g = make_uniform_grid(-1.0, 1.0, 2, 0).unwrap();
        assert_eq!(g.knots(), &[-1.0, 0.0, 1.0]);
        assert_eq!(g.basis_count(), 2);
    }

    #[test]
    fn cubic_grid_knots() {
        let g = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        assert_eq!(g.knots().len(), 12);
        assert_eq!(g.basis_count(), 8);
        for (j, &t) in g.knots().iter().enumerate() {
            let expected = -2.2 + 0.4 * j as f64;
            assert!((t - expected).abs() < 1e-12, "knot {j}: {t} vs {expected}");
        }
        assert_eq!(g.knots()[3], -1.0);
        assert_eq!(g.knots()[8], 1.0);
    }

    #[test]
    fn knots_uniformly_spaced() {
        for &(lo, hi, n, k) in &[(-1.0, 1.0, 5, 3), (0.0, 7.5, 13, 2), (-3.0, 100.0, 1, 4)] {
            let g = make_uniform_grid(lo, hi, n, k).unwrap();
            let h = g.spacing();
            for w in g.knots().windows(2) {
                assert!(w[1] > w[0]);
                assert!(((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0) * 10.0);
            }
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(matches!(
            make_uniform_grid(0.0, 0.0, 5, 3),
            Err(KanError::Domain(_))
        ));
        assert!(matches!(
            make_uniform_grid(1.0, 0.0, 5, 3),
            Err(KanError::Domain(_))
        ));
        assert!(matches!(
            make_uniform_grid(0.0, 1.0, 0, 3),
            Err(KanError::Domain(_))
        ));
        assert!(matches!(
            make_uniform_grid(f64::NAN, 1.0, 2, 3),
            Err(KanError::Domain(_))
        ));
    }

    #[test]
    fn degree_zero_indicator() {
        let g = make_uniform_grid(0.0, 1.0, 1, 0).unwrap();
        assert_eq!(g.basis_values(0.5), vec![1.0]);
        assert_eq!(g.basis_values(1.0), vec![1.0]);
        assert_eq!(g.basis_values(1.5), vec![0.0]);
    }

    #[test]
    fn cubic_values_at_knots() {
        let g = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        for j in 3..=7 {
            let x = g.knots()[j];
            let b = g.basis_values(x);
            // nonzero run is B_{j-3}, B_{j-2}, B_{j-1}; B_j vanishes at its left knot
            let expected = [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0, 0.0];
            for (r, e) in expected.iter().enumerate() {
                let i = j - 3 + r;
                if i < b.len() {
                    assert!((b[i] - e).abs() < 1e-12, "knot {j} basis {i}: {}", b[i]);
                }
            }
        }
    }

    #[test]
    fn matches_naive_recursion() {
        for &(n, k) in &[(5, 3), (4, 0), (3, 1), (6, 2), (2, 5)] {
            let g = make_uniform_grid(-1.0, 1.0, n, k).unwrap();
            let lo = g.knots()[0] - 0.3;
            let hi = *g.knots().last().unwrap() + 0.3;
            for s in 0..=400 {
                let x = lo + (hi - lo) * s as f64 / 400.0;
                let fast = g.basis_values(x);
                let slow = naive_all(&g, x);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!(
                        (a - b).abs() < 1e-13,
                        "n={n} k={k} x={x}: {fast:?} vs {slow:?}"
                    );
                }
            }
            let x = g.g_max();
            assert_eq!(g.basis_values(x).len(), naive_all(&g, x).len());
            for (a, b) in g.basis_values(x).iter().zip(naive_all(&g, x)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn partition_of_unity_interior_and_endpoints() {
        let g = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        for x in [-1.0, -0.37, 0.0, 0.5, 1.0] {
            let s: f64 = g.basis_values(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "x={x}: sum {s}");
        }
        let g0 = make_uniform_grid(-1.0, 1.0, 4, 0).unwrap();
        assert_eq!(g0.basis_values(1.0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn outside_extended_span_is_zero() {
        let g = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        assert!(g.basis_values(-2.5).iter().all(|&v| v == 0.0));
        assert!(g.basis_values(2.2).iter().all(|&v| v == 0.0));
        assert!(g.basis_values(40.0).iter().all(|&v| v == 0.0));
        assert!(g.basis_values(f64::NAN).iter().all(|&v| v == 0.0));
        // between g_max and the last extended knot the basis decays but is nonzero
        let tail = g.basis_values(1.5);
        assert!(tail.iter().any(|&v| v > 0.0));
        assert!(tail.iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn degree_zero_derivatives_vanish() {
        let g = make_uniform_grid(-1.0, 1.0, 4, 0).unwrap();
        for x in [-0.9, 0.0, 0.3, 1.0] {
            assert!(g.basis_derivatives(x).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let g = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        let x = 0.1;
        let h = 1e-6;
        let d = g.basis_derivatives(x);
        let plus = g.basis_values(x + h);
        let minus = g.basis_values(x - h);
        for i in 0..d.len() {
            let fd = (plus[i] - minus[i]) / (2.0 * h);
            assert!((fd - d[i]).abs() < 1e-5, "basis {i}: {} vs {fd}", d[i]);
        }
        let s: f64 = d.iter().sum();
        assert!(s.abs() < 1e-10);
    }

    #[test]
    fn derivative_matches_naive_difference_of_lower_degree() {
        // dB_i^k/dx from the identity, using the naive recursion for B^{k-1}
        let g = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        let lower = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        let t = lower.knots();
        for s in 0..50 {
            let x = -1.9 + 3.8 * s as f64 / 50.0;
            let d = g.basis_derivatives(x);
            for (i, di) in d.iter().enumerate() {
                let a = naive_basis(t, i, 2, x, false) / (t[i + 3] - t[i]);
                let b = naive_basis(t, i + 1, 2, x, false) / (t[i + 4] - t[i + 1]);
                assert!((di - 3.0 * (a - b)).abs() < 1e-12);
            }
        }
    }
}
