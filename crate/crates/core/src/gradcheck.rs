//! Central finite differences for checking analytic gradients.

/// Outcome of comparing one analytic gradient tensor against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    /// Largest `|analytic − numeric|` seen.
    pub max_abs_err: f64,
    /// Largest error relative to `max(|analytic|, |numeric|)`.
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.failures += other.failures;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        GradCheckReport {
            checked: 0,
            failures: 0,
            max_abs_err: 0.0,
            max_rel_err: 0.0,
        }
    }
}

/// `true` when `analytic` and `numeric` agree to `rel_tol` relative, with
/// `abs_floor` as the smallest tolerated absolute gap.
pub fn close(analytic: f64, numeric: f64, rel_tol: f64, abs_floor: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    (analytic - numeric).abs() <= (rel_tol * scale).max(abs_floor)
}

/// Perturbs every entry of `values` by `±step`, evaluates `loss` at both
/// points and compares the central difference against `analytic`.
///
/// `values` is restored to its original content before returning.
pub fn check_tensor<F>(
    values: &mut [f64],
    analytic: &[f64],
    step: f64,
    rel_tol: f64,
    abs_floor: f64,
    mut loss: F,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(values.len(), analytic.len(), "gradient shape mismatch");
    let mut report = GradCheckReport::default();
    for i in 0..values.len() {
        let original = values[i];
        values[i] = original + step;
        let plus = loss(values);
        values[i] = original - step;
        let minus = loss(values);
        values[i] = original;

        let numeric = (plus - minus) / (2.0 * step);
        let abs_err = (analytic[i] - numeric).abs();
        let scale = analytic[i].abs().max(numeric.abs());
        report.checked += 1;
        report.max_abs_err = report.max_abs_err.max(abs_err);
        if scale > 0.0 {
            report.max_rel_err = report.max_rel_err.max(abs_err / scale);
        }
        if !close(analytic[i], numeric, rel_tol, abs_floor) {
            report.failures += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        let mut x = vec![1.0, -2.0, 0.5];
        let grad: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let report = check_tensor(&mut x, &grad, 1e-5, 1e-6, 1e-9, |v| {
            v.iter().map(|a| a * a).sum()
        });
        assert!(report.passed(), "{report:?}");
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut x = vec![1.0, 3.0];
        let report = check_tensor(&mut x, &[2.0, 7.0], 1e-5, 1e-4, 1e-7, |v| {
            v.iter().map(|a| a * a).sum()
        });
        assert_eq!(report.failures, 1);
    }
}
