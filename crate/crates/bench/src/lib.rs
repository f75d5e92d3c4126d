//! Shared fixtures for the criterion benchmarks in `benches/`.

use kanhead::Matrix;

/// Deterministic inputs spread over roughly [-1.2, 1.2], so some values
/// fall outside the default grid.
pub fn input_batch(rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols)
        .map(|i| ((i as f64 * 0.618_033_988_75).fract() - 0.5) * 2.4)
        .collect();
    Matrix::from_vec(rows, cols, data).expect("fixture shape")
}

/// Cycling labels `0, 1, …, n_classes − 1`.
pub fn labels(rows: usize, n_classes: usize) -> Vec<usize> {
    (0..rows).map(|i| i % n_classes).collect()
}
