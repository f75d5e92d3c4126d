//! Head training over precomputed backbone features, metrics output, and
//! two-arm comparisons.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{GridConfig, TrainConfig};
use crate::dataset::{
    load_features, stratified_split, FeatureDataset, Normalization, SplitFractions,
};
use crate::error::{KanError, Result};
use crate::head::{Head, HeadKind};
use crate::loss::softmax_cross_entropy;
use crate::matrix::Matrix;
use crate::optim::{Optimizer, OptimizerConfig};

/// Environment variable capping evaluation threads.
pub const THREADS_ENV: &str = "KANHEAD_THREADS";

const SHUFFLE_STREAM: u64 = 2;

/// Results of one epoch. `epoch` counts from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub per_iteration_loss: Vec<f64>,
    pub wall_time_s: f64,
    pub parameter_count: usize,
}

impl EpochMetrics {
    /// Field-wise equality ignoring wall time, with floats compared bitwise.
    pub fn same_results(&self, other: &EpochMetrics) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.epoch == other.epoch
            && self.parameter_count == other.parameter_count
            && bits(&[self.train_loss, self.train_acc, self.val_acc, self.test_acc])
                == bits(&[
                    other.train_loss,
                    other.train_acc,
                    other.val_acc,
                    other.test_acc,
                ])
            && bits(&self.per_iteration_loss) == bits(&other.per_iteration_loss)
    }
}

/// How a run was set up, echoed into `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub head_kind: HeadKind,
    pub hidden_width: usize,
    pub hidden_activation: String,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub backbone_tag: String,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub split_fractions: SplitFractions,
    pub batch_size: usize,
    pub shuffle: String,
    pub grid: GridConfig,
    pub optimizer: OptimizerConfig,
    pub parameter_count: usize,
    pub normalization: Normalization,
    /// SHA-256 over every training batch (features, then labels) in the
    /// order consumed.
    pub batch_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub metadata: RunMetadata,
    pub epochs: Vec<EpochMetrics>,
}

/// A dataset split and normalized with training statistics, ready for a head.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train_x: Matrix,
    pub train_y: Vec<usize>,
    pub val_x: Matrix,
    pub val_y: Vec<usize>,
    pub test_x: Matrix,
    pub test_y: Vec<usize>,
    pub normalization: Normalization,
    pub fractions: SplitFractions,
}

impl PreparedData {
    /// Stratified 70/15/15 split seeded by `seed`; normalization is fit on the
    /// training rows only.
    pub fn new(dataset: &FeatureDataset, seed: u64) -> Result<Self> {
        let fractions = SplitFractions::default();
        let split = stratified_split(dataset.labels(), dataset.n_classes(), fractions, seed)?;
        let normalization = Normalization::fit(dataset, &split.train)?;
        Ok(PreparedData {
            train_x: normalization.apply(dataset, &split.train)?,
            train_y: dataset.labels_of(&split.train),
            val_x: normalization.apply(dataset, &split.val)?,
            val_y: dataset.labels_of(&split.val),
            test_x: normalization.apply(dataset, &split.test)?,
            test_y: dataset.labels_of(&split.test),
            normalization,
            fractions,
        })
    }
}

/// Minibatches of training-row positions for one epoch, shuffled with a
/// ChaCha8 stream seeded by `seed + epoch`. The last batch may be short.
pub fn batch_schedule(
    n_train: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
    rng.set_stream(SHUFFLE_STREAM);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

fn thread_budget() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Index of the largest entry; ties go to the lowest index and NaN never wins
/// against a number.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] || (row[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax logit equals the label. Work is spread over
/// up to `KANHEAD_THREADS` threads.
pub fn evaluate(head: &Head, features: &Matrix, labels: &[usize]) -> Result<f64> {
    evaluate_with_threads(head, features, labels, thread_budget())
}

pub fn evaluate_with_threads(
    head: &Head,
    features: &Matrix,
    labels: &[usize],
    threads: usize,
) -> Result<f64> {
    if features.rows() != labels.len() {
        return Err(KanError::shape(
            format!("{} labels", features.rows()),
            format!("{} labels", labels.len()),
        ));
    }
    let n = labels.len();
    if n == 0 {
        return Ok(0.0);
    }
    let threads = threads.clamp(1, n);
    let chunk = n.div_ceil(threads);
    let count_chunk = |start: usize| -> Result<usize> {
        let end = (start + chunk).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let logits = head.predict(&features.select_rows(&rows))?;
        Ok(logits
            .iter_rows()
            .zip(&labels[start..end])
            .filter(|(row, &label)| argmax(row) == label)
            .count())
    };
    let correct: usize = if threads == 1 {
        count_chunk(0)?
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| scope.spawn(move || count_chunk(start)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .sum::<Result<usize>>()
        })?
    };
    Ok(correct as f64 / n as f64)
}

/// Trains a freshly built head on `data`. Both arms of a comparison call
/// this with the same data and seed, so they consume identical batches.
pub fn fit_head(
    config: &TrainConfig,
    data: &PreparedData,
) -> Result<(Head, Vec<EpochMetrics>, String)> {
    config.validate()?;
    let n_classes = config.n_classes.unwrap_or_else(|| {
        let labels = data.train_y.iter().chain(&data.val_y).chain(&data.test_y);
        labels.max().map_or(0, |m| m + 1)
    });
    let grid = config.grid.build()?;
    let mut head = Head::build(
        config.head_kind,
        data.train_x.cols(),
        config.hidden_width,
        n_classes,
        &grid,
        config.seed,
    )?;
    let mut optimizer = Optimizer::new(&config.optimizer, &head.parameter_lens());
    let parameter_count = head.parameter_count();
    let mut digest = Sha256::new();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let record_iterations = epoch == 0 || config.record_all_iterations;
        let mut per_iteration_loss = Vec::new();
        let mut loss_sum = 0.0;
        for batch in batch_schedule(data.train_x.rows(), config.batch_size, config.seed, epoch) {
            let x = data.train_x.select_rows(&batch);
            let y: Vec<usize> = batch.iter().map(|&i| data.train_y[i]).collect();
            for v in x.as_slice() {
                digest.update(v.to_le_bytes());
            }
            for &l in &y {
                digest.update((l as u64).to_le_bytes());
            }

            let (logits, cache) = head.forward(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &y)?;
            if !loss.is_finite() {
                return Err(KanError::Numeric(format!(
                    "loss became {loss} in epoch {epoch}"
                )));
            }
            let grads = head.backward(&cache, &grad)?;
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            optimizer.step(&mut head.parameters_mut(), &grad_refs)?;

            loss_sum += loss * batch.len() as f64;
            if record_iterations {
                per_iteration_loss.push(loss);
            }
        }
        let train_loss = loss_sum / data.train_x.rows() as f64;
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            train_acc: evaluate(&head, &data.train_x, &data.train_y)?,
            val_acc: evaluate(&head, &data.val_x, &data.val_y)?,
            test_acc: evaluate(&head, &data.test_x, &data.test_y)?,
            per_iteration_loss,
            wall_time_s: started.elapsed().as_secs_f64(),
            parameter_count,
        };
        log::info!(
            "{} h={} epoch {}: loss {:.5} train {:.4} val {:.4} test {:.4}",
            config.head_kind,
            config.hidden_width,
            epoch,
            metrics.train_loss,
            metrics.train_acc,
            metrics.val_acc,
            metrics.test_acc
        );
        epochs.push(metrics);
    }
    let hex: String = digest
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok((head, epochs, hex))
}

/// Splits, normalizes and trains on an in-memory dataset without touching
/// the filesystem.
pub fn run_training(config: &TrainConfig, dataset: &FeatureDataset) -> Result<RunRecord> {
    config.validate()?;
    if let Some(n) = config.n_classes {
        if n != dataset.n_classes() {
            return Err(KanError::Config(format!(
                "config expects {n} classes, dataset has {}",
                dataset.n_classes()
            )));
        }
    }
    let data = PreparedData::new(dataset, config.seed)?;
    let mut config = config.clone();
    config.n_classes = Some(dataset.n_classes());
    let (head, epochs, batch_digest) = fit_head(&config, &data)?;
    let metadata = RunMetadata {
        head_kind: config.head_kind,
        hidden_width: config.hidden_width,
        hidden_activation: match config.head_kind {
            HeadKind::Kan => "learned spline edges (silu + B-spline)".into(),
            HeadKind::Mlp => "relu".into(),
        },
        feature_dim: dataset.feature_dim(),
        n_classes: dataset.n_classes(),
        class_names: dataset.class_names().to_vec(),
        backbone_tag: dataset.backbone_tag().to_string(),
        n_train: data.train_y.len(),
        n_val: data.val_y.len(),
        n_test: data.test_y.len(),
        split_fractions: data.fractions,
        batch_size: config.batch_size,
        shuffle: "per epoch, ChaCha8 seeded with seed + epoch".into(),
        grid: config.grid,
        optimizer: config.optimizer,
        parameter_count: head.parameter_count(),
        normalization: data.normalization,
        batch_digest,
    };
    Ok(RunRecord {
        config,
        metadata,
        epochs,
    })
}

#[derive(Serialize)]
struct CsvRow {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
    parameter_count: usize,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| KanError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| KanError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> KanError {
    KanError::io(path, std::io::Error::other(e.to_string()))
}

/// Writes `metrics.csv` (one row per epoch, no timings) and `metrics.json`
/// (the full record) into `dir`.
pub fn write_metrics(record: &RunRecord, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let csv_path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in &record.epochs {
        w.serialize(CsvRow {
            epoch: m.epoch,
            train_loss: m.train_loss,
            train_acc: m.train_acc,
            val_acc: m.val_acc,
            test_acc: m.test_acc,
            parameter_count: m.parameter_count,
        })
        .map_err(|e| csv_error(&csv_path, e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| KanError::io(&csv_path, std::io::Error::other(e.to_string())))?;
    write_file(&csv_path, &bytes)?;

    let json_path = dir.join("metrics.json");
    let json = serde_json::to_vec_pretty(record)
        .map_err(|e| KanError::io(&json_path, std::io::Error::other(e)))?;
    write_file(&json_path, &json)
}

/// Loads the configured dataset, trains, writes metrics into
/// `config.output_dir` and returns the per-epoch metrics.
pub fn train(config: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    let dataset = load_features(&config.dataset_path)?;
    let record = run_training(config, &dataset)?;
    write_metrics(&record, &config.output_dir)?;
    Ok(record.epochs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmReport {
    pub label: String,
    pub head_kind: HeadKind,
    pub hidden_width: usize,
    pub parameter_count: usize,
    pub batch_digest: String,
    pub total_wall_time_s: f64,
    pub epochs: Vec<EpochMetrics>,
}

impl ArmReport {
    fn from_record(label: &str, record: &RunRecord) -> Self {
        ArmReport {
            label: label.to_string(),
            head_kind: record.metadata.head_kind,
            hidden_width: record.metadata.hidden_width,
            parameter_count: record.metadata.parameter_count,
            batch_digest: record.metadata.batch_digest.clone(),
            total_wall_time_s: record.epochs.iter().map(|e| e.wall_time_s).sum(),
            epochs: record.epochs.clone(),
        }
    }

    pub fn final_test_acc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.test_acc)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_path: PathBuf,
    pub seed: u64,
    pub arms: [ArmReport; 2],
}

impl ComparisonReport {
    /// Side-by-side table: one row per epoch, one column group per arm.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["epoch".to_string()];
        for arm in &self.arms {
            for col in [
                "head_kind",
                "hidden_width",
                "parameter_count",
                "train_loss",
                "train_acc",
                "val_acc",
                "test_acc",
                "wall_time_s",
            ] {
                header.push(format!("{}_{col}", arm.label));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| KanError::Format(format!("comparison csv: {e}"));
        w.write_record(&header).map_err(to_err)?;
        let rows = self.arms[0].epochs.len().max(self.arms[1].epochs.len());
        for e in 0..rows {
            let mut record = vec![e.to_string()];
            for arm in &self.arms {
                match arm.epochs.get(e) {
                    Some(m) => record.extend([
                        arm.head_kind.to_string(),
                        arm.hidden_width.to_string(),
                        arm.parameter_count.to_string(),
                        m.train_loss.to_string(),
                        m.train_acc.to_string(),
                        m.val_acc.to_string(),
                        m.test_acc.to_string(),
                        m.wall_time_s.to_string(),
                    ]),
                    None => record.extend(std::iter::repeat_n(String::new(), 8)),
                }
            }
            w.write_record(&record).map_err(to_err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| KanError::Format(format!("comparison csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| KanError::Format(e.to_string()))
    }

    /// Writes `compare.csv` and `compare.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_file(&dir.join("compare.csv"), self.to_csv()?.as_bytes())?;
        let json_path = dir.join("compare.json");
        let json = serde_json::to_vec_pretty(self)
            .map_err(|e| KanError::io(&json_path, std::io::Error::other(e)))?;
        write_file(&json_path, &json)
    }
}

fn check_comparable(a: &TrainConfig, b: &TrainConfig) -> Result<()> {
    if a.seed != b.seed {
        return Err(KanError::Mismatch(format!(
            "seeds differ: {} vs {}",
            a.seed, b.seed
        )));
    }
    if a.epochs != b.epochs {
        return Err(KanError::Mismatch(format!(
            "epoch counts differ: {} vs {}",
            a.epochs, b.epochs
        )));
    }
    if a.batch_size != b.batch_size {
        return Err(KanError::Mismatch(format!(
            "batch sizes differ: {} vs {}",
            a.batch_size, b.batch_size
        )));
    }
    Ok(())
}

/// Runs both arms on in-memory datasets, which must hold identical content.
pub fn compare_on_datasets(
    config_a: &TrainConfig,
    dataset_a: &FeatureDataset,
    config_b: &TrainConfig,
    dataset_b: &FeatureDataset,
) -> Result<ComparisonReport> {
    check_comparable(config_a, config_b)?;
    if !dataset_a.same_content(dataset_b) {
        return Err(KanError::Mismatch(format!(
            "datasets differ: {} and {}",
            config_a.dataset_path.display(),
            config_b.dataset_path.display()
        )));
    }
    let a = run_training(config_a, dataset_a)?;
    let b = run_training(config_b, dataset_b)?;
    Ok(ComparisonReport {
        dataset_path: config_a.dataset_path.clone(),
        seed: config_a.seed,
        arms: [
            ArmReport::from_record("a", &a),
            ArmReport::from_record("b", &b),
        ],
    })
}

/// Trains both configurations on the same data and seed and writes the
/// side-by-side report into `output_dir`.
pub fn compare_experiment(
    config_a: &TrainConfig,
    config_b: &TrainConfig,
    output_dir: &Path,
) -> Result<ComparisonReport> {
    config_a.validate()?;
    config_b.validate()?;
    check_comparable(config_a, config_b)?;
    let dataset_a = load_features(&config_a.dataset_path)?;
    let same_path = config_a.dataset_path == config_b.dataset_path;
    let dataset_b = if same_path {
        dataset_a.clone()
    } else {
        load_features(&config_b.dataset_path)?
    };
    let report = compare_on_datasets(config_a, &dataset_a, config_b, &dataset_b)?;
    report.write(output_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_blobs, BlobSpec};
    use crate::spline::make_uniform_grid;

    #[test]
    fn schedule_covers_every_row_once() {
        let batches = batch_schedule(150, 64, 3, 0);
        assert_eq!(
            batches.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![64, 64, 22]
        );
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..150).collect::<Vec<_>>());
        assert_ne!(batch_schedule(150, 64, 3, 1), batches);
        assert_eq!(batch_schedule(150, 64, 3, 0), batches);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[f64::NAN, 1.0]), 1);
    }

    fn constant_head() -> Head {
        // zero output weights make every logit exactly zero
        let grid = make_uniform_grid(-1.0, 1.0, 5, 3).unwrap();
        let mut head = Head::build(HeadKind::Kan, 2, 3, 3, &grid, 0).unwrap();
        if let Head::Kan { output, .. } = &mut head {
            output.edge_weights_mut().fill(0.0);
        }
        head
    }

    #[test]
    fn constant_logits_score_class_zero_frequency() {
        let head = constant_head();
        let x = Matrix::zeros(5, 2);
        let labels = [0, 1, 0, 2, 0];
        for threads in [1, 2, 4, 16] {
            let acc = evaluate_with_threads(&head, &x, &labels, threads).unwrap();
            assert_eq!(acc, 0.6);
        }
    }

    #[test]
    fn perfect_and_hopeless_predictions() {
        let mut head = Head::build(
            HeadKind::Mlp,
            2,
            2,
            2,
            &make_uniform_grid(-1.0, 1.0, 5, 3).unwrap(),
            0,
        )
        .unwrap();
        if let Head::Mlp { hidden, output } = &mut head {
            hidden.weights_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            output.weights_mut().copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        }
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.5]]).unwrap();
        assert_eq!(
            evaluate_with_threads(&head, &x, &[0, 1, 0], 2).unwrap(),
            1.0
        );
        assert_eq!(
            evaluate_with_threads(&head, &x, &[1, 0, 1], 2).unwrap(),
            0.0
        );
    }

    fn blob_config() -> TrainConfig {
        TrainConfig {
            epochs: 1,
            batch_size: 32,
            dataset_path: PathBuf::from("unused.kfv1"),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_epoch_shape() {
        let ds = generate_blobs(&BlobSpec::default()).unwrap();
        let record = run_training(&blob_config(), &ds).unwrap();
        assert_eq!(record.epochs.len(), 1);
        let n_train = record.metadata.n_train;
        assert_eq!(
            record.epochs[0].per_iteration_loss.len(),
            n_train.div_ceil(32)
        );
        assert_eq!(
            record.metadata.n_train + record.metadata.n_val + record.metadata.n_test,
            200
        );
        let m = &record.epochs[0];
        for acc in [m.train_acc, m.val_acc, m.test_acc] {
            assert!((0.0..=1.0).contains(&acc));
        }
    }

    #[test]
    fn class_count_mismatch_is_config_error() {
        let ds = generate_blobs(&BlobSpec::default()).unwrap();
        let cfg = TrainConfig {
            n_classes: Some(10),
            ..blob_config()
        };
        assert!(matches!(run_training(&cfg, &ds), Err(KanError::Config(_))));
    }

    #[test]
    fn divergence_aborts() {
        let ds = generate_blobs(&BlobSpec::default()).unwrap();
        let cfg = TrainConfig {
            head_kind: HeadKind::Mlp,
            optimizer: OptimizerConfig::Sgd { lr: 1e200 },
            epochs: 3,
            ..blob_config()
        };
        assert!(matches!(run_training(&cfg, &ds), Err(KanError::Numeric(_))));
    }

    #[test]
    fn comparison_rejects_mismatches() {
        let ds = generate_blobs(&BlobSpec::default()).unwrap();
        let other = generate_blobs(&BlobSpec {
            seed: 1,
            ..BlobSpec::default()
        })
        .unwrap();
        let a = blob_config();
        assert!(matches!(
            compare_on_datasets(&a, &ds, &a, &other),
            Err(KanError::Mismatch(_))
        ));
        let b = TrainConfig {
            seed: 9,
            ..blob_config()
        };
        assert!(matches!(
            compare_on_datasets(&a, &ds, &b, &ds),
            Err(KanError::Mismatch(_))
        ));
    }
}
