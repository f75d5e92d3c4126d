use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kanhead::dataset::{generate_blobs, load_features, save_features, BlobSpec};
use kanhead::train::{compare_experiment, train};
use kanhead::{KanError, TrainConfig};

#[derive(Parser)]
#[command(
    name = "kanhead",
    version,
    about = "Train and compare KAN and MLP classifier heads on backbone features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one head and write metrics.csv / metrics.json
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train two heads on the same data and seed and write a side-by-side report
    Compare {
        #[arg(long = "config-a")]
        config_a: PathBuf,
        #[arg(long = "config-b")]
        config_b: PathBuf,
        /// Report directory; defaults to config A's output_dir
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic Gaussian-blob dataset as KFV1
    ExportSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a feature file's header, shape and class histogram
    Inspect {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn inspect(path: &Path) -> Result<(), KanError> {
    let ds = load_features(path)?;
    println!("file:         {}", path.display());
    println!("backbone:     {}", ds.backbone_tag());
    println!("samples:      {}", ds.n_samples());
    println!("feature_dim:  {}", ds.feature_dim());
    println!("classes:      {}", ds.n_classes());
    for (label, (name, count)) in ds
        .class_names()
        .iter()
        .zip(ds.class_histogram())
        .enumerate()
    {
        println!("  {label:>3}  {name:<24} {count}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), KanError> {
    match cli.command {
        Command::Train { config } => {
            let cfg = TrainConfig::from_file(&config)?;
            let epochs = train(&cfg)?;
            if let Some(last) = epochs.last() {
                println!(
                    "{} epochs, final val_acc {:.4} test_acc {:.4}, {} parameters -> {}",
                    epochs.len(),
                    last.val_acc,
                    last.test_acc,
                    last.parameter_count,
                    cfg.output_dir.display()
                );
            }
        }
        Command::Compare {
            config_a,
            config_b,
            out,
        } => {
            let a = TrainConfig::from_file(&config_a)?;
            let b = TrainConfig::from_file(&config_b)?;
            let out = out.unwrap_or_else(|| a.output_dir.clone());
            let report = compare_experiment(&a, &b, &out)?;
            for arm in &report.arms {
                println!(
                    "arm {}: {} h={} params={} final test_acc {:.4}",
                    arm.label,
                    arm.head_kind,
                    arm.hidden_width,
                    arm.parameter_count,
                    arm.final_test_acc()
                );
            }
            println!("report -> {}", out.display());
        }
        Command::ExportSynthetic {
            out,
            samples,
            dim,
            classes,
            separation,
            noise_std,
            seed,
        } => {
            let spec = BlobSpec {
                n_samples: samples,
                feature_dim: dim,
                n_classes: classes,
                separation,
                noise_std,
                seed,
            };
            save_features(&generate_blobs(&spec)?, &out)?;
            println!(
                "wrote {samples} samples x {dim} features ({classes} classes) -> {}",
                out.display()
            );
        }
        Command::Inspect { dataset } => inspect(&dataset)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
