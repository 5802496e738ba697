//! `conan` — train and study continuous-pattern entailment models.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use conan_cli::commands::{
    cmd_analyze, cmd_eval, cmd_sweep, cmd_synth, cmd_train, cmd_transfer, TableSpec, ThetaSource,
};
use conan_cli::run_config::{FamilyName, RunConfig};

#[derive(Parser)]
#[command(
    name = "conan",
    about = "Continuous-pattern entailment models: training, evaluation and analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run config; writes checkpoint, history and dev report.
    Train {
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Directory that will hold the run subdirectory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a labeled TSV with a checkpoint and report metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled premise/hypothesis TSV to score.
        #[arg(long)]
        data: PathBuf,
        /// Decision threshold: "dev" (stored tuned value), "zero", or a number.
        #[arg(long, default_value = "dev", value_parser = parse_theta)]
        theta: ThetaSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a grid of (family, n, k) cells and tabulate dev AUC.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pattern counts, comma-separated (e.g. 1,5).
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        /// Tokens per pattern, comma-separated (e.g. 1,2,3).
        #[arg(long, value_delimiter = ',', required = true)]
        k_list: Vec<usize>,
        /// Pattern families to cover.
        #[arg(long, value_delimiter = ',', default_values_t = [FamilyName::Alpha, FamilyName::Beta], value_parser = parse_family)]
        families: Vec<FamilyName>,
        /// Worker threads (cells are independent; results do not depend on this).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Report nearest-vocabulary neighbors of the trained continuous tokens.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an out-of-domain TSV at the fixed threshold 0.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic entailment dataset (train/dev/test TSVs).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Total number of examples across the three splits.
        #[arg(long)]
        size: usize,
        /// Fraction of each split labeled non-entailing.
        #[arg(long, default_value_t = conan_core::data::DEFAULT_NEGATIVE_RATE)]
        negative_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// "main", "alt", or a path to a JSON rule table.
        #[arg(long, default_value = "main", value_parser = parse_table)]
        table: TableSpec,
    },
}

fn parse_family(s: &str) -> Result<FamilyName, String> {
    match s {
        "alpha" => Ok(FamilyName::Alpha),
        "beta" => Ok(FamilyName::Beta),
        "discrete" => Ok(FamilyName::Discrete),
        other => Err(format!("unknown family {other:?} (alpha, beta, discrete)")),
    }
}

fn parse_theta(s: &str) -> Result<ThetaSource, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn parse_table(s: &str) -> Result<TableSpec, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig> {
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, out, seed } => {
            let config = load_config(&config, seed)?;
            let output = cmd_train(&config, &out)?;
            println!("run {} -> {}", output.run_id, output.run_dir.display());
            println!(
                "parameters: {} total, {} added across {} fresh rows ({:.3}%)",
                output.parameters.total,
                output.parameters.added_embedding_parameters,
                output.parameters.added_rows,
                100.0 * output.parameters.added_fraction
            );
            println!(
                "steps: {}   dev AUC: {:.2}   tuned theta: {}",
                output.steps, output.dev_auc_percent, output.theta
            );
            println!(
                "dev F1 {:.4} (precision {:.4}, recall {:.4})",
                output.dev_report.f1, output.dev_report.precision, output.dev_report.recall
            );
        }
        Command::Eval {
            checkpoint,
            data,
            theta,
            out,
        } => {
            let output = cmd_eval(&checkpoint, &data, theta, &out)?;
            println!(
                "theta {} (source {})   AUC {:.2}",
                output.theta, output.theta_source, output.report.auc_percent
            );
            println!(
                "F1 {:.4} (precision {:.4}, recall {:.4})",
                output.report.f1, output.report.precision, output.report.recall
            );
            println!(
                "parameters: {} total, {} added ({:.3}%)",
                output.parameters.total,
                output.parameters.added_embedding_parameters,
                100.0 * output.parameters.added_fraction
            );
            println!("report: {}", output.report_path.display());
        }
        Command::Sweep {
            config,
            out,
            n_list,
            k_list,
            families,
            jobs,
            seed,
        } => {
            let config = load_config(&config, seed)?;
            let output = cmd_sweep(&config, &n_list, &k_list, &families, jobs, &out)?;
            for row in &output.rows {
                let auc = row
                    .dev_auc_percent
                    .map_or("failed".into(), |a| format!("{a:.2}"));
                let shared = if row.shared { " (shared)" } else { "" };
                println!("{} n={} k={}: {auc}{shared}", row.family, row.n, row.k);
            }
            if output.failed_rows > 0 {
                println!(
                    "{} row(s) failed; see {}",
                    output.failed_rows,
                    output.csv_path.parent().expect("csv in a directory").join("errors").display()
                );
            }
            println!("table: {}", output.csv_path.display());
        }
        Command::Analyze { checkpoint, out } => {
            let report = cmd_analyze(&checkpoint, &out)?;
            for token in &report.tokens {
                let best = token
                    .neighbors
                    .first()
                    .map_or("-".into(), |n| format!("{} ({:.3})", n.token, n.cosine));
                println!(
                    "pattern {} position {} (id {}): nearest {best}",
                    token.pattern, token.position, token.id
                );
            }
            println!("max cosine to vocabulary: {:.4}", report.max_vocab_cosine);
            if let Some(peer) = report.max_peer_cosine {
                println!("max cosine between continuous tokens: {peer:.4}");
            }
            println!("report: {}", report.report_path.display());
        }
        Command::Transfer {
            checkpoint,
            data,
            out,
        } => {
            let output = cmd_transfer(&checkpoint, &data, &out)?;
            println!(
                "theta {}   AUC {:.2}   F1 {:.4}",
                output.theta, output.report.auc_percent, output.report.f1
            );
            println!("report: {}", output.report_path.display());
        }
        Command::Synth {
            out,
            size,
            negative_rate,
            seed,
            table,
        } => {
            let output = cmd_synth(&out, size, negative_rate, seed, &table)?;
            for (name, path, stats) in [
                ("train", &output.train, output.train_stats),
                ("dev", &output.dev, output.dev_stats),
                ("test", &output.test, output.test_stats),
            ] {
                println!(
                    "{name}: {} examples ({} positive, {} negative) -> {}",
                    stats.total,
                    stats.positives,
                    stats.negatives,
                    path.display()
                );
            }
        }
    }
    Ok(())
}
