//! `conan train`: fit a model from a run config and persist the run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use conan_core::data::build_tokenizer;
use conan_core::metrics::{classification_report, tune_threshold, EvalReport};
use conan_core::model::ConanModel;
use conan_core::training::{train, TrainConfig};

use crate::checkpoint;
use crate::run_config::{FamilyName, RunConfig};

use super::{discrete_patterns, encode_split, load_split, write_json, ParameterSummary};

/// The optimization settings a run actually uses: the configured settings
/// with `pattern_batch` capped at the model's pattern count (a pattern
/// mini-batch cannot exceed the pattern set).
pub(crate) fn effective_train_config(run: &RunConfig, n_patterns: usize) -> TrainConfig {
    let mut config = run.train_config();
    config.pattern_batch = config.pattern_batch.min(n_patterns);
    config
}

/// Everything a finished training run left on disk, plus its headline
/// numbers.
#[derive(Debug, Serialize)]
pub struct TrainOutput {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    /// Dev-tuned decision threshold.
    pub theta: f64,
    /// Dev percent-AUC after the final epoch.
    pub dev_auc_percent: f64,
    pub dev_report: EvalReport,
    pub parameters: ParameterSummary,
    pub steps: usize,
}

pub fn cmd_train(config: &RunConfig, out_root: &Path) -> Result<TrainOutput> {
    config.validate()?;

    // All inputs are read before any output directory is created, so a bad
    // path or corpus leaves no partial run behind.
    let train_split = load_split(&config.data.train, "train")?;
    let dev_split = load_split(&config.data.dev, "dev")?;
    let mut texts: Vec<&str> = Vec::new();
    for split in [&train_split, &dev_split] {
        for e in &split.examples {
            texts.push(&e.premise);
            texts.push(&e.hypothesis);
        }
    }
    let tokenizer = build_tokenizer(texts, config.max_vocab, config.lowercase)?;
    let train_set = encode_split(&tokenizer, &train_split)?;
    let dev_set = encode_split(&tokenizer, &dev_split)?;

    let encoder_config = config.encoder.to_config(tokenizer.vocab_size());
    let model = match config.family {
        FamilyName::Discrete => {
            let patterns = discrete_patterns(&tokenizer, &config.discrete_texts)?;
            ConanModel::init_discrete(&encoder_config, &patterns, config.seed)
        }
        family => ConanModel::init(
            &encoder_config,
            family.to_family(),
            config.n,
            config.k,
            config.seed,
        ),
    }
    .context("initializing the model")?;

    let train_config = effective_train_config(config, model.n());
    let history = train(&model, &train_set, &dev_set, &train_config)?;

    let scored = model.score_examples(&dev_set)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    let theta = tune_threshold(&scores, &labels)?;
    let dev_report = classification_report(&scores, &labels, theta)?;

    let run_dir = config.run_dir(out_root);
    fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating run directory {}", run_dir.display()))?;
    fs::write(run_dir.join("config.json"), config.canonical_json())
        .context("writing config echo")?;
    fs::write(run_dir.join("history.jsonl"), history.to_jsonl())
        .context("writing training history")?;
    super::write_scores(&run_dir.join("dev_scores.tsv"), &scored)?;

    let checkpoint_path = run_dir.join("checkpoint.bin");
    checkpoint::save(&checkpoint_path, &model, &tokenizer, Some(theta))?;

    let parameters = ParameterSummary::of(&model);
    let output = TrainOutput {
        run_id: config.run_id(),
        run_dir: run_dir.clone(),
        checkpoint: checkpoint_path,
        theta,
        dev_auc_percent: *history.dev_aucs().last().expect("at least one epoch"),
        dev_report,
        parameters,
        steps: history.step_losses().len(),
    };
    write_json(&run_dir.join("dev_report.json"), &output)?;
    Ok(output)
}
