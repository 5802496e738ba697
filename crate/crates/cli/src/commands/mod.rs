//! The experiment verbs behind the command-line interface. Each verb is an
//! ordinary function returning a summary struct, so tests and other tools
//! can drive experiments without spawning processes.

mod analyze;
mod eval;
mod sweep;
mod synth;
mod train;
mod transfer;

pub use analyze::{cmd_analyze, AnalyzeReport, NeighborEntry, TokenAnalysis};
pub use eval::{cmd_eval, EvalOutput, ThetaSource};
pub use sweep::{cmd_sweep, SweepOutput, SweepRow};
pub use synth::{cmd_synth, SynthOutput, TableSpec};
pub use train::{cmd_train, TrainOutput};
pub use transfer::{cmd_transfer, TransferOutput};

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use conan_core::classifier::ScoredPair;
use conan_core::data::{load_tsv, DatasetSplit, TokenizedExample, Tokenizer};
use conan_core::model::ConanModel;

/// Loads a TSV split, labelling errors with the dataset's role.
pub(crate) fn load_split(path: &Path, role: &str) -> Result<DatasetSplit> {
    load_tsv(path, role).with_context(|| format!("loading {role} data from {}", path.display()))
}

pub(crate) fn encode_split(
    tokenizer: &Tokenizer,
    split: &DatasetSplit,
) -> Result<Vec<TokenizedExample>> {
    split
        .examples
        .iter()
        .map(|e| {
            tokenizer
                .encode_example(e)
                .with_context(|| format!("tokenizing {} example {}", split.name, e.pair_id))
        })
        .collect()
}

/// Writes `pair_id <TAB> score <TAB> label` lines.
pub(crate) fn write_scores(path: &Path, scored: &[ScoredPair]) -> Result<()> {
    let mut out = String::new();
    for s in scored {
        out.push_str(&format!("{}\t{}\t{}\n", s.pair_id, s.score, s.label));
    }
    fs::write(path, out).with_context(|| format!("writing scores to {}", path.display()))?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Tokenizes the natural-language pattern texts of a discrete model.
pub(crate) fn discrete_patterns(
    tokenizer: &Tokenizer,
    texts: &[String],
) -> Result<Vec<Vec<usize>>> {
    let mut patterns = Vec::with_capacity(texts.len());
    for (i, text) in texts.iter().enumerate() {
        let ids = tokenizer.encode(text);
        if ids.is_empty() {
            bail!("discrete pattern {} ({text:?}) tokenizes to nothing", i + 1);
        }
        patterns.push(ids);
    }
    Ok(patterns)
}

/// Model size accounting reported by training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub total: usize,
    /// Fresh embedding rows (n·k for the continuous families, 0 for discrete).
    pub added_rows: usize,
    /// Values inside those rows (rows · d_model).
    pub added_embedding_parameters: usize,
    pub added_fraction: f64,
}

impl ParameterSummary {
    pub(crate) fn of(model: &ConanModel) -> ParameterSummary {
        let total = model.num_parameters();
        let added_rows = model.config.vocab_size - model.base_vocab();
        let added = added_rows * model.config.d_model;
        ParameterSummary {
            total,
            added_rows,
            added_embedding_parameters: added,
            added_fraction: added as f64 / total as f64,
        }
    }
}
