//! `conan transfer`: score an out-of-domain set at the fixed threshold 0.
//!
//! No tuning happens on the target data: the checkpointed model scores the
//! set as-is and decisions use ϑ = 0 exactly, so the report measures how the
//! learned scoring carries over, not how well a new threshold fits.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use conan_core::metrics::{classification_report, EvalReport};

use crate::checkpoint;

use super::{encode_split, load_split, write_json, write_scores};

#[derive(Debug, Serialize)]
pub struct TransferOutput {
    /// Always exactly zero; recorded so downstream tooling sees the protocol.
    pub theta: f64,
    pub report: EvalReport,
    #[serde(skip)]
    pub report_path: PathBuf,
    #[serde(skip)]
    pub scores_path: PathBuf,
}

pub fn cmd_transfer(checkpoint_path: &Path, data: &Path, out_dir: &Path) -> Result<TransferOutput> {
    let loaded = checkpoint::load(checkpoint_path)?;
    let split = load_split(data, "transfer")?;
    // Target-side words the checkpointed vocabulary has never seen map to
    // the unknown id; that is part of the protocol rather than an error.
    let examples = encode_split(&loaded.tokenizer, &split)?;
    let scored = loaded.model.score_examples(&examples)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    let report = classification_report(&scores, &labels, 0.0)?;

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let output = TransferOutput {
        theta: 0.0,
        report,
        report_path: out_dir.join("transfer_report.json"),
        scores_path: out_dir.join("transfer_scores.tsv"),
    };
    write_json(&output.report_path, &output)?;
    write_scores(&output.scores_path, &scored)?;
    Ok(output)
}
