//! `conan eval`: score a labeled set with a checkpointed model.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use conan_core::metrics::{classification_report, EvalReport};

use crate::checkpoint;

use super::{encode_split, load_split, write_json, write_scores, ParameterSummary};

/// Where the decision threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSource {
    /// The dev-tuned value stored in the checkpoint.
    Dev,
    /// Fixed zero, the transfer protocol.
    Zero,
    /// An explicit value.
    Value(f64),
}

impl ThetaSource {
    fn label(self) -> String {
        match self {
            ThetaSource::Dev => "dev".into(),
            ThetaSource::Zero => "zero".into(),
            ThetaSource::Value(v) => format!("value({v})"),
        }
    }
}

impl FromStr for ThetaSource {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<ThetaSource> {
        match s {
            "dev" => Ok(ThetaSource::Dev),
            "zero" => Ok(ThetaSource::Zero),
            other => {
                let value: f64 = other.parse().map_err(|_| {
                    anyhow::anyhow!("--theta takes 'dev', 'zero', or a number, not {other:?}")
                })?;
                if !value.is_finite() {
                    bail!("--theta must be finite, got {value}");
                }
                Ok(ThetaSource::Value(value))
            }
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub theta_source: String,
    pub theta: f64,
    pub report: EvalReport,
    pub parameters: ParameterSummary,
    #[serde(skip)]
    pub report_path: PathBuf,
    #[serde(skip)]
    pub scores_path: PathBuf,
}

pub fn cmd_eval(
    checkpoint_path: &Path,
    data: &Path,
    theta_source: ThetaSource,
    out_dir: &Path,
) -> Result<EvalOutput> {
    let loaded = checkpoint::load(checkpoint_path)?;
    let theta = match theta_source {
        ThetaSource::Dev => loaded.theta.with_context(|| {
            format!(
                "checkpoint {} stores no dev-tuned threshold; pass --theta zero or an explicit value",
                checkpoint_path.display()
            )
        })?,
        ThetaSource::Zero => 0.0,
        ThetaSource::Value(v) => v,
    };

    let split = load_split(data, "eval")?;
    let examples = encode_split(&loaded.tokenizer, &split)?;
    let scored = loaded.model.score_examples(&examples)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    let report = classification_report(&scores, &labels, theta)?;

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let output = EvalOutput {
        theta_source: theta_source.label(),
        theta,
        report,
        parameters: ParameterSummary::of(&loaded.model),
        report_path: out_dir.join("eval_report.json"),
        scores_path: out_dir.join("eval_scores.tsv"),
    };
    write_json(&output.report_path, &output)?;
    write_scores(&output.scores_path, &scored)?;
    Ok(output)
}
