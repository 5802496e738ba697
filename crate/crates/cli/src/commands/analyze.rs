//! `conan analyze`: inspect what the trained continuous tokens are near.
//!
//! For every continuous token the report lists the nearest real-vocabulary
//! embeddings by cosine similarity, plus the largest similarity to any real
//! token and to any other continuous token — the two numbers that show
//! whether the learned tokens stay close to natural language or drift into
//! their own region.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use conan_core::patterning::Family;

use crate::checkpoint;

use super::write_json;

/// How many nearest real tokens each continuous token reports.
pub const NEIGHBOR_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborEntry {
    pub token: String,
    pub id: usize,
    pub cosine: f64,
}

/// Analysis of one continuous token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenAnalysis {
    /// Which pattern the token belongs to (0-based).
    pub pattern: usize,
    /// Position inside the pattern (0-based).
    pub position: usize,
    /// Embedding row id.
    pub id: usize,
    /// Nearest real tokens, most similar first (ties broken by id).
    pub neighbors: Vec<NeighborEntry>,
    /// Largest cosine to any real token.
    pub max_vocab_cosine: f64,
    /// Largest cosine to any other continuous token; absent when there is
    /// only one continuous token.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_peer_cosine: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub n: usize,
    pub k: usize,
    pub tokens: Vec<TokenAnalysis>,
    /// Largest cosine between any continuous token and any real token.
    pub max_vocab_cosine: f64,
    /// Largest cosine between two distinct continuous tokens; absent when
    /// there is only one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_peer_cosine: Option<f64>,
    #[serde(skip)]
    pub report_path: PathBuf,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn cmd_analyze(checkpoint_path: &Path, out_dir: &Path) -> Result<AnalyzeReport> {
    let loaded = checkpoint::load(checkpoint_path)?;
    let model = &loaded.model;
    if model.family() == Family::Discrete {
        bail!("checkpoint holds discrete patterns; there are no continuous tokens to analyze");
    }
    let k = model.patterns().first().map_or(0, |p| p.k);
    if k == 0 {
        bail!("checkpoint has k = 0 (no tokens per pattern); nothing to analyze");
    }

    let named = model.named_params();
    let (_, embeddings) = named
        .iter()
        .find(|(name, _)| name == "token_embeddings")
        .expect("models expose token embeddings");
    let values = embeddings.values();
    let d = model.config.d_model;
    let base = model.base_vocab();
    let row = |id: usize| &values[id * d..(id + 1) * d];

    let continuous_ids: Vec<usize> = (base..model.config.vocab_size).collect();
    let mut tokens = Vec::with_capacity(continuous_ids.len());
    let mut global_vocab = f64::NEG_INFINITY;
    let mut global_peer: Option<f64> = None;
    for (index, &id) in continuous_ids.iter().enumerate() {
        let mut similarities: Vec<(usize, f64)> = (0..base)
            .map(|real| (real, cosine(row(id), row(real))))
            .collect();
        similarities.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite cosines").then(a.0.cmp(&b.0)));
        let neighbors: Vec<NeighborEntry> = similarities
            .iter()
            .take(NEIGHBOR_COUNT)
            .map(|&(real, cosine)| NeighborEntry {
                token: loaded
                    .tokenizer
                    .token(real)
                    .expect("base ids are in vocabulary")
                    .to_string(),
                id: real,
                cosine,
            })
            .collect();
        let max_vocab_cosine = neighbors.first().map_or(0.0, |n| n.cosine);
        let max_peer_cosine = continuous_ids
            .iter()
            .filter(|&&peer| peer != id)
            .map(|&peer| cosine(row(id), row(peer)))
            .fold(None, |best: Option<f64>, c| {
                Some(best.map_or(c, |b| b.max(c)))
            });
        global_vocab = global_vocab.max(max_vocab_cosine);
        if let Some(peer) = max_peer_cosine {
            global_peer = Some(global_peer.map_or(peer, |b| b.max(peer)));
        }
        tokens.push(TokenAnalysis {
            pattern: index / k,
            position: index % k,
            id,
            neighbors,
            max_vocab_cosine,
            max_peer_cosine,
        });
    }

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let report = AnalyzeReport {
        n: model.n(),
        k,
        tokens,
        max_vocab_cosine: global_vocab,
        max_peer_cosine: global_peer,
        report_path: out_dir.join("analyze.json"),
    };
    write_json(&report.report_path, &report)?;
    Ok(report)
}
