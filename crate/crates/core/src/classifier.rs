//! Entailment scoring on top of the encoder: a two-way output head over the
//! pooled vector, per-pattern probabilities, their max-combination into a
//! single score in `[-1, 1]`, and the threshold decision rule.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::data::wrap_sequence;
use crate::encoder::{self, EncoderConfig, EncoderParams, INIT_STD};
use crate::error::Result;
use crate::patterning::{build_template, PatternSpec};

/// Dropout rate on the pooled vector ahead of the output projection
/// (training mode only).
pub const HEAD_DROPOUT: f64 = 0.1;

/// Two-way linear projection mapping the pooled vector to class logits
/// (index 0 = no entailment, index 1 = entailment).
#[derive(Debug)]
pub struct ClassifierHead {
    pub(crate) w: Tensor, // [d, 2]
    pub(crate) b: Tensor, // [2]
}

impl ClassifierHead {
    /// Weight from `Normal(0, 0.02)`, bias zero.
    pub fn init(d: usize, rng: &mut impl Rng) -> ClassifierHead {
        ClassifierHead {
            w: Tensor::randn(&[d, 2], INIT_STD, rng, true),
            b: Tensor::zeros(&[2], true),
        }
    }

    pub fn weight(&self) -> &Tensor {
        &self.w
    }

    pub fn bias(&self) -> &Tensor {
        &self.b
    }

    pub fn num_parameters(&self) -> usize {
        self.w.numel() + self.b.numel()
    }
}

/// One evaluated example: its identifier, combined score and gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    pub score: f64,
    pub label: u8,
}

/// Encodes one (pattern, premise, hypothesis) triple to its pooled vector:
/// template construction, BOS/EOS wrapping, then the encoder.
pub fn pooled_vector(
    config: &EncoderConfig,
    params: &EncoderParams,
    graph: &mut Graph,
    spec: &PatternSpec,
    premise: &[usize],
    hypothesis: &[usize],
    training: bool,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let ids = wrap_sequence(&build_template(spec, premise, hypothesis));
    encoder::encode(config, params, graph, &ids, training, rng)
}

/// Class logits `[m, 2]` for a batch of pooled rows `[m, d]`. In training
/// mode the pooled rows pass through dropout first.
pub fn class_logits(
    graph: &mut Graph,
    pooled: &Tensor,
    head: &ClassifierHead,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let dropped = graph.dropout(pooled, HEAD_DROPOUT, training, rng)?;
    let projected = graph.matmul(&dropped, &head.w)?;
    graph.add(&projected, &head.b)
}

/// Eval-mode class probabilities `(P(0), P(1))` of one example under one
/// pattern. Pure in the parameters: no dropout, no randomness.
pub fn pattern_probability(
    config: &EncoderConfig,
    params: &EncoderParams,
    head: &ClassifierHead,
    spec: &PatternSpec,
    premise: &[usize],
    hypothesis: &[usize],
) -> Result<(f64, f64)> {
    let mut graph = Graph::new();
    // eval mode short-circuits every dropout, so this RNG is never consumed
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pooled = pooled_vector(
        config, params, &mut graph, spec, premise, hypothesis, false, &mut rng,
    )?;
    let logits = class_logits(&mut graph, &pooled, head, false, &mut rng)?;
    let probs = graph.softmax_rows(&logits)?;
    let v = probs.values();
    Ok((v[0], v[1]))
}

/// Sequences per encoder call when scoring in bulk: bounds the live graph
/// while keeping the matrix work large enough to be efficient.
const EVAL_CHUNK: usize = 256;

/// Eval-mode class probabilities `(P(0), P(1))` for many wrapped sequences
/// at once, in input order.
///
/// Sequences are grouped by length (the batched encoder requires equal
/// lengths) and each group is encoded in chunks. Every row's result is
/// bit-identical to scoring it alone through [`pattern_probability`].
pub fn batch_probabilities(
    config: &EncoderConfig,
    params: &EncoderParams,
    head: &ClassifierHead,
    wrapped: &[Vec<usize>],
) -> Result<Vec<(f64, f64)>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, seq) in wrapped.iter().enumerate() {
        by_len.entry(seq.len()).or_default().push(i);
    }
    let mut out = vec![(0.0, 0.0); wrapped.len()];
    // eval mode short-circuits every dropout, so this RNG is never consumed
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for indices in by_len.values() {
        for chunk in indices.chunks(EVAL_CHUNK) {
            let seqs: Vec<&[usize]> = chunk.iter().map(|&i| wrapped[i].as_slice()).collect();
            let mut graph = Graph::new();
            let pooled = encoder::encode_batch(config, params, &mut graph, &seqs, false, &mut rng)?;
            let logits = class_logits(&mut graph, &pooled, head, false, &mut rng)?;
            let probs = graph.softmax_rows(&logits)?;
            let values = probs.values();
            for (row, &i) in chunk.iter().enumerate() {
                out[i] = (values[row * 2], values[row * 2 + 1]);
            }
        }
    }
    Ok(out)
}

/// Per-class maxima over the pattern set: `(m0, m1)` where
/// `m_y = max P(y)` across patterns. Growing the pattern set can only raise
/// each maximum.
pub fn class_maxima(probabilities: &[(f64, f64)]) -> (f64, f64) {
    assert!(
        !probabilities.is_empty(),
        "combining requires at least one pattern"
    );
    let max0 = probabilities.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let max1 = probabilities.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    (max0, max1)
}

/// Combines per-pattern probabilities into one score:
/// `s = max P(1) - max P(0)`, each max over the patterns. With a single
/// pattern this reduces to `2·P(1) - 1`; the score always lies in `[-1, 1]`.
pub fn combine_patterns(probabilities: &[(f64, f64)]) -> f64 {
    let (max0, max1) = class_maxima(probabilities);
    max1 - max0
}

/// Full eval-mode scoring of one example across all patterns.
pub fn score_example(
    config: &EncoderConfig,
    params: &EncoderParams,
    head: &ClassifierHead,
    specs: &[PatternSpec],
    premise: &[usize],
    hypothesis: &[usize],
) -> Result<f64> {
    let probabilities = specs
        .iter()
        .map(|spec| pattern_probability(config, params, head, spec, premise, hypothesis))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_patterns(&probabilities))
}

/// Decision rule: predict entailment exactly when the score strictly
/// exceeds the threshold; a score equal to the threshold stays negative.
pub fn decide(score: f64, theta: f64) -> u8 {
    if score > theta {
        1
    } else {
        0
    }
}
