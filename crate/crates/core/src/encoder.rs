//! Miniature bidirectional transformer encoder.
//!
//! Post-layer-norm residual blocks with multi-head self-attention and a GELU
//! feed-forward, learned absolute position embeddings, and a tanh pooler
//! over the first position. Small enough to train from scratch on a CPU in
//! minutes, but shaped like its full-size relatives so behaviour transfers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};

/// Layer-norm variance floor.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Standard deviation of the weight initializer.
pub const INIT_STD: f64 = 0.02;

/// Architecture hyperparameters. `vocab_size` counts the full extended
/// vocabulary (base tokens plus any pattern slots).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Dropout on attention weights and feed-forward outputs in training mode.
    pub internal_dropout: f64,
}

impl EncoderConfig {
    /// Desk-scale defaults: d=64, 2 layers, 4 heads, feed-forward 256,
    /// sequences up to 128 tokens.
    pub fn toy(vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 256,
            max_len: 128,
            internal_dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |cond: bool, msg: &str| {
            if cond {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.vocab_size >= 1, "vocab_size must be >= 1")?;
        check(self.d_model >= 1, "d_model must be >= 1")?;
        check(self.n_layers >= 1, "n_layers must be >= 1")?;
        check(self.n_heads >= 1, "n_heads must be >= 1")?;
        check(
            self.d_model % self.n_heads == 0,
            "d_model must be divisible by n_heads",
        )?;
        check(self.d_ff >= 1, "d_ff must be >= 1")?;
        check(self.max_len >= 3, "max_len must fit BOS, one token and EOS")?;
        check(
            (0.0..1.0).contains(&self.internal_dropout),
            "internal_dropout must lie in [0, 1)",
        )
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Parameters of one residual block.
#[derive(Debug)]
pub struct LayerParams {
    pub(crate) wq: Vec<Tensor>,
    pub(crate) bq: Vec<Tensor>,
    pub(crate) wk: Vec<Tensor>,
    pub(crate) bk: Vec<Tensor>,
    pub(crate) wv: Vec<Tensor>,
    pub(crate) bv: Vec<Tensor>,
    pub(crate) wo: Tensor,
    pub(crate) bo: Tensor,
    pub(crate) ln1_gain: Tensor,
    pub(crate) ln1_bias: Tensor,
    pub(crate) ff_w1: Tensor,
    pub(crate) ff_b1: Tensor,
    pub(crate) ff_w2: Tensor,
    pub(crate) ff_b2: Tensor,
    pub(crate) ln2_gain: Tensor,
    pub(crate) ln2_bias: Tensor,
}

/// All trainable encoder parameters.
#[derive(Debug)]
pub struct EncoderParams {
    pub(crate) token_embeddings: Tensor,
    pub(crate) position_embeddings: Tensor,
    pub(crate) layers: Vec<LayerParams>,
    pub(crate) pooler_w: Tensor,
    pub(crate) pooler_b: Tensor,
}

/// Initializes parameters from a seed: weights `Normal(0, 0.02)`, biases
/// zero, layer-norm gains one. Identical seeds give bit-identical tensors.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_from_rng(config, &mut rng)
}

pub(crate) fn init_params_from_rng(
    config: &EncoderConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EncoderParams> {
    config.validate()?;
    let d = config.d_model;
    let dh = config.head_dim();
    let weight = |shape: &[usize], rng: &mut ChaCha8Rng| Tensor::randn(shape, INIT_STD, rng, true);
    let zeros = |shape: &[usize]| Tensor::zeros(shape, true);
    let ones = |n: usize| Tensor::new(&[n], vec![1.0; n], true).expect("shape");

    let token_embeddings = weight(&[config.vocab_size, d], rng);
    let position_embeddings = weight(&[config.max_len, d], rng);
    let layers = (0..config.n_layers)
        .map(|_| {
            let mut wq = Vec::new();
            let mut wk = Vec::new();
            let mut wv = Vec::new();
            for _ in 0..config.n_heads {
                wq.push(weight(&[d, dh], rng));
                wk.push(weight(&[d, dh], rng));
                wv.push(weight(&[d, dh], rng));
            }
            LayerParams {
                wq,
                bq: (0..config.n_heads).map(|_| zeros(&[dh])).collect(),
                wk,
                bk: (0..config.n_heads).map(|_| zeros(&[dh])).collect(),
                wv,
                bv: (0..config.n_heads).map(|_| zeros(&[dh])).collect(),
                wo: weight(&[d, d], rng),
                bo: zeros(&[d]),
                ln1_gain: ones(d),
                ln1_bias: zeros(&[d]),
                ff_w1: weight(&[d, config.d_ff], rng),
                ff_b1: zeros(&[config.d_ff]),
                ff_w2: weight(&[config.d_ff, d], rng),
                ff_b2: zeros(&[d]),
                ln2_gain: ones(d),
                ln2_bias: zeros(&[d]),
            }
        })
        .collect();
    Ok(EncoderParams {
        token_embeddings,
        position_embeddings,
        layers,
        pooler_w: weight(&[d, d], rng),
        pooler_b: zeros(&[d]),
    })
}

impl EncoderParams {
    /// The full embedding table (base vocabulary plus pattern slots).
    pub fn token_embeddings(&self) -> &Tensor {
        &self.token_embeddings
    }

    /// Every trainable tensor with a stable, deterministic name.
    ///
    /// The order is fixed and is what optimizer state and checkpoints index.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("token_embeddings".to_string(), self.token_embeddings.clone()),
            (
                "position_embeddings".to_string(),
                self.position_embeddings.clone(),
            ),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for h in 0..layer.wq.len() {
                out.push((format!("layers.{i}.heads.{h}.wq"), layer.wq[h].clone()));
                out.push((format!("layers.{i}.heads.{h}.bq"), layer.bq[h].clone()));
                out.push((format!("layers.{i}.heads.{h}.wk"), layer.wk[h].clone()));
                out.push((format!("layers.{i}.heads.{h}.bk"), layer.bk[h].clone()));
                out.push((format!("layers.{i}.heads.{h}.wv"), layer.wv[h].clone()));
                out.push((format!("layers.{i}.heads.{h}.bv"), layer.bv[h].clone()));
            }
            out.push((format!("layers.{i}.wo"), layer.wo.clone()));
            out.push((format!("layers.{i}.bo"), layer.bo.clone()));
            out.push((format!("layers.{i}.ln1_gain"), layer.ln1_gain.clone()));
            out.push((format!("layers.{i}.ln1_bias"), layer.ln1_bias.clone()));
            out.push((format!("layers.{i}.ff_w1"), layer.ff_w1.clone()));
            out.push((format!("layers.{i}.ff_b1"), layer.ff_b1.clone()));
            out.push((format!("layers.{i}.ff_w2"), layer.ff_w2.clone()));
            out.push((format!("layers.{i}.ff_b2"), layer.ff_b2.clone()));
            out.push((format!("layers.{i}.ln2_gain"), layer.ln2_gain.clone()));
            out.push((format!("layers.{i}.ln2_bias"), layer.ln2_bias.clone()));
        }
        out.push(("pooler_w".to_string(), self.pooler_w.clone()));
        out.push(("pooler_b".to_string(), self.pooler_b.clone()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Encodes a token id sequence (already wrapped in BOS/EOS) into the pooled
/// `[1, d]` representation of its first position.
///
/// In eval mode (`training = false`) this is a pure function of the
/// parameters and ids; the RNG is only consumed by dropout in training mode.
pub fn encode(
    config: &EncoderConfig,
    params: &EncoderParams,
    graph: &mut Graph,
    ids: &[usize],
    training: bool,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    encode_impl(config, params, graph, ids, training, rng, None)
}

/// Encodes a batch of equal-length sequences jointly, returning one pooled
/// row per sequence (`[B, d]`, input order preserved).
///
/// Row-parallel work — embeddings, projections, feed-forward, layer norm,
/// pooler — runs as single large operations over the `[B·L, d]` stack, while
/// attention still mixes positions within one sequence at a time, so in eval
/// mode row `b` is bit-identical to `encode(..., &seqs[b], ...)`. In
/// training mode dropout masks are drawn in batch order, which differs from
/// the sequence-at-a-time stream; both orders are deterministic under the
/// seed.
pub fn encode_batch(
    config: &EncoderConfig,
    params: &EncoderParams,
    graph: &mut Graph,
    seqs: &[&[usize]],
    training: bool,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let Some(first) = seqs.first() else {
        return Err(Error::Config("encode_batch needs at least one sequence".into()));
    };
    let len = first.len();
    if len == 0 || len > config.max_len {
        return Err(Error::BadSequenceLength {
            len,
            max_len: config.max_len,
        });
    }
    if let Some(odd) = seqs.iter().find(|s| s.len() != len) {
        return Err(Error::ShapeMismatch {
            op: "encode_batch",
            left: vec![len],
            right: vec![odd.len()],
        });
    }

    let flat_ids: Vec<usize> = seqs.iter().flat_map(|s| s.iter().copied()).collect();
    let positions: Vec<usize> = (0..seqs.len()).flat_map(|_| 0..len).collect();
    let tok = graph.gather_rows(&params.token_embeddings, &flat_ids)?;
    let pos = graph.gather_rows(&params.position_embeddings, &positions)?;
    let mut x = graph.add(&tok, &pos)?;

    let scale = 1.0 / (config.head_dim() as f64).sqrt();
    let seq_rows: Vec<Vec<usize>> = (0..seqs.len())
        .map(|b| (b * len..(b + 1) * len).collect())
        .collect();
    for layer in &params.layers {
        let mut heads = Vec::with_capacity(layer.wq.len());
        for h in 0..layer.wq.len() {
            let q = graph.matmul(&x, &layer.wq[h])?;
            let q = graph.add(&q, &layer.bq[h])?;
            let k = graph.matmul(&x, &layer.wk[h])?;
            let k = graph.add(&k, &layer.bk[h])?;
            let v = graph.matmul(&x, &layer.wv[h])?;
            let v = graph.add(&v, &layer.bv[h])?;
            let mut ctx_rows = Vec::with_capacity(seqs.len());
            for rows in &seq_rows {
                let qb = graph.gather_rows(&q, rows)?;
                let kb = graph.gather_rows(&k, rows)?;
                let vb = graph.gather_rows(&v, rows)?;
                let kt = graph.transpose(&kb)?;
                let scores = graph.matmul(&qb, &kt)?;
                let scores = graph.scale(&scores, scale);
                let probs = graph.softmax_rows(&scores)?;
                let probs = graph.dropout(&probs, config.internal_dropout, training, rng)?;
                ctx_rows.push(graph.matmul(&probs, &vb)?);
            }
            heads.push(graph.concat_rows(&ctx_rows)?);
        }
        let ctx = graph.concat_cols(&heads)?;
        let attn_out = graph.matmul(&ctx, &layer.wo)?;
        let attn_out = graph.add(&attn_out, &layer.bo)?;
        let res1 = graph.add(&x, &attn_out)?;
        x = graph.layer_norm(&res1, &layer.ln1_gain, &layer.ln1_bias, LAYER_NORM_EPS)?;

        let ff = graph.matmul(&x, &layer.ff_w1)?;
        let ff = graph.add(&ff, &layer.ff_b1)?;
        let ff = graph.gelu(&ff);
        let ff = graph.matmul(&ff, &layer.ff_w2)?;
        let ff = graph.add(&ff, &layer.ff_b2)?;
        let ff = graph.dropout(&ff, config.internal_dropout, training, rng)?;
        let res2 = graph.add(&x, &ff)?;
        x = graph.layer_norm(&res2, &layer.ln2_gain, &layer.ln2_bias, LAYER_NORM_EPS)?;
    }

    let firsts: Vec<usize> = (0..seqs.len()).map(|b| b * len).collect();
    let first_rows = graph.gather_rows(&x, &firsts)?;
    let pooled = graph.matmul(&first_rows, &params.pooler_w)?;
    let pooled = graph.add(&pooled, &params.pooler_b)?;
    Ok(graph.tanh(&pooled))
}

/// As [`encode`], additionally returning every attention matrix
/// (`n_layers · n_heads` row-stochastic `[L, L]` tensors, layer-major).
pub fn encode_recording_attention(
    config: &EncoderConfig,
    params: &EncoderParams,
    graph: &mut Graph,
    ids: &[usize],
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut attn = Vec::new();
    let pooled = encode_impl(config, params, graph, ids, training, rng, Some(&mut attn))?;
    Ok((pooled, attn))
}

fn encode_impl(
    config: &EncoderConfig,
    params: &EncoderParams,
    graph: &mut Graph,
    ids: &[usize],
    training: bool,
    rng: &mut impl Rng,
    mut record_attention: Option<&mut Vec<Tensor>>,
) -> Result<Tensor> {
    if ids.is_empty() || ids.len() > config.max_len {
        return Err(Error::BadSequenceLength {
            len: ids.len(),
            max_len: config.max_len,
        });
    }
    let positions: Vec<usize> = (0..ids.len()).collect();
    let tok = graph.gather_rows(&params.token_embeddings, ids)?;
    let pos = graph.gather_rows(&params.position_embeddings, &positions)?;
    let mut x = graph.add(&tok, &pos)?;

    let scale = 1.0 / (config.head_dim() as f64).sqrt();
    for layer in &params.layers {
        let mut heads = Vec::with_capacity(layer.wq.len());
        for h in 0..layer.wq.len() {
            let q = graph.matmul(&x, &layer.wq[h])?;
            let q = graph.add(&q, &layer.bq[h])?;
            let k = graph.matmul(&x, &layer.wk[h])?;
            let k = graph.add(&k, &layer.bk[h])?;
            let v = graph.matmul(&x, &layer.wv[h])?;
            let v = graph.add(&v, &layer.bv[h])?;
            let kt = graph.transpose(&k)?;
            let scores = graph.matmul(&q, &kt)?;
            let scores = graph.scale(&scores, scale);
            let probs = graph.softmax_rows(&scores)?;
            if let Some(rec) = record_attention.as_deref_mut() {
                rec.push(probs.clone());
            }
            let probs = graph.dropout(&probs, config.internal_dropout, training, rng)?;
            heads.push(graph.matmul(&probs, &v)?);
        }
        let ctx = graph.concat_cols(&heads)?;
        let attn_out = graph.matmul(&ctx, &layer.wo)?;
        let attn_out = graph.add(&attn_out, &layer.bo)?;
        let res1 = graph.add(&x, &attn_out)?;
        x = graph.layer_norm(&res1, &layer.ln1_gain, &layer.ln1_bias, LAYER_NORM_EPS)?;

        let ff = graph.matmul(&x, &layer.ff_w1)?;
        let ff = graph.add(&ff, &layer.ff_b1)?;
        let ff = graph.gelu(&ff);
        let ff = graph.matmul(&ff, &layer.ff_w2)?;
        let ff = graph.add(&ff, &layer.ff_b2)?;
        let ff = graph.dropout(&ff, config.internal_dropout, training, rng)?;
        let res2 = graph.add(&x, &ff)?;
        x = graph.layer_norm(&res2, &layer.ln2_gain, &layer.ln2_bias, LAYER_NORM_EPS)?;
    }

    let first = graph.gather_rows(&x, &[0])?;
    let pooled = graph.matmul(&first, &params.pooler_w)?;
    let pooled = graph.add(&pooled, &params.pooler_b)?;
    Ok(graph.tanh(&pooled))
}
