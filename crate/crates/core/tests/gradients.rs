//! Numeric gradient verification: every differentiable primitive is checked
//! against central finite differences, then the fully assembled model (embed
//! → encoder stack → pooler → head → NLL) is checked end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use conan_core::autodiff::{finite_diff_check, Graph, Tensor};
use conan_core::data::TokenizedExample;
use conan_core::encoder::EncoderConfig;
use conan_core::model::ConanModel;
use conan_core::patterning::Family;
use conan_core::training::batch_loss;

const PRIMITIVE_STEP: f64 = 1e-5;
const PRIMITIVE_TOL: f64 = 1e-6;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reduces a tensor to a scalar through fixed random weights, so every
/// coordinate of the op output feeds the loss with a distinct coefficient.
/// A plain sum would hide ops whose row sums are constant (softmax rows sum
/// to one, layer norm with uniform gain sums to its bias).
fn weighted(g: &mut Graph, t: &Tensor, weights: &Tensor) -> Tensor {
    let prod = g.mul(t, weights).expect("weight shape matches op output");
    g.sum(&prod)
}

fn fixed_weights(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape, 1.0, &mut rng(seed ^ 0x5eed), false)
}

#[test]
fn matmul_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[3, 4], 1.0, &mut r, true);
        let b = Tensor::randn(&[4, 2], 1.0, &mut r, true);
        let w = fixed_weights(&[3, 2], seed);
        let worst = finite_diff_check(
            &[a.clone(), b.clone()],
            |g| {
                let y = g.matmul(&a, &b)?;
                Ok(weighted(g, &y, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn elementwise_and_broadcast_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[3, 4], 1.0, &mut r, true);
        let b = Tensor::randn(&[3, 4], 1.0, &mut r, true);
        let v = Tensor::randn(&[4], 1.0, &mut r, true);
        let w = fixed_weights(&[3, 4], seed);
        let worst = finite_diff_check(
            &[a.clone(), b.clone(), v.clone()],
            |g| {
                let sum = g.add(&a, &b)?;
                let prod = g.mul(&sum, &b)?;
                let shifted = g.add(&prod, &v)?; // row broadcast
                let scaled = g.mul(&shifted, &v)?; // row broadcast
                Ok(weighted(g, &scaled, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn transpose_and_scale_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[3, 5], 1.0, &mut r, true);
        let w = fixed_weights(&[5, 3], seed);
        let worst = finite_diff_check(
            &[a.clone()],
            |g| {
                let t = g.transpose(&a)?;
                let s = g.scale(&t, -1.75);
                Ok(weighted(g, &s, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn activation_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[4, 6], 1.0, &mut r, true);
        let w = fixed_weights(&[4, 6], seed);
        let worst = finite_diff_check(
            &[a.clone()],
            |g| {
                let t = g.tanh(&a);
                let u = g.gelu(&t);
                Ok(weighted(g, &u, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn softmax_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[4, 5], 1.5, &mut r, true);
        let w = fixed_weights(&[4, 5], seed);
        let worst = finite_diff_check(
            &[a.clone()],
            |g| {
                let p = g.softmax_rows(&a)?;
                Ok(weighted(g, &p, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let x = Tensor::randn(&[3, 8], 1.0, &mut r, true);
        let gain = Tensor::randn(&[8], 0.5, &mut r, true);
        let bias = Tensor::randn(&[8], 0.5, &mut r, true);
        let w = fixed_weights(&[3, 8], seed);
        let worst = finite_diff_check(
            &[x.clone(), gain.clone(), bias.clone()],
            |g| {
                let y = g.layer_norm(&x, &gain, &bias, 1e-5)?;
                Ok(weighted(g, &y, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn gather_gradients_scatter_back_onto_repeated_rows() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let table = Tensor::randn(&[6, 4], 1.0, &mut r, true);
        let ids = [2usize, 0, 2, 5, 2];
        let w = fixed_weights(&[5, 4], seed);
        let worst = finite_diff_check(
            &[table.clone()],
            |g| {
                let rows = g.gather_rows(&table, &ids)?;
                Ok(weighted(g, &rows, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn concatenation_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[2, 3], 1.0, &mut r, true);
        let b = Tensor::randn(&[1, 3], 1.0, &mut r, true);
        let c = Tensor::randn(&[3, 2], 1.0, &mut r, true);
        let d = Tensor::randn(&[3, 4], 1.0, &mut r, true);
        let w_rows = fixed_weights(&[3, 3], seed);
        let w_cols = fixed_weights(&[3, 6], seed + 1);
        let worst = finite_diff_check(
            &[a.clone(), b.clone(), c.clone(), d.clone()],
            |g| {
                let stacked = g.concat_rows(&[a.clone(), b.clone()])?;
                let wide = g.concat_cols(&[c.clone(), d.clone()])?;
                let s1 = weighted(g, &stacked, &w_rows);
                let s2 = weighted(g, &wide, &w_cols);
                Ok(g.add(&s1, &s2)?)
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn nll_gradients_match_finite_differences() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let logits = Tensor::randn(&[6, 2], 1.0, &mut r, true);
        let labels = [1u8, 0, 1, 1, 0, 0];
        let worst = finite_diff_check(
            &[logits.clone()],
            |g| g.nll_from_logits(&logits, &labels),
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

#[test]
fn eval_mode_dropout_is_transparent_to_gradients() {
    for seed in 0..3u64 {
        let mut r = rng(seed);
        let a = Tensor::randn(&[3, 4], 1.0, &mut r, true);
        let w = fixed_weights(&[3, 4], seed);
        let worst = finite_diff_check(
            &[a.clone()],
            |g| {
                let kept = g.dropout(&a, 0.5, false, &mut rng(9))?;
                Ok(weighted(g, &kept, &w))
            },
            PRIMITIVE_STEP,
            usize::MAX,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= PRIMITIVE_TOL, "seed {seed}: {worst:e}");
    }
}

/// End-to-end check through the real model: two patterns of two trainable
/// slots each, a 16-dimensional two-layer encoder, and the batch loss over
/// two examples. Eval mode keeps the forward pass deterministic.
#[test]
fn full_model_gradients_match_finite_differences() {
    for seed in 0..2u64 {
        let config = EncoderConfig {
            vocab_size: 20,
            d_model: 16,
            n_layers: 2,
            n_heads: 1,
            d_ff: 32,
            max_len: 32,
            internal_dropout: 0.0,
        };
        let model = ConanModel::init(&config, Family::Alpha, 2, 2, seed).unwrap();
        let examples = [
            TokenizedExample {
                premise: vec![4, 5, 6],
                hypothesis: vec![4, 7, 6],
                label: 1,
                pair_id: "a".into(),
            },
            TokenizedExample {
                premise: vec![8, 9, 10],
                hypothesis: vec![8, 11, 10],
                label: 0,
                pair_id: "b".into(),
            },
        ];
        let params: Vec<Tensor> = model.named_params().into_iter().map(|(_, t)| t).collect();
        let patterns: Vec<_> = model.patterns().iter().collect();
        let example_refs: Vec<_> = examples.iter().collect();
        let worst = finite_diff_check(
            &params,
            |g| {
                batch_loss(
                    &model,
                    g,
                    &patterns,
                    &example_refs,
                    0.0,
                    false,
                    &mut rng(0),
                )
            },
            1e-4,
            4,
            &mut rng(seed + 100),
        )
        .unwrap();
        assert!(worst <= 1e-4, "seed {seed}: worst relative error {worst:e}");
    }
}
