//! Training loop: per-(example × pattern) NLL with dual mini-batching over
//! data and patterns, Adam with decoupled weight decay, and gradient
//! accumulation. Fully deterministic under a seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor};
use crate::data::{wrap_sequence, TokenizedExample};
use crate::encoder::encode_batch;
use crate::error::{Error, Result};
use crate::metrics::{auc_p50, auc_percent, pr_curve};
use crate::model::ConanModel;
use crate::patterning::{build_template, PatternSpec};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Full passes over the training data.
    pub epochs: usize,
    /// Examples per data mini-batch.
    pub batch_size: usize,
    /// Patterns per pattern mini-batch.
    pub pattern_batch: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Decoupled weight-decay coefficient.
    pub weight_decay: f64,
    /// Loss computations accumulated per optimizer step.
    pub accum: usize,
    /// Dropout on the pooled vector feeding the head (training mode).
    pub dropout: f64,
    /// Seeds all training randomness (shuffles and dropout).
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: 5 epochs, batches of 10 examples and 5 patterns,
    /// lr 3e-4, no weight decay, no accumulation.
    pub fn toy(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 10,
            pattern_batch: 5,
            lr: 3e-4,
            weight_decay: 0.0,
            accum: 1,
            dropout: 0.1,
            seed,
        }
    }

    /// Published grid-searched settings for full-size encoders, by
    /// encoder scale and benchmark. Useful as starting points when wiring
    /// in a pretrained model; far too small for the desk-scale encoder.
    pub fn preset(name: &str, seed: u64) -> Option<TrainConfig> {
        let (lr, weight_decay, accum, batch_size) = match name {
            "base-sherliic" => (2.28e-5, 6.52e-2, 2, 10),
            "large-sherliic" => (1.29e-5, 2.49e-4, 3, 2),
            "base-levyholt" => (2.72e-5, 1.43e-3, 1, 10),
            "large-levyholt" => (4.55e-6, 3.90e-4, 2, 2),
            _ => return None,
        };
        Some(TrainConfig {
            epochs: 5,
            batch_size,
            pattern_batch: 5,
            lr,
            weight_decay,
            accum,
            dropout: 0.1,
            seed,
        })
    }

    pub fn preset_names() -> [&'static str; 4] {
        [
            "base-sherliic",
            "large-sherliic",
            "base-levyholt",
            "large-levyholt",
        ]
    }

    pub fn validate(&self, n_patterns: usize) -> Result<()> {
        let positive = |name: &'static str, value: usize| {
            if value >= 1 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: value as f64,
                    requirement: "at least 1",
                })
            }
        };
        positive("epochs", self.epochs)?;
        positive("batch_size", self.batch_size)?;
        positive("accum", self.accum)?;
        positive("pattern_batch", self.pattern_batch)?;
        if self.pattern_batch > n_patterns {
            return Err(Error::InvalidParameter {
                name: "pattern_batch",
                value: self.pattern_batch as f64,
                requirement: "no larger than the pattern count",
            });
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lr",
                value: self.lr,
                requirement: "finite and positive",
            });
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "weight_decay",
                value: self.weight_decay,
                requirement: "finite and non-negative",
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter {
                name: "dropout",
                value: self.dropout,
                requirement: "0 <= dropout < 1",
            });
        }
        Ok(())
    }
}

/// Adam moment estimates, aligned index-for-index with a fixed
/// `named_params` ordering.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[(String, Tensor)]) -> AdamState {
        AdamState {
            m: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    /// Optimizer steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam step plus decoupled weight decay
    /// (`p ← p − lr·(m̂/(√v̂+ε) + λ·p)`). A parameter with no accumulated
    /// gradient is treated as having a zero gradient: it still decays.
    /// Gradients are left untouched; the caller zeroes them.
    pub fn step(&mut self, params: &[(String, Tensor)], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter mismatch");
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (i, (_, p)) in params.iter().enumerate() {
            let grad = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
            let mut values = p.values();
            assert_eq!(grad.len(), values.len(), "gradient/parameter mismatch");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..values.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * grad[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * grad[j] * grad[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                values[j] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + weight_decay * values[j]);
            }
            p.set_values(&values).expect("parameter shape is unchanged");
        }
    }
}

/// One line of the training log: either a per-step loss or a per-epoch
/// development evaluation, in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistoryRecord {
    Step { step: usize, loss: f64 },
    DevEval { epoch: usize, dev_auc: f64 },
}

/// Chronological training log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    /// Per-step losses in order.
    pub fn step_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                HistoryRecord::Step { loss, .. } => Some(*loss),
                _ => None,
            })
            .collect()
    }

    /// Per-epoch development percent-AUC values in order.
    pub fn dev_aucs(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                HistoryRecord::DevEval { dev_auc, .. } => Some(*dev_auc),
                _ => None,
            })
            .collect()
    }

    /// One JSON object per record, newline-separated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("history serializes"));
            out.push('\n');
        }
        out
    }
}

/// Mean NLL over the (example × pattern) cross product of the two batches:
/// every pattern in the batch sees every example. In training mode the
/// encoder's internal dropout and the head dropout (`head_dropout`) are
/// active and consume the RNG.
///
/// The cross product is encoded through the batched encoder, grouped by
/// template length; the mean is over all rows, so grouping changes nothing
/// about the loss value beyond float summation order.
pub fn batch_loss(
    model: &ConanModel,
    graph: &mut Graph,
    patterns: &[&PatternSpec],
    examples: &[&TokenizedExample],
    head_dropout: f64,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    if patterns.is_empty() || examples.is_empty() {
        return Err(Error::Config(
            "batch_loss needs at least one pattern and one example".into(),
        ));
    }
    let mut wrapped = Vec::with_capacity(patterns.len() * examples.len());
    let mut label_of = Vec::with_capacity(wrapped.capacity());
    for spec in patterns {
        for example in examples {
            if example.label > 1 {
                return Err(Error::InvalidLabel(example.label));
            }
            let ids = wrap_sequence(&build_template(spec, &example.premise, &example.hypothesis));
            if ids.len() > model.config.max_len {
                return Err(Error::TemplateTooLong {
                    pair_id: example.pair_id.clone(),
                    len: ids.len(),
                    max_len: model.config.max_len,
                });
            }
            wrapped.push(ids);
            label_of.push(example.label);
        }
    }

    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, ids) in wrapped.iter().enumerate() {
        by_len.entry(ids.len()).or_default().push(i);
    }
    let mut pooled_groups = Vec::with_capacity(by_len.len());
    let mut labels = Vec::with_capacity(label_of.len());
    for indices in by_len.values() {
        let seqs: Vec<&[usize]> = indices.iter().map(|&i| wrapped[i].as_slice()).collect();
        pooled_groups.push(encode_batch(
            &model.config,
            &model.encoder,
            graph,
            &seqs,
            training,
            rng,
        )?);
        labels.extend(indices.iter().map(|&i| label_of[i]));
    }
    let stacked = if pooled_groups.len() == 1 {
        pooled_groups.pop().expect("one group")
    } else {
        graph.concat_rows(&pooled_groups)?
    };
    let logits = {
        let dropped = graph.dropout(&stacked, head_dropout, training, rng)?;
        let projected = graph.matmul(&dropped, &model.head.w)?;
        graph.add(&projected, &model.head.b)?
    };
    graph.nll_from_logits(&logits, &labels)
}

/// Percent-AUC of the model on a labeled example set (eval mode).
pub fn dev_auc_percent(model: &ConanModel, examples: &[TokenizedExample]) -> Result<f64> {
    let scored = model.score_examples(examples)?;
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let labels: Vec<u8> = scored.iter().map(|s| s.label).collect();
    Ok(auc_percent(auc_p50(&pr_curve(&scores, &labels)?)))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains the model in place.
///
/// Each epoch shuffles the examples and the patterns once, then walks the
/// data in `batch_size` chunks; for every data chunk it walks the patterns
/// in `pattern_batch` chunks, computing one cross-product loss per pattern
/// chunk. Losses are scaled by `1/accum` and their gradients accumulate;
/// every `accum` losses the optimizer steps. A window still open when the
/// epoch ends is flushed with a final step, so development evaluation always
/// sees fully applied gradients.
///
/// Records the unscaled loss per step and the dev percent-AUC per epoch;
/// aborts with a diagnostic if the loss leaves the finite range.
pub fn train(
    model: &ConanModel,
    train_examples: &[TokenizedExample],
    dev_examples: &[TokenizedExample],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate(model.n())?;
    if train_examples.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if dev_examples.is_empty() {
        return Err(Error::EmptySplit("dev".into()));
    }

    let params = model.named_params();
    let mut adam = AdamState::new(&params);
    let mut example_rng = stream_rng(config.seed, 0);
    let mut pattern_rng = stream_rng(config.seed, 1);
    let mut dropout_rng = stream_rng(config.seed, 2);
    model.zero_grad();

    let mut records = Vec::new();
    let mut step = 0usize;
    let mut pending = 0usize;
    let inv_accum = 1.0 / config.accum as f64;

    for epoch in 1..=config.epochs {
        let mut example_order: Vec<usize> = (0..train_examples.len()).collect();
        example_order.shuffle(&mut example_rng);
        let mut pattern_order: Vec<usize> = (0..model.n()).collect();
        pattern_order.shuffle(&mut pattern_rng);

        for chunk in example_order.chunks(config.batch_size) {
            let examples: Vec<&TokenizedExample> =
                chunk.iter().map(|&i| &train_examples[i]).collect();
            for pattern_chunk in pattern_order.chunks(config.pattern_batch) {
                let patterns: Vec<&PatternSpec> = pattern_chunk
                    .iter()
                    .map(|&i| &model.patterns()[i])
                    .collect();
                let mut graph = Graph::new();
                let loss = batch_loss(
                    model,
                    &mut graph,
                    &patterns,
                    &examples,
                    config.dropout,
                    true,
                    &mut dropout_rng,
                )?;
                let value = loss.item();
                step += 1;
                if !value.is_finite() {
                    return Err(Error::Diverged {
                        step,
                        loss: value,
                        lr: config.lr,
                    });
                }
                records.push(HistoryRecord::Step { step, loss: value });
                let scaled = graph.scale(&loss, inv_accum);
                graph.backward(&scaled)?;
                pending += 1;
                if pending == config.accum {
                    adam.step(&params, config.lr, config.weight_decay);
                    model.zero_grad();
                    pending = 0;
                }
            }
        }
        if pending > 0 {
            adam.step(&params, config.lr, config.weight_decay);
            model.zero_grad();
            pending = 0;
        }
        let dev_auc = dev_auc_percent(model, dev_examples)?;
        records.push(HistoryRecord::DevEval { epoch, dev_auc });
    }
    Ok(TrainHistory { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_tokenizer, synthesize_toy_dataset, DatasetSplit, RuleTable};
    use crate::encoder::EncoderConfig;
    use crate::patterning::Family;

    fn small_config(vocab: usize) -> EncoderConfig {
        let mut config = EncoderConfig::toy(vocab);
        config.d_model = 32;
        config.d_ff = 64;
        config.n_heads = 2;
        config
    }

    fn tokenized(split: &DatasetSplit, tok: &crate::data::Tokenizer) -> Vec<TokenizedExample> {
        split
            .examples
            .iter()
            .map(|e| tok.encode_example(e).unwrap())
            .collect()
    }

    fn toy_examples(n: usize) -> Vec<TokenizedExample> {
        (0..n)
            .map(|i| TokenizedExample {
                premise: vec![4 + (i % 7), 5 + (i % 3)],
                hypothesis: vec![6 + (i % 5)],
                label: (i % 2) as u8,
                pair_id: format!("train-{}", i + 1),
            })
            .collect()
    }

    #[test]
    fn zero_head_batch_loss_is_ln_two() {
        let model = ConanModel::init(&small_config(20), Family::Beta, 2, 2, 0).unwrap();
        model.head.w.set_values(&vec![0.0; 32 * 2]).unwrap();
        model.head.b.set_values(&[0.0, 0.0]).unwrap();
        let examples = toy_examples(4);
        let example_refs: Vec<&TokenizedExample> = examples.iter().collect();
        let patterns: Vec<&PatternSpec> = model.patterns().iter().collect();
        let mut graph = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = batch_loss(
            &model,
            &mut graph,
            &patterns,
            &example_refs,
            0.0,
            false,
            &mut rng,
        )
        .unwrap();
        assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_instance_loss_is_minus_log_probability() {
        let model = ConanModel::init(&small_config(20), Family::Beta, 1, 1, 3).unwrap();
        let examples = toy_examples(1);
        let (p0, p1) = model
            .pattern_probabilities(&examples[0].premise, &examples[0].hypothesis)
            .unwrap()[0];
        let expected = if examples[0].label == 1 { -p1.ln() } else { -p0.ln() };
        let mut graph = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = batch_loss(
            &model,
            &mut graph,
            &[&model.patterns()[0]],
            &[&examples[0]],
            0.0,
            false,
            &mut rng,
        )
        .unwrap();
        assert!((loss.item() - expected).abs() < 1e-12);
    }

    #[test]
    fn batch_loss_is_the_mean_of_instance_losses() {
        let model = ConanModel::init(&small_config(20), Family::Alpha, 2, 3, 5).unwrap();
        let examples = toy_examples(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut singles = Vec::new();
        for spec in model.patterns() {
            for ex in &examples {
                let mut graph = Graph::new();
                let loss =
                    batch_loss(&model, &mut graph, &[spec], &[ex], 0.0, false, &mut rng).unwrap();
                singles.push(loss.item());
            }
        }
        let mut graph = Graph::new();
        let patterns: Vec<&PatternSpec> = model.patterns().iter().collect();
        let example_refs: Vec<&TokenizedExample> = examples.iter().collect();
        let joint = batch_loss(
            &model,
            &mut graph,
            &patterns,
            &example_refs,
            0.0,
            false,
            &mut rng,
        )
        .unwrap();
        let mean = singles.iter().sum::<f64>() / singles.len() as f64;
        assert!((joint.item() - mean).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_matches_the_hand_trace() {
        let p = Tensor::new(&[1], vec![1.0], true).unwrap();
        p.accumulate_grad(&[1.0]);
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = AdamState::new(&params);
        adam.step(&params, 0.1, 0.0);
        // first step: m̂ = g, v̂ = g², so the move is lr·g/(|g|+ε)
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + ADAM_EPS) + 0.0);
        assert_eq!(p.values()[0], expected);
        assert!((p.values()[0] - 0.9).abs() < 1e-8);
        assert_eq!(adam.t(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged_without_decay() {
        let p = Tensor::new(&[2], vec![1.5, -2.5], true).unwrap();
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = AdamState::new(&params);
        adam.step(&params, 0.1, 0.0);
        assert_eq!(p.values(), vec![1.5, -2.5]);
    }

    #[test]
    fn zero_gradient_with_decay_shrinks_multiplicatively() {
        let p = Tensor::new(&[1], vec![1.0], true).unwrap();
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = AdamState::new(&params);
        adam.step(&params, 0.1, 0.05);
        let expected = 1.0 - 0.1 * (0.0 / (0.0f64.sqrt() + ADAM_EPS) + 0.05 * 1.0);
        assert_eq!(p.values()[0], expected);
        assert!((p.values()[0] - 0.995).abs() < 1e-12);
    }

    #[test]
    fn presets_carry_the_published_hyperparameters() {
        let base_sherliic = TrainConfig::preset("base-sherliic", 0).unwrap();
        assert_eq!(base_sherliic.lr, 2.28e-5);
        assert_eq!(base_sherliic.weight_decay, 6.52e-2);
        assert_eq!(base_sherliic.accum, 2);
        assert_eq!(base_sherliic.batch_size, 10);
        let large_levyholt = TrainConfig::preset("large-levyholt", 0).unwrap();
        assert_eq!(large_levyholt.lr, 4.55e-6);
        assert_eq!(large_levyholt.weight_decay, 3.90e-4);
        assert_eq!(large_levyholt.accum, 2);
        assert_eq!(large_levyholt.batch_size, 2);
        for name in TrainConfig::preset_names() {
            let preset = TrainConfig::preset(name, 7).unwrap();
            assert_eq!(preset.epochs, 5);
            assert_eq!(preset.pattern_batch, 5);
            assert_eq!(preset.dropout, 0.1);
            assert_eq!(preset.seed, 7);
            preset.validate(5).unwrap();
        }
        assert!(TrainConfig::preset("base-unknown", 0).is_none());
    }

    #[test]
    fn config_validation_rejects_bad_ranges() {
        let mut config = TrainConfig::toy(0);
        config.pattern_batch = 6;
        assert!(config.validate(5).is_err());
        config.pattern_batch = 5;
        config.lr = 0.0;
        assert!(config.validate(5).is_err());
        config.lr = 3e-4;
        config.weight_decay = -0.1;
        assert!(config.validate(5).is_err());
        config.weight_decay = 0.0;
        config.epochs = 0;
        assert!(config.validate(5).is_err());
        config.epochs = 1;
        config.validate(5).unwrap();
    }

    fn tiny_task(
        seed: u64,
        model_seed: u64,
    ) -> (ConanModel, Vec<TokenizedExample>, Vec<TokenizedExample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = synthesize_toy_dataset(&RuleTable::builtin_main(), 60, 0.5, &mut rng).unwrap();
        let tok = build_tokenizer(data.texts(), 200, true).unwrap();
        let train_examples = tokenized(&data.train, &tok);
        let dev_examples = tokenized(&data.dev, &tok);
        let base = small_config(tok.vocab_size());
        let model = ConanModel::init(&base, Family::Beta, 2, 1, model_seed).unwrap();
        (model, train_examples, dev_examples)
    }

    #[test]
    fn training_reduces_the_loss_on_a_separable_task() {
        let (model, train_examples, dev_examples) = tiny_task(1, 2);
        let mut config = TrainConfig::toy(3);
        config.epochs = 6;
        config.pattern_batch = 2;
        config.lr = 3e-3;
        let history = train(&model, &train_examples, &dev_examples, &config).unwrap();
        let losses = history.step_losses();
        assert_eq!(losses.len(), 6 * 5); // 42 examples -> 5 batches x 1 pattern chunk
        let first: f64 = losses[..5].iter().sum::<f64>() / 5.0;
        let last: f64 = losses[losses.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(
            last < first,
            "no improvement: first-epoch mean {first}, last-epoch mean {last}"
        );
        assert_eq!(history.dev_aucs().len(), 6);
    }

    #[test]
    fn same_seed_reproduces_the_identical_history() {
        let run = |train_seed: u64| {
            let (model, train_examples, dev_examples) = tiny_task(4, 5);
            let mut config = TrainConfig::toy(train_seed);
            config.epochs = 2;
            config.pattern_batch = 2;
            train(&model, &train_examples, &dev_examples, &config).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn accumulation_matches_an_equivalent_larger_batch() {
        let make = || {
            let (model, mut train_examples, dev_examples) = tiny_task(6, 7);
            train_examples.truncate(20);
            (model, train_examples, dev_examples)
        };
        let final_params = |accum: usize, batch_size: usize| -> Vec<Vec<f64>> {
            let (model, train_examples, dev_examples) = make();
            let mut config = TrainConfig::toy(11);
            config.epochs = 2;
            config.pattern_batch = 2;
            config.dropout = 0.0;
            config.accum = accum;
            config.batch_size = batch_size;
            // disable encoder-internal dropout so the only difference is
            // the accumulation arithmetic
            assert_eq!(model.config.internal_dropout, 0.1);
            let mut deterministic = model;
            deterministic.config.internal_dropout = 0.0;
            train(&deterministic, &train_examples, &dev_examples, &config).unwrap();
            deterministic
                .named_params()
                .iter()
                .map(|(_, t)| t.values())
                .collect()
        };
        let accumulated = final_params(2, 5);
        let onestep = final_params(1, 10);
        let mut worst: f64 = 0.0;
        for (a, b) in accumulated.iter().zip(&onestep) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst <= 1e-10, "trajectories diverged by {worst}");
    }

    #[test]
    fn divergence_is_reported_with_its_step() {
        let (model, train_examples, dev_examples) = tiny_task(8, 9);
        let mut config = TrainConfig::toy(12);
        config.epochs = 4;
        config.pattern_batch = 2;
        config.batch_size = 2;
        // lr·λ ≫ 1 turns decay into multiplicative growth: parameters
        // overflow to infinity within a couple dozen steps and the next
        // forward pass goes NaN (layer norm absorbs a high lr on its own)
        config.lr = 1e8;
        config.weight_decay = 1e4;
        let err = train(&model, &train_examples, &dev_examples, &config).unwrap_err();
        match err {
            Error::Diverged { step, lr, .. } => {
                assert!(step >= 1);
                assert_eq!(lr, 1e8);
            }
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn history_serializes_to_one_json_object_per_line() {
        let history = TrainHistory {
            records: vec![
                HistoryRecord::Step { step: 1, loss: 0.7 },
                HistoryRecord::DevEval {
                    epoch: 1,
                    dev_auc: 42.5,
                },
            ],
        };
        let jsonl = history.to_jsonl();
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines[0], r#"{"step":1,"loss":0.7}"#);
        assert_eq!(lines[1], r#"{"epoch":1,"dev_auc":42.5}"#);
        let back: TrainHistory = TrainHistory {
            records: jsonl
                .lines()
                .map(|l| serde_json::from_str(l).unwrap())
                .collect(),
        };
        assert_eq!(back, history);
    }

    #[test]
    fn oversized_templates_name_the_offending_example() {
        let model = ConanModel::init(&small_config(20), Family::Beta, 1, 1, 0).unwrap();
        let long = TokenizedExample {
            premise: (0..model.config.max_len).map(|i| 4 + (i % 10)).collect(),
            hypothesis: vec![4],
            label: 1,
            pair_id: "train-77".into(),
        };
        let mut graph = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = batch_loss(
            &model,
            &mut graph,
            &[&model.patterns()[0]],
            &[&long],
            0.0,
            false,
            &mut rng,
        )
        .unwrap_err();
        match err {
            Error::TemplateTooLong { pair_id, .. } => assert_eq!(pair_id, "train-77"),
            other => panic!("expected a template-length error, got {other}"),
        }
    }
}
