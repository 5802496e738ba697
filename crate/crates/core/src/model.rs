//! The assembled model: an encoder over the extended vocabulary, the
//! two-way classifier head, and the pattern set (continuous or discrete)
//! that turns a premise/hypothesis pair into encoder inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::classifier::{self, ClassifierHead, ScoredPair};
use crate::data::{wrap_sequence, TokenizedExample};
use crate::encoder::{init_params_from_rng, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::patterning::{build_template, extend_vocabulary, Family, PatternSpec};

/// A complete entailment model.
///
/// `config.vocab_size` counts the extended vocabulary: `base_vocab` real
/// tokens plus, for the continuous families, one fresh embedding row per
/// pattern token. Discrete patterns reuse existing rows, so there the two
/// sizes coincide.
#[derive(Debug)]
pub struct ConanModel {
    pub config: EncoderConfig,
    pub encoder: EncoderParams,
    pub head: ClassifierHead,
    patterns: Vec<PatternSpec>,
    base_vocab: usize,
}

impl ConanModel {
    /// Initializes a continuous-pattern model (`alpha` or `beta` family):
    /// the base vocabulary of `base_config` grows by `n·k` fresh token rows,
    /// and all parameters are drawn from one seeded stream (encoder first,
    /// head last), so equal seeds give bit-identical models.
    pub fn init(
        base_config: &EncoderConfig,
        family: Family,
        n: usize,
        k: usize,
        seed: u64,
    ) -> Result<ConanModel> {
        if family == Family::Discrete {
            return Err(Error::Config(
                "discrete patterns are built from token sequences; use init_discrete".into(),
            ));
        }
        let extension = extend_vocabulary(base_config.vocab_size, n, k)?;
        let mut config = base_config.clone();
        config.vocab_size = extension.total_size();
        let patterns = extension.pattern_specs(family);
        Self::assemble(config, patterns, base_config.vocab_size, seed)
    }

    /// Initializes a discrete-pattern model. Every pattern is a sequence of
    /// existing token ids (typically a tokenized natural-language phrase);
    /// their embedding rows stay trainable but no rows are added.
    pub fn init_discrete(
        base_config: &EncoderConfig,
        token_patterns: &[Vec<usize>],
        seed: u64,
    ) -> Result<ConanModel> {
        if token_patterns.is_empty() {
            return Err(Error::Config(
                "a model needs at least one pattern (n >= 1)".into(),
            ));
        }
        for tokens in token_patterns {
            if let Some(&bad) = tokens.iter().find(|&&id| id >= base_config.vocab_size) {
                return Err(Error::IndexOutOfRange {
                    id: bad,
                    size: base_config.vocab_size,
                });
            }
        }
        let patterns = token_patterns
            .iter()
            .map(|tokens| PatternSpec::new(Family::Discrete, tokens.clone()))
            .collect();
        Self::assemble(base_config.clone(), patterns, base_config.vocab_size, seed)
    }

    fn assemble(
        config: EncoderConfig,
        patterns: Vec<PatternSpec>,
        base_vocab: usize,
        seed: u64,
    ) -> Result<ConanModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = init_params_from_rng(&config, &mut rng)?;
        let head = ClassifierHead::init(config.d_model, &mut rng);
        Ok(ConanModel {
            config,
            encoder,
            head,
            patterns,
            base_vocab,
        })
    }

    pub fn patterns(&self) -> &[PatternSpec] {
        &self.patterns
    }

    /// Number of patterns n.
    pub fn n(&self) -> usize {
        self.patterns.len()
    }

    /// Size of the vocabulary before pattern extension.
    pub fn base_vocab(&self) -> usize {
        self.base_vocab
    }

    pub fn family(&self) -> Family {
        self.patterns[0].family
    }

    /// Every trainable tensor, deterministically named and ordered: the
    /// encoder tensors first, then the head weight and bias.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.encoder.named_params();
        out.push(("head_w".to_string(), self.head.w.clone()));
        out.push(("head_b".to_string(), self.head.b.clone()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Clears every accumulated gradient.
    pub fn zero_grad(&self) {
        for (_, t) in self.named_params() {
            t.zero_grad();
        }
    }

    /// Eval-mode per-pattern probabilities `(P(0), P(1))` for one example.
    pub fn pattern_probabilities(
        &self,
        premise: &[usize],
        hypothesis: &[usize],
    ) -> Result<Vec<(f64, f64)>> {
        let wrapped: Vec<Vec<usize>> = self
            .patterns
            .iter()
            .map(|spec| wrap_sequence(&build_template(spec, premise, hypothesis)))
            .collect();
        classifier::batch_probabilities(&self.config, &self.encoder, &self.head, &wrapped)
    }

    /// Eval-mode combined score `s ∈ [-1, 1]` for one example.
    pub fn score(&self, premise: &[usize], hypothesis: &[usize]) -> Result<f64> {
        Ok(classifier::combine_patterns(
            &self.pattern_probabilities(premise, hypothesis)?,
        ))
    }

    /// Scores a whole split, pairing each score with its id and gold label.
    /// All (example × pattern) encodings run through the batched encoder.
    pub fn score_examples(&self, examples: &[TokenizedExample]) -> Result<Vec<ScoredPair>> {
        let n = self.patterns.len();
        let mut wrapped = Vec::with_capacity(examples.len() * n);
        for e in examples {
            for spec in &self.patterns {
                wrapped.push(wrap_sequence(&build_template(spec, &e.premise, &e.hypothesis)));
            }
        }
        let probs =
            classifier::batch_probabilities(&self.config, &self.encoder, &self.head, &wrapped)?;
        Ok(examples
            .iter()
            .enumerate()
            .map(|(i, e)| ScoredPair {
                pair_id: e.pair_id.clone(),
                score: classifier::combine_patterns(&probs[i * n..(i + 1) * n]),
                label: e.label,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(vocab: usize) -> EncoderConfig {
        let mut config = EncoderConfig::toy(vocab);
        config.d_model = 32;
        config.d_ff = 64;
        config.n_heads = 2;
        config
    }

    #[test]
    fn continuous_init_extends_the_vocabulary() {
        let base = base_config(40);
        let model = ConanModel::init(&base, Family::Beta, 5, 2, 0).unwrap();
        assert_eq!(model.config.vocab_size, 50);
        assert_eq!(model.base_vocab(), 40);
        assert_eq!(model.n(), 5);
        assert_eq!(model.family(), Family::Beta);
        for spec in model.patterns() {
            assert_eq!(spec.k, 2);
            assert!(spec.tokens.iter().all(|&id| (40..50).contains(&id)));
        }
    }

    #[test]
    fn added_parameters_are_n_k_d_exactly() {
        let base = base_config(40);
        let with_patterns = ConanModel::init(&base, Family::Alpha, 5, 3, 1).unwrap();
        let concat_control = ConanModel::init(&base, Family::Alpha, 5, 0, 1).unwrap();
        assert_eq!(
            with_patterns.num_parameters() - concat_control.num_parameters(),
            5 * 3 * base.d_model
        );
    }

    #[test]
    fn discrete_init_adds_no_parameters() {
        let base = base_config(40);
        let discrete =
            ConanModel::init_discrete(&base, &[vec![4, 5], vec![6, 7]], 2).unwrap();
        let concat = ConanModel::init(&base, Family::Beta, 2, 0, 2).unwrap();
        assert_eq!(discrete.config.vocab_size, 40);
        assert_eq!(discrete.num_parameters(), concat.num_parameters());
        assert_eq!(discrete.family(), Family::Discrete);
    }

    #[test]
    fn discrete_ids_must_exist_in_the_vocabulary() {
        let base = base_config(40);
        let err = ConanModel::init_discrete(&base, &[vec![4, 40]], 0).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { id: 40, size: 40 }));
        assert!(ConanModel::init_discrete(&base, &[], 0).is_err());
    }

    #[test]
    fn same_seed_gives_bit_identical_models() {
        let base = base_config(30);
        let a = ConanModel::init(&base, Family::Beta, 2, 2, 9).unwrap();
        let b = ConanModel::init(&base, Family::Beta, 2, 2, 9).unwrap();
        let c = ConanModel::init(&base, Family::Beta, 2, 2, 10).unwrap();
        let flat = |m: &ConanModel| -> Vec<u64> {
            m.named_params()
                .iter()
                .flat_map(|(_, t)| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c));
    }

    #[test]
    fn named_params_end_with_the_head() {
        let base = base_config(30);
        let model = ConanModel::init(&base, Family::Alpha, 1, 1, 0).unwrap();
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "token_embeddings");
        assert_eq!(names[names.len() - 2], "head_w");
        assert_eq!(names[names.len() - 1], "head_b");
        let unique: std::collections::BTreeSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), names.len(), "parameter names must be unique");
    }

    #[test]
    fn zero_grad_clears_every_gradient() {
        use crate::autodiff::Graph;
        let base = base_config(30);
        let model = ConanModel::init(&base, Family::Beta, 1, 1, 3).unwrap();
        let mut graph = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pooled = classifier::pooled_vector(
            &model.config,
            &model.encoder,
            &mut graph,
            &model.patterns()[0],
            &[4, 5],
            &[6],
            false,
            &mut rng,
        )
        .unwrap();
        let logits = classifier::class_logits(&mut graph, &pooled, &model.head, false, &mut rng)
            .unwrap();
        let loss = graph.nll_from_logits(&logits, &[1]).unwrap();
        graph.backward(&loss).unwrap();
        assert!(model.head.w.grad().is_some());
        model.zero_grad();
        assert!(model.named_params().iter().all(|(_, t)| t.grad().is_none()));
    }

    #[test]
    fn scoring_respects_the_unit_interval() {
        let base = base_config(30);
        let model = ConanModel::init(&base, Family::Alpha, 3, 4, 5).unwrap();
        let s = model.score(&[4, 5, 6], &[7, 8]).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        let probs = model.pattern_probabilities(&[4, 5, 6], &[7, 8]).unwrap();
        assert_eq!(probs.len(), 3);
        for (p0, p1) in probs {
            assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }
    }
}
