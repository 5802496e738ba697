//! Pattern vocabulary extension and template assembly.
//!
//! A model owns `n` patterns of `k` slot tokens each. In continuous mode the
//! slots are fresh vocabulary entries appended after the base vocabulary —
//! their embedding rows are the only capacity the model adds, `n·k·d`
//! parameters in total. In discrete mode the slots reuse existing vocabulary
//! ids (the token ids of a fixed textual pattern), which still train but are
//! shared with the running text.
//!
//! Two template families arrange the slots around a premise `p` and a
//! hypothesis `h`:
//!
//! * `alpha`: splits the slots into a prefix of `⌊k/3⌋`, an infix of
//!   `⌊k/3⌋ + (k mod 3)`, and a suffix of `⌊k/3⌋` tokens, producing
//!   `c… p c… h c…`;
//! * `beta`: places all slots between the two sentences, `p c… h`.
//!
//! For `k ≤ 2` the alpha split has empty prefix and suffix, so the families
//! coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Template family: how slot tokens interleave with the sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Alpha,
    Beta,
    /// Beta-shaped template over pre-existing vocabulary ids.
    Discrete,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Alpha => "alpha",
            Family::Beta => "beta",
            Family::Discrete => "discrete",
        })
    }
}

/// One pattern: a family plus the `k` vocabulary ids filling its slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub family: Family,
    pub k: usize,
    pub tokens: Vec<usize>,
}

impl PatternSpec {
    pub fn new(family: Family, tokens: Vec<usize>) -> PatternSpec {
        PatternSpec {
            family,
            k: tokens.len(),
            tokens,
        }
    }
}

/// Bookkeeping for `n` patterns of `k` fresh tokens appended after a base
/// vocabulary of `base_size` entries. Pattern `i` owns ids
/// `base_size + i·k .. base_size + (i+1)·k`; ownership is disjoint by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabularyExtension {
    base_size: usize,
    n: usize,
    k: usize,
    c_ids: Vec<Vec<usize>>,
}

/// Allocates `n` patterns of `k` fresh token ids each.
pub fn extend_vocabulary(base_size: usize, n: usize, k: usize) -> Result<VocabularyExtension> {
    if n == 0 {
        return Err(Error::Config(
            "a model needs at least one pattern (n >= 1)".into(),
        ));
    }
    let c_ids = (0..n)
        .map(|i| (0..k).map(|j| base_size + i * k + j).collect())
        .collect();
    Ok(VocabularyExtension {
        base_size,
        n,
        k,
        c_ids,
    })
}

impl VocabularyExtension {
    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Vocabulary size after extension: `base_size + n·k`.
    pub fn total_size(&self) -> usize {
        self.base_size + self.n * self.k
    }

    /// Slot ids per pattern, row-major.
    pub fn c_ids(&self) -> &[Vec<usize>] {
        &self.c_ids
    }

    /// Embedding parameters the extension adds for model width `d`: `n·k·d`.
    pub fn added_embedding_parameters(&self, d: usize) -> usize {
        self.n * self.k * d
    }

    /// One [`PatternSpec`] per pattern, all in the given family.
    pub fn pattern_specs(&self, family: Family) -> Vec<PatternSpec> {
        self.c_ids
            .iter()
            .map(|ids| PatternSpec::new(family, ids.clone()))
            .collect()
    }
}

/// Slot counts `(prefix, infix, suffix)` of the alpha split for `k` slots:
/// `(⌊k/3⌋, ⌊k/3⌋ + k mod 3, ⌊k/3⌋)`. The three always sum to `k`.
pub fn segment_lengths(k: usize) -> (usize, usize, usize) {
    let a = k / 3;
    (a, a + k % 3, a)
}

/// Interleaves a pattern's slot tokens with premise and hypothesis ids.
///
/// The result excludes sequence delimiters; the encoder wraps it in BOS/EOS
/// when scoring. Length is always `|p| + |h| + k`. With `k = 0` every family
/// degenerates to plain concatenation `p h`.
pub fn build_template(spec: &PatternSpec, p: &[usize], h: &[usize]) -> Vec<usize> {
    assert!(!p.is_empty() && !h.is_empty(), "premise and hypothesis must be non-empty");
    assert_eq!(spec.tokens.len(), spec.k, "pattern token count must equal k");
    let mut out = Vec::with_capacity(p.len() + h.len() + spec.k);
    match spec.family {
        Family::Alpha => {
            let (a, b, _) = segment_lengths(spec.k);
            out.extend_from_slice(&spec.tokens[..a]);
            out.extend_from_slice(p);
            out.extend_from_slice(&spec.tokens[a..a + b]);
            out.extend_from_slice(h);
            out.extend_from_slice(&spec.tokens[a + b..]);
        }
        Family::Beta | Family::Discrete => {
            out.extend_from_slice(p);
            out.extend_from_slice(&spec.tokens);
            out.extend_from_slice(h);
        }
    }
    out
}
