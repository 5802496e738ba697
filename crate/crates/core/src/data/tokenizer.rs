//! Word-level tokenizer with reserved delimiter ids.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

use super::{Example, BOS_ID, EOS_ID, RESERVED_TOKENS, UNK_ID};

/// Maps between surface tokens and contiguous ids. Ids 0–3 are reserved for
/// BOS/EOS/UNK/PAD; real tokens start at 4, ordered by descending corpus
/// frequency with lexicographic tie-breaks, so the mapping is a pure
/// function of the corpus.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    lowercase: bool,
}

/// An [`Example`] with its sentences encoded to token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedExample {
    pub premise: Vec<usize>,
    pub hypothesis: Vec<usize>,
    pub label: u8,
    pub pair_id: String,
}

/// Splits a text into word-level tokens: maximal alphanumeric runs, plus
/// every other non-whitespace character as its own token.
fn split_words(text: &str, lowercase: bool) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            for lc in if lowercase {
                c.to_lowercase().collect::<Vec<_>>()
            } else {
                vec![c]
            } {
                word.push(lc);
            }
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Builds a tokenizer from a corpus, keeping at most `max_vocab` entries
/// (including the four reserved ids).
pub fn build_tokenizer<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    max_vocab: usize,
    lowercase: bool,
) -> Result<Tokenizer> {
    if max_vocab <= RESERVED_TOKENS.len() {
        return Err(Error::Config(format!(
            "max_vocab must exceed the {} reserved ids",
            RESERVED_TOKENS.len()
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        for token in split_words(text, lowercase) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // descending frequency, ascending token on ties (BTreeMap iteration
    // already sorted the tokens, and the sort below is stable)
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(max_vocab - RESERVED_TOKENS.len());

    let mut tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(ranked.into_iter().map(|(t, _)| t));
    Ok(Tokenizer::from_vocab(tokens, lowercase))
}

impl Tokenizer {
    /// Rebuilds a tokenizer from an id-ordered vocabulary (as stored in a
    /// checkpoint). The first four entries must be the reserved tokens.
    pub fn from_vocab(tokens: Vec<String>, lowercase: bool) -> Tokenizer {
        debug_assert!(tokens.len() >= RESERVED_TOKENS.len());
        debug_assert!(RESERVED_TOKENS
            .iter()
            .zip(&tokens)
            .all(|(expected, got)| expected == got));
        let lookup = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Tokenizer {
            tokens,
            lookup,
            lowercase,
        }
    }

    /// Vocabulary size including reserved ids.
    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    /// Id-ordered vocabulary.
    pub fn vocab(&self) -> &[String] {
        &self.tokens
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    /// Surface form of an id, if it exists.
    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Encodes a text to ids; unseen tokens map to `UNK_ID`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        split_words(text, self.lowercase)
            .into_iter()
            .map(|t| self.lookup.get(&t).copied().unwrap_or(UNK_ID))
            .collect()
    }

    /// Space-joined surface forms of the ids.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED_TOKENS[UNK_ID]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Encodes both sentences of an example, rejecting empty results.
    pub fn encode_example(&self, example: &Example) -> Result<TokenizedExample> {
        let premise = self.encode(&example.premise);
        let hypothesis = self.encode(&example.hypothesis);
        if premise.is_empty() {
            return Err(Error::EmptyText {
                pair_id: example.pair_id.clone(),
                field: "premise",
            });
        }
        if hypothesis.is_empty() {
            return Err(Error::EmptyText {
                pair_id: example.pair_id.clone(),
                field: "hypothesis",
            });
        }
        Ok(TokenizedExample {
            premise,
            hypothesis,
            label: example.label,
            pair_id: example.pair_id.clone(),
        })
    }
}

/// Wraps a template in BOS/EOS delimiters for the encoder.
pub fn wrap_sequence(template: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(template.len() + 2);
    out.push(BOS_ID);
    out.extend_from_slice(template);
    out.push(EOS_ID);
    out
}
