//! Datasets: TSV ingestion, typed-placeholder instantiation, tokenization
//! and a synthetic premise/hypothesis generator.
//!
//! The on-disk format is a headerless UTF-8 TSV with one
//! `premise \t hypothesis \t label` triple per line, labels in `{0, 1}`.
//! Premises may contain typed placeholders like `{A:person}`; instantiation
//! replaces each placeholder variable with a concrete name from a pool,
//! consistently within an example and never assigning two variables the same
//! name.

mod synth;
mod tokenizer;

pub use synth::{
    synthesize_toy_dataset, RuleTable, ToyDataset, DEFAULT_NEGATIVE_RATE, MIN_DATASET_SIZE,
};
pub use tokenizer::{build_tokenizer, wrap_sequence, Tokenizer, TokenizedExample};

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Sequence-start delimiter id.
pub const BOS_ID: usize = 0;
/// Sequence-end delimiter id.
pub const EOS_ID: usize = 1;
/// Out-of-vocabulary id.
pub const UNK_ID: usize = 2;
/// Padding id (reserved; sequences are processed unpadded).
pub const PAD_ID: usize = 3;
/// Surface forms of the reserved ids, in id order.
pub const RESERVED_TOKENS: [&str; 4] = ["<bos>", "<eos>", "<unk>", "<pad>"];

/// One labeled premise/hypothesis pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub premise: String,
    pub hypothesis: String,
    /// 1 = entailment, 0 = no entailment.
    pub label: u8,
    /// Stable identifier, `{split}-{line}`.
    pub pair_id: String,
}

/// Label counts for a split.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SplitStats {
    pub total: usize,
    pub positives: usize,
    pub negatives: usize,
    pub positive_rate: f64,
}

/// A named collection of examples (train, dev or test).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: String,
    pub examples: Vec<Example>,
}

impl DatasetSplit {
    pub fn stats(&self) -> SplitStats {
        let total = self.examples.len();
        let positives = self.examples.iter().filter(|e| e.label == 1).count();
        SplitStats {
            total,
            positives,
            negatives: total - positives,
            positive_rate: if total == 0 {
                0.0
            } else {
                positives as f64 / total as f64
            },
        }
    }
}

/// Reads a headerless `premise \t hypothesis \t label` TSV. Line numbers in
/// errors and pair ids are 1-based. The parse is lossless: [`write_tsv`] of
/// the result reproduces the input byte for byte (modulo a trailing newline).
pub fn load_tsv(path: &Path, split_name: &str) -> Result<DatasetSplit> {
    let raw = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut examples = Vec::new();
    for (idx, line) in raw.split('\n').enumerate() {
        if line.is_empty() {
            continue; // trailing newline or blank line
        }
        let lineno = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: display.clone(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err("empty premise or hypothesis".into()));
        }
        let label = match fields[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(format!("label must be 0 or 1, found '{other}'"))),
        };
        examples.push(Example {
            premise: fields[0].to_string(),
            hypothesis: fields[1].to_string(),
            label,
            pair_id: format!("{split_name}-{lineno}"),
        });
    }
    if examples.is_empty() {
        return Err(Error::EmptySplit(display));
    }
    Ok(DatasetSplit {
        name: split_name.to_string(),
        examples,
    })
}

/// Serializes a split back to the TSV format accepted by [`load_tsv`].
pub fn write_tsv(path: &Path, split: &DatasetSplit) -> Result<()> {
    let mut out = String::new();
    for e in &split.examples {
        out.push_str(&e.premise);
        out.push('\t');
        out.push_str(&e.hypothesis);
        out.push('\t');
        out.push_str(if e.label == 1 { "1" } else { "0" });
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Typed name pools for placeholder instantiation, keyed by type tag.
#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct NamePool {
    pools: BTreeMap<String, Vec<String>>,
}

impl NamePool {
    /// The pool shipped with the crate (people, organizations, locations).
    pub fn builtin() -> NamePool {
        serde_json::from_str(include_str!("../../assets/name_pool.json"))
            .expect("shipped name pool is valid")
    }

    pub fn from_json_str(json: &str) -> Result<NamePool> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn from_path(path: &Path) -> Result<NamePool> {
        NamePool::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn names(&self, type_tag: &str) -> Option<&[String]> {
        self.pools.get(type_tag).map(Vec::as_slice)
    }
}

/// Replaces `{VAR:type}` placeholders in one text. Fresh assignments are
/// drawn from the pool; see [`instantiate_example`] for the variant that
/// keeps premise and hypothesis consistent.
pub fn instantiate_placeholders(
    text: &str,
    rng: &mut impl Rng,
    pool: &NamePool,
) -> Result<String> {
    let mut assignments = BTreeMap::new();
    substitute(text, rng, pool, &mut assignments)
}

/// Instantiates an example's premise and hypothesis with one shared variable
/// assignment, so `{A:…}` is the same entity in both sentences. Distinct
/// variables always receive distinct names.
pub fn instantiate_example(
    example: &Example,
    rng: &mut impl Rng,
    pool: &NamePool,
) -> Result<Example> {
    let mut assignments = BTreeMap::new();
    let premise = substitute(&example.premise, rng, pool, &mut assignments)?;
    let hypothesis = substitute(&example.hypothesis, rng, pool, &mut assignments)?;
    Ok(Example {
        premise,
        hypothesis,
        label: example.label,
        pair_id: example.pair_id.clone(),
    })
}

/// Instantiates every example of a split.
pub fn instantiate_split(
    split: &DatasetSplit,
    rng: &mut impl Rng,
    pool: &NamePool,
) -> Result<DatasetSplit> {
    let examples = split
        .examples
        .iter()
        .map(|e| instantiate_example(e, rng, pool))
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit {
        name: split.name.clone(),
        examples,
    })
}

/// Does this text contain at least one well-formed `{VAR:type}` placeholder?
pub fn has_placeholders(text: &str) -> bool {
    parse_placeholder_at(text, 0).is_some()
        || text
            .char_indices()
            .any(|(i, c)| c == '{' && parse_placeholder_at(text, i).is_some())
}

fn parse_placeholder_at(text: &str, start: usize) -> Option<(usize, String, String)> {
    // expects text[start] == '{'; returns (end_index_exclusive, var, type)
    let rest = &text[start..];
    if !rest.starts_with('{') {
        return None;
    }
    let close = rest.find('}')?;
    let inner = &rest[1..close];
    let (var, tag) = inner.split_once(':')?;
    let word_ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_');
    if word_ok(var) && word_ok(tag) {
        Some((start + close + 1, var.to_string(), tag.to_string()))
    } else {
        None
    }
}

fn substitute(
    text: &str,
    rng: &mut impl Rng,
    pool: &NamePool,
    assignments: &mut BTreeMap<String, String>,
) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let bytes = text.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some((end, var, tag)) = parse_placeholder_at(text, i) {
                if !assignments.contains_key(&var) {
                    let names = pool
                        .names(&tag)
                        .ok_or_else(|| Error::UnknownTypeTag(tag.clone()))?;
                    let taken: Vec<&String> = assignments.values().collect();
                    let fresh: Vec<&String> =
                        names.iter().filter(|n| !taken.contains(n)).collect();
                    if fresh.is_empty() {
                        return Err(Error::Generation(format!(
                            "name pool '{tag}' too small for distinct assignments"
                        )));
                    }
                    let pick = fresh[rng.gen_range(0..fresh.len())].clone();
                    assignments.insert(var.clone(), pick);
                }
                out.push_str(&assignments[&var]);
                i = end;
                continue;
            }
        }
        // copy one UTF-8 character verbatim
        let ch_len = text[i..].chars().next().map(char::len_utf8).unwrap_or(1);
        out.push_str(&text[i..i + ch_len]);
        i += ch_len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_temp(content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "conan-data-test-{}-{}",
            std::process::id(),
            content.len()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("split.tsv");
        std::fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn load_tsv_roundtrips_byte_for_byte() {
        let content = "alice runs acme\talice leads acme\t1\nbob knows carol\tbob owns carol\t0\n";
        let path = write_temp(content);
        let split = load_tsv(&path, "train").unwrap();
        assert_eq!(split.examples.len(), 2);
        assert_eq!(split.examples[0].pair_id, "train-1");
        assert_eq!(split.examples[1].label, 0);
        let out = path.with_extension("out.tsv");
        write_tsv(&out, &split).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), content.as_bytes());
    }

    #[test]
    fn load_tsv_reports_line_numbers() {
        let path = write_temp("a\tb\t1\nbad line here\n");
        let err = load_tsv(&path, "dev").unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        let path2 = write_temp("a\tb\t7\n");
        let err2 = load_tsv(&path2, "dev").unwrap_err().to_string();
        assert!(err2.contains(":1:") && err2.contains('7'), "{err2}");
    }

    #[test]
    fn load_tsv_rejects_empty_files_and_fields() {
        let path = write_temp("");
        assert!(matches!(
            load_tsv(&path, "train"),
            Err(Error::EmptySplit(_))
        ));
        let path2 = write_temp("\thyp\t1\n");
        assert!(load_tsv(&path2, "train").is_err());
    }

    #[test]
    fn split_stats_count_labels() {
        let path = write_temp("a\tb\t1\nc\td\t0\ne\tf\t0\n");
        let split = load_tsv(&path, "test").unwrap();
        let stats = split.stats();
        assert_eq!(stats.total, 3);
        assert_eq!(stats.positives, 1);
        assert_eq!(stats.negatives, 2);
        assert!((stats.positive_rate - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn placeholders_instantiate_consistently() {
        let pool = NamePool::from_json_str(
            r#"{"person": ["Alice", "Bob", "Carol"], "org": ["Acme", "Globex"]}"#,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let example = Example {
            premise: "{A:person} runs {B:org}".into(),
            hypothesis: "{A:person} works at {B:org}".into(),
            label: 1,
            pair_id: "t-1".into(),
        };
        let inst = instantiate_example(&example, &mut rng, &pool).unwrap();
        let premise_words: Vec<&str> = inst.premise.split(' ').collect();
        let hyp_words: Vec<&str> = inst.hypothesis.split(' ').collect();
        assert_eq!(premise_words[0], hyp_words[0], "A must match across sentences");
        assert_eq!(premise_words.last(), hyp_words.last(), "B must match");
        assert!(["Alice", "Bob", "Carol"].contains(&premise_words[0]));
        assert!(["Acme", "Globex"].contains(premise_words.last().unwrap()));
    }

    #[test]
    fn distinct_variables_never_share_an_entity() {
        let pool =
            NamePool::from_json_str(r#"{"person": ["Alice", "Bob", "Carol", "Dan"]}"#).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let out =
                instantiate_placeholders("{A:person} met {B:person}", &mut rng, &pool).unwrap();
            let words: Vec<&str> = out.split(' ').collect();
            assert_ne!(words[0], words[2], "{out}");
        }
    }

    #[test]
    fn unknown_type_tag_is_an_error() {
        let pool = NamePool::from_json_str(r#"{"person": ["Alice"]}"#).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = instantiate_placeholders("{A:widget}", &mut rng, &pool)
            .unwrap_err()
            .to_string();
        assert!(err.contains("widget"), "{err}");
    }

    #[test]
    fn text_without_placeholders_is_unchanged() {
        let pool = NamePool::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let text = "no braces here, just {unmatched and {x} odd bits";
        assert_eq!(
            instantiate_placeholders(text, &mut rng, &pool).unwrap(),
            text
        );
    }

    #[test]
    fn builtin_pool_covers_the_three_standard_tags() {
        let pool = NamePool::builtin();
        for tag in ["person", "org", "location"] {
            let names = pool.names(tag).unwrap_or_else(|| panic!("missing {tag}"));
            assert!(names.len() >= 50, "{tag} pool has {}", names.len());
        }
    }
}
