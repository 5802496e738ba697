//! Synthetic entailment generator: subject–predicate–object sentence pairs
//! that share their arguments and differ in the predicate, labeled by a
//! rule table of entailing and non-entailing predicate pairs.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Example};
use crate::error::{Error, Result};

/// Smallest dataset the 70/10/20 split produces sensible splits for.
pub const MIN_DATASET_SIZE: usize = 30;

/// Fraction of examples labeled 0 unless overridden; mirrors the class
/// imbalance of common entailment benchmarks.
pub const DEFAULT_NEGATIVE_RATE: f64 = 0.67;

/// Ground truth for the generator: ordered predicate pairs (a, b) where
/// "X a Y" entails "X b Y" (`entailing`) or does not (`non_entailing`).
///
/// The JSON form is `{"entailing": [["buy","own"], …], "non_entailing": [… ]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub entailing: Vec<(String, String)>,
    pub non_entailing: Vec<(String, String)>,
}

/// The three splits produced by one generator run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyDataset {
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub test: DatasetSplit,
}

impl ToyDataset {
    pub fn splits(&self) -> [&DatasetSplit; 3] {
        [&self.train, &self.dev, &self.test]
    }

    /// Every sentence in the dataset, for vocabulary construction.
    pub fn texts(&self) -> Vec<&str> {
        self.splits()
            .iter()
            .flat_map(|s| s.examples.iter())
            .flat_map(|e| [e.premise.as_str(), e.hypothesis.as_str()])
            .collect()
    }
}

/// Single-token sentence subjects.
const SUBJECTS: [&str; 12] = [
    "alice", "bob", "carol", "dan", "erin", "frank", "grace", "henry", "iris", "jack", "karen",
    "leo",
];

/// Single-token sentence objects.
const OBJECTS: [&str; 12] = [
    "acme", "globex", "initech", "umbrella", "hooli", "vandelay", "wonka", "stark", "wayne",
    "tyrell", "cyberdyne", "monsters",
];

/// Synonym clusters: predicates entail each other within a cluster and never
/// across clusters. Shared by the two built-in rule tables.
const VERB_CLUSTERS: [[&str; 6]; 6] = [
    ["own", "hold", "possess", "keep", "retain", "control"],
    ["buy", "purchase", "acquire", "obtain", "procure", "secure"],
    ["make", "build", "create", "produce", "construct", "assemble"],
    ["like", "love", "enjoy", "admire", "favor", "cherish"],
    ["lead", "manage", "direct", "run", "head", "oversee"],
    ["visit", "tour", "attend", "enter", "reach", "explore"],
];

impl RuleTable {
    /// Checks that no pair relates a predicate to itself, no pair appears
    /// twice, and no pair is simultaneously entailing and non-entailing.
    pub fn validate(&self) -> Result<()> {
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for (which, pairs) in [
            ("entailing", &self.entailing),
            ("non_entailing", &self.non_entailing),
        ] {
            for (a, b) in pairs {
                if a == b {
                    return Err(Error::Config(format!(
                        "{which} pair relates '{a}' to itself"
                    )));
                }
                if !seen.insert((a, b)) {
                    return Err(Error::Config(format!(
                        "predicate pair ('{a}', '{b}') listed twice"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(json: &str) -> Result<RuleTable> {
        let table: RuleTable = serde_json::from_str(json)?;
        table.validate()?;
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<RuleTable> {
        RuleTable::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// First of two built-in tables over the same vocabulary; see
    /// [`RuleTable::builtin_alt`].
    pub fn builtin_main() -> RuleTable {
        builtin_pair_tables().0
    }

    /// Second built-in table. Main and alt partition the same cluster
    /// structure into disjoint ordered pairs: within every cluster each
    /// table still covers all unordered predicate pairs in one direction or
    /// the other, so a model trained on one table has evidence for every
    /// cluster relation the other table tests. Intended for transfer runs.
    pub fn builtin_alt() -> RuleTable {
        builtin_pair_tables().1
    }
}

/// Splits all ordered predicate pairs between the two built-in tables by
/// alternating over a fixed enumeration (within-cluster and cross-cluster
/// pairs alternate independently, so both tables keep the default class
/// balance workable).
fn builtin_pair_tables() -> (RuleTable, RuleTable) {
    let mut main = RuleTable {
        entailing: Vec::new(),
        non_entailing: Vec::new(),
    };
    let mut alt = main.clone();
    let mut within = 0usize;
    let mut cross = 0usize;
    for (ci, cluster_i) in VERB_CLUSTERS.iter().enumerate() {
        for a in cluster_i {
            for (cj, cluster_j) in VERB_CLUSTERS.iter().enumerate() {
                for b in cluster_j {
                    if a == b {
                        continue;
                    }
                    let pair = (a.to_string(), b.to_string());
                    if ci == cj {
                        let table = if within % 2 == 0 { &mut main } else { &mut alt };
                        table.entailing.push(pair);
                        within += 1;
                    } else {
                        let table = if cross % 2 == 0 { &mut main } else { &mut alt };
                        table.non_entailing.push(pair);
                        cross += 1;
                    }
                }
            }
        }
    }
    (main, alt)
}

/// 70/10/20 of `n`, rounding the first two parts and giving the remainder to
/// the third.
fn split_sizes(n: usize) -> [usize; 3] {
    let train = (0.7 * n as f64).round() as usize;
    let dev = (0.1 * n as f64).round() as usize;
    [train, dev, n - train - dev]
}

/// Shuffles `pairs` and deals them into three disjoint chunks sized like the
/// splits, so a predicate pair backs exactly one split.
fn partition_pairs(
    pairs: &[(String, String)],
    rng: &mut impl Rng,
) -> [Vec<(String, String)>; 3] {
    let mut pool: Vec<(String, String)> = pairs.to_vec();
    pool.shuffle(rng);
    let sizes = split_sizes(pool.len());
    let dev_start = sizes[0];
    let test_start = sizes[0] + sizes[1];
    [
        pool[..dev_start].to_vec(),
        pool[dev_start..test_start].to_vec(),
        pool[test_start..].to_vec(),
    ]
}

/// Generates a three-way split dataset of `size` examples. Exactly
/// `round(negative_rate · split_size)` examples of each split are negative;
/// the predicate pairs backing train, dev and test are disjoint.
pub fn synthesize_toy_dataset(
    table: &RuleTable,
    size: usize,
    negative_rate: f64,
    rng: &mut impl Rng,
) -> Result<ToyDataset> {
    table.validate()?;
    if size < MIN_DATASET_SIZE {
        return Err(Error::InvalidParameter {
            name: "size",
            value: size as f64,
            requirement: "at least 30 examples",
        });
    }
    if !(0.0..=1.0).contains(&negative_rate) {
        return Err(Error::InvalidParameter {
            name: "negative_rate",
            value: negative_rate,
            requirement: "within [0, 1]",
        });
    }

    let entailing_chunks = partition_pairs(&table.entailing, rng);
    let non_entailing_chunks = partition_pairs(&table.non_entailing, rng);
    let sizes = split_sizes(size);
    let names = ["train", "dev", "test"];

    let mut splits = Vec::with_capacity(3);
    for i in 0..3 {
        let negatives = (negative_rate * sizes[i] as f64).round() as usize;
        let positives = sizes[i] - negatives;
        for (needed, pairs, polarity) in [
            (positives, &entailing_chunks[i], "entailing"),
            (negatives, &non_entailing_chunks[i], "non-entailing"),
        ] {
            if needed > 0 && pairs.is_empty() {
                return Err(Error::Generation(format!(
                    "rule table has too few {polarity} pairs to keep the {} split disjoint",
                    names[i]
                )));
            }
        }

        let mut examples = Vec::with_capacity(sizes[i]);
        for (count, pairs, label) in [
            (positives, &entailing_chunks[i], 1u8),
            (negatives, &non_entailing_chunks[i], 0u8),
        ] {
            for _ in 0..count {
                let (a, b) = &pairs[rng.gen_range(0..pairs.len())];
                let subject = SUBJECTS[rng.gen_range(0..SUBJECTS.len())];
                let object = OBJECTS[rng.gen_range(0..OBJECTS.len())];
                examples.push(Example {
                    premise: format!("{subject} {a} {object}"),
                    hypothesis: format!("{subject} {b} {object}"),
                    label,
                    pair_id: String::new(), // assigned after the shuffle
                });
            }
        }
        examples.shuffle(rng);
        for (j, e) in examples.iter_mut().enumerate() {
            e.pair_id = format!("{}-{}", names[i], j + 1);
        }
        splits.push(DatasetSplit {
            name: names[i].to_string(),
            examples,
        });
    }

    let test = splits.pop().expect("three splits");
    let dev = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(ToyDataset { train, dev, test })
}
