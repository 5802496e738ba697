//! `conan synth`: generate the synthetic entailment dataset.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use conan_core::data::{synthesize_toy_dataset, write_tsv, RuleTable, SplitStats};

/// Which predicate-pair table drives generation.
#[derive(Debug, Clone, PartialEq)]
pub enum TableSpec {
    /// First built-in table.
    Main,
    /// Second built-in table (disjoint pairs over the same clusters).
    Alt,
    /// A JSON file of `{"entailing": […], "non_entailing": […]}` pairs.
    Path(PathBuf),
}

impl TableSpec {
    pub fn load(&self) -> Result<RuleTable> {
        match self {
            TableSpec::Main => Ok(RuleTable::builtin_main()),
            TableSpec::Alt => Ok(RuleTable::builtin_alt()),
            TableSpec::Path(path) => RuleTable::from_path(path)
                .with_context(|| format!("loading rule table {}", path.display())),
        }
    }
}

impl FromStr for TableSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<TableSpec> {
        Ok(match s {
            "main" => TableSpec::Main,
            "alt" => TableSpec::Alt,
            other => TableSpec::Path(PathBuf::from(other)),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct SynthOutput {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub train_stats: SplitStats,
    pub dev_stats: SplitStats,
    pub test_stats: SplitStats,
}

pub fn cmd_synth(
    out_dir: &Path,
    size: usize,
    negative_rate: f64,
    seed: u64,
    table: &TableSpec,
) -> Result<SynthOutput> {
    let table = table.load()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset = synthesize_toy_dataset(&table, size, negative_rate, &mut rng)?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let output = SynthOutput {
        train: out_dir.join("train.tsv"),
        dev: out_dir.join("dev.tsv"),
        test: out_dir.join("test.tsv"),
        train_stats: dataset.train.stats(),
        dev_stats: dataset.dev.stats(),
        test_stats: dataset.test.stats(),
    };
    write_tsv(&output.train, &dataset.train)?;
    write_tsv(&output.dev, &dataset.dev)?;
    write_tsv(&output.test, &dataset.test)?;
    Ok(output)
}
