//! `conan sweep`: train a grid of pattern shapes and tabulate dev AUC.
//!
//! For k ≤ 2 the two continuous families build token-for-token identical
//! templates, so each such (n, k) cell is trained once and its row is
//! emitted under every requested family, marked `shared`. Cells that fail
//! leave their `dev_auc_percent` column empty and deposit the error text in
//! an `errors/` sidecar instead of aborting the rest of the grid. Rows are
//! emitted in a fixed order (family, then n, then k, all ascending), and
//! every cell trains from the same seed, so rerunning an identical sweep
//! writes a byte-identical CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use conan_core::data::{build_tokenizer, TokenizedExample, Tokenizer};
use conan_core::model::ConanModel;
use conan_core::training::train;

use crate::run_config::{FamilyName, RunConfig};

use super::train::effective_train_config;
use super::{encode_split, load_split};

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub n: usize,
    pub k: usize,
    /// `None` when the cell failed; the CSV column is left empty.
    pub dev_auc_percent: Option<f64>,
    /// Whether this row reuses a run shared across families (k ≤ 2).
    pub shared: bool,
}

#[derive(Debug, Serialize)]
pub struct SweepOutput {
    pub csv_path: PathBuf,
    pub rows: Vec<SweepRow>,
    /// Number of rows whose cell failed.
    pub failed_rows: usize,
}

/// A unit of training work: `family = None` marks a k ≤ 2 cell shared by
/// both families (trained once, under the alpha construction, which is
/// identical to beta's at those widths).
type CellKey = (Option<FamilyName>, usize, usize);

fn cell_key(family: FamilyName, n: usize, k: usize) -> CellKey {
    if k <= 2 {
        (None, n, k)
    } else {
        (Some(family), n, k)
    }
}

fn run_cell(
    config: &RunConfig,
    tokenizer: &Tokenizer,
    train_set: &[TokenizedExample],
    dev_set: &[TokenizedExample],
    key: CellKey,
) -> Result<f64> {
    let (family, n, k) = key;
    let encoder_config = config.encoder.to_config(tokenizer.vocab_size());
    let family = family.unwrap_or(FamilyName::Alpha).to_family();
    let model = ConanModel::init(&encoder_config, family, n, k, config.seed)?;
    let train_config = effective_train_config(config, model.n());
    let history = train(&model, train_set, dev_set, &train_config)?;
    Ok(*history.dev_aucs().last().expect("at least one epoch"))
}

pub fn cmd_sweep(
    config: &RunConfig,
    n_list: &[usize],
    k_list: &[usize],
    families: &[FamilyName],
    jobs: usize,
    out_root: &Path,
) -> Result<SweepOutput> {
    config.validate()?;
    if n_list.is_empty() || k_list.is_empty() {
        bail!("sweep needs non-empty --n-list and --k-list");
    }
    if families.is_empty() {
        bail!("sweep needs at least one family");
    }
    if families.contains(&FamilyName::Discrete) {
        bail!("sweep grids cover the continuous families; train discrete baselines directly");
    }
    if n_list.contains(&0) {
        bail!("n must be at least 1");
    }
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }

    let mut families: Vec<FamilyName> = families.to_vec();
    families.sort_by_key(|f| f.as_str());
    families.dedup();
    let mut n_list = n_list.to_vec();
    n_list.sort_unstable();
    n_list.dedup();
    let mut k_list = k_list.to_vec();
    k_list.sort_unstable();
    k_list.dedup();

    let train_split = load_split(&config.data.train, "train")?;
    let dev_split = load_split(&config.data.dev, "dev")?;
    let mut texts: Vec<&str> = Vec::new();
    for split in [&train_split, &dev_split] {
        for e in &split.examples {
            texts.push(&e.premise);
            texts.push(&e.hypothesis);
        }
    }
    let tokenizer = build_tokenizer(texts, config.max_vocab, config.lowercase)?;
    let train_set = encode_split(&tokenizer, &train_split)?;
    let dev_set = encode_split(&tokenizer, &dev_split)?;

    let mut cells: Vec<CellKey> = Vec::new();
    for &family in &families {
        for &n in &n_list {
            for &k in &k_list {
                let key = cell_key(family, n, k);
                if !cells.contains(&key) {
                    cells.push(key);
                }
            }
        }
    }

    // Cells are independent deterministic trainings, so the worker count
    // changes wall time and nothing else.
    let worker_count = jobs.min(cells.len());
    let next = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel::<(usize, Result<f64, String>)>();
    thread::scope(|scope| {
        for _ in 0..worker_count {
            let sender = sender.clone();
            let cells = &cells;
            let next = &next;
            let (tokenizer, train_set, dev_set) = (&tokenizer, &train_set, &dev_set);
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(&key) = cells.get(index) else { break };
                let outcome = run_cell(config, tokenizer, train_set, dev_set, key)
                    .map_err(|e| format!("{e:#}"));
                if sender.send((index, outcome)).is_err() {
                    break;
                }
            });
        }
    });
    drop(sender);
    let mut outcomes: Vec<Option<Result<f64, String>>> = (0..cells.len()).map(|_| None).collect();
    for (index, outcome) in receiver {
        outcomes[index] = Some(outcome);
    }

    fs::create_dir_all(out_root)
        .with_context(|| format!("creating sweep directory {}", out_root.display()))?;
    let errors_dir = out_root.join("errors");
    let mut rows = Vec::new();
    let mut failed_rows = 0usize;
    let mut csv = String::from("family,n,k,dev_auc_percent,shared\n");
    for &family in &families {
        for &n in &n_list {
            for &k in &k_list {
                let key = cell_key(family, n, k);
                let index = cells.iter().position(|c| *c == key).expect("cell exists");
                let outcome = outcomes[index].as_ref().expect("cell ran");
                let shared = k <= 2 && families.len() > 1;
                let dev_auc_percent = match outcome {
                    Ok(auc) => Some(*auc),
                    Err(message) => {
                        failed_rows += 1;
                        fs::create_dir_all(&errors_dir)
                            .context("creating sweep errors directory")?;
                        let sidecar =
                            errors_dir.join(format!("{}-n{n}-k{k}.txt", family.as_str()));
                        fs::write(&sidecar, format!("{message}\n"))
                            .with_context(|| format!("writing {}", sidecar.display()))?;
                        None
                    }
                };
                let auc_text = dev_auc_percent.map_or(String::new(), |a| a.to_string());
                csv.push_str(&format!(
                    "{},{n},{k},{auc_text},{shared}\n",
                    family.as_str()
                ));
                rows.push(SweepRow {
                    family: family.as_str().to_string(),
                    n,
                    k,
                    dev_auc_percent,
                    shared,
                });
            }
        }
    }
    let csv_path = out_root.join("sweep.csv");
    fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    Ok(SweepOutput {
        csv_path,
        rows,
        failed_rows,
    })
}
