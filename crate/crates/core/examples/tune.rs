//! Scratch probe for convergence behaviour on the synthetic task, using
//! phase training: one long initial call, then short top-up calls with
//! per-phase accuracy checks and early stop.
//! Usage: tune SIZE LR DROPOUT SEED N K BATCH PHASE0 PHASE CAP

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use conan_core::classifier::decide;
use conan_core::data::{build_tokenizer, synthesize_toy_dataset, RuleTable, TokenizedExample};
use conan_core::encoder::EncoderConfig;
use conan_core::metrics::{auc_p50, auc_percent, pr_curve};
use conan_core::model::ConanModel;
use conan_core::patterning::Family;
use conan_core::training::{dev_auc_percent, train, TrainConfig};

fn train_accuracy(model: &ConanModel, set: &[TokenizedExample]) -> f64 {
    let scored = model.score_examples(set).unwrap();
    let correct = scored
        .iter()
        .filter(|s| decide(s.score, 0.0) == s.label)
        .count();
    correct as f64 / scored.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let size: usize = args[1].parse().unwrap();
    let lr: f64 = args[2].parse().unwrap();
    let dropout: f64 = args[3].parse().unwrap();
    let seed: u64 = args[4].parse().unwrap();
    let n: usize = args[5].parse().unwrap();
    let k: usize = args[6].parse().unwrap();
    let batch: usize = args[7].parse().unwrap();
    let phase0: usize = args[8].parse().unwrap();
    let phase: usize = args[9].parse().unwrap();
    let cap: usize = args[10].parse().unwrap();
    let lr2: f64 = args.get(11).map_or(lr, |s| s.parse().unwrap());
    let drop2: f64 = args.get(12).map_or(dropout, |s| s.parse().unwrap());
    let pattern_batch: usize = args.get(13).map_or(5, |s| s.parse().unwrap());
    let data_seed: u64 = args.get(14).map_or(seed, |s| s.parse().unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(data_seed);
    let data = synthesize_toy_dataset(&RuleTable::builtin_main(), size, 0.67, &mut rng).unwrap();
    let tokenizer = build_tokenizer(data.texts(), 512, true).unwrap();
    let enc = |s: &conan_core::data::DatasetSplit| -> Vec<TokenizedExample> {
        s.examples
            .iter()
            .map(|e| tokenizer.encode_example(e).unwrap())
            .collect()
    };
    let train_set = enc(&data.train);
    let dev_set = enc(&data.dev);

    let config = EncoderConfig::toy(tokenizer.vocab_size());
    let model = ConanModel::init(&config, Family::Alpha, n, k, seed).unwrap();

    let mut tc = TrainConfig::toy(seed);
    tc.lr = lr;
    tc.dropout = dropout;
    tc.pattern_batch = pattern_batch.min(n);
    tc.batch_size = batch;

    let t0 = std::time::Instant::now();
    let mut done = 0usize;
    let mut acc = 0.0f64;
    print!("seed {seed} n{n}k{k} lr {lr} b{batch} |");
    while done < cap {
        let chunk = if done == 0 {
            phase0.min(cap)
        } else {
            tc.lr = lr2;
            tc.dropout = drop2;
            phase.min(cap - done)
        };
        tc.epochs = chunk;
        tc.seed = seed.wrapping_add(1000 * done as u64);
        train(&model, &train_set, &dev_set, &tc).unwrap();
        done += chunk;
        acc = train_accuracy(&model, &train_set);
        print!(" {done}ep:{acc:.3}");
        if acc >= 0.95 {
            break;
        }
    }
    let dt = t0.elapsed().as_secs_f64();

    let labels: Vec<u8> = dev_set.iter().map(|e| e.label).collect();
    let baseline = auc_percent(auc_p50(&pr_curve(&vec![0.0; labels.len()], &labels).unwrap()));
    let dev = dev_auc_percent(&model, &dev_set).unwrap();
    println!();
    println!(
        "seed {seed}: epochs {done} train_acc {acc:.3} dev_auc {dev:.1} baseline {baseline:.1} time {dt:.1}s"
    );
}
