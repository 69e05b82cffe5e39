//! Baseline versus co-training on the synthetic task, one line per seed.
//!
//! Settings come from `KEY=value` arguments, for example
//! `cargo run --release -p adr-cotrain --example directional -- seeds=2 folds=5`.

use std::collections::HashMap;
use std::time::Instant;

use adr_cotrain::cotrain::CotrainConfig;
use adr_cotrain::embedding::{EmbeddingSource, View, ViewSpec};
use adr_cotrain::experiment::{cross_validate_baseline, cross_validate_cotrain};
use adr_cotrain::synth::{generate, SynthConfig};
use adr_cotrain::TrainConfig;

fn arg<T: std::str::FromStr>(args: &HashMap<String, String>, key: &str, default: T) -> T {
    args.get(key)
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn main() -> adr_cotrain::Result<()> {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            a.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    let seeds: u64 = arg(&args, "seeds", 5);
    let first: u64 = arg(&args, "first", 0);
    let folds: usize = arg(&args, "folds", 10);
    let emb: usize = arg(&args, "emb", 16);
    let hidden: usize = arg(&args, "hidden", 16);

    let mut wins = 0;
    let mut total = 0.0;
    for seed in first..first + seeds {
        let start = Instant::now();
        let data = generate(&SynthConfig {
            labeled: arg(&args, "labeled", 50),
            unlabeled: arg(&args, "unlabeled", 2000),
            seed,
            ..SynthConfig::default()
        })?;
        let corpus = data.labeled_corpus();
        let pool = data.unlabeled_sequences();
        let mut vocab = corpus.vocabulary();
        for s in &pool {
            vocab.extend(s.content_tokens().iter().cloned());
        }
        let s1 = ViewSpec::view1(EmbeddingSource::Random).with_dims(emb, hidden);
        let s2 = ViewSpec::view2(EmbeddingSource::Random).with_dims(emb, hidden);
        let t1 = s1.load_table(seed ^ 1, &vocab)?;
        let t2 = s2.load_table(seed ^ 2, &vocab)?;
        let v1 = View::new(s1, t1)?;
        let v2 = View::new(s2, t2)?;

        let cotrain_cfg = CotrainConfig {
            tau: arg(&args, "tau", 0.5),
            max_iterations: arg(&args, "iters", 5),
            seed,
            ..CotrainConfig::default()
        };
        let train_cfg = TrainConfig {
            learning_rate: arg(&args, "lr", 0.03),
            batch_size: arg(&args, "batch", 8),
            max_epochs: arg(&args, "epochs", 25),
            early_stop_patience: arg(&args, "patience", 3),
            seed,
            ..TrainConfig::default()
        };
        let base = cross_validate_baseline(&corpus, &v1, &cotrain_cfg, &train_cfg, folds)?;
        let co = cross_validate_cotrain(&corpus, &pool, &v1, &v2, &cotrain_cfg, &train_cfg, folds)?;
        let delta = co.summary.f1.0 - base.summary.f1.0;
        let accepted: Vec<usize> = co
            .folds
            .iter()
            .map(|f| f.log.iter().map(|r| r.accepted_t1 + r.accepted_t2).sum())
            .collect();
        if delta > 0.0 {
            wins += 1;
        }
        total += delta;
        println!(
            "seed {seed}: baseline {:.4} cotrain {:.4} delta {delta:+.4} accepted {accepted:?} ({:.1}s)",
            base.summary.f1.0,
            co.summary.f1.0,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "wins {wins}/{seeds}, mean delta {:+.4}",
        total / seeds as f64
    );
    Ok(())
}
