use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adr_cotrain::corpus::{lexicon_filter, load_labeled, load_unlabeled, preprocess};
use adr_cotrain::cotrain::format_log;
use adr_cotrain::embedding::{View, ViewSpec};
use adr_cotrain::eval::{
    evaluate_corpus, format_fold_table, format_predictions, format_summary_table,
};
use adr_cotrain::experiment::{cross_validate_baseline, cross_validate_cotrain, train_baseline};
use adr_cotrain::synth::{generate, SynthConfig};
use adr_cotrain::transducer::{load_checkpoint, save_checkpoint};
use adr_cotrain::{io, rng, run_cotraining, AnnotatedSequence, FoldSummary, Lexicon};

use crate::config::RunConfig;
use crate::error::CliError;

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    io::write_atomic(path, contents.as_bytes())?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn joined(sequences: &[AnnotatedSequence]) -> String {
    sequences.iter().fold(String::new(), |mut out, s| {
        out.push_str(&s.content_tokens().join(" "));
        out.push('\n');
        out
    })
}

/// Normalizes one text per line; lines that normalize to nothing are dropped.
pub fn preprocess_file(input: &Path, output: &Path) -> Result<usize, CliError> {
    let mut out = String::new();
    let mut kept = 0;
    for line in read(input)?.lines() {
        let tokens = preprocess(line);
        if !tokens.is_empty() {
            out.push_str(&tokens.join(" "));
            out.push('\n');
            kept += 1;
        }
    }
    write(output, &out)?;
    Ok(kept)
}

/// Keeps pool lines mentioning a drug name and an ADR phrase.
pub fn filter_pool(
    pool: &Path,
    drugs: &Path,
    adrs: &Path,
    output: &Path,
) -> Result<usize, CliError> {
    let lexicon = Lexicon::load(drugs, adrs)?;
    lexicon.validate()?;
    let kept = lexicon_filter(&load_unlabeled(pool)?, &lexicon);
    write(output, &joined(&kept))?;
    Ok(kept.len())
}

fn build_view(spec: &ViewSpec, seed: u64, vocab: &BTreeSet<String>) -> Result<View, CliError> {
    let table = spec.load_table(rng::derive_seed(seed, &format!("{}.oov", spec.name)), vocab)?;
    Ok(View::new(spec.clone(), table)?)
}

fn load_pool(cfg: &RunConfig) -> Result<Vec<AnnotatedSequence>, CliError> {
    let pool = match &cfg.pool {
        Some(path) => load_unlabeled(path)?,
        None => Vec::new(),
    };
    if pool.is_empty() {
        log::warn!(
            "unlabeled pool is empty; co-training reduces to supervised training of each view"
        );
    }
    Ok(pool)
}

fn loss_rows(out: &mut String, fold: usize, epochs: &[adr_cotrain::transducer::EpochRecord]) {
    for e in epochs {
        writeln!(
            out,
            "{fold}\t{}\t{:.9}\t{:.9}",
            e.epoch, e.train_loss, e.val_loss
        )
        .unwrap();
    }
}

/// Supervised view-1 baseline: k-fold reports plus a full-corpus checkpoint.
pub fn train(cfg: &RunConfig) -> Result<FoldSummary, CliError> {
    cfg.validate()?;
    let corpus = load_labeled(cfg.labeled_path()?)?;
    let view = build_view(&cfg.view1, cfg.seed, &corpus.vocabulary())?;
    let (cotrain_cfg, train_cfg) = (cfg.cotrain_config(), cfg.train_config());

    let run = cross_validate_baseline(&corpus, &view, &cotrain_cfg, &train_cfg, cfg.folds)?;
    let mut epochs = String::from("fold\tepoch\ttrain_loss\tval_loss\n");
    for (i, fold) in run.folds.iter().enumerate() {
        loss_rows(&mut epochs, i + 1, &fold.epochs);
    }
    let full = train_baseline(&corpus, &view, &cotrain_cfg, &train_cfg)?;

    write(
        &cfg.out.join("baseline_folds.tsv"),
        &format_fold_table(&run.summary),
    )?;
    write(
        &cfg.out.join("baseline_report.tsv"),
        &format_summary_table(&[("baseline", &run.summary)]),
    )?;
    write(&cfg.out.join("baseline_epochs.tsv"), &epochs)?;
    save_checkpoint(&full.params, cfg.out.join("baseline_view1.ckpt"))?;
    Ok(run.summary)
}

/// Co-training: k-fold reports and logs plus a full-corpus run whose models
/// and log are saved.
pub fn cotrain(cfg: &RunConfig) -> Result<FoldSummary, CliError> {
    cfg.validate()?;
    let corpus = load_labeled(cfg.labeled_path()?)?;
    let pool = load_pool(cfg)?;
    let mut vocab = corpus.vocabulary();
    for s in &pool {
        vocab.extend(s.content_tokens().iter().cloned());
    }
    let view1 = build_view(&cfg.view1, cfg.seed, &vocab)?;
    let view2 = build_view(&cfg.view2, cfg.seed, &vocab)?;
    let (cotrain_cfg, train_cfg) = (cfg.cotrain_config(), cfg.train_config());

    let run = cross_validate_cotrain(
        &corpus,
        &pool,
        &view1,
        &view2,
        &cotrain_cfg,
        &train_cfg,
        cfg.folds,
    )?;
    let mut fold_logs = String::new();
    for (i, fold) in run.folds.iter().enumerate() {
        for (j, line) in format_log(&fold.log).lines().enumerate() {
            if j == 0 && i == 0 {
                writeln!(fold_logs, "fold\t{line}").unwrap();
            } else if j > 0 {
                writeln!(fold_logs, "{}\t{line}", i + 1).unwrap();
            }
        }
    }
    let full = run_cotraining(&corpus, &pool, &view1, &view2, &cotrain_cfg, &train_cfg)?;

    write(
        &cfg.out.join("cotrain_folds.tsv"),
        &format_fold_table(&run.summary),
    )?;
    write(
        &cfg.out.join("cotrain_report.tsv"),
        &format_summary_table(&[("cotrain", &run.summary)]),
    )?;
    write(&cfg.out.join("cotrain_fold_logs.tsv"), &fold_logs)?;
    write(&cfg.out.join("cotrain_log.tsv"), &format_log(&full.log))?;
    save_checkpoint(&full.params1, cfg.out.join("cotrain_view1.ckpt"))?;
    save_checkpoint(&full.params2, cfg.out.join("cotrain_view2.ckpt"))?;
    Ok(run.summary)
}

/// Scores a checkpoint on a labeled corpus.
pub fn evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    test: Option<&Path>,
    view2: bool,
) -> Result<FoldSummary, CliError> {
    cfg.validate()?;
    let test = match test {
        Some(p) => p.to_path_buf(),
        None => cfg.labeled_path()?.to_path_buf(),
    };
    let params = load_checkpoint(checkpoint)?;
    let corpus = load_labeled(&test)?;
    let spec = if view2 { &cfg.view2 } else { &cfg.view1 };
    let spec = ViewSpec {
        embedding_dim: params.input_dim,
        hidden_dim: params.hidden_dim,
        cell_kind: params.cell_kind,
        ..spec.clone()
    };
    let view = build_view(&spec, cfg.seed, &corpus.vocabulary())?;
    let (report, predictions) = evaluate_corpus(&params, &view.table, &corpus)?;
    let summary = FoldSummary::from_reports(vec![report]);
    write(
        &cfg.out.join("eval_report.tsv"),
        &format_summary_table(&[("evaluate", &summary)]),
    )?;
    write(
        &cfg.out.join("predictions.tsv"),
        &format_predictions(&corpus, &predictions),
    )?;
    Ok(summary)
}

/// Writes the synthetic corpus, pool, and lexicons into `out`.
pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let data = generate(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(out.to_path_buf(), e))?;
    let files = data.write_to(out)?;
    Ok(vec![
        files.labeled,
        files.unlabeled,
        files.drug_lexicon,
        files.adr_lexicon,
    ])
}
