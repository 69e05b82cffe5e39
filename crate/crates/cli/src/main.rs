mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use adr_cotrain::synth::SynthConfig;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

/// Co-training of two sequence transducers for ADR mention extraction.
#[derive(Parser, Debug)]
#[command(name = "adr-cotrain", version)]
struct Cli {
    /// Experiment manifest of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for fold-level parallelism
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Extra manifest setting, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Overrides {
    /// Acceptance threshold
    #[arg(long)]
    tau: Option<f64>,

    /// Maximum co-training iterations
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,

    /// Unlabeled pool file
    #[arg(long)]
    pool: Option<PathBuf>,

    /// View 1 embedding file, or `random`
    #[arg(long = "view1-emb")]
    view1_emb: Option<String>,

    /// View 2 embedding file, or `random`
    #[arg(long = "view2-emb")]
    view2_emb: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize raw texts, one per line
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Keep pool lines mentioning a drug name and an ADR phrase
    Filter {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        drugs: PathBuf,
        #[arg(long)]
        adrs: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Supervised view-1 baseline with k-fold evaluation
    Train(Overrides),
    /// Co-training with k-fold evaluation
    Cotrain(Overrides),
    /// Score a checkpoint on a labeled corpus
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled corpus; defaults to the configured one
        #[arg(long)]
        test: Option<PathBuf>,
        /// Use the view 2 embeddings
        #[arg(long)]
        view2: bool,
    },
    /// Generate a synthetic corpus, pool, and lexicons
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    labeled: usize,
    #[arg(long, default_value_t = 2000)]
    unlabeled: usize,
    #[arg(long, default_value_t = 200)]
    background_vocab: usize,
    #[arg(long, default_value_t = 15)]
    drug_vocab: usize,
    #[arg(long, default_value_t = 90)]
    adr_vocab: usize,
    #[arg(long, default_value_t = 120)]
    adr_phrases: usize,
    #[arg(long, default_value_t = 7)]
    min_len: usize,
    #[arg(long, default_value_t = 12)]
    max_len: usize,
}

fn run_config(cli: &Cli, overrides: Option<&Overrides>) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut settings: Vec<(String, String)> = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        settings.push((k.trim().into(), v.trim().into()));
    }
    if let Some(o) = overrides {
        let opt = |k: &str, v: Option<String>| v.map(|v| (k.to_string(), v));
        settings.extend(
            [
                opt("tau", o.tau.map(|v| v.to_string())),
                opt("max_iterations", o.max_iter.map(|v| v.to_string())),
                opt("view1.embedding", o.view1_emb.clone()),
                opt("view2.embedding", o.view2_emb.clone()),
            ]
            .into_iter()
            .flatten(),
        );
    }
    for (k, v) in settings {
        cfg.set(&k, &v)?;
    }
    // Paths given on the command line are relative to the working directory.
    if let Some(p) = overrides.and_then(|o| o.pool.clone()) {
        cfg.pool = Some(p);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn set_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    match jobs {
        Some(0) => Err(CliError::Config("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string())),
        None => Ok(()),
    }
}

fn print_summary(method: &str, s: &adr_cotrain::FoldSummary) {
    println!(
        "{method}: P {:.4}±{:.4} R {:.4}±{:.4} F1 {:.4}±{:.4} over {} fold(s)",
        s.precision.0,
        s.precision.1,
        s.recall.0,
        s.recall.1,
        s.f1.0,
        s.f1.1,
        s.folds.len()
    );
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Preprocess { input, output } => {
            let n = commands::preprocess_file(input, output)?;
            println!("{n} line(s) written to {}", output.display());
        }
        Command::Filter {
            pool,
            drugs,
            adrs,
            output,
        } => {
            let n = commands::filter_pool(pool, drugs, adrs, output)?;
            println!("{n} line(s) kept in {}", output.display());
        }
        Command::Train(o) => {
            let cfg = run_config(&cli, Some(o))?;
            set_jobs(cfg.jobs)?;
            print_summary("baseline", &commands::train(&cfg)?);
        }
        Command::Cotrain(o) => {
            let cfg = run_config(&cli, Some(o))?;
            set_jobs(cfg.jobs)?;
            print_summary("cotrain", &commands::cotrain(&cfg)?);
        }
        Command::Evaluate {
            checkpoint,
            test,
            view2,
        } => {
            let cfg = run_config(&cli, None)?;
            print_summary(
                "evaluate",
                &commands::evaluate(&cfg, checkpoint, test.as_deref(), *view2)?,
            );
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                labeled: a.labeled,
                unlabeled: a.unlabeled,
                background_vocab: a.background_vocab,
                drug_vocab: a.drug_vocab,
                adr_vocab: a.adr_vocab,
                adr_phrases: a.adr_phrases,
                min_len: a.min_len,
                max_len: a.max_len,
                seed: cli.seed.unwrap_or(0),
                ..SynthConfig::default()
            };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
            for path in commands::synth(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
