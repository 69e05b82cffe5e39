use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use adr_cotrain::corpus::{lexicon_filter, load_labeled, load_unlabeled};
use adr_cotrain::Lexicon;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adr-cotrain"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth_dir(labeled: &str, unlabeled: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--out",
            "data",
            "--labeled",
            labeled,
            "--unlabeled",
            unlabeled,
            "--seed",
            "2",
        ],
    );
    fs::write(
        dir.path().join("exp.cfg"),
        "labeled = data/labeled.tsv\n\
         seed = 1\n\
         folds = 10\n\
         learning_rate = 0.03\n\
         batch_size = 8\n\
         max_epochs = 6\n\
         view1.dim = 6\nview1.hidden = 6\n\
         view2.dim = 6\nview2.hidden = 6\n",
    )
    .unwrap();
    dir
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(String::from)
        .collect()
}

#[test]
fn preprocess_drops_empty_lines_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("raw.txt"),
        "Took #Cipro and now my HEAD hurts :( http://t.co/x\n\n:-)\n@doc this drug-induced nausea!!\n",
    )
    .unwrap();
    ok(
        d,
        &["preprocess", "--input", "raw.txt", "--output", "once.txt"],
    );
    let once = fs::read_to_string(d.join("once.txt")).unwrap();
    assert_eq!(
        once,
        "took cipro and now my head hurts <url>\n<user> this drug-induced nausea\n"
    );
    ok(
        d,
        &["preprocess", "--input", "once.txt", "--output", "twice.txt"],
    );
    assert_eq!(fs::read_to_string(d.join("twice.txt")).unwrap(), once);

    let missing = run(
        d,
        &["preprocess", "--input", "absent.txt", "--output", "x.txt"],
    );
    assert_ne!(code(&missing), 0);
    assert!(!String::from_utf8_lossy(&missing.stderr).is_empty());
}

#[test]
fn filter_keeps_qualifying_lines_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("drugs.txt"), "cipro\nlyrica\n").unwrap();
    fs::write(d.join("adr.txt"), "head ache\nnausea\n").unwrap();
    fs::write(
        d.join("pool.txt"),
        "cipro gave me nausea\nhead ache all day\nlyrica and a head ache\nlyrica is fine\nnothing here\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "filter",
            "--pool",
            "pool.txt",
            "--drugs",
            "drugs.txt",
            "--adrs",
            "adr.txt",
            "--output",
            "kept.txt",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("kept.txt")).unwrap(),
        "cipro gave me nausea\nlyrica and a head ache\n"
    );

    fs::write(
        d.join("all.txt"),
        "lyrica and a head ache\ncipro gave me nausea\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "filter",
            "--pool",
            "all.txt",
            "--drugs",
            "drugs.txt",
            "--adrs",
            "adr.txt",
            "--output",
            "same.txt",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("same.txt")).unwrap(),
        fs::read_to_string(d.join("all.txt")).unwrap()
    );

    fs::write(d.join("empty.txt"), "").unwrap();
    let out = run(
        d,
        &[
            "filter",
            "--pool",
            "pool.txt",
            "--drugs",
            "empty.txt",
            "--adrs",
            "adr.txt",
            "--output",
            "x.txt",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn synth_files_load_and_are_reproducible() {
    let dir = synth_dir("50", "2000");
    let d = dir.path();
    let labeled = load_labeled(d.join("data/labeled.tsv")).unwrap();
    let pool = load_unlabeled(d.join("data/unlabeled.txt")).unwrap();
    assert_eq!((labeled.len(), pool.len()), (50, 2000));
    let lexicon = Lexicon::load(d.join("data/drugs.txt"), d.join("data/adr.txt")).unwrap();
    assert_eq!(lexicon_filter(&labeled.examples, &lexicon).len(), 50);

    ok(
        d,
        &[
            "synth",
            "--out",
            "again",
            "--labeled",
            "50",
            "--unlabeled",
            "2000",
            "--seed",
            "2",
        ],
    );
    for name in ["labeled.tsv", "unlabeled.txt", "drugs.txt", "adr.txt"] {
        assert_eq!(
            fs::read(d.join("data").join(name)).unwrap(),
            fs::read(d.join("again").join(name)).unwrap(),
            "{name}"
        );
    }

    let bad = run(
        d,
        &["synth", "--out", "bad", "--min-len", "9", "--max-len", "4"],
    );
    assert_ne!(code(&bad), 0);
}

#[test]
fn train_reports_every_fold_and_is_deterministic() {
    let dir = synth_dir("30", "10");
    let d = dir.path();
    ok(d, &["--config", "exp.cfg", "--out", "a", "train"]);
    ok(d, &["--config", "exp.cfg", "--out", "b", "train"]);
    assert_eq!(data_rows(&d.join("a/baseline_folds.tsv")).len(), 10);
    for name in [
        "baseline_folds.tsv",
        "baseline_report.tsv",
        "baseline_epochs.tsv",
        "baseline_view1.ckpt",
    ] {
        assert_eq!(
            fs::read(d.join("a").join(name)).unwrap(),
            fs::read(d.join("b").join(name)).unwrap(),
            "{name}"
        );
    }

    let out = run(d, &["--config", "exp.cfg", "--set", "folds=31", "train"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_scores_a_checkpoint() {
    let dir = synth_dir("30", "10");
    let d = dir.path();
    ok(
        d,
        &[
            "--config", "exp.cfg", "--set", "folds=3", "--out", "run", "train",
        ],
    );
    ok(
        d,
        &[
            "--config",
            "exp.cfg",
            "--out",
            "eval",
            "evaluate",
            "--checkpoint",
            "run/baseline_view1.ckpt",
        ],
    );
    assert_eq!(data_rows(&d.join("eval/eval_report.tsv")).len(), 1);
    let predictions = fs::read_to_string(d.join("eval/predictions.tsv")).unwrap();
    let tokens = load_labeled(d.join("data/labeled.tsv"))
        .unwrap()
        .examples
        .iter()
        .map(|s| s.original_length())
        .sum::<usize>();
    assert_eq!(
        predictions.lines().filter(|l| !l.is_empty()).count(),
        tokens
    );
}

#[test]
fn cotrain_pool_sweep_conserves_the_ledger() {
    let dir = synth_dir("30", "1000");
    let d = dir.path();
    let lines: Vec<String> = fs::read_to_string(d.join("data/unlabeled.txt"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    for size in [100usize, 500, 1000] {
        fs::write(
            d.join(format!("pool{size}.txt")),
            lines[..size].join("\n") + "\n",
        )
        .unwrap();
        let out_dir = format!("sweep{size}");
        let pool = format!("pool{size}.txt");
        ok(
            d,
            &[
                "--config",
                "exp.cfg",
                "--set",
                "folds=3",
                "--out",
                &out_dir,
                "cotrain",
                "--pool",
                &pool,
                "--max-iter",
                "3",
            ],
        );
        assert_eq!(
            data_rows(&d.join(&out_dir).join("cotrain_report.tsv")).len(),
            1
        );
        let mut accepted = 0;
        for row in data_rows(&d.join(&out_dir).join("cotrain_log.tsv")) {
            let f: Vec<usize> = row
                .split('\t')
                .take(4)
                .map(|x| x.parse().unwrap())
                .collect();
            accepted += f[1] + f[2];
            assert_eq!(f[3] + accepted, size, "pool {size}: {row}");
        }
        assert!(d.join(&out_dir).join("cotrain_view2.ckpt").is_file());
    }
}

#[test]
fn cotrain_warns_on_empty_pool() {
    let dir = synth_dir("30", "10");
    let d = dir.path();
    fs::write(d.join("none.txt"), "").unwrap();
    let out = ok(
        d,
        &[
            "--config", "exp.cfg", "--set", "folds=3", "cotrain", "--pool", "none.txt",
        ],
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pool is empty"), "{stderr}");
    assert_eq!(data_rows(&d.join("out/cotrain_log.tsv")).len(), 1);
}

#[test]
fn configuration_errors_fail_fast() {
    let dir = synth_dir("30", "10");
    let d = dir.path();
    for tau in ["0", "1.5", "-0.2"] {
        let out = run(d, &["--config", "exp.cfg", "cotrain", "--tau", tau]);
        assert_eq!(code(&out), 1, "tau {tau}");
    }
    let out = run(
        d,
        &[
            "--config",
            "exp.cfg",
            "--set",
            "trainable_embeddings=true",
            "train",
        ],
    );
    assert_eq!(code(&out), 1);
    let out = run(
        d,
        &["--config", "exp.cfg", "train", "--view1-emb", "missing.vec"],
    );
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(d, &["no-such-command"])), 1);
    assert!(!d.join("out").exists());

    fs::write(d.join("bad.tsv"), "word\tI-ADR\nword\n").unwrap();
    let out = run(
        d,
        &["--config", "exp.cfg", "--set", "labeled=bad.tsv", "train"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2"));
}

#[test]
fn embedding_files_must_match_the_declared_dimension() {
    let dir = synth_dir("30", "10");
    let d = dir.path();
    fs::write(d.join("emb.vec"), "2 3\nfoo 0.1 0.2 0.3\nbar 0.0 0.1 0.2\n").unwrap();
    let out = run(
        d,
        &["--config", "exp.cfg", "train", "--view1-emb", "emb.vec"],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    ok(
        d,
        &[
            "--config",
            "exp.cfg",
            "--set",
            "view1.dim=3",
            "--set",
            "folds=3",
            "train",
            "--view1-emb",
            "emb.vec",
        ],
    );
}
