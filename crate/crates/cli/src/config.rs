//! Experiment manifests: `key = value` lines, `#` comments.
//!
//! Relative paths resolve against the manifest's directory. Command-line
//! overrides are applied on top with [`RunConfig::set`] before validation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use adr_cotrain::embedding::{EmbeddingSource, ViewSpec};
use adr_cotrain::{CellKind, CotrainConfig, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub folds: usize,
    pub labeled: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub drug_lexicon: Option<PathBuf>,
    pub adr_lexicon: Option<PathBuf>,
    pub out: PathBuf,
    pub cotrain: CotrainConfig,
    pub train: TrainConfig,
    pub view1: ViewSpec,
    pub view2: ViewSpec,
    base: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: None,
            folds: 10,
            labeled: None,
            pool: None,
            drug_lexicon: None,
            adr_lexicon: None,
            out: PathBuf::from("out"),
            cotrain: CotrainConfig::default(),
            train: TrainConfig::default(),
            view1: ViewSpec::view1(EmbeddingSource::Random),
            view2: ViewSpec::view2(EmbeddingSource::Random),
            base: PathBuf::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}")))
}

impl RunConfig {
    /// Parses a manifest; `base` anchors relative paths.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig {
            base: base.to_path_buf(),
            ..RunConfig::default()
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value, got {raw:?}", i + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    fn path(&self, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    fn source(&self, value: &str) -> EmbeddingSource {
        if value == "random" {
            EmbeddingSource::Random
        } else {
            EmbeddingSource::File(self.path(value))
        }
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "jobs" => self.jobs = Some(parse(key, value)?),
            "folds" => self.folds = parse(key, value)?,
            "labeled" => self.labeled = Some(self.path(value)),
            "pool" => self.pool = Some(self.path(value)),
            "drug_lexicon" => self.drug_lexicon = Some(self.path(value)),
            "adr_lexicon" => self.adr_lexicon = Some(self.path(value)),
            "out" => self.out = self.path(value),
            "tau" => self.cotrain.tau = parse(key, value)?,
            "max_iterations" => self.cotrain.max_iterations = parse(key, value)?,
            "score_normalization" => self.cotrain.score_normalization = parse(key, value)?,
            "reinit_each_iteration" => self.cotrain.reinit_each_iteration = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "max_epochs" => self.train.max_epochs = parse(key, value)?,
            "early_stop_patience" => self.train.early_stop_patience = parse(key, value)?,
            "validation_fraction" => self.train.validation_fraction = parse(key, value)?,
            "clip_norm" => self.train.clip_norm = parse(key, value)?,
            "trainable_embeddings" => {
                if parse::<bool>(key, value)? {
                    return Err(CliError::Config(
                        "trainable_embeddings = true is not supported".into(),
                    ));
                }
            }
            _ => {
                let (view, field) = key
                    .split_once('.')
                    .ok_or_else(|| CliError::Config(format!("unknown key {key:?}")))?;
                let source = (field == "embedding").then(|| self.source(value));
                let spec = match view {
                    "view1" => &mut self.view1,
                    "view2" => &mut self.view2,
                    _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
                };
                match field {
                    "embedding" => spec.embedding_source = source.expect("embedding source"),
                    "dim" => spec.embedding_dim = parse(key, value)?,
                    "hidden" => spec.hidden_dim = parse(key, value)?,
                    "cell" => spec.cell_kind = parse::<CellKind>(key, value)?,
                    _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
                }
            }
        }
        Ok(())
    }

    /// Training settings with the global seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn cotrain_config(&self) -> CotrainConfig {
        CotrainConfig {
            seed: self.seed,
            ..self.cotrain.clone()
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), CliError> {
        self.cotrain_config().validate()?;
        self.train_config().validate()?;
        if self.folds < 2 {
            return Err(CliError::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        for spec in [&self.view1, &self.view2] {
            if spec.embedding_dim == 0 || spec.hidden_dim == 0 {
                return Err(CliError::Config(format!(
                    "{}: dimensions must be positive",
                    spec.name
                )));
            }
            if let EmbeddingSource::File(p) = &spec.embedding_source {
                require_file(&format!("{}.embedding", spec.name), p)?;
            }
        }
        for (key, path) in [
            ("labeled", &self.labeled),
            ("pool", &self.pool),
            ("drug_lexicon", &self.drug_lexicon),
            ("adr_lexicon", &self.adr_lexicon),
        ] {
            if let Some(p) = path {
                require_file(key, p)?;
            }
        }
        Ok(())
    }

    /// The labeled corpus path, which every training command needs.
    pub fn labeled_path(&self) -> Result<&Path, CliError> {
        self.labeled
            .as_deref()
            .ok_or_else(|| CliError::Config("no labeled corpus configured".into()))
    }
}

fn require_file(key: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{key}: {} does not exist",
            path.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_manifest() {
        let cfg = RunConfig::parse(
            "# experiment\nseed = 7\ntau = 0.6  # stricter\nlabeled = data/l.tsv\nview2.dim = 12\nview1.embedding = random\n",
            Path::new("/exp"),
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.cotrain.tau, 0.6);
        assert_eq!(cfg.labeled.as_deref(), Some(Path::new("/exp/data/l.tsv")));
        assert_eq!(cfg.view2.embedding_dim, 12);
        assert_eq!(cfg.view1.embedding_source, EmbeddingSource::Random);
        assert_eq!(cfg.train_config().seed, 7);
    }

    #[test]
    fn rejects_bad_entries() {
        for text in [
            "tau",
            "bogus = 1",
            "view3.dim = 4",
            "view1.color = red",
            "batch_size = -2",
        ] {
            assert!(
                matches!(
                    RunConfig::parse(text, Path::new("")),
                    Err(CliError::Config(_))
                ),
                "{text}"
            );
        }
        assert!(RunConfig::parse("trainable_embeddings = true", Path::new("")).is_err());
        assert!(RunConfig::parse("trainable_embeddings = false", Path::new("")).is_ok());
    }

    #[test]
    fn validation_is_fail_fast() {
        let mut cfg = RunConfig::default();
        cfg.set("tau", "1.5").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("labeled", "/definitely/missing.tsv").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.set("folds", "1").unwrap();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
