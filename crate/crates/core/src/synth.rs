//! Synthetic ADR corpora with exact labels.
//!
//! Sentences are background filler with one drug word followed (after at
//! most one filler) by an ADR phrase. Some sentences carry a second ADR
//! phrase at a random position and an I-Other mention. ADR phrases are
//! drawn from a Zipf-distributed inventory, so a small labeled sample leaves
//! part of the ADR vocabulary unseen while the unlabeled pool covers it.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{format_labeled, AnnotatedSequence, Corpus, Label};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub background_vocab: usize,
    pub drug_vocab: usize,
    /// Words ADR phrases are built from.
    pub adr_vocab: usize,
    /// Number of distinct ADR phrases.
    pub adr_phrases: usize,
    /// Words used for I-Other mentions.
    pub other_vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    /// Zipf exponent of the phrase distribution.
    pub zipf_exponent: f64,
    /// Probability of a second, uncued ADR phrase.
    pub second_adr_rate: f64,
    pub other_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            background_vocab: 200,
            drug_vocab: 15,
            adr_vocab: 90,
            adr_phrases: 120,
            other_vocab: 15,
            min_len: 7,
            max_len: 12,
            labeled: 50,
            unlabeled: 2000,
            zipf_exponent: 1.0,
            second_adr_rate: 0.3,
            other_rate: 0.3,
            seed: 0,
        }
    }
}

/// Longest ADR phrase, in words.
pub const MAX_PHRASE_WORDS: usize = 3;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("background_vocab", self.background_vocab),
            ("drug_vocab", self.drug_vocab),
            ("adr_vocab", self.adr_vocab),
            ("adr_phrases", self.adr_phrases),
            ("other_vocab", self.other_vocab),
            ("labeled", self.labeled),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        // Drug word, one filler, longest phrase. Optional mentions are
        // skipped when they do not fit.
        let needed = 2 + MAX_PHRASE_WORDS;
        if self.min_len < needed {
            return Err(Error::Config(format!("min_len must be at least {needed}")));
        }
        let distinct: usize = (1..=MAX_PHRASE_WORDS)
            .map(|k| self.adr_vocab.saturating_pow(k as u32))
            .fold(0usize, usize::saturating_add);
        if self.adr_phrases > distinct {
            return Err(Error::Config(format!(
                "{} ADR phrases requested but only {distinct} can be built from {} words",
                self.adr_phrases, self.adr_vocab
            )));
        }
        for (name, p) in [
            ("second_adr_rate", self.second_adr_rate),
            ("other_rate", self.other_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent < 0.0 {
            return Err(Error::Config("zipf_exponent must be non-negative".into()));
        }
        Ok(())
    }
}

/// A generated task: gold-labeled sequences, a pool (gold labels kept for
/// analysis) and the keyword lexicons.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub labeled: Vec<AnnotatedSequence>,
    pub unlabeled_gold: Vec<AnnotatedSequence>,
    pub drug_names: Vec<String>,
    pub adr_phrases: Vec<String>,
}

/// Paths written by [`SynthData::write_to`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub labeled: PathBuf,
    pub unlabeled: PathBuf,
    pub drug_lexicon: PathBuf,
    pub adr_lexicon: PathBuf,
}

impl SynthData {
    pub fn labeled_corpus(&self) -> Corpus {
        Corpus::from_sequences(self.labeled.clone())
    }

    /// The pool with its labels erased.
    pub fn unlabeled_sequences(&self) -> Vec<AnnotatedSequence> {
        self.unlabeled_gold
            .iter()
            .map(|s| {
                AnnotatedSequence::unlabeled(s.tokens().to_vec(), s.source_id()).expect("non-empty")
            })
            .collect()
    }

    pub fn unlabeled_text(&self) -> String {
        let mut out = String::new();
        for s in &self.unlabeled_gold {
            out.push_str(&s.tokens().join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<SynthFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SynthFiles {
            labeled: dir.join("labeled.tsv"),
            unlabeled: dir.join("unlabeled.txt"),
            drug_lexicon: dir.join("drugs.txt"),
            adr_lexicon: dir.join("adr.txt"),
        };
        write_atomic(&files.labeled, format_labeled(&self.labeled).as_bytes())?;
        write_atomic(&files.unlabeled, self.unlabeled_text().as_bytes())?;
        write_atomic(&files.drug_lexicon, lines(&self.drug_names).as_bytes())?;
        write_atomic(&files.adr_lexicon, lines(&self.adr_phrases).as_bytes())?;
        Ok(files)
    }
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "st",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Distinct pronounceable pseudo-words.
struct WordMint {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordMint {
    fn word(&mut self) -> String {
        loop {
            let syllables = self.rng.gen_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}",
                        ONSETS[self.rng.gen_range(0..ONSETS.len())],
                        VOWELS[self.rng.gen_range(0..VOWELS.len())]
                    )
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word()).collect()
    }
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(exponent))).expect("positive weights")
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    background: Vec<String>,
    drugs: Vec<String>,
    others: Vec<String>,
    phrases: Vec<Vec<String>>,
    background_dist: WeightedIndex<f64>,
    phrase_dist: WeightedIndex<f64>,
}

impl Generator<'_> {
    fn sentence<R: Rng>(&self, rng: &mut R, id: String) -> AnnotatedSequence {
        let len = rng.gen_range(self.cfg.min_len..=self.cfg.max_len);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| self.background[self.background_dist.sample(rng)].clone())
            .collect();
        let mut labels = vec![Label::O; len];
        let mut used = vec![false; len];

        let phrase = &self.phrases[self.phrase_dist.sample(rng)];
        let gap = rng.gen_range(0..=1);
        let block = 1 + gap + phrase.len();
        let start = rng.gen_range(0..=len - block);
        tokens[start] = self.drugs[rng.gen_range(0..self.drugs.len())].clone();
        used[start..start + block].fill(true);
        for (j, w) in phrase.iter().enumerate() {
            tokens[start + 1 + gap + j] = w.clone();
            labels[start + 1 + gap + j] = Label::IAdr;
        }

        let mut place = |rng: &mut R, words: &[String], label: Label| {
            // Free slots with a free neighbour on each side, so mentions
            // never touch other mentions.
            let fits = |s: usize| {
                let lo = s.saturating_sub(1);
                let hi = (s + words.len()).min(len - 1);
                (lo..=hi).all(|i| !used[i])
            };
            let slots: Vec<usize> = (0..=len - words.len()).filter(|&s| fits(s)).collect();
            if slots.is_empty() {
                return;
            }
            let s = slots[rng.gen_range(0..slots.len())];
            for (j, w) in words.iter().enumerate() {
                tokens[s + j] = w.clone();
                labels[s + j] = label;
                used[s + j] = true;
            }
        };
        if rng.gen_bool(self.cfg.second_adr_rate) {
            let second = self.phrases[self.phrase_dist.sample(rng)].clone();
            place(rng, &second, Label::IAdr);
        }
        if rng.gen_bool(self.cfg.other_rate) {
            let other = vec![self.others[rng.gen_range(0..self.others.len())].clone()];
            place(rng, &other, Label::IOther);
        }
        AnnotatedSequence::new(tokens, labels, id).expect("generated sequence is well-formed")
    }
}

/// Generates a labeled corpus, an unlabeled pool and lexicons.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut mint = WordMint {
        rng: rng::rng(rng::derive_seed(cfg.seed, "synth-words")),
        used: HashSet::new(),
    };
    let background = mint.words(cfg.background_vocab);
    let drugs = mint.words(cfg.drug_vocab);
    let adr_words = mint.words(cfg.adr_vocab);
    let others = mint.words(cfg.other_vocab);

    let mut prng = rng::rng(rng::derive_seed(cfg.seed, "synth-phrases"));
    let mut seen = HashSet::new();
    let mut phrases = Vec::with_capacity(cfg.adr_phrases);
    while phrases.len() < cfg.adr_phrases {
        let k = prng.gen_range(1..=MAX_PHRASE_WORDS);
        let phrase: Vec<String> = (0..k)
            .map(|_| adr_words[prng.gen_range(0..adr_words.len())].clone())
            .collect();
        if seen.insert(phrase.clone()) {
            phrases.push(phrase);
        }
    }

    let gen = Generator {
        cfg,
        background_dist: zipf(background.len(), 1.0),
        phrase_dist: zipf(phrases.len(), cfg.zipf_exponent),
        background,
        drugs,
        others,
        phrases,
    };
    let mut lrng = rng::rng(rng::derive_seed(cfg.seed, "synth-labeled"));
    let labeled = (0..cfg.labeled)
        .map(|i| gen.sentence(&mut lrng, format!("L{i:05}")))
        .collect();
    let mut urng = rng::rng(rng::derive_seed(cfg.seed, "synth-unlabeled"));
    let unlabeled_gold = (0..cfg.unlabeled)
        .map(|i| gen.sentence(&mut urng, format!("U{:07}", i + 1)))
        .collect();

    Ok(SynthData {
        labeled,
        unlabeled_gold,
        drug_names: gen.drugs.clone(),
        adr_phrases: gen.phrases.iter().map(|p| p.join(" ")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{labels_to_spans, lexicon_filter, load_labeled, load_unlabeled, Lexicon};

    fn small() -> SynthConfig {
        SynthConfig {
            labeled: 50,
            unlabeled: 200,
            seed: 9,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn files_parse_through_loaders() {
        let data = generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = data.write_to(dir.path()).unwrap();
        let corpus = load_labeled(&files.labeled).unwrap();
        assert_eq!(
            corpus
                .examples
                .iter()
                .map(|s| s.content_labels().to_vec())
                .collect::<Vec<_>>(),
            data.labeled
                .iter()
                .map(|s| s.labels().to_vec())
                .collect::<Vec<_>>()
        );
        let pool = load_unlabeled(&files.unlabeled).unwrap();
        assert_eq!(pool.len(), 200);
        for (a, b) in pool.iter().zip(&data.unlabeled_gold) {
            assert_eq!(a.tokens(), b.tokens());
        }
        let lex = Lexicon::load(&files.drug_lexicon, &files.adr_lexicon).unwrap();
        lex.validate().unwrap();
    }

    #[test]
    fn every_sequence_passes_the_lexicon_filter() {
        let data = generate(&small()).unwrap();
        let lex = Lexicon::new(&data.drug_names, &data.adr_phrases);
        assert_eq!(
            lexicon_filter(&data.labeled, &lex).len(),
            data.labeled.len()
        );
        assert_eq!(
            lexicon_filter(&data.unlabeled_gold, &lex).len(),
            data.unlabeled_gold.len()
        );
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.labeled, b.labeled);
        assert_eq!(a.unlabeled_text(), b.unlabeled_text());
        let c = generate(&SynthConfig {
            seed: 10,
            ..small()
        })
        .unwrap();
        assert_ne!(a.unlabeled_text(), c.unlabeled_text());
    }

    #[test]
    fn every_sequence_has_an_adr_span() {
        let data = generate(&small()).unwrap();
        for s in data.labeled.iter().chain(&data.unlabeled_gold) {
            assert!(labels_to_spans(s.labels())
                .iter()
                .any(|sp| sp.kind == Label::IAdr));
            assert!(s.len() >= small().min_len && s.len() <= small().max_len);
        }
    }

    #[test]
    fn rejects_inconsistent_sizes() {
        assert!(generate(&SynthConfig {
            min_len: 12,
            max_len: 8,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            labeled: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            adr_vocab: 2,
            adr_phrases: 50,
            ..small()
        })
        .is_err());
    }
}
