//! Labeled and unlabeled text sequences, tweet normalization, IO label
//! encoding and the file formats the toolkit reads and writes.
//!
//! Labels follow the IO scheme with an explicit padding class, so every
//! model emits a distribution over exactly four labels. IO has no begin tag:
//! two adjacent words with the same entity label always form one span.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// Reserved token appended by [`pad`].
pub const PAD_TOKEN: &str = "<pad>";
/// Reserved token replacing every http(s) link.
pub const URL_TOKEN: &str = "<url>";
/// Reserved token replacing every @-mention.
pub const USER_TOKEN: &str = "<user>";

/// Number of output labels of every transducer.
pub const NUM_LABELS: usize = 4;

/// IO label with the padding class.
///
/// The discriminant order is the fixed label order used by the output layer
/// and by argmax tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    IAdr = 0,
    IOther = 1,
    O = 2,
    Pad = 3,
}

impl Label {
    pub const ALL: [Label; NUM_LABELS] = [Label::IAdr, Label::IOther, Label::O, Label::Pad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::IAdr => "I-ADR",
            Label::IOther => "I-Other",
            Label::O => "O",
            Label::Pad => "PAD",
        }
    }

    /// Entity labels are the ones that form spans.
    pub fn is_entity(self) -> bool {
        matches!(self, Label::IAdr | Label::IOther)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "I-ADR" => Ok(Label::IAdr),
            "I-Other" => Ok(Label::IOther),
            "O" => Ok(Label::O),
            "PAD" => Ok(Label::Pad),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// A token sequence with one label per token.
///
/// Positions at or beyond `original_length` are padding and carry
/// [`Label::Pad`]; no earlier position does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSequence {
    tokens: Vec<String>,
    labels: Vec<Label>,
    original_length: usize,
    source_id: String,
}

impl AnnotatedSequence {
    /// Builds an unpadded sequence.
    pub fn new(
        tokens: Vec<String>,
        labels: Vec<Label>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if tokens.len() != labels.len() {
            return Err(Error::InvalidAnnotation(format!(
                "{} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        if tokens.is_empty() {
            return Err(Error::InvalidAnnotation("empty sequence".into()));
        }
        if labels.contains(&Label::Pad) {
            return Err(Error::InvalidAnnotation(
                "PAD label inside the unpadded sequence".into(),
            ));
        }
        let original_length = tokens.len();
        Ok(AnnotatedSequence {
            tokens,
            labels,
            original_length,
            source_id: source_id.into(),
        })
    }

    /// An unlabeled sequence: every label is `O`.
    pub fn unlabeled(tokens: Vec<String>, source_id: impl Into<String>) -> Result<Self> {
        let labels = vec![Label::O; tokens.len()];
        Self::new(tokens, labels, source_id)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens before the padding region.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[..self.original_length]
    }

    /// Labels before the padding region.
    pub fn content_labels(&self) -> &[Label] {
        &self.labels[..self.original_length]
    }

    /// Returns a copy with its labels replaced, e.g. by decoded pseudo-labels.
    /// Positions beyond `original_length` are forced to PAD; a PAD decoded
    /// inside the content becomes `O`.
    pub fn relabeled(&self, labels: &[Label]) -> Result<Self> {
        if labels.len() != self.tokens.len() {
            return Err(Error::InvalidAnnotation(format!(
                "{} tokens but {} labels",
                self.tokens.len(),
                labels.len()
            )));
        }
        let mut labels = labels.to_vec();
        for (i, label) in labels.iter_mut().enumerate() {
            if i >= self.original_length {
                *label = Label::Pad;
            } else if *label == Label::Pad {
                *label = Label::O;
            }
        }
        Ok(AnnotatedSequence {
            tokens: self.tokens.clone(),
            labels,
            original_length: self.original_length,
            source_id: self.source_id.clone(),
        })
    }

    /// Pads (or truncates) to exactly `length` positions.
    pub fn padded(&self, length: usize) -> Self {
        let content = self.original_length.min(length);
        let mut tokens: Vec<String> = self.tokens[..content].to_vec();
        let mut labels: Vec<Label> = self.labels[..content].to_vec();
        tokens.resize(length, PAD_TOKEN.to_string());
        labels.resize(length, Label::Pad);
        AnnotatedSequence {
            tokens,
            labels,
            original_length: content,
            source_id: self.source_id.clone(),
        }
    }
}

/// An inclusive token range carrying an entity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: Label,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: Label) -> Self {
        Span { start, end, kind }
    }

    pub fn adr(start: usize, end: usize) -> Self {
        Span::new(start, end, Label::IAdr)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// An ordered collection of sequences padded to a common length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub examples: Vec<AnnotatedSequence>,
    pub max_length: usize,
}

impl Corpus {
    /// Pads every sequence to the longest original length among them.
    pub fn from_sequences(sequences: Vec<AnnotatedSequence>) -> Corpus {
        let max_length = sequences
            .iter()
            .map(|s| s.original_length())
            .max()
            .unwrap_or(0);
        pad(&sequences, max_length)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Re-pads every example to `length`.
    pub fn repadded(&self, length: usize) -> Corpus {
        pad(&self.examples, length)
    }

    /// Picks the examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            max_length: self.max_length,
        }
    }

    /// Every distinct content token, sorted.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        self.examples
            .iter()
            .flat_map(|s| s.content_tokens().iter().cloned())
            .collect()
    }
}

/// Drug-name and ADR keyword phrases used to select the unlabeled pool.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    pub drug_names: BTreeSet<String>,
    pub adr_phrases: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I, J, S, T>(drug_names: I, adr_phrases: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let norm = |s: &str| preprocess(s).join(" ");
        Lexicon {
            drug_names: drug_names
                .into_iter()
                .map(|s| norm(s.as_ref()))
                .filter(|s| !s.is_empty())
                .collect(),
            adr_phrases: adr_phrases
                .into_iter()
                .map(|s| norm(s.as_ref()))
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    /// Reads the two phrase files, one phrase per line.
    pub fn load(drug_path: impl AsRef<Path>, adr_path: impl AsRef<Path>) -> Result<Self> {
        let drugs = read_to_string(drug_path.as_ref())?;
        let adrs = read_to_string(adr_path.as_ref())?;
        Ok(Lexicon::new(drugs.lines(), adrs.lines()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.drug_names.is_empty() {
            return Err(Error::Config("drug-name lexicon is empty".into()));
        }
        if self.adr_phrases.is_empty() {
            return Err(Error::Config("ADR lexicon is empty".into()));
        }
        Ok(())
    }
}

fn emoticon_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let patterns: Vec<String> = include_str!("../resources/emoticons.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| format!("(?:{l})"))
            .collect();
        Regex::new(&format!("^(?:{})$", patterns.join("|"))).expect("emoticon patterns compile")
    })
}

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://")
}

fn is_mention(token: &str) -> bool {
    let mut chars = token.chars();
    chars.next() == Some('@')
        && chars
            .next()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn is_reserved(token: &str) -> bool {
    matches!(token, PAD_TOKEN | URL_TOKEN | USER_TOKEN)
}

/// Normalizes raw tweet text into lowercase word tokens.
///
/// Links become `<url>`, @-mentions become `<user>`, emoticons are dropped,
/// and every character other than letters, digits, apostrophes and hyphens
/// acts as a separator. Apostrophes and hyphens survive only inside a word.
/// The function is idempotent on its own output.
pub fn preprocess(raw_text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for token in raw_text.split_whitespace() {
        if is_reserved(token) {
            out.push(token.to_string());
        } else if is_url(token) {
            out.push(URL_TOKEN.to_string());
        } else if is_mention(token) {
            out.push(USER_TOKEN.to_string());
        } else if emoticon_regex().is_match(token) {
            continue;
        } else {
            let cleaned: String = token
                .chars()
                .map(|c| {
                    if c.is_alphanumeric() || c == '\'' || c == '-' {
                        c
                    } else {
                        ' '
                    }
                })
                .collect();
            for word in cleaned.split_whitespace() {
                let word = word.trim_matches(|c| c == '\'' || c == '-').to_lowercase();
                // Letter emoticons such as "xd" can surface once punctuation is gone.
                if !word.is_empty() && !emoticon_regex().is_match(&word) {
                    out.push(word);
                }
            }
        }
    }
    out
}

/// Pads every sequence to `max_length` with `<pad>`/PAD; longer sequences
/// are truncated to their first `max_length` tokens.
pub fn pad(sequences: &[AnnotatedSequence], max_length: usize) -> Corpus {
    Corpus {
        examples: sequences.iter().map(|s| s.padded(max_length)).collect(),
        max_length,
    }
}

/// Maximal runs of one entity label, in order. Adjacent mentions of the same
/// kind are indistinguishable under IO tags and come back as one span.
pub fn labels_to_spans(labels: &[Label]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let kind = labels[i];
        if !kind.is_entity() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < labels.len() && labels[i + 1] == kind {
            i += 1;
        }
        spans.push(Span::new(start, i, kind));
        i += 1;
    }
    spans
}

/// Renders spans back into an IO label list of `length` positions.
///
/// Adjacent spans of the same kind are indistinguishable in IO encoding, so
/// `labels_to_spans(spans_to_labels(s))` merges them into one span.
pub fn spans_to_labels(spans: &[Span], length: usize) -> Result<Vec<Label>> {
    let mut labels = vec![Label::O; length];
    let mut taken = vec![false; length];
    for span in spans {
        if !span.kind.is_entity() {
            return Err(Error::InvalidAnnotation(format!(
                "span kind {} is not an entity label",
                span.kind
            )));
        }
        if span.start > span.end || span.end >= length {
            return Err(Error::InvalidAnnotation(format!(
                "span {}..={} out of range for length {length}",
                span.start, span.end
            )));
        }
        for i in span.start..=span.end {
            if taken[i] {
                return Err(Error::InvalidAnnotation(format!(
                    "overlapping spans at position {i}"
                )));
            }
            taken[i] = true;
            labels[i] = span.kind;
        }
    }
    Ok(labels)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lowercases a labeled-corpus token and maps links and mentions to their
/// reserved tokens. Never drops the token, so labels stay aligned.
pub fn normalize_token(token: &str) -> String {
    if is_reserved(token) {
        token.to_string()
    } else if is_url(token) {
        URL_TOKEN.to_string()
    } else if is_mention(token) {
        USER_TOKEN.to_string()
    } else {
        token.to_lowercase()
    }
}

/// Parses the `TOKEN<TAB>LABEL` column format; blank lines separate
/// sequences. Tokens pass through [`normalize_token`].
pub fn parse_labeled(text: &str, path: &Path) -> Result<Corpus> {
    let mut sequences = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    let mut start_line = 1;

    let mut flush =
        |tokens: &mut Vec<String>, labels: &mut Vec<Label>, start_line: usize| -> Result<()> {
            if tokens.is_empty() {
                return Ok(());
            }
            let id = format!("L{:05}", sequences.len());
            let seq = AnnotatedSequence::new(std::mem::take(tokens), std::mem::take(labels), id)
                .map_err(|e| Error::parse(path, start_line, e.to_string()))?;
            sequences.push(seq);
            Ok(())
        };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut labels, start_line)?;
            continue;
        }
        if tokens.is_empty() {
            start_line = line_no;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected TOKEN<TAB>LABEL, found {} field(s)", fields.len()),
            ));
        }
        let label: Label = fields[1]
            .trim()
            .parse()
            .map_err(|e: String| Error::parse(path, line_no, e))?;
        if label == Label::Pad {
            return Err(Error::parse(
                path,
                line_no,
                "PAD is not allowed in corpus files",
            ));
        }
        if fields[0].is_empty() {
            return Err(Error::parse(path, line_no, "empty token"));
        }
        tokens.push(normalize_token(fields[0]));
        labels.push(label);
    }
    flush(&mut tokens, &mut labels, start_line)?;
    Ok(Corpus::from_sequences(sequences))
}

/// Loads a labeled corpus file.
pub fn load_labeled(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    parse_labeled(&read_to_string(path)?, path)
}

/// Preprocesses raw texts, one per line; lines that normalize to nothing are
/// dropped. Source ids record the 1-based line number.
pub fn parse_unlabeled(text: &str) -> Vec<AnnotatedSequence> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let tokens = preprocess(line);
            if tokens.is_empty() {
                None
            } else {
                AnnotatedSequence::unlabeled(tokens, format!("U{:07}", i + 1)).ok()
            }
        })
        .collect()
}

/// Loads an unlabeled pool file.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSequence>> {
    let path = path.as_ref();
    Ok(parse_unlabeled(&read_to_string(path)?))
}

/// Renders sequences in the labeled column format (padding omitted).
pub fn format_labeled(sequences: &[AnnotatedSequence]) -> String {
    let mut out = String::new();
    for (i, seq) in sequences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (token, label) in seq.content_tokens().iter().zip(seq.content_labels()) {
            out.push_str(token);
            out.push('\t');
            out.push_str(label.as_str());
            out.push('\n');
        }
    }
    out
}

fn contains_phrase(tokens: &[String], phrase: &[&str]) -> bool {
    !phrase.is_empty()
        && tokens.len() >= phrase.len()
        && tokens
            .windows(phrase.len())
            .any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

fn contains_any(tokens: &[String], phrases: &BTreeSet<String>) -> bool {
    phrases.iter().any(|p| {
        let words: Vec<&str> = p.split(' ').collect();
        contains_phrase(tokens, &words)
    })
}

/// Keeps the sequences that mention at least one drug name and at least one
/// ADR phrase. Phrases match as consecutive token runs; order is preserved.
pub fn lexicon_filter(
    sequences: &[AnnotatedSequence],
    lexicon: &Lexicon,
) -> Vec<AnnotatedSequence> {
    sequences
        .iter()
        .filter(|s| {
            let tokens = s.content_tokens();
            contains_any(tokens, &lexicon.drug_names) && contains_any(tokens, &lexicon.adr_phrases)
        })
        .cloned()
        .collect()
}
