//! Per-view word embedding tables.
//!
//! Tables are frozen inputs. Unknown tokens resolve to a pseudo-random vector
//! that depends only on `(oov_seed, token)`: the token's FNV-1a hash is mixed
//! with the seed through SplitMix64, the result seeds a ChaCha8 generator, and
//! `dim` values are drawn uniformly from `[-OOV_RANGE, OOV_RANGE]`. Resolved
//! vectors are cached behind a lock, so a table can be shared across threads.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rand::Rng;

use crate::corpus::{PAD_TOKEN, URL_TOKEN, USER_TOKEN};
use crate::error::{Error, Result};
use crate::rng;

/// Half-width of the uniform range for unknown-word vectors.
pub const OOV_RANGE: f64 = 0.25;

/// Word-to-vector lookup table with a deterministic OOV policy.
#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    oov_seed: u64,
    vectors: HashMap<String, Arc<[f64]>>,
    oov_cache: RwLock<HashMap<String, Arc<[f64]>>>,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            dim: self.dim,
            oov_seed: self.oov_seed,
            vectors: self.vectors.clone(),
            oov_cache: RwLock::new(self.oov_cache.read().expect("oov cache poisoned").clone()),
        }
    }
}

impl EmbeddingTable {
    /// A table holding only the reserved tokens; every other word goes
    /// through the OOV generator.
    pub fn empty(dim: usize, oov_seed: u64) -> Self {
        let mut table = EmbeddingTable {
            dim,
            oov_seed,
            vectors: HashMap::new(),
            oov_cache: RwLock::new(HashMap::new()),
        };
        table.add_reserved();
        table
    }

    /// A table with a seeded random vector for every word in `vocabulary`.
    pub fn random<'a, I>(dim: usize, oov_seed: u64, vocabulary: I) -> Self
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut table = Self::empty(dim, oov_seed);
        for word in vocabulary {
            if !table.vectors.contains_key(word) {
                let v = table.oov_vector(word);
                table.vectors.insert(word.clone(), v.into());
            }
        }
        table
    }

    /// Builds a table from explicit vectors.
    pub fn from_vectors<I>(dim: usize, oov_seed: u64, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut table = EmbeddingTable {
            dim,
            oov_seed,
            vectors: HashMap::new(),
            oov_cache: RwLock::new(HashMap::new()),
        };
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding of {word:?}")));
            }
            table.vectors.insert(word, vector.into());
        }
        table.add_reserved();
        Ok(table)
    }

    fn add_reserved(&mut self) {
        // <pad> is always the zero vector, even if a file supplies one.
        self.vectors
            .insert(PAD_TOKEN.to_string(), vec![0.0; self.dim].into());
        for token in [URL_TOKEN, USER_TOKEN] {
            if !self.vectors.contains_key(token) {
                let v = self.oov_vector(token);
                self.vectors.insert(token.to_string(), v.into());
            }
        }
    }

    fn oov_vector(&self, token: &str) -> Vec<f64> {
        let seed = rng::mix64(self.oov_seed ^ rng::fnv1a(token.as_bytes()));
        let mut gen = rng::rng(seed);
        (0..self.dim)
            .map(|_| gen.gen_range(-OOV_RANGE..=OOV_RANGE))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    /// Number of stored (non-OOV) entries, reserved tokens included.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    /// Resolves `token` to its input vector.
    pub fn lookup(&self, token: &str) -> Arc<[f64]> {
        if let Some(v) = self.vectors.get(token) {
            return Arc::clone(v);
        }
        if let Some(v) = self
            .oov_cache
            .read()
            .expect("oov cache poisoned")
            .get(token)
        {
            return Arc::clone(v);
        }
        let fresh: Arc<[f64]> = self.oov_vector(token).into();
        let mut cache = self.oov_cache.write().expect("oov cache poisoned");
        Arc::clone(cache.entry(token.to_string()).or_insert(fresh))
    }

    /// Number of cached OOV entries.
    pub fn oov_cached(&self) -> usize {
        self.oov_cache.read().expect("oov cache poisoned").len()
    }
}

/// Parses the textual word-vector format: a `<count> <dim>` header, then
/// one `word v1 .. v_dim` line per entry.
pub fn parse_embedding_table(
    text: &str,
    dim: usize,
    oov_seed: u64,
    path: &Path,
) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing `<count> <dim>` header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::parse(path, 1, "header must be `<count> <dim>`"));
    }
    let count: usize = fields[0]
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad vocabulary count {:?}", fields[0])))?;
    let file_dim: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad dimension {:?}", fields[1])))?;
    if file_dim != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: file_dim,
        });
    }

    let mut entries = Vec::with_capacity(count);
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a first field");
        let vector = parts
            .map(|p| {
                p.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(path, line_no, format!("bad component {p:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.len() != dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {dim} components, found {}", vector.len()),
            ));
        }
        entries.push((word.to_string(), vector));
    }
    if entries.len() != count {
        log::warn!(
            "{}: header declares {count} vectors, found {}",
            path.display(),
            entries.len()
        );
    }
    EmbeddingTable::from_vectors(dim, oov_seed, entries)
}

/// Loads a word-vector file, checking its dimension against `dim`.
pub fn load_embedding_table(
    path: impl AsRef<Path>,
    dim: usize,
    oov_seed: u64,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_table(&text, dim, oov_seed, path)
}

/// Recurrent cell used by a view's transducer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of stacked gate blocks in the cell's weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "LSTM",
            CellKind::Gru => "GRU",
        })
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LSTM" => Ok(CellKind::Lstm),
            "GRU" => Ok(CellKind::Gru),
            other => Err(format!("unknown cell kind {other:?}")),
        }
    }
}

/// Where a view's input vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    File(PathBuf),
    /// Seeded random vectors for every word.
    Random,
}

impl FromStr for EmbeddingSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.is_empty() {
            Err("empty embedding source".into())
        } else if s == "random" {
            Ok(EmbeddingSource::Random)
        } else {
            Ok(EmbeddingSource::File(PathBuf::from(s)))
        }
    }
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingSource::File(p) => write!(f, "{}", p.display()),
            EmbeddingSource::Random => f.write_str("random"),
        }
    }
}

/// One (embedding source, transducer architecture) pairing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSpec {
    pub name: String,
    pub embedding_source: EmbeddingSource,
    pub embedding_dim: usize,
    pub cell_kind: CellKind,
    pub hidden_dim: usize,
}

impl ViewSpec {
    /// Generic-tweet embeddings (400-d) feeding a bi-LSTM.
    pub fn view1(source: EmbeddingSource) -> Self {
        ViewSpec {
            name: "view1".into(),
            embedding_source: source,
            embedding_dim: 400,
            cell_kind: CellKind::Lstm,
            hidden_dim: 500,
        }
    }

    /// Domain-tweet embeddings (300-d) feeding a bi-GRU.
    pub fn view2(source: EmbeddingSource) -> Self {
        ViewSpec {
            name: "view2".into(),
            embedding_source: source,
            embedding_dim: 300,
            cell_kind: CellKind::Gru,
            hidden_dim: 500,
        }
    }

    pub fn with_dims(mut self, embedding_dim: usize, hidden_dim: usize) -> Self {
        self.embedding_dim = embedding_dim;
        self.hidden_dim = hidden_dim;
        self
    }

    /// Builds this view's table. Random tables pre-resolve `vocabulary`.
    pub fn load_table(
        &self,
        oov_seed: u64,
        vocabulary: &BTreeSet<String>,
    ) -> Result<EmbeddingTable> {
        match &self.embedding_source {
            EmbeddingSource::File(path) => load_embedding_table(path, self.embedding_dim, oov_seed),
            EmbeddingSource::Random => Ok(EmbeddingTable::random(
                self.embedding_dim,
                oov_seed,
                vocabulary,
            )),
        }
    }
}

/// A view spec with its materialized table.
#[derive(Debug, Clone)]
pub struct View {
    pub spec: ViewSpec,
    pub table: EmbeddingTable,
}

impl View {
    pub fn new(spec: ViewSpec, table: EmbeddingTable) -> Result<Self> {
        if spec.embedding_dim != table.dim() {
            return Err(Error::Config(format!(
                "{} declares {}-d embeddings but its table is {}-d",
                spec.name,
                spec.embedding_dim,
                table.dim()
            )));
        }
        Ok(View { spec, table })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_file_with_reserved_tokens() {
        let text = "2 3\nseroquel 0.1 0.2 0.3\ngain -1 0 1.5\n";
        let table = parse_embedding_table(text, 3, 7, Path::new("e")).unwrap();
        assert_eq!(table.len(), 5);
        assert_eq!(&*table.lookup("seroquel"), &[0.1, 0.2, 0.3]);
        assert_eq!(&*table.lookup("<pad>"), &[0.0, 0.0, 0.0]);
        assert!(table.contains("<url>") && table.contains("<user>"));
    }

    #[test]
    fn dimension_mismatch_names_dims() {
        let err = parse_embedding_table("1 300\n", 400, 0, Path::new("e")).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 400,
                found: 300
            }
        ));
        assert!(err.to_string().contains("400") && err.to_string().contains("300"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_embedding_table("2 2\na 1 2\nb 1 x\n", 2, 0, Path::new("e")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse_embedding_table("1 2\na 1\n", 2, 0, Path::new("e")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn oov_vectors_are_deterministic_and_bounded() {
        let table = EmbeddingTable::empty(8, 42);
        let a = table.lookup("ibuprofen");
        let b = table.lookup("ibuprofen");
        assert_eq!(a, b);
        assert_ne!(a, table.lookup("naproxen"));
        assert!(a.iter().all(|x| x.abs() <= OOV_RANGE && x.is_finite()));
        // Same seed, fresh table: same vector.
        assert_eq!(EmbeddingTable::empty(8, 42).lookup("ibuprofen"), a);
        assert_ne!(EmbeddingTable::empty(8, 43).lookup("ibuprofen"), a);
    }

    #[test]
    fn random_table_covers_vocabulary() {
        let vocab: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let table = EmbeddingTable::random(4, 1, &vocab);
        for w in &vocab {
            assert!(table.contains(w));
        }
        assert_eq!(table.lookup("a"), EmbeddingTable::empty(4, 1).lookup("a"));
        assert_eq!(table.oov_cached(), 0);
    }

    #[test]
    fn concurrent_lookups_agree() {
        let table = EmbeddingTable::empty(16, 9);
        let words: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
        let results: Vec<Vec<Arc<[f64]>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| s.spawn(|| words.iter().map(|w| table.lookup(w)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in &results[1..] {
            assert_eq!(r, &results[0]);
        }
        assert_eq!(table.oov_cached(), 200);
    }

    #[test]
    fn view_rejects_mismatched_table() {
        let spec = ViewSpec::view1(EmbeddingSource::Random).with_dims(5, 4);
        assert!(View::new(spec.clone(), EmbeddingTable::empty(6, 0)).is_err());
        assert!(View::new(spec, EmbeddingTable::empty(5, 0)).is_ok());
    }
}
