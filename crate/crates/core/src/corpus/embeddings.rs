use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng as _;

use super::{Plot, QAInstance};
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, rng_from_seed, stable_hash, Matrix};

/// Half-width of the uniform range used for unknown-word vectors.
pub const OOV_RANGE: f64 = 0.05;

/// Fixed word vectors plus a deterministic fallback for unknown tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    known: HashMap<String, Vec<f64>>,
    oov_seed: u64,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_seed: u64) -> Self {
        EmbeddingTable {
            dim,
            known: HashMap::new(),
            oov_seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_seed(&self) -> u64 {
        self.oov_seed
    }

    pub fn set_oov_seed(&mut self, seed: u64) {
        self.oov_seed = seed;
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.known.contains_key(token)
    }

    /// Inserts a vector, returning the previous one for that token.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<Option<Vec<f64>>> {
        if vector.len() != self.dim {
            return Err(Error::Config(format!(
                "vector of length {} in a {}-dimensional table",
                vector.len(),
                self.dim
            )));
        }
        Ok(self.known.insert(token.into(), vector))
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.known.get(token).map(Vec::as_slice)
    }

    /// Stored vector, or the deterministic unknown-word vector.
    pub fn lookup(&self, token: &str) -> Cow<'_, [f64]> {
        match self.known.get(token) {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(self.oov_vector(token)),
        }
    }

    /// Uniform draw in `±OOV_RANGE` seeded by the token hash and `oov_seed`.
    pub fn oov_vector(&self, token: &str) -> Vec<f64> {
        let mut rng = rng_from_seed(derive_seed(self.oov_seed, token));
        (0..self.dim).map(|_| rng.random_range(-OOV_RANGE..=OOV_RANGE)).collect()
    }

    /// Known tokens in sorted order.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.known.keys().map(String::as_str).collect();
        words.sort_unstable();
        words
    }

    /// Order-independent content hash of dimension, seed and all vectors.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.dim as u64).to_le_bytes());
        bytes.extend_from_slice(&self.oov_seed.to_le_bytes());
        for word in self.vocabulary() {
            bytes.extend_from_slice(word.as_bytes());
            bytes.push(0);
            for v in &self.known[word] {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        stable_hash(&bytes)
    }

    /// One column per token; an empty sequence becomes a single zero column.
    pub fn encode_tokens(&self, tokens: &[String]) -> Matrix {
        if tokens.is_empty() {
            return Matrix::zeros(self.dim, 1);
        }
        let mut m = Matrix::zeros(self.dim, tokens.len());
        for (c, tok) in tokens.iter().enumerate() {
            for (r, v) in self.lookup(tok).iter().enumerate() {
                m.set(r, c, *v);
            }
        }
        m
    }

    /// Writes `token v1 ... v_dim` lines in sorted token order. Values use
    /// the shortest representation that parses back to the same `f64`.
    pub fn write(&self, out: &mut impl Write) -> std::io::Result<()> {
        for word in self.vocabulary() {
            write!(out, "{word}")?;
            for v in &self.known[word] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Model input matrices for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    pub question: Matrix,
    pub sentences: Vec<Matrix>,
    pub candidates: Vec<Matrix>,
}

pub fn encode_instance(inst: &QAInstance, plot: &Plot, table: &EmbeddingTable) -> EncodedInstance {
    EncodedInstance {
        question: table.encode_tokens(&inst.question),
        sentences: plot.sentences.iter().map(|s| table.encode_tokens(s)).collect(),
        candidates: inst.candidates.iter().map(|a| table.encode_tokens(a)).collect(),
    }
}

pub fn load_embeddings(path: &Path, dim: usize) -> Result<EmbeddingTable> {
    load_embeddings_filtered(path, dim, None)
}

/// Like [`load_embeddings`] but keeps only tokens in `keep`, which makes
/// multi-gigabyte vector files tractable for a fixed dataset vocabulary.
pub fn load_embeddings_filtered(path: &Path, dim: usize, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), dim, keep)
}

pub fn read_embeddings(reader: impl BufRead, dim: usize, keep: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut table = EmbeddingTable::new(dim, 0);
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(format!("line {lineno}"), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default().to_owned();
        if keep.is_some_and(|k| !k.contains(&token)) {
            continue;
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::parse(format!("line {lineno}"), format!("invalid number {f:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("expected {dim} values after {token:?}, found {}", values.len()),
            ));
        }
        if table.insert(token.clone(), values)?.is_some() {
            log::warn!("duplicate embedding for {token:?} at line {lineno}; keeping the later vector");
        }
    }
    Ok(table)
}
