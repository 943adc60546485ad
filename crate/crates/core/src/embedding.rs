//! Triplet text, base embeddings, cosine scoring and the projection adapter.
//!
//! Base embeddings come either from a feature-hashing embedder or from a
//! store of precomputed vectors keyed by turn. Routing never sees base
//! vectors directly: they pass through a `dim x dim` linear adapter and are
//! renormalized. A fresh adapter is the identity.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::{BufRead, Write};

use fnv::FnvHasher;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dialogue::{Triplet, TurnKey};
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    components: Vec<f32>,
    normalized: bool,
}

impl EmbeddingVector {
    /// Wraps raw components without normalizing them.
    pub fn new(components: Vec<f32>) -> Self {
        Self {
            components,
            normalized: false,
        }
    }

    /// Scales to unit length. A zero vector is returned unchanged and
    /// stays flagged unnormalized.
    pub fn normalized(components: Vec<f32>) -> Self {
        let wide: Vec<f64> = components.iter().map(|&x| x as f64).collect();
        Self::from_f64_normalized(&wide)
    }

    pub(crate) fn from_f64_normalized(values: &[f64]) -> Self {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= NORM_EPS {
            return Self::new(vec![0.0; values.len()]);
        }
        Self {
            components: values.iter().map(|x| (x / norm) as f32).collect(),
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f32] {
        &self.components
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        self.components
            .iter()
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|x| x.is_finite())
    }

    pub(crate) fn to_f64(&self) -> Array1<f64> {
        self.components.iter().map(|&x| x as f64).collect()
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    check_dims(u.dim(), v.dim())?;
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.components.iter().zip(&v.components) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu <= 0.0 || nv <= 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Renders a triplet as
/// `[state] d-s=v; d-s=v [system] <system> [user] <user>`, with state
/// entries sorted by rendered slot name.
pub fn serialize_triplet(triplet: &Triplet) -> String {
    let mut entries: Vec<(String, &str)> = triplet
        .prev_state
        .iter()
        .map(|(slot, value)| (slot.to_string(), value))
        .collect();
    entries.sort();
    let state = if entries.is_empty() {
        "none".to_string()
    } else {
        entries
            .iter()
            .map(|(slot, value)| format!("{slot}={value}"))
            .collect::<Vec<_>>()
            .join("; ")
    };
    format!(
        "[state] {state} [system] {} [user] {}",
        triplet.system_utterance, triplet.user_utterance
    )
}

/// Signed feature hashing over lowercased word unigrams and bigrams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub const MIN_DIM: usize = 16;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < Self::MIN_DIM || !dim.is_power_of_two() {
            return Err(Error::Config(format!(
                "hashing dimension must be a power of two >= {}, got {dim}",
                Self::MIN_DIM
            )));
        }
        Ok(Self { dim, seed })
    }

    fn feature(&self, token: &str) -> (usize, f64) {
        let mut hasher = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ self.seed);
        hasher.write(token.as_bytes());
        let h = splitmix64(hasher.finish());
        let index = (h as usize) & (self.dim - 1);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        (index, sign)
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let lowered = text.to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let mut acc = vec![0.0f64; self.dim];
        for word in &words {
            let (i, s) = self.feature(word);
            acc[i] += s;
        }
        for pair in words.windows(2) {
            let (i, s) = self.feature(&format!("{} {}", pair[0], pair[1]));
            acc[i] += s;
        }
        EmbeddingVector::from_f64_normalized(&acc)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<EmbeddingVector> {
    Ok(HashingEmbedder::new(dim, seed)?.embed_text(text))
}

/// Precomputed embeddings keyed by turn.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<TurnKey, EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct StoreRecord {
    key: String,
    vector: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, key: &TurnKey) -> bool {
        self.vectors.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &TurnKey> {
        self.vectors.keys()
    }

    pub fn insert(&mut self, key: TurnKey, vector: EmbeddingVector) -> Result<()> {
        if self.vectors.is_empty() && self.dim == 0 {
            self.dim = vector.dim();
        }
        if vector.dim() != self.dim {
            return Err(Error::StoreDimension {
                key: key.to_string(),
                expected: self.dim,
                actual: vector.dim(),
            });
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn lookup(&self, key: &TurnKey) -> Result<&EmbeddingVector> {
        self.vectors
            .get(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    /// Reads `{"key": ..., "vector": [...]}` records, one per line.
    /// Vectors are stored as given (no renormalization).
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut store = Self::new(0);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: StoreRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            let vector = EmbeddingVector::new(record.vector);
            if !vector.is_finite() {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: format!("non-finite component for key `{}`", record.key),
                });
            }
            let key = TurnKey::from(record.key.as_str());
            if store.contains(&key) {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: format!("duplicate key `{key}`"),
                });
            }
            store.insert(key, vector)?;
        }
        Ok(store)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for (key, vector) in &self.vectors {
            let record = StoreRecord {
                key: key.to_string(),
                vector: vector.components.clone(),
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Source of base (pre-adapter) embeddings for triplets.
#[derive(Clone, Debug)]
pub enum Embedder {
    Hashing(HashingEmbedder),
    /// Frozen vectors looked up by turn key; the triplet text is ignored.
    Store(EmbeddingStore),
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::Hashing(h) => h.dim,
            Embedder::Store(s) => s.dim(),
        }
    }

    pub fn embed(&self, triplet: &Triplet) -> Result<EmbeddingVector> {
        match self {
            Embedder::Hashing(h) => Ok(h.embed_text(&serialize_triplet(triplet))),
            Embedder::Store(s) => s.lookup(&triplet.key()).cloned(),
        }
    }
}

/// Trainable linear map applied to base embeddings before cosine scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdapterFile", into = "AdapterFile")]
pub struct ProjectionAdapter {
    matrix: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct AdapterFile {
    dim: usize,
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<AdapterFile> for ProjectionAdapter {
    type Error = Error;

    fn try_from(file: AdapterFile) -> Result<Self> {
        if file.matrix.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                actual: file.matrix.len(),
            });
        }
        let mut flat = Vec::with_capacity(file.dim * file.dim);
        for row in &file.matrix {
            check_dims(file.dim, row.len())?;
            flat.extend_from_slice(row);
        }
        let matrix = Array2::from_shape_vec((file.dim, file.dim), flat)
            .map_err(|e| Error::Config(e.to_string()))?;
        Self::from_matrix(matrix)
    }
}

impl From<ProjectionAdapter> for AdapterFile {
    fn from(adapter: ProjectionAdapter) -> Self {
        AdapterFile {
            dim: adapter.dim(),
            matrix: adapter.matrix.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

impl ProjectionAdapter {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Array2::eye(dim),
        }
    }

    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        check_dims(matrix.nrows(), matrix.ncols())?;
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("adapter matrix has non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.matrix
    }

    /// `W v`, renormalized. A zero product stays zero.
    pub fn project(&self, v: &EmbeddingVector) -> Result<EmbeddingVector> {
        check_dims(self.dim(), v.dim())?;
        let product = self.matrix.dot(&v.to_f64());
        Ok(EmbeddingVector::from_f64_normalized(
            product.as_slice().expect("contiguous"),
        ))
    }
}

pub fn project(adapter: &ProjectionAdapter, v: &EmbeddingVector) -> Result<EmbeddingVector> {
    adapter.project(v)
}
