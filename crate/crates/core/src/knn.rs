//! Nearest-neighbour augmented inference over cached training entities.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Layer, Sentence};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::model::SpanModel;

const MAGIC: &[u8; 8] = b"DSNRKNN\0";
pub const DATASTORE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
    /// Weight of the neighbour vote in the final distribution.
    pub mu: f64,
    /// Use the vote shares instead of a one-hot vote.
    pub weighted: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 64,
            mu: 0.7,
            weighted: false,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!(
                "mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// Entity representations and their labels, tied to the checkpoint that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStore {
    dim: usize,
    labels: LabelSet,
    checkpoint_hash: String,
    keys: Vec<f32>,
    values: Vec<u32>,
    norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub label: usize,
    /// Distribution over the full label set.
    pub dist: Vec<f64>,
}

impl DataStore {
    pub fn new(
        dim: usize,
        labels: LabelSet,
        checkpoint_hash: impl Into<String>,
        keys: Vec<f32>,
        values: Vec<u32>,
    ) -> Result<Self> {
        if dim == 0 || keys.len() != dim * values.len() {
            return Err(Error::Dimension {
                what: "datastore keys",
                expected: dim * values.len(),
                got: keys.len(),
            });
        }
        if let Some(&bad) = values
            .iter()
            .find(|&&v| v == 0 || v as usize >= labels.len())
        {
            return Err(Error::InvalidArgument(format!(
                "datastore values must be entity labels, found index {bad}"
            )));
        }
        let norms: Vec<f64> = keys
            .chunks(dim)
            .map(|k| {
                k.iter()
                    .map(|&v| f64::from(v) * f64::from(v))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        if norms.contains(&0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            dim,
            labels,
            checkpoint_hash: checkpoint_hash.into(),
            keys,
            values,
            norms,
        })
    }

    /// One entry per distant entity span of the corpus, in corpus order.
    pub fn build(model: &SpanModel, sentences: &[Sentence]) -> Result<Self> {
        let per_sentence: Vec<Result<(Vec<f32>, Vec<u32>)>> = sentences
            .par_iter()
            .map(|s| {
                let Some(entities) = s.layer(Layer::Distant) else {
                    return Ok((Vec::new(), Vec::new()));
                };
                if entities.is_empty() {
                    return Ok((Vec::new(), Vec::new()));
                }
                let spans: Vec<(usize, usize)> = entities.iter().map(|e| e.bounds()).collect();
                let fwd = model.forward(&s.tokens, &spans)?;
                let mut values = Vec::with_capacity(entities.len());
                for e in entities {
                    values.push(model.labels.entity_index(&e.label)? as u32);
                }
                Ok((fwd.r.iter().map(|&v| v as f32).collect(), values))
            })
            .collect();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for part in per_sentence {
            let (k, v) = part?;
            keys.extend(k);
            values.extend(v);
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument(
                "corpus has no distant entity spans".into(),
            ));
        }
        Self::new(
            model.repr_dim(),
            model.labels.clone(),
            model.fingerprint(),
            keys,
            values,
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn checkpoint_hash(&self) -> &str {
        &self.checkpoint_hash
    }

    pub fn key(&self, idx: usize) -> &[f32] {
        &self.keys[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn value(&self, idx: usize) -> usize {
        self.values[idx] as usize
    }

    /// Fails unless the store was built from exactly this model.
    pub fn check_model(&self, model: &SpanModel) -> Result<()> {
        if model.labels != self.labels {
            return Err(Error::LabelMismatch {
                expected: model.labels.names().to_vec(),
                found: self.labels.names().to_vec(),
            });
        }
        let hash = model.fingerprint();
        if hash != self.checkpoint_hash {
            return Err(Error::HashMismatch {
                expected: hash,
                found: self.checkpoint_hash.clone(),
            });
        }
        Ok(())
    }

    /// Cosine similarity of every entry to `query`.
    pub fn similarities(&self, query: &[f64]) -> Result<Vec<f64>> {
        if query.len() != self.dim {
            return Err(Error::Dimension {
                what: "knn query",
                expected: self.dim,
                got: query.len(),
            });
        }
        let qn = crate::model::linalg::norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(self
            .keys
            .chunks(self.dim)
            .zip(&self.norms)
            .map(|(key, &kn)| {
                let d: f64 = key.iter().zip(query).map(|(&a, b)| f64::from(a) * b).sum();
                d / (kn * qn)
            })
            .collect())
    }

    /// Entry indices of the `k` most similar keys, most similar first; equal
    /// similarities go to the lower index.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        let sims = self.similarities(query)?;
        let k = k.clamp(1, self.len());
        let order = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b));
        let mut idx: Vec<usize> = (0..sims.len()).collect();
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(idx.into_iter().map(|i| (i, sims[i])).collect())
    }

    /// Majority label among the `k` nearest entries. Equal vote counts go to
    /// the larger summed similarity, then to the lower label index.
    pub fn vote(&self, query: &[f64], k: usize, weighted: bool) -> Result<Vote> {
        let neighbours = self.nearest(query, k)?;
        let nl = self.labels.len();
        let mut counts = vec![0usize; nl];
        let mut sums = vec![0.0; nl];
        for &(i, s) in &neighbours {
            counts[self.value(i)] += 1;
            sums[self.value(i)] += s;
        }
        let label = (1..nl)
            .max_by(|&a, &b| {
                counts[a]
                    .cmp(&counts[b])
                    .then(sums[a].total_cmp(&sums[b]))
                    .then(b.cmp(&a))
            })
            .expect("label set has an entity type");
        let dist = if weighted {
            counts
                .iter()
                .map(|&c| c as f64 / neighbours.len() as f64)
                .collect()
        } else {
            let mut d = vec![0.0; nl];
            d[label] = 1.0;
            d
        };
        Ok(Vote { label, dist })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&DATASTORE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.labels.len() as u32).to_le_bytes())?;
        for name in self.labels.names() {
            write_str(w, name)?;
        }
        write_str(w, &self.checkpoint_hash)?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.keys {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |reason: String| Error::Format {
            what: "datastore",
            reason,
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != MAGIC {
            return Err(bad("not a datastore file".into()));
        }
        let io = |e: std::io::Error| bad(format!("truncated file: {e}"));
        let version = read_u32(&mut r).map_err(io)?;
        if version != DATASTORE_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let dim = read_u32(&mut r).map_err(io)? as usize;
        let num_labels = read_u32(&mut r).map_err(io)? as usize;
        if num_labels > 1 << 16 {
            return Err(bad(format!("implausible label count {num_labels}")));
        }
        let names = (0..num_labels)
            .map(|_| read_str(&mut r))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(io)?;
        let labels = LabelSet::try_from(names)?;
        let checkpoint_hash = read_str(&mut r).map_err(io)?;
        let count = read_u64(&mut r).map_err(io)? as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(io)?;
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(count * 4));
        if expected != Some(bytes.len()) {
            return Err(bad(format!(
                "expected {expected:?} payload bytes, found {}",
                bytes.len()
            )));
        }
        let (key_bytes, value_bytes) = bytes.split_at(count * dim * 4);
        let keys = key_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let values = value_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, labels, checkpoint_hash, keys, values)
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "string too long",
        ));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// `(1 − μ)·o_model + μ·o_knn`.
pub fn interpolate_distribution(o_model: &[f64], o_knn: &[f64], mu: f64) -> Vec<f64> {
    o_model
        .iter()
        .zip(o_knn)
        .map(|(a, b)| (1.0 - mu) * a + mu * b)
        .collect()
}

/// Similarity-then-index ordering used by [`DataStore::nearest`].
pub fn neighbour_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}
