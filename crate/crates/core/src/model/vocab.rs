use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Token-to-id table. Id 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, index }
    }

    /// Every token seen at least `min_count` times, ordered by first appearance.
    pub fn build(sentences: &[Sentence], min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order = Vec::new();
        for tok in sentences.iter().flat_map(|s| &s.tokens) {
            let c = counts.entry(tok.as_str()).or_insert(0);
            if *c == 0 {
                order.push(tok.as_str());
            }
            *c += 1;
        }
        let mut words = vec![UNK.to_string()];
        words.extend(
            order
                .into_iter()
                .filter(|w| counts[w] >= min_count.max(1) && *w != UNK)
                .map(str::to_string),
        );
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        Self::from_words(words)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

/// Coarse orthographic class of a token; gives unknown tokens something to go on.
pub const SHAPE_CLASSES: usize = 6;

pub fn shape_class(token: &str) -> usize {
    let mut chars = token.chars();
    let Some(first) = chars.next() else { return 5 };
    if token.chars().any(|c| c.is_ascii_digit()) {
        return 3;
    }
    if token.chars().all(|c| !c.is_alphanumeric()) {
        return 4;
    }
    let rest_lower = chars.clone().all(|c| !c.is_uppercase());
    if first.is_lowercase() && rest_lower {
        0
    } else if first.is_uppercase() && rest_lower {
        1
    } else if token.chars().count() > 1 && token.chars().all(|c| !c.is_lowercase()) {
        2
    } else {
        5
    }
}

/// Reads `word v_1 ... v_d` lines into a vocabulary and an embedding table.
/// The unknown-token row is the zero vector.
pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<(Vocab, Matrix)> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut words = vec![UNK.to_string()];
    let mut data = vec![0.0; dim];
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut cols = line.split_whitespace();
        let Some(word) = cols.next() else { continue };
        let values: std::result::Result<Vec<f64>, _> = cols.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| Error::Parse {
            origin: origin.clone(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if values.len() != dim {
            return Err(Error::Parse {
                origin: origin.clone(),
                line: idx + 1,
                reason: format!("expected {dim} values, got {}", values.len()),
            });
        }
        if word == UNK {
            data[..dim].copy_from_slice(&values);
            continue;
        }
        words.push(word.to_string());
        data.extend(values);
    }
    let rows = words.len();
    Ok((
        Vocab::from_words(words),
        Matrix {
            rows,
            cols: dim,
            data,
        },
    ))
}
