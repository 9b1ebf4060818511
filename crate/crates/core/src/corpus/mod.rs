//! Sentences, entity spans, and the tooling that produces and audits distant
//! annotations.
//!
//! Span indices are 1-based and inclusive on both ends: `(1, 1)` is the first
//! token, `(2, 4)` covers the second through fourth tokens. Every serialized
//! format in this crate uses the same convention.

mod conll;
mod gazetteer;
mod inject;
mod noise;
mod spans;
pub mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSet, OUTSIDE};

pub use conll::{load_conll, read_conll, spans_to_tags, tags_to_spans, write_conll, Repair};
pub use gazetteer::{match_gazetteer, Gazetteer};
pub use inject::{inject_noise, inject_noise_with_stats, InjectStats, NoiseSpec};
pub use noise::{compute_noise_rates, NoiseReport, TypeNoise};
pub use spans::{enumerate_spans, span_candidates, span_count};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

/// Which annotation layer of a [`Sentence`] to read or write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Gold,
    Distant,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<EntitySpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distant: Option<Vec<EntitySpan>>,
}

impl Sentence {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        Self {
            tokens: tokens.into_iter().map(Into::into).collect(),
            gold: None,
            distant: None,
        }
    }

    pub fn with_gold(mut self, spans: Vec<EntitySpan>) -> Self {
        self.gold = Some(spans);
        self
    }

    pub fn with_distant(mut self, spans: Vec<EntitySpan>) -> Self {
        self.distant = Some(spans);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn layer(&self, layer: Layer) -> Option<&[EntitySpan]> {
        match layer {
            Layer::Gold => self.gold.as_deref(),
            Layer::Distant => self.distant.as_deref(),
        }
    }

    pub fn set_layer(&mut self, layer: Layer, spans: Vec<EntitySpan>) {
        match layer {
            Layer::Gold => self.gold = Some(spans),
            Layer::Distant => self.distant = Some(spans),
        }
    }

    /// Checks the structural invariants: tokens present, spans in range, and no
    /// overlap inside a layer.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        for spans in [&self.gold, &self.distant].into_iter().flatten() {
            let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
            sorted.sort_by_key(|s| (s.start, s.end));
            for span in &sorted {
                if span.start == 0 || span.start > span.end || span.end > self.tokens.len() {
                    return Err(Error::SpanOutOfRange {
                        start: span.start,
                        end: span.end,
                        len: self.tokens.len(),
                    });
                }
                if span.label.is_empty() || span.label == OUTSIDE {
                    return Err(Error::InvalidArgument(format!(
                        "span ({}, {}) carries the non-entity label",
                        span.start, span.end
                    )));
                }
            }
            for pair in sorted.windows(2) {
                if pair[0].overlaps(pair[1]) {
                    return Err(Error::InvalidArgument(format!(
                        "overlapping spans ({}, {}) and ({}, {})",
                        pair[0].start, pair[0].end, pair[1].start, pair[1].end
                    )));
                }
            }
        }
        Ok(())
    }

    /// Token-level labels for one layer, `None` for non-entity tokens.
    pub fn token_labels(&self, layer: Layer) -> Vec<Option<&str>> {
        let mut out = vec![None; self.tokens.len()];
        for span in self.layer(layer).unwrap_or_default() {
            for slot in &mut out[span.start - 1..span.end] {
                *slot = Some(span.label.as_str());
            }
        }
        out
    }
}

/// Collects every entity type used in either layer of a corpus.
pub fn entity_types(sentences: &[Sentence]) -> BTreeSet<String> {
    sentences
        .iter()
        .flat_map(|s| [&s.gold, &s.distant])
        .flatten()
        .flatten()
        .map(|span| span.label.clone())
        .collect()
}

/// Builds the label set covering every entity type in the corpus.
pub fn label_set(sentences: &[Sentence]) -> Result<LabelSet> {
    LabelSet::from_entity_types(entity_types(sentences))
}
