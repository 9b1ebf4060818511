use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decode::decode;
use crate::corpus::{EntitySpan, Sentence};
use crate::error::{Error, Result};
use crate::knn::{DataStore, KnnConfig};
use crate::model::SpanModel;

/// Exact-match counts and percentages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let pct = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                100.0 * num as f64 / den as f64
            }
        };
        let precision = pct(tp, tp + fp);
        let recall = pct(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    /// Number of gold entities.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    #[serde(flatten)]
    pub micro: Scores,
    pub per_type: BTreeMap<String, Scores>,
}

/// Micro-averaged and per-type scores of predicted against gold entities,
/// sentence by sentence.
pub fn score(gold: &[&[EntitySpan]], predicted: &[&[EntitySpan]]) -> Result<EvalResult> {
    if gold.len() != predicted.len() {
        return Err(Error::Dimension {
            what: "predicted sentences",
            expected: gold.len(),
            got: predicted.len(),
        });
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let gs: HashSet<&EntitySpan> = g.iter().collect();
        let ps: HashSet<&EntitySpan> = p.iter().collect();
        for span in &ps {
            let c = counts.entry(span.label.clone()).or_default();
            if gs.contains(span) {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
        for span in gs.difference(&ps) {
            counts.entry(span.label.clone()).or_default().2 += 1;
        }
    }
    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    Ok(EvalResult {
        micro: Scores::from_counts(tp, fp, fn_),
        per_type: counts
            .into_iter()
            .map(|(label, (tp, fp, fn_))| (label, Scores::from_counts(tp, fp, fn_)))
            .collect(),
    })
}

/// Decodes every sentence and scores it against the gold layer.
pub fn evaluate(
    model: &SpanModel,
    sentences: &[Sentence],
    knn: Option<(&DataStore, &KnnConfig)>,
    max_len: usize,
) -> Result<EvalResult> {
    if sentences.iter().any(|s| s.gold.is_none()) {
        return Err(Error::InvalidArgument(
            "evaluation corpus needs gold entity spans".into(),
        ));
    }
    let predicted = predict_corpus(model, sentences, knn, max_len)?;
    let gold: Vec<&[EntitySpan]> = sentences
        .iter()
        .map(|s| s.gold.as_deref().unwrap_or(&[]))
        .collect();
    let pred: Vec<&[EntitySpan]> = predicted.iter().map(Vec::as_slice).collect();
    score(&gold, &pred)
}

pub fn predict_corpus(
    model: &SpanModel,
    sentences: &[Sentence],
    knn: Option<(&DataStore, &KnnConfig)>,
    max_len: usize,
) -> Result<Vec<Vec<EntitySpan>>> {
    if let Some((store, _)) = knn {
        store.check_model(model)?;
    }
    sentences
        .par_iter()
        .map(|s| {
            decode(model, &s.tokens, knn, max_len)
                .map(|spans| spans.into_iter().map(|s| s.span).collect())
        })
        .collect()
}
