use serde::{Deserialize, Serialize};

use crate::corpus::{span_candidates, EntitySpan};
use crate::error::Result;
use crate::knn::{interpolate_distribution, DataStore, KnnConfig};
use crate::model::linalg::argmax;
use crate::model::SpanModel;

/// A decoded entity with the probability of its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    #[serde(flatten)]
    pub span: EntitySpan,
    pub score: f64,
}

/// Candidate spans whose most probable label is an entity, taken greedily by
/// probability and skipped when they overlap an accepted span. Output is
/// ordered by start. Label 0 is the non-entity label.
pub fn select_spans(spans: &[(usize, usize)], dists: &[&[f64]]) -> Vec<(usize, usize, usize, f64)> {
    let mut cands: Vec<(usize, usize, usize, f64)> = spans
        .iter()
        .zip(dists)
        .filter_map(|(&(i, j), o)| {
            let y = argmax(o);
            (y != 0).then_some((i, j, y, o[y]))
        })
        .collect();
    cands.sort_by(|a, b| b.3.total_cmp(&a.3).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut kept: Vec<(usize, usize, usize, f64)> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| c.1 < k.0 || k.1 < c.0) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|k| (k.0, k.1));
    kept
}

/// Entities of one sentence. With a datastore every span's distribution is
/// interpolated with its neighbour vote before selection.
pub fn decode(
    model: &SpanModel,
    tokens: &[String],
    knn: Option<(&DataStore, &KnnConfig)>,
    max_len: usize,
) -> Result<Vec<ScoredSpan>> {
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let spans = span_candidates(tokens.len(), max_len);
    let fwd = model.forward(tokens, &spans)?;
    let mut dists: Vec<Vec<f64>> = (0..spans.len()).map(|k| fwd.dist(k).to_vec()).collect();
    if let Some((store, cfg)) = knn {
        if cfg.mu > 0.0 {
            for (k, dist) in dists.iter_mut().enumerate() {
                let vote = store.vote(fwd.repr(k), cfg.k, cfg.weighted)?;
                *dist = interpolate_distribution(dist, &vote.dist, cfg.mu);
            }
        }
    }
    let refs: Vec<&[f64]> = dists.iter().map(Vec::as_slice).collect();
    Ok(select_spans(&spans, &refs)
        .into_iter()
        .map(|(i, j, y, score)| ScoredSpan {
            span: EntitySpan::new(i, j, model.labels.name(y)),
            score,
        })
        .collect())
}
