//! Boundary mixup: low-confidence non-entity spans are mixed with cached entity
//! representations so the classifier's boundary moves back toward the entities.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{soft_cross_entropy, soft_cross_entropy_logit_grad};

pub const DEFAULT_CACHE_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    /// Non-entity spans predicted as O with probability below this are mixed.
    pub epsilon: f64,
    /// Beta distribution parameter for the mixing coefficient.
    pub alpha_prime: f64,
    pub cache_capacity: usize,
    pub mixup_weight: f64,
    /// Let the mixed-instance loss reach the boundary span's representation
    /// and the encoder. Off: only the classifier learns from mixed points.
    pub span_gradient: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            alpha_prime: 0.2,
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            mixup_weight: 1.0,
            span_gradient: false,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.alpha_prime > 0.0 && self.alpha_prime.is_finite()) {
            return Err(Error::Config(format!(
                "alpha_prime must be positive, got {}",
                self.alpha_prime
            )));
        }
        if self.cache_capacity == 0 {
            return Err(Error::Config("cache_capacity must be at least 1".into()));
        }
        if !(self.mixup_weight >= 0.0 && self.mixup_weight.is_finite()) {
            return Err(Error::Config(format!(
                "mixup_weight must be non-negative, got {}",
                self.mixup_weight
            )));
        }
        Ok(())
    }
}

/// Bounded FIFO of recent entity-span representations per entity label.
#[derive(Debug, Clone)]
pub struct EntityCache {
    capacity: usize,
    slots: Vec<VecDeque<Vec<f64>>>,
}

impl EntityCache {
    /// `num_labels` includes the non-entity label at index 0, which is never cached.
    pub fn new(num_labels: usize, capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            slots: vec![VecDeque::new(); num_labels],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, label: usize, r: &[f64]) -> Result<()> {
        if label == 0 || label >= self.slots.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot cache label index {label}"
            )));
        }
        let slot = &mut self.slots[label];
        if slot.len() == self.capacity {
            slot.pop_front();
        }
        slot.push_back(r.to_vec());
        Ok(())
    }

    pub fn len(&self, label: usize) -> usize {
        self.slots.get(label).map_or(0, VecDeque::len)
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(VecDeque::is_empty)
    }

    /// Uniformly drawn cached representation of `label`, if any.
    pub fn sample<R: Rng + ?Sized>(&self, label: usize, rng: &mut R) -> Option<&[f64]> {
        let slot = self.slots.get(label)?;
        if slot.is_empty() {
            return None;
        }
        Some(&slot[rng.gen_range(0..slot.len())])
    }
}

/// A non-entity span near the decision boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundarySpan {
    /// Position in the input list.
    pub index: usize,
    /// Most probable entity label for the span.
    pub entity_label: usize,
}

/// Spans distant-labeled O that are predicted O with probability below `epsilon`.
/// Label index 0 is the non-entity label.
pub fn select_boundary_spans<'a>(
    spans: impl IntoIterator<Item = (usize, &'a [f64])>,
    epsilon: f64,
) -> Vec<BoundarySpan> {
    spans
        .into_iter()
        .enumerate()
        .filter_map(|(index, (label, o))| {
            if label != 0 || o.len() < 2 || o[0] >= epsilon {
                return None;
            }
            let entity_label = 1 + crate::model::linalg::argmax(&o[1..]);
            (o[0] >= o[entity_label]).then_some(BoundarySpan {
                index,
                entity_label,
            })
        })
        .collect()
}

/// `max(θ, 1 − θ)` with `θ ~ Beta(α', α')`; always in `[0.5, 1]`.
pub fn sample_mix_weight<R: Rng + ?Sized>(alpha_prime: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha_prime, alpha_prime)
        .map_err(|e| Error::Config(format!("alpha_prime {alpha_prime}: {e}")))?;
    let theta: f64 = beta.sample(rng);
    Ok(theta.max(1.0 - theta).clamp(0.5, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedInstance {
    pub r: Vec<f64>,
    pub target: Vec<f64>,
    /// Weight of the non-entity span in the mix.
    pub weight: f64,
}

/// Convex combination of a non-entity span representation with an entity one,
/// and the matching two-point label distribution.
pub fn mix_instance(
    r_span: &[f64],
    r_entity: &[f64],
    entity_label: usize,
    num_labels: usize,
    weight: f64,
) -> MixedInstance {
    let r = r_span
        .iter()
        .zip(r_entity)
        .map(|(a, b)| weight * a + (1.0 - weight) * b)
        .collect();
    let mut target = vec![0.0; num_labels];
    target[0] = weight;
    target[entity_label] += 1.0 - weight;
    MixedInstance { r, target, weight }
}

/// Mean soft cross-entropy of the classifier outputs `dists` against the mixed
/// targets; 0 for an empty batch.
pub fn mixup_loss(dists: &[Vec<f64>], instances: &[MixedInstance]) -> f64 {
    if instances.is_empty() {
        return 0.0;
    }
    let total: f64 = dists
        .iter()
        .zip(instances)
        .map(|(o, inst)| soft_cross_entropy(o, &inst.target))
        .sum();
    total / instances.len() as f64
}

/// Logit gradient of [`mixup_loss`] for each instance.
pub fn mixup_logit_grads(dists: &[Vec<f64>], instances: &[MixedInstance]) -> Vec<Vec<f64>> {
    let scale = 1.0 / instances.len().max(1) as f64;
    dists
        .iter()
        .zip(instances)
        .map(|(o, inst)| {
            let mut g = soft_cross_entropy_logit_grad(o, &inst.target);
            g.iter_mut().for_each(|v| *v *= scale);
            g
        })
        .collect()
}
