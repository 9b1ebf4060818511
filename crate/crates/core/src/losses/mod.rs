//! Training objectives. Entity-labeled spans get the memory-smoothed focal
//! loss and the contrastive loss; non-entity spans get GCE with sparse
//! regularization.

mod contrastive;
mod focal;
mod gce;
mod memory;

use serde::{Deserialize, Serialize};

pub use contrastive::{cosine, entity_cl_loss, entity_cl_loss_with_grad, ClDenominator, ClOutput};
pub use focal::{mfl_logit_grad, mfl_loss};
pub use gce::{gce_sr_logit_grad, gce_sr_loss, gce_term, sr_term};
pub use memory::{MemoryObservation, SoftLabelMemory};

use crate::error::{Error, Result};

/// Lower bound applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Share of the focal loss against the contrastive loss.
    pub eta: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// GCE exponent.
    pub q: f64,
    /// Sparse-regularization exponent.
    pub p: f64,
    /// Multiplier on the sparse-regularization term; 0 leaves plain GCE.
    pub sr_weight: f64,
    pub cl_denominator: ClDenominator,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            eta: 0.9,
            alpha: 0.5,
            gamma: 2.0,
            tau: 0.05,
            q: 0.3,
            p: 0.5,
            sr_weight: 1.0,
            cl_denominator: ClDenominator::All,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("eta", (0.0..=1.0).contains(&self.eta), "[0, 1]"),
            (
                "alpha",
                self.alpha.is_finite() && self.alpha >= 0.0,
                "[0, ∞)",
            ),
            (
                "gamma",
                self.gamma.is_finite() && self.gamma >= 0.0,
                "[0, ∞)",
            ),
            ("tau", self.tau.is_finite() && self.tau > 0.0, "(0, ∞)"),
            ("q", self.q > 0.0 && self.q <= 1.0, "(0, 1]"),
            ("p", self.p > 0.0 && self.p <= 1.0, "(0, 1]"),
            (
                "sr_weight",
                self.sr_weight.is_finite() && self.sr_weight >= 0.0,
                "[0, ∞)",
            ),
        ];
        for (name, ok, range) in checks {
            if !ok {
                return Err(Error::Config(format!("{name} must lie in {range}")));
            }
        }
        Ok(())
    }
}

pub fn combine_losses(mfl: f64, cl: f64, gce_sr: f64, mix: f64, eta: f64) -> f64 {
    eta * mfl + (1.0 - eta) * cl + gce_sr + mix
}

/// `−Σ_l y_l log o_l` with a floored log.
pub fn soft_cross_entropy(o: &[f64], target: &[f64]) -> f64 {
    o.iter()
        .zip(target)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.max(PROB_FLOOR).ln())
        .sum()
}

/// Gradient of [`soft_cross_entropy`] with respect to the softmax logits.
pub fn soft_cross_entropy_logit_grad(o: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    o.iter().zip(target).map(|(p, y)| mass * p - y).collect()
}
