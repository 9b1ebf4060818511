//! Focal loss against a soft target distribution.

use super::PROB_FLOOR;
use crate::model::head::softmax_backward_weighted;

/// `−Σ_l α·Y_l·(1 − o_l)^γ·log o_l`, with `o_l` floored at [`PROB_FLOOR`]
/// inside the logarithm.
pub fn mfl_loss(o: &[f64], target: &[f64], alpha: f64, gamma: f64) -> f64 {
    o.iter()
        .zip(target)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -alpha * y * focal_weight(p, gamma) * p.max(PROB_FLOOR).ln())
        .sum()
}

fn focal_weight(p: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        (1.0 - p).max(0.0).powf(gamma)
    }
}

/// Gradient of [`mfl_loss`] with respect to the logits that produced `o`.
pub fn mfl_logit_grad(o: &[f64], target: &[f64], alpha: f64, gamma: f64) -> Vec<f64> {
    // weighted[l] = o_l · ∂L/∂o_l
    let weighted: Vec<f64> = o
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            if y == 0.0 {
                return 0.0;
            }
            let log_term = if p > PROB_FLOOR { 1.0 } else { 0.0 };
            let q = (1.0 - p).max(0.0);
            let slope = if gamma == 0.0 || q == 0.0 {
                0.0
            } else {
                gamma * p * q.powf(gamma - 1.0) * p.max(PROB_FLOOR).ln()
            };
            -alpha * y * (focal_weight(p, gamma) * log_term - slope)
        })
        .collect();
    softmax_backward_weighted(o, &weighted)
}
