//! Generalized cross entropy with sparse regularization, for spans whose
//! distant label is the non-entity label.

use crate::model::head::softmax_backward_weighted;

/// `(1 − o_O^q) / q`
pub fn gce_term(o_outside: f64, q: f64) -> f64 {
    (1.0 - o_outside.powf(q)) / q
}

/// `‖o‖_p^p = Σ_l o_l^p`
pub fn sr_term(o: &[f64], p: f64) -> f64 {
    o.iter().map(|&v| v.max(0.0).powf(p)).sum()
}

/// GCE on the non-entity probability plus the `p`-norm penalty.
pub fn gce_sr_loss(o: &[f64], outside: usize, q: f64, p: f64) -> f64 {
    gce_term(o[outside], q) + sr_term(o, p)
}

/// Logit gradient of `gce_term + sr_weight · sr_term`.
pub fn gce_sr_logit_grad(o: &[f64], outside: usize, q: f64, p: f64, sr_weight: f64) -> Vec<f64> {
    // o_l · ∂/∂o_l of the p-norm is p·o_l^p, finite even as o_l → 0.
    let mut weighted: Vec<f64> = o
        .iter()
        .map(|&v| sr_weight * p * v.max(0.0).powf(p))
        .collect();
    weighted[outside] -= o[outside].powf(q);
    softmax_backward_weighted(o, &weighted)
}
