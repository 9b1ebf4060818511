//! Type-aware supervised contrastive loss over entity-span representations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::linalg::{dot, norm};

/// Which in-batch spans form the partition function of an anchor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClDenominator {
    /// Every other span in the batch.
    #[default]
    All,
    /// Only spans whose label differs from the anchor's.
    DifferentLabel,
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Loss value and the gradient for each representation.
#[derive(Debug, Clone)]
pub struct ClOutput {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    /// Anchors that had at least one positive and a non-empty denominator.
    pub anchors: usize,
}

/// For each anchor whose label occurs at least twice in the batch: the mean
/// over same-label positives of `−log(exp(cos/τ) / Σ_m exp(cos_m/τ))`, summed
/// over anchors.
pub fn entity_cl_loss(
    reprs: &[&[f64]],
    labels: &[usize],
    tau: f64,
    denominator: ClDenominator,
) -> Result<f64> {
    entity_cl(reprs, labels, tau, denominator, false).map(|out| out.loss)
}

pub fn entity_cl_loss_with_grad(
    reprs: &[&[f64]],
    labels: &[usize],
    tau: f64,
    denominator: ClDenominator,
) -> Result<ClOutput> {
    entity_cl(reprs, labels, tau, denominator, true)
}

fn entity_cl(
    reprs: &[&[f64]],
    labels: &[usize],
    tau: f64,
    denominator: ClDenominator,
    with_grad: bool,
) -> Result<ClOutput> {
    if reprs.len() != labels.len() {
        return Err(Error::Dimension {
            what: "contrastive batch labels",
            expected: reprs.len(),
            got: labels.len(),
        });
    }
    if tau <= 0.0 {
        return Err(Error::Config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let n = reprs.len();
    let dim = reprs.first().map_or(0, |r| r.len());
    let norms: Vec<f64> = reprs.iter().map(|r| norm(r)).collect();
    if norms.contains(&0.0) {
        return Err(Error::ZeroNorm);
    }
    let units: Vec<Vec<f64>> = reprs
        .iter()
        .zip(&norms)
        .map(|(r, &nr)| r.iter().map(|v| v / nr).collect())
        .collect();

    let mut loss = 0.0;
    let mut anchors = 0;
    let mut unit_grads = vec![vec![0.0; dim]; if with_grad { n } else { 0 }];
    let mut sims = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for a in 0..n {
        let positives = (0..n).filter(|&m| m != a && labels[m] == labels[a]).count();
        if positives == 0 {
            continue;
        }
        let in_denominator = |m: usize| {
            m != a
                && match denominator {
                    ClDenominator::All => true,
                    ClDenominator::DifferentLabel => labels[m] != labels[a],
                }
        };
        if !(0..n).any(in_denominator) {
            continue;
        }
        anchors += 1;
        for m in 0..n {
            sims[m] = dot(&units[a], &units[m]) / tau;
        }
        let max = (0..n)
            .filter(|&m| in_denominator(m))
            .map(|m| sims[m])
            .fold(f64::NEG_INFINITY, f64::max);
        let partition: f64 = (0..n)
            .filter(|&m| in_denominator(m))
            .map(|m| (sims[m] - max).exp())
            .sum();
        let log_partition = max + partition.ln();
        let inv = 1.0 / positives as f64;
        for m in 0..n {
            if m != a && labels[m] == labels[a] {
                loss += inv * (log_partition - sims[m]);
            }
        }
        if !with_grad {
            continue;
        }
        // ∂loss/∂cos(a, m), each already divided by τ.
        for m in 0..n {
            let mut g = 0.0;
            if in_denominator(m) {
                g += (sims[m] - log_partition).exp();
            }
            if m != a && labels[m] == labels[a] {
                g -= inv;
            }
            weights[m] = g / tau;
        }
        for m in 0..n {
            let g = weights[m];
            if g == 0.0 || m == a {
                continue;
            }
            for c in 0..dim {
                unit_grads[a][c] += g * units[m][c];
                unit_grads[m][c] += g * units[a][c];
            }
        }
    }

    let grads = if with_grad {
        unit_grads
            .into_iter()
            .zip(&units)
            .zip(&norms)
            .map(|((gu, u), &nr)| {
                let radial = dot(&gu, u);
                gu.iter()
                    .zip(u)
                    .map(|(g, uv)| (g - radial * uv) / nr)
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(ClOutput {
        loss,
        grads,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn as_refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn lone_identical_pair_costs_nothing() {
        let v = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        let loss = entity_cl_loss(&as_refs(&v), &[1, 1], 0.05, ClDenominator::All).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn orthonormal_single_class_batch() {
        let v = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let loss = entity_cl_loss(&as_refs(&v), &[2, 2, 2], 1.0, ClDenominator::All).unwrap();
        assert!((loss - 3.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn brute_force_oracle() {
        // Direct transcription over all (anchor, positive) pairs.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let n = rng.gen_range(2..9);
            let v: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(1..4)).collect();
            let tau = 0.5;
            let cos = |a: usize, b: usize| cosine(&v[a], &v[b]).unwrap();
            let mut expected = 0.0;
            for a in 0..n {
                let pos: Vec<usize> = (0..n)
                    .filter(|&m| m != a && labels[m] == labels[a])
                    .collect();
                if pos.is_empty() {
                    continue;
                }
                let denom: f64 = (0..n)
                    .filter(|&m| m != a)
                    .map(|m| (cos(a, m) / tau).exp())
                    .sum();
                for &p in &pos {
                    expected += -((cos(a, p) / tau).exp() / denom).ln() / pos.len() as f64;
                }
            }
            let got = entity_cl_loss(&as_refs(&v), &labels, tau, ClDenominator::All).unwrap();
            assert!((got - expected).abs() < 1e-10, "trial {trial}");
        }
    }

    #[test]
    fn no_positive_pairs_means_zero_loss() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = entity_cl_loss_with_grad(&as_refs(&v), &[1, 2], 0.1, ClDenominator::All).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.anchors, 0);
        assert!(out.grads.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_norm_is_an_error() {
        let v = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(
            entity_cl_loss(&as_refs(&v), &[1, 1], 0.1, ClDenominator::All),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn different_label_denominator_excludes_same_label_spans() {
        let v = vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]];
        let labels = [1, 1, 2];
        let tau = 1.0;
        let got =
            entity_cl_loss(&as_refs(&v), &labels, tau, ClDenominator::DifferentLabel).unwrap();
        let c = |a: usize, b: usize| cosine(&v[a], &v[b]).unwrap();
        // anchor 0: positive 1, denominator {2}; anchor 1: positive 0, denominator {2}
        let expected = -(c(0, 1) - c(0, 2)) - (c(1, 0) - c(1, 2));
        assert!((got - expected).abs() < 1e-12);
        // with no other label present every anchor is skipped
        let single = entity_cl_loss(
            &as_refs(&v[..2]),
            &[1, 1],
            tau,
            ClDenominator::DifferentLabel,
        )
        .unwrap();
        assert_eq!(single, 0.0);
    }

    #[test]
    fn invariant_to_scaling_and_permutation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 7;
            let v: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(1..3)).collect();
            let base = entity_cl_loss(&as_refs(&v), &labels, 0.05, ClDenominator::All).unwrap();
            let scaled: Vec<Vec<f64>> = v
                .iter()
                .map(|r| {
                    let c = rng.gen_range(0.01..100.0);
                    r.iter().map(|x| x * c).collect()
                })
                .collect();
            let s = entity_cl_loss(&as_refs(&scaled), &labels, 0.05, ClDenominator::All).unwrap();
            assert!((s - base).abs() <= 1e-6 * base.abs().max(1.0));
            let mut order: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            let pv: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
            let pl: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
            let p = entity_cl_loss(&as_refs(&pv), &pl, 0.05, ClDenominator::All).unwrap();
            assert!((p - base).abs() <= 1e-6 * base.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for denominator in [ClDenominator::All, ClDenominator::DifferentLabel] {
            for _ in 0..5 {
                let n = 6;
                let v: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .collect();
                let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(1..3)).collect();
                let tau = 0.3;
                let out =
                    entity_cl_loss_with_grad(&as_refs(&v), &labels, tau, denominator).unwrap();
                for i in 0..n {
                    for c in 0..4 {
                        let mut plus = v.clone();
                        plus[i][c] += 1e-4;
                        let mut minus = v.clone();
                        minus[i][c] -= 1e-4;
                        let num = (entity_cl_loss(&as_refs(&plus), &labels, tau, denominator)
                            .unwrap()
                            - entity_cl_loss(&as_refs(&minus), &labels, tau, denominator).unwrap())
                            / 2e-4;
                        let g = out.grads[i][c];
                        assert!(
                            (g - num).abs() <= 1e-3 * g.abs().max(num.abs()).max(1e-6),
                            "{denominator:?} [{i}][{c}]: {g} vs {num}"
                        );
                    }
                }
            }
        }
    }
}
