//! The span head: endpoint features, the tanh projection, and the softmax
//! classifier. These are the reference forms; the batched training path in
//! [`super::SpanModel`] computes the same quantities with shared per-token work.

use super::linalg::Matrix;
use crate::error::{Error, Result};

/// `h_i ⊕ h_j ⊕ (h_i − h_j) ⊕ (h_i ⊙ h_j)` for the 1-based inclusive span `(i, j)`
/// over token vectors stored as the rows of `h`.
pub fn span_representation(h: &Matrix, i: usize, j: usize) -> Result<Vec<f64>> {
    if i == 0 || i > j || j > h.rows {
        return Err(Error::SpanOutOfRange {
            start: i,
            end: j,
            len: h.rows,
        });
    }
    let (hi, hj) = (h.row(i - 1), h.row(j - 1));
    let d = h.cols;
    let mut s = Vec::with_capacity(4 * d);
    s.extend_from_slice(hi);
    s.extend_from_slice(hj);
    s.extend(hi.iter().zip(hj).map(|(a, b)| a - b));
    s.extend(hi.iter().zip(hj).map(|(a, b)| a * b));
    Ok(s)
}

fn affine(w: &Matrix, bias: Option<&[f64]>, x: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if x.len() != w.cols {
        return Err(Error::Dimension {
            what,
            expected: w.cols,
            got: x.len(),
        });
    }
    let mut out = vec![0.0; w.rows];
    w.matvec(x, &mut out);
    if let Some(b) = bias {
        if b.len() != w.rows {
            return Err(Error::Dimension {
                what,
                expected: w.rows,
                got: b.len(),
            });
        }
        out.iter_mut().zip(b).for_each(|(o, b)| *o += b);
    }
    Ok(out)
}

/// `r = tanh(W s + b)`.
pub fn project(w: &Matrix, bias: Option<&[f64]>, s: &[f64]) -> Result<Vec<f64>> {
    let mut r = affine(w, bias, s, "span projection")?;
    r.iter_mut().for_each(|v| *v = v.tanh());
    Ok(r)
}

/// `o = softmax(V r + c)`.
pub fn classify(v: &Matrix, bias: Option<&[f64]>, r: &[f64]) -> Result<Vec<f64>> {
    let mut logits = affine(v, bias, r, "classifier")?;
    softmax_in_place(&mut logits);
    Ok(logits)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    x.iter_mut().for_each(|v| *v /= sum);
}

/// Pulls a gradient with respect to probabilities back through softmax, given
/// `weighted[l] = o_l · ∂L/∂o_l` (a form that stays finite when `o_l → 0`).
pub fn softmax_backward_weighted(o: &[f64], weighted: &[f64]) -> Vec<f64> {
    let total: f64 = weighted.iter().sum();
    weighted.iter().zip(o).map(|(w, p)| w - p * total).collect()
}
