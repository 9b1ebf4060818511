use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::linalg::Matrix;

/// One entity-labeled span seen during an epoch.
#[derive(Debug, Clone, Copy)]
pub struct MemoryObservation<'a> {
    /// Index of the span's (distant) entity label.
    pub label: usize,
    /// Model distribution for the span.
    pub dist: &'a [f64],
    /// Whether the argmax of `dist` equals `label`.
    pub correct: bool,
}

/// Per-epoch soft-label matrices. Row `y` of a matrix is the mean predicted
/// distribution over correctly predicted spans of label `y`. The first matrix
/// is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelMemory {
    history: Vec<Matrix>,
    window: usize,
    lambda: f64,
}

impl SoftLabelMemory {
    pub fn new(num_labels: usize, window: usize, lambda: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("memory window G must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        let mut identity = Matrix::zeros(num_labels, num_labels);
        for i in 0..num_labels {
            identity.data[i * num_labels + i] = 1.0;
        }
        Ok(Self {
            history: vec![identity],
            window,
            lambda,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.history[0].rows
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `Ŷ^0 ..= Ŷ^t`.
    pub fn history(&self) -> &[Matrix] {
        &self.history
    }

    pub fn latest(&self) -> &Matrix {
        self.history
            .last()
            .expect("history starts with the identity")
    }

    /// Appends the matrix for the epoch that just ended. Rows without a single
    /// correct prediction keep the previous epoch's values.
    pub fn update<'a>(
        &mut self,
        observations: impl IntoIterator<Item = MemoryObservation<'a>>,
    ) -> &Matrix {
        let l = self.num_labels();
        let mut sums = Matrix::zeros(l, l);
        let mut counts = vec![0usize; l];
        for obs in observations {
            if !obs.correct || obs.label >= l {
                continue;
            }
            counts[obs.label] += 1;
            for (dst, &p) in sums.row_mut(obs.label).iter_mut().zip(obs.dist) {
                *dst += p;
            }
        }
        let mut next = self.latest().clone();
        for (y, &count) in counts.iter().enumerate() {
            if count > 0 {
                for (dst, &s) in next.row_mut(y).iter_mut().zip(sums.row(y)) {
                    *dst = s / count as f64;
                }
            }
        }
        self.history.push(next);
        self.latest()
    }

    /// Smoothed target for label `y` in training epoch `t` (1-based):
    /// `λ·onehot(y) + (1−λ)·mean_{g=1..min(G,t)} Ŷ^{t−g}[y]`.
    pub fn smoothed_target(&self, y: usize, t: usize) -> Result<Vec<f64>> {
        let l = self.num_labels();
        if y == 0 || y >= l {
            return Err(Error::InvalidArgument(format!(
                "smoothed targets exist only for entity labels, got index {y}"
            )));
        }
        if t == 0 || t > self.history.len() {
            return Err(Error::InvalidArgument(format!(
                "epoch {t} needs matrices up to Ŷ^{}, memory holds {}",
                t.saturating_sub(1),
                self.history.len()
            )));
        }
        let span = self.window.min(t);
        let mut target = vec![0.0; l];
        for g in 1..=span {
            for (dst, &v) in target.iter_mut().zip(self.history[t - g].row(y)) {
                *dst += v / span as f64;
            }
        }
        for (i, v) in target.iter_mut().enumerate() {
            *v *= 1.0 - self.lambda;
            if i == y {
                *v += self.lambda;
            }
        }
        Ok(target)
    }

    /// Largest deviation of any row sum from 1 across the whole history.
    pub fn max_row_sum_error(&self) -> f64 {
        self.history
            .iter()
            .flat_map(|m| (0..m.rows).map(move |r| (m.row(r).iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}
