//! Span-based NER model: a token encoder followed by the span head.
//!
//! The toy encoder sums a learned word embedding and a learned orthographic
//! shape embedding per token, then mixes each token with its neighbours inside
//! a window of radius `w` through one affine layer and `tanh`. A token vector
//! therefore depends only on tokens at distance at most `w`.

mod checkpoint;
pub mod head;
pub mod linalg;
mod vocab;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use head::{classify, project, softmax, span_representation};
use linalg::{axpy, Matrix};
pub use vocab::{load_embeddings, shape_class, Vocab, SHAPE_CLASSES, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// Word and shape embeddings trained from scratch.
    Toy,
    /// Word embeddings read from a text file and kept frozen.
    PretrainedAdapter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Token vector size `d_h`.
    pub token_dim: usize,
    /// Receptive-field radius `w` of the context layer.
    pub context_radius: usize,
    /// Tokens rarer than this map to the unknown id.
    pub min_count: usize,
    pub embeddings: Option<PathBuf>,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Toy,
            token_dim: 32,
            context_radius: 3,
            min_count: 1,
            embeddings: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Span representation size `d_r`.
    pub repr_dim: usize,
    /// Affine biases on the projection and classifier; off in strict mode.
    pub use_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            repr_dim: 256,
            use_bias: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.encoder.token_dim < 2 {
            return Err(Error::Config(format!(
                "encoder.token_dim must be at least 2, got {}",
                self.encoder.token_dim
            )));
        }
        if self.repr_dim == 0 {
            return Err(Error::Config("model.repr_dim must be positive".into()));
        }
        if self.encoder.kind == EncoderKind::PretrainedAdapter && self.encoder.embeddings.is_none()
        {
            return Err(Error::Config(
                "the pretrained-adapter encoder needs encoder.embeddings".into(),
            ));
        }
        Ok(())
    }
}

/// All trainable tensors. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub word_emb: Matrix,
    pub shape_emb: Matrix,
    /// `d_h × (2w+1)·d_h`; column block `k` reads the token at offset `k − w`.
    pub context: Matrix,
    pub context_bias: Vec<f64>,
    /// `d_r × 4·d_h`
    pub proj: Matrix,
    pub proj_bias: Vec<f64>,
    /// `|L| × d_r`
    pub cls: Matrix,
    pub cls_bias: Vec<f64>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        Self {
            word_emb: self.word_emb.zeros_like(),
            shape_emb: self.shape_emb.zeros_like(),
            context: self.context.zeros_like(),
            context_bias: vec![0.0; self.context_bias.len()],
            proj: self.proj.zeros_like(),
            proj_bias: vec![0.0; self.proj_bias.len()],
            cls: self.cls.zeros_like(),
            cls_bias: vec![0.0; self.cls_bias.len()],
        }
    }

    pub const NAMES: [&'static str; 8] = [
        "word_emb",
        "shape_emb",
        "context",
        "context_bias",
        "proj",
        "proj_bias",
        "cls",
        "cls_bias",
    ];

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.word_emb.data,
            &self.shape_emb.data,
            &self.context.data,
            &self.context_bias,
            &self.proj.data,
            &self.proj_bias,
            &self.cls.data,
            &self.cls_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.word_emb.data,
            &mut self.shape_emb.data,
            &mut self.context.data,
            &mut self.context_bias,
            &mut self.proj.data,
            &mut self.proj_bias,
            &mut self.cls.data,
            &mut self.cls_bias,
        ]
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(1.0, src, dst);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Cached intermediate values of one sentence's forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub spans: Vec<(usize, usize)>,
    /// Span representations, `spans.len() × d_r` row-major.
    pub r: Vec<f64>,
    /// Label distributions, `spans.len() × |L|` row-major.
    pub o: Vec<f64>,
    ids: Vec<u32>,
    shapes: Vec<usize>,
    /// Summed input embeddings, `n × d_h`.
    x: Matrix,
    /// Encoder outputs, `n × d_h`.
    h: Matrix,
}

impl Forward {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn repr(&self, k: usize) -> &[f64] {
        let d = self.r.len() / self.spans.len().max(1);
        &self.r[k * d..(k + 1) * d]
    }

    pub fn dist(&self, k: usize) -> &[f64] {
        let l = self.o.len() / self.spans.len().max(1);
        &self.o[k * l..(k + 1) * l]
    }

    pub fn token_states(&self) -> &Matrix {
        &self.h
    }
}

/// Column blocks of the projection folded for per-token reuse:
/// `W s = (W₁+W₃) h_i + (W₂−W₃) h_j + W₄ (h_i ⊙ h_j)`.
struct FoldedProjection {
    start: Matrix,
    end: Matrix,
    product: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanModel {
    pub config: ModelConfig,
    pub labels: LabelSet,
    pub vocab: Vocab,
    pub params: Params,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Matrix {
    Matrix {
        rows,
        cols,
        data: (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    }
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, bound)
}

impl SpanModel {
    /// Randomly initialized model; deterministic in `config.encoder.seed`.
    /// `pretrained` replaces the word embeddings and vocabulary.
    pub fn new(
        config: ModelConfig,
        labels: LabelSet,
        vocab: Vocab,
        pretrained: Option<Matrix>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.encoder.token_dim;
        let w = config.encoder.context_radius;
        let mut rng = ChaCha8Rng::seed_from_u64(config.encoder.seed);
        let word_emb = match pretrained {
            Some(m) => {
                if m.cols != d || m.rows != vocab.len() {
                    return Err(Error::Dimension {
                        what: "pretrained embeddings",
                        expected: d,
                        got: m.cols,
                    });
                }
                m
            }
            None => uniform(&mut rng, vocab.len(), d, 0.5),
        };
        let params = Params {
            word_emb,
            shape_emb: uniform(&mut rng, SHAPE_CLASSES, d, 0.5),
            context: xavier(&mut rng, d, (2 * w + 1) * d),
            context_bias: vec![0.0; d],
            proj: xavier(&mut rng, config.repr_dim, 4 * d),
            proj_bias: vec![0.0; config.repr_dim],
            cls: xavier(&mut rng, labels.len(), config.repr_dim),
            cls_bias: vec![0.0; labels.len()],
        };
        Ok(Self {
            config,
            labels,
            vocab,
            params,
        })
    }

    pub fn token_dim(&self) -> usize {
        self.config.encoder.token_dim
    }

    pub fn repr_dim(&self) -> usize {
        self.config.repr_dim
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn frozen_word_embeddings(&self) -> bool {
        self.config.encoder.kind == EncoderKind::PretrainedAdapter
    }

    fn window(&self, x: &Matrix, i: usize, out: &mut [f64]) {
        let d = x.cols;
        let w = self.config.encoder.context_radius as isize;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, off) in (-w..=w).enumerate() {
            let pos = i as isize + off;
            if pos >= 0 && (pos as usize) < x.rows {
                out[k * d..(k + 1) * d].copy_from_slice(x.row(pos as usize));
            }
        }
    }

    fn embed(&self, tokens: &[String]) -> (Vec<u32>, Vec<usize>, Matrix) {
        let d = self.token_dim();
        let ids: Vec<u32> = tokens.iter().map(|t| self.vocab.id(t)).collect();
        let shapes: Vec<usize> = tokens.iter().map(|t| shape_class(t)).collect();
        let mut x = Matrix::zeros(tokens.len(), d);
        for (i, (&id, &shape)) in ids.iter().zip(&shapes).enumerate() {
            let row = x.row_mut(i);
            row.copy_from_slice(self.params.word_emb.row(id as usize));
            axpy(1.0, self.params.shape_emb.row(shape), row);
        }
        (ids, shapes, x)
    }

    fn contextualize(&self, x: &Matrix) -> Matrix {
        let d = self.token_dim();
        let mut h = Matrix::zeros(x.rows, d);
        let mut win = vec![0.0; self.params.context.cols];
        for i in 0..x.rows {
            self.window(x, i, &mut win);
            let row = h.row_mut(i);
            self.params.context.matvec(&win, row);
            for (v, b) in row.iter_mut().zip(&self.params.context_bias) {
                *v = (*v + b).tanh();
            }
        }
        h
    }

    /// Token vectors `h_1..h_n` as the rows of an `n × d_h` matrix.
    pub fn encode(&self, tokens: &[String]) -> Result<Matrix> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        let (_, _, x) = self.embed(tokens);
        Ok(self.contextualize(&x))
    }

    fn folded_projection(&self) -> FoldedProjection {
        let d = self.token_dim();
        let dr = self.repr_dim();
        let p = &self.params.proj;
        let mut start = Matrix::zeros(dr, d);
        let mut end = Matrix::zeros(dr, d);
        let mut product = Matrix::zeros(dr, d);
        for r in 0..dr {
            let row = p.row(r);
            for c in 0..d {
                start.data[r * d + c] = row[c] + row[2 * d + c];
                end.data[r * d + c] = row[d + c] - row[2 * d + c];
                product.data[r * d + c] = row[3 * d + c];
            }
        }
        FoldedProjection {
            start,
            end,
            product,
        }
    }

    /// Runs encoder and span head over the given 1-based spans.
    pub fn forward(&self, tokens: &[String], spans: &[(usize, usize)]) -> Result<Forward> {
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        let n = tokens.len();
        if let Some(&(i, j)) = spans.iter().find(|&&(i, j)| i == 0 || i > j || j > n) {
            return Err(Error::SpanOutOfRange {
                start: i,
                end: j,
                len: n,
            });
        }
        let (ids, shapes, x) = self.embed(tokens);
        let h = self.contextualize(&x);
        let d = self.token_dim();
        let dr = self.repr_dim();
        let nl = self.num_labels();
        let folded = self.folded_projection();

        let mut from_start = Matrix::zeros(n, dr);
        let mut from_end = Matrix::zeros(n, dr);
        for t in 0..n {
            folded.start.matvec(h.row(t), from_start.row_mut(t));
            folded.end.matvec(h.row(t), from_end.row_mut(t));
        }

        let mut r = vec![0.0; spans.len() * dr];
        let mut o = vec![0.0; spans.len() * nl];
        let mut prod = vec![0.0; d];
        for (k, &(i, j)) in spans.iter().enumerate() {
            let (hi, hj) = (h.row(i - 1), h.row(j - 1));
            for c in 0..d {
                prod[c] = hi[c] * hj[c];
            }
            let rk = &mut r[k * dr..(k + 1) * dr];
            folded.product.matvec(&prod, rk);
            let (a, b) = (from_start.row(i - 1), from_end.row(j - 1));
            for c in 0..dr {
                rk[c] = (rk[c] + a[c] + b[c] + self.params.proj_bias[c]).tanh();
            }
            let ok = &mut o[k * nl..(k + 1) * nl];
            self.logits_into(rk, ok);
            head::softmax_in_place(ok);
        }
        Ok(Forward {
            spans: spans.to_vec(),
            r,
            o,
            ids,
            shapes,
            x,
            h,
        })
    }

    fn logits_into(&self, r: &[f64], out: &mut [f64]) {
        self.params.cls.matvec(r, out);
        for (v, b) in out.iter_mut().zip(&self.params.cls_bias) {
            *v += b;
        }
    }

    /// Label distribution for an arbitrary representation (used for mixed points).
    pub fn classify_repr(&self, r: &[f64]) -> Result<Vec<f64>> {
        let bias = self
            .config
            .use_bias
            .then_some(self.params.cls_bias.as_slice());
        head::classify(&self.params.cls, bias, r)
    }

    /// Accumulates classifier gradients for logits gradient `d_logits` at input
    /// `r`, and adds `∂L/∂r` into `d_r`.
    pub fn classify_backward(
        &self,
        r: &[f64],
        d_logits: &[f64],
        grads: &mut Params,
        d_r: &mut [f64],
    ) {
        grads.cls.add_outer(1.0, d_logits, r);
        if self.config.use_bias {
            axpy(1.0, d_logits, &mut grads.cls_bias);
        }
        self.params.cls.matvec_t_add(d_logits, d_r);
    }

    /// Backpropagates through one sentence. `d_logits` is `spans × |L|` and
    /// `d_r_extra` (`spans × d_r`) carries gradients that reach `r` directly.
    pub fn backward(
        &self,
        fwd: &Forward,
        d_logits: &[f64],
        d_r_extra: Option<&[f64]>,
        grads: &mut Params,
    ) {
        let d = self.token_dim();
        let dr = self.repr_dim();
        let nl = self.num_labels();
        let n = fwd.h.rows;
        let folded = self.folded_projection();
        let h = &fwd.h;

        let mut d_start = Matrix::zeros(n, dr);
        let mut d_end = Matrix::zeros(n, dr);
        let mut dh = Matrix::zeros(n, d);
        let mut dz = vec![0.0; dr];
        let mut g_prod = vec![0.0; d];
        let mut prod = vec![0.0; d];
        let proj_cols = self.params.proj.cols;

        for (k, &(i, j)) in fwd.spans.iter().enumerate() {
            let rk = fwd.repr(k);
            let dl = &d_logits[k * nl..(k + 1) * nl];
            dz.iter_mut().for_each(|v| *v = 0.0);
            if let Some(extra) = d_r_extra {
                dz.copy_from_slice(&extra[k * dr..(k + 1) * dr]);
            }
            if dl.iter().any(|&v| v != 0.0) {
                self.classify_backward(rk, dl, grads, &mut dz);
            }
            for (g, rv) in dz.iter_mut().zip(rk) {
                *g *= 1.0 - rv * rv;
            }
            if dz.iter().all(|&v| v == 0.0) {
                continue;
            }
            axpy(1.0, &dz, d_start.row_mut(i - 1));
            axpy(1.0, &dz, d_end.row_mut(j - 1));
            if self.config.use_bias {
                axpy(1.0, &dz, &mut grads.proj_bias);
            }
            let (hi, hj) = (h.row(i - 1), h.row(j - 1));
            for c in 0..d {
                prod[c] = hi[c] * hj[c];
            }
            // W₄ block of the projection gradient.
            for (row, &g) in dz.iter().enumerate() {
                if g != 0.0 {
                    let dst =
                        &mut grads.proj.data[row * proj_cols + 3 * d..row * proj_cols + 4 * d];
                    axpy(g, &prod, dst);
                }
            }
            g_prod.iter_mut().for_each(|v| *v = 0.0);
            folded.product.matvec_t_add(&dz, &mut g_prod);
            for c in 0..d {
                dh.data[(i - 1) * d + c] += g_prod[c] * hj[c];
                dh.data[(j - 1) * d + c] += g_prod[c] * hi[c];
            }
        }

        // W₁, W₂, W₃ blocks, aggregated per token.
        for t in 0..n {
            let (ds, de) = (d_start.row(t), d_end.row(t));
            let ht = h.row(t);
            for row in 0..dr {
                let base = row * proj_cols;
                let (gs, ge) = (ds[row], de[row]);
                if gs != 0.0 {
                    axpy(gs, ht, &mut grads.proj.data[base..base + d]);
                    axpy(gs, ht, &mut grads.proj.data[base + 2 * d..base + 3 * d]);
                }
                if ge != 0.0 {
                    axpy(ge, ht, &mut grads.proj.data[base + d..base + 2 * d]);
                    axpy(-ge, ht, &mut grads.proj.data[base + 2 * d..base + 3 * d]);
                }
            }
            let dht = &mut dh.data[t * d..(t + 1) * d];
            folded.start.matvec_t_add(ds, dht);
            folded.end.matvec_t_add(de, dht);
        }

        self.encoder_backward(fwd, &dh, grads);
    }

    fn encoder_backward(&self, fwd: &Forward, dh: &Matrix, grads: &mut Params) {
        let d = self.token_dim();
        let w = self.config.encoder.context_radius as isize;
        let n = fwd.h.rows;
        let mut dx = Matrix::zeros(n, d);
        let mut win = vec![0.0; self.params.context.cols];
        let mut dwin = vec![0.0; self.params.context.cols];
        let mut da = vec![0.0; d];
        for i in 0..n {
            let hi = fwd.h.row(i);
            for c in 0..d {
                da[c] = dh.data[i * d + c] * (1.0 - hi[c] * hi[c]);
            }
            if da.iter().all(|&v| v == 0.0) {
                continue;
            }
            self.window(&fwd.x, i, &mut win);
            grads.context.add_outer(1.0, &da, &win);
            axpy(1.0, &da, &mut grads.context_bias);
            dwin.iter_mut().for_each(|v| *v = 0.0);
            self.params.context.matvec_t_add(&da, &mut dwin);
            for (k, off) in (-w..=w).enumerate() {
                let pos = i as isize + off;
                if pos >= 0 && (pos as usize) < n {
                    axpy(1.0, &dwin[k * d..(k + 1) * d], dx.row_mut(pos as usize));
                }
            }
        }
        for t in 0..n {
            if !self.frozen_word_embeddings() {
                axpy(1.0, dx.row(t), grads.word_emb.row_mut(fwd.ids[t] as usize));
            }
            axpy(1.0, dx.row(t), grads.shape_emb.row_mut(fwd.shapes[t]));
        }
    }
}
