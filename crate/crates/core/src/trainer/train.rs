use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Objective, RunConfig};
use super::eval::{evaluate, Scores};
use super::optim::{clip_grad_norm, Adam};
use crate::corpus::{span_candidates, EntitySpan, Sentence};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::losses::{
    combine_losses, entity_cl_loss_with_grad, gce_sr_logit_grad, gce_term, mfl_logit_grad,
    mfl_loss, soft_cross_entropy, soft_cross_entropy_logit_grad, sr_term, MemoryObservation,
    SoftLabelMemory,
};
use crate::mixup::{
    mix_instance, mixup_logit_grads, mixup_loss, sample_mix_weight, select_boundary_spans,
    EntityCache,
};
use crate::model::linalg::{argmax, axpy};
use crate::model::{load_embeddings, EncoderKind, Forward, Params, SpanModel, Vocab};

/// Averages over one epoch; each loss term is the mean of its per-batch values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub mfl: f64,
    pub cl: f64,
    pub gce_sr: f64,
    pub mix: f64,
    pub ce: f64,
    pub entity_spans: usize,
    pub outside_spans: usize,
    pub mixed: usize,
    /// Boundary spans left unmixed because the cache had no partner yet.
    pub mix_skipped: usize,
    pub grad_norm: f64,
    /// Largest deviation of a memory row sum from 1.
    pub memory_row_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<Scores>,
}

pub struct TrainOutcome {
    /// The model with the best dev F1, or the last one without a dev set.
    pub model: SpanModel,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub memory: SoftLabelMemory,
}

/// Span candidates of one sentence and the distant label of each.
#[derive(Debug, Clone)]
struct Example {
    sentence: usize,
    spans: Vec<(usize, usize)>,
    labels: Vec<usize>,
}

fn training_layer(s: &Sentence) -> Option<&[EntitySpan]> {
    s.distant.as_deref().or(s.gold.as_deref())
}

fn prepare(sentences: &[Sentence], labels: &LabelSet, max_len: usize) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (idx, s) in sentences.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        s.validate()?;
        let mut by_bounds: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for e in training_layer(s).unwrap_or(&[]) {
            by_bounds.insert(e.bounds(), labels.entity_index(&e.label)?);
        }
        let mut spans = span_candidates(s.len(), max_len);
        spans.extend(by_bounds.keys().filter(|(i, j)| j - i + 1 > max_len));
        let labels = spans
            .iter()
            .map(|b| by_bounds.get(b).copied().unwrap_or(0))
            .collect();
        out.push(Example {
            sentence: idx,
            spans,
            labels,
        });
    }
    Ok(out)
}

pub fn build_model(cfg: &RunConfig, train: &[Sentence]) -> Result<SpanModel> {
    let labels = LabelSet::from_entity_types(
        train
            .iter()
            .filter_map(training_layer)
            .flatten()
            .map(|e| e.label.clone())
            .collect::<std::collections::BTreeSet<_>>(),
    )
    .map_err(|_| Error::Training("training corpus has no entity spans".into()))?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.encoder.seed = cfg.train.seed;
    let (vocab, pretrained) = match model_cfg.encoder.kind {
        EncoderKind::Toy => (Vocab::build(train, model_cfg.encoder.min_count), None),
        EncoderKind::PretrainedAdapter => {
            let path = model_cfg.encoder.embeddings.as_ref().ok_or_else(|| {
                Error::Config("the pretrained-adapter encoder needs encoder.embeddings".into())
            })?;
            let (vocab, matrix) = load_embeddings(path, model_cfg.encoder.token_dim)?;
            (vocab, Some(matrix))
        }
    };
    SpanModel::new(model_cfg, labels, vocab, pretrained)
}

#[derive(Debug, Default)]
struct BatchLosses {
    total: f64,
    mfl: f64,
    cl: f64,
    gce_sr: f64,
    mix: f64,
    ce: f64,
    entity_spans: usize,
    outside_spans: usize,
    mixed: usize,
    mix_skipped: usize,
}

struct Trainer<'a> {
    cfg: &'a RunConfig,
    sentences: &'a [Sentence],
    memory: SoftLabelMemory,
    cache: EntityCache,
    rng: ChaCha8Rng,
    observations: Vec<(usize, Vec<f64>)>,
}

impl Trainer<'_> {
    fn batch(
        &mut self,
        model: &SpanModel,
        batch: &[&Example],
        epoch: usize,
    ) -> Result<(BatchLosses, Params)> {
        let fwds: Vec<Forward> = batch
            .par_iter()
            .map(|ex| model.forward(&self.sentences[ex.sentence].tokens, &ex.spans))
            .collect::<Result<_>>()?;
        let nl = model.num_labels();
        let dr = model.repr_dim();
        let mut d_logits: Vec<Vec<f64>> = fwds.iter().map(|f| vec![0.0; f.len() * nl]).collect();
        let mut d_repr: Vec<Vec<f64>> = fwds.iter().map(|f| vec![0.0; f.len() * dr]).collect();
        let mut extra = model.params.zeros_like();
        let mut out = BatchLosses::default();

        match self.cfg.train.objective {
            Objective::Ce => cross_entropy(nl, batch, &fwds, &mut d_logits, &mut out),
            Objective::Separate => {
                self.entity_path(
                    model,
                    batch,
                    &fwds,
                    epoch,
                    &mut d_logits,
                    &mut d_repr,
                    &mut out,
                )?;
                self.outside_path(
                    model,
                    batch,
                    &fwds,
                    &mut d_logits,
                    &mut d_repr,
                    &mut extra,
                    &mut out,
                )?;
                for (ex, fwd) in batch.iter().zip(&fwds) {
                    for (k, &y) in ex.labels.iter().enumerate() {
                        if y != 0 {
                            self.cache.push(y, fwd.repr(k))?;
                        }
                    }
                }
            }
        }
        if !out.total.is_finite() {
            return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
        }

        let grads: Vec<Params> = fwds
            .par_iter()
            .zip(&d_logits)
            .zip(&d_repr)
            .map(|((fwd, dl), dr)| {
                let mut g = model.params.zeros_like();
                model.backward(fwd, dl, Some(dr), &mut g);
                g
            })
            .collect();
        for g in &grads {
            extra.add_assign(g);
        }
        Ok((out, extra))
    }

    #[allow(clippy::too_many_arguments)]
    fn entity_path(
        &mut self,
        model: &SpanModel,
        batch: &[&Example],
        fwds: &[Forward],
        epoch: usize,
        d_logits: &mut [Vec<f64>],
        d_repr: &mut [Vec<f64>],
        out: &mut BatchLosses,
    ) -> Result<()> {
        let w = &self.cfg.loss;
        let nl = model.num_labels();
        let dr = model.repr_dim();
        let entities: Vec<(usize, usize, usize)> = batch
            .iter()
            .enumerate()
            .flat_map(|(b, ex)| {
                ex.labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y != 0)
                    .map(move |(k, &y)| (b, k, y))
            })
            .collect();
        out.entity_spans = entities.len();
        if entities.is_empty() {
            return Ok(());
        }
        let scale = w.eta / entities.len() as f64;
        for &(b, k, y) in &entities {
            let o = fwds[b].dist(k);
            let target = self.memory.smoothed_target(y, epoch)?;
            out.mfl += mfl_loss(o, &target, w.alpha, w.gamma) / entities.len() as f64;
            if scale != 0.0 {
                let g = mfl_logit_grad(o, &target, w.alpha, w.gamma);
                axpy(scale, &g, &mut d_logits[b][k * nl..(k + 1) * nl]);
            }
            self.observations.push((y, o.to_vec()));
        }
        if w.eta < 1.0 && entities.len() >= 2 {
            let reprs: Vec<&[f64]> = entities.iter().map(|&(b, k, _)| fwds[b].repr(k)).collect();
            let labels: Vec<usize> = entities.iter().map(|e| e.2).collect();
            let cl = entity_cl_loss_with_grad(&reprs, &labels, w.tau, w.cl_denominator)?;
            if cl.anchors > 0 {
                let per_anchor = 1.0 / cl.anchors as f64;
                out.cl = cl.loss * per_anchor;
                let scale = (1.0 - w.eta) * per_anchor;
                for (&(b, k, _), g) in entities.iter().zip(&cl.grads) {
                    axpy(scale, g, &mut d_repr[b][k * dr..(k + 1) * dr]);
                }
            }
        }
        out.total += combine_losses(out.mfl, out.cl, 0.0, 0.0, w.eta);
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn outside_path(
        &mut self,
        model: &SpanModel,
        batch: &[&Example],
        fwds: &[Forward],
        d_logits: &mut [Vec<f64>],
        d_repr: &mut [Vec<f64>],
        extra: &mut Params,
        out: &mut BatchLosses,
    ) -> Result<()> {
        let w = &self.cfg.loss;
        let nl = model.num_labels();
        let dr = model.repr_dim();
        let outside: Vec<(usize, usize)> = batch
            .iter()
            .enumerate()
            .flat_map(|(b, ex)| {
                ex.labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &y)| y == 0)
                    .map(move |(k, _)| (b, k))
            })
            .collect();
        out.outside_spans = outside.len();
        if outside.is_empty() {
            return Ok(());
        }
        let scale = 1.0 / outside.len() as f64;
        for &(b, k) in &outside {
            let o = fwds[b].dist(k);
            out.gce_sr += scale * (gce_term(o[0], w.q) + w.sr_weight * sr_term(o, w.p));
            let g = gce_sr_logit_grad(o, 0, w.q, w.p, w.sr_weight);
            axpy(scale, &g, &mut d_logits[b][k * nl..(k + 1) * nl]);
        }
        out.total += out.gce_sr;

        let mix = &self.cfg.mixup;
        if mix.epsilon <= 0.0 || mix.mixup_weight <= 0.0 {
            return Ok(());
        }
        let boundary = select_boundary_spans(
            outside.iter().map(|&(b, k)| (0, fwds[b].dist(k))),
            mix.epsilon,
        );
        let mut instances = Vec::new();
        let mut owners = Vec::new();
        for span in boundary {
            let (b, k) = outside[span.index];
            let Some(partner) = self.cache.sample(span.entity_label, &mut self.rng) else {
                out.mix_skipped += 1;
                continue;
            };
            let weight = sample_mix_weight(mix.alpha_prime, &mut self.rng)?;
            instances.push(mix_instance(
                fwds[b].repr(k),
                partner,
                span.entity_label,
                nl,
                weight,
            ));
            owners.push((b, k));
        }
        out.mixed = instances.len();
        if instances.is_empty() {
            return Ok(());
        }
        let dists: Vec<Vec<f64>> = instances
            .iter()
            .map(|inst| model.classify_repr(&inst.r))
            .collect::<Result<_>>()?;
        out.mix = mix.mixup_weight * mixup_loss(&dists, &instances);
        out.total += out.mix;
        let grads = mixup_logit_grads(&dists, &instances);
        let mut d_mixed = vec![0.0; dr];
        for ((inst, g), &(b, k)) in instances.iter().zip(&grads).zip(&owners) {
            let g: Vec<f64> = g.iter().map(|v| v * mix.mixup_weight).collect();
            d_mixed.iter_mut().for_each(|v| *v = 0.0);
            model.classify_backward(&inst.r, &g, extra, &mut d_mixed);
            if mix.span_gradient {
                axpy(inst.weight, &d_mixed, &mut d_repr[b][k * dr..(k + 1) * dr]);
            }
        }
        Ok(())
    }

    fn end_epoch(&mut self) -> f64 {
        let obs = std::mem::take(&mut self.observations);
        self.memory
            .update(obs.iter().map(|(label, dist)| MemoryObservation {
                label: *label,
                dist,
                correct: argmax(dist) == *label,
            }));
        self.memory.max_row_sum_error()
    }
}

fn cross_entropy(
    nl: usize,
    batch: &[&Example],
    fwds: &[Forward],
    d_logits: &mut [Vec<f64>],
    out: &mut BatchLosses,
) {
    let n: usize = batch.iter().map(|ex| ex.spans.len()).sum();
    let scale = 1.0 / n.max(1) as f64;
    let mut target = vec![0.0; nl];
    for (b, (ex, fwd)) in batch.iter().zip(fwds).enumerate() {
        for (k, &y) in ex.labels.iter().enumerate() {
            target.iter_mut().for_each(|v| *v = 0.0);
            target[y] = 1.0;
            let o = fwd.dist(k);
            out.ce += scale * soft_cross_entropy(o, &target);
            let g = soft_cross_entropy_logit_grad(o, &target);
            axpy(scale, &g, &mut d_logits[b][k * nl..(k + 1) * nl]);
            if y == 0 {
                out.outside_spans += 1;
            } else {
                out.entity_spans += 1;
            }
        }
    }
    out.total = out.ce;
}

/// Trains a model on the distant layer of `train` (the gold layer where a
/// sentence has no distant layer). With a dev set the epoch with the best
/// dev F1 is kept. `on_epoch` sees each epoch's metrics as they are produced.
pub fn train(
    cfg: &RunConfig,
    train: &[Sentence],
    dev: Option<&[Sentence]>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.iter().all(Sentence::is_empty) {
        return Err(Error::Training("training corpus is empty".into()));
    }
    let mut model = build_model(cfg, train)?;
    let examples = prepare(train, &model.labels, cfg.train.max_span_len)?;
    let mut trainer = Trainer {
        cfg,
        sentences: train,
        memory: SoftLabelMemory::new(model.num_labels(), cfg.memory.window, cfg.memory.lambda)?,
        cache: EntityCache::new(model.num_labels(), cfg.mixup.cache_capacity),
        rng: ChaCha8Rng::seed_from_u64(cfg.train.seed),
        observations: Vec::new(),
    };
    let mut adam = Adam::new(&model.params, cfg.train.lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut metrics = Vec::new();
    let mut best: Option<(f64, usize, SpanModel)> = None;

    for epoch in 1..=cfg.train.epochs {
        order.shuffle(&mut trainer.rng);
        let mut m = EpochMetrics {
            epoch,
            ..Default::default()
        };
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.train.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (losses, mut grads) = trainer.batch(&model, &batch, epoch)?;
            if model.frozen_word_embeddings() {
                grads.word_emb.data.iter_mut().for_each(|v| *v = 0.0);
            }
            let norm = clip_grad_norm(&mut grads, cfg.train.grad_clip);
            if !norm.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient in epoch {epoch}"
                )));
            }
            adam.step(&mut model.params, &grads);
            batches += 1;
            m.loss += losses.total;
            m.mfl += losses.mfl;
            m.cl += losses.cl;
            m.gce_sr += losses.gce_sr;
            m.mix += losses.mix;
            m.ce += losses.ce;
            m.grad_norm += norm;
            m.entity_spans += losses.entity_spans;
            m.outside_spans += losses.outside_spans;
            m.mixed += losses.mixed;
            m.mix_skipped += losses.mix_skipped;
        }
        let per = 1.0 / batches.max(1) as f64;
        for v in [
            &mut m.loss,
            &mut m.mfl,
            &mut m.cl,
            &mut m.gce_sr,
            &mut m.mix,
            &mut m.ce,
            &mut m.grad_norm,
        ] {
            *v *= per;
        }
        if epoch == 1 && m.entity_spans == 0 {
            return Err(Error::Training(
                "training corpus has no entity spans".into(),
            ));
        }
        m.memory_row_error = trainer.end_epoch();
        if let Some(dev) = dev {
            let scores = evaluate(&model, dev, None, cfg.train.max_span_len)?.micro;
            m.dev = Some(scores);
            if best.as_ref().is_none_or(|b| scores.f1 > b.0) {
                best = Some((scores.f1, epoch, model.clone()));
            }
        }
        info!(
            "epoch {epoch}: loss {:.4} mfl {:.4} cl {:.4} gce_sr {:.4} mix {:.4} ce {:.4}{}",
            m.loss,
            m.mfl,
            m.cl,
            m.gce_sr,
            m.mix,
            m.ce,
            m.dev
                .map(|d| format!(" dev f1 {:.2}", d.f1))
                .unwrap_or_default()
        );
        if m.mix_skipped > 0 && m.mixed == 0 {
            warn!(
                "epoch {epoch}: {} boundary spans found no cached entity partner",
                m.mix_skipped
            );
        }
        on_epoch(&m);
        metrics.push(m);
    }

    let (best_epoch, model) = match best {
        Some((_, epoch, model)) => (epoch, model),
        None => (cfg.train.epochs, model),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        metrics,
        memory: trainer.memory,
    })
}
