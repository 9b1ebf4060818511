use std::collections::BTreeMap;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{entity_types, Sentence};
use crate::error::{Error, Result};

/// Parameters for turning gold annotations into a synthetic distant layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Probability that a surviving gold entity is relabeled to another type.
    pub flip_rate: f64,
    /// Base probability that a gold entity is dropped from the distant layer.
    pub drop_rate: f64,
    /// Per-type factors applied to `drop_rate`; unlisted types use 1.0.
    #[serde(default)]
    pub drop_multipliers: BTreeMap<String, f64>,
}

impl NoiseSpec {
    pub fn new(flip_rate: f64, drop_rate: f64) -> Self {
        Self {
            flip_rate,
            drop_rate,
            drop_multipliers: BTreeMap::new(),
        }
    }

    pub fn with_multiplier(mut self, entity_type: &str, factor: f64) -> Self {
        self.drop_multipliers
            .insert(entity_type.to_string(), factor);
        self
    }

    pub fn drop_rate_for(&self, entity_type: &str) -> f64 {
        self.drop_rate
            * self
                .drop_multipliers
                .get(entity_type)
                .copied()
                .unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("flip_rate", self.flip_rate)?;
        unit("drop_rate", self.drop_rate)?;
        for ty in self.drop_multipliers.keys() {
            unit(
                &format!("effective drop rate of {ty}"),
                self.drop_rate_for(ty),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InjectStats {
    pub entities: usize,
    pub dropped: usize,
    pub flipped: usize,
    /// Entities selected for flipping that had no other type to go to.
    pub unflippable: usize,
}

/// Builds a noisy distant layer from the gold layer of every sentence.
///
/// Each gold entity is dropped with its type's drop rate; a surviving entity is
/// relabeled with probability `flip_rate` to a type drawn uniformly from the
/// other entity types of the corpus. The gold layer is kept unchanged.
pub fn inject_noise(gold: &[Sentence], spec: &NoiseSpec, seed: u64) -> Result<Vec<Sentence>> {
    inject_noise_with_stats(gold, spec, seed).map(|(out, _)| out)
}

pub fn inject_noise_with_stats(
    gold: &[Sentence],
    spec: &NoiseSpec,
    seed: u64,
) -> Result<(Vec<Sentence>, InjectStats)> {
    spec.validate()?;
    let types: Vec<String> = entity_types(gold).into_iter().collect();
    for ty in &types {
        let rate = spec.drop_rate_for(ty);
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "effective drop rate of {ty} must lie in [0, 1], got {rate}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = InjectStats::default();
    let mut out = Vec::with_capacity(gold.len());
    for sentence in gold {
        let mut noisy = Vec::new();
        for span in sentence.gold.as_deref().unwrap_or_default() {
            stats.entities += 1;
            // Two draws per entity regardless of outcome keep the stream aligned
            // across configurations that differ only in rates.
            let drop_draw: f64 = rng.gen();
            let flip_draw: f64 = rng.gen();
            if drop_draw < spec.drop_rate_for(&span.label) {
                stats.dropped += 1;
                continue;
            }
            let mut span = span.clone();
            if flip_draw < spec.flip_rate {
                let others: Vec<&String> = types.iter().filter(|t| **t != span.label).collect();
                if others.is_empty() {
                    stats.unflippable += 1;
                } else {
                    span.label = others[rng.gen_range(0..others.len())].clone();
                    stats.flipped += 1;
                }
            }
            noisy.push(span);
        }
        let mut s = sentence.clone();
        s.distant = Some(noisy);
        out.push(s);
    }
    if stats.unflippable > 0 {
        warn!(
            "{} entities selected for relabeling kept their type: no other entity type exists",
            stats.unflippable
        );
    }
    Ok((out, stats))
}
