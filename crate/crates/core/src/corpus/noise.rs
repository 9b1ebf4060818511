use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Layer, Sentence};
use crate::error::{Error, Result};

/// Token counts behind a pair of rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    /// Tokens carrying this type in the gold layer.
    pub gold_tokens: usize,
    /// Tokens carrying this type in the distant layer.
    pub distant_tokens: usize,
    /// Distant tokens of this type whose gold label differs.
    pub inaccurate_tokens: usize,
    /// Gold tokens of this type left unlabeled by the distant layer.
    pub missed_tokens: usize,
}

/// Token-level rates, in percent. A rate with a zero denominator is absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeNoise {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inaccurate_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incomplete_rate: Option<f64>,
    pub support: Support,
}

impl TypeNoise {
    fn from_support(support: Support) -> Self {
        let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
        Self {
            inaccurate_rate: pct(support.inaccurate_tokens, support.distant_tokens),
            incomplete_rate: pct(support.missed_tokens, support.gold_tokens),
            support,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub per_type: BTreeMap<String, TypeNoise>,
    pub total: TypeNoise,
}

/// Compares a distant layer against gold, token by token.
///
/// For a type `T`, the inaccurate rate is the share of tokens distant-labeled
/// `T` whose gold label is anything other than `T`; the incomplete rate is the
/// share of gold-`T` tokens that the distant layer leaves as `O`. Gold spans
/// are read from `gold[i].gold` and distant spans from `distant[i].distant`,
/// falling back to `distant[i].gold` when the distant layer is absent.
pub fn compute_noise_rates(gold: &[Sentence], distant: &[Sentence]) -> Result<NoiseReport> {
    if gold.len() != distant.len() {
        return Err(Error::Alignment {
            sentence: gold.len().min(distant.len()),
            reason: format!(
                "{} gold sentences vs {} distant sentences",
                gold.len(),
                distant.len()
            ),
        });
    }
    let mut counts: BTreeMap<String, Support> = BTreeMap::new();
    let mut total = Support::default();
    for (idx, (g, d)) in gold.iter().zip(distant).enumerate() {
        if g.tokens != d.tokens {
            return Err(Error::Alignment {
                sentence: idx,
                reason: "token sequences differ".into(),
            });
        }
        let gold_labels = g.token_labels(Layer::Gold);
        let distant_layer = if d.distant.is_some() {
            Layer::Distant
        } else {
            Layer::Gold
        };
        let distant_labels = d.token_labels(distant_layer);
        for (gl, dl) in gold_labels.into_iter().zip(distant_labels) {
            if let Some(t) = gl {
                let c = counts.entry(t.to_string()).or_default();
                c.gold_tokens += 1;
                total.gold_tokens += 1;
                if dl.is_none() {
                    c.missed_tokens += 1;
                    total.missed_tokens += 1;
                }
            }
            if let Some(t) = dl {
                let c = counts.entry(t.to_string()).or_default();
                c.distant_tokens += 1;
                total.distant_tokens += 1;
                if gl != Some(t) {
                    c.inaccurate_tokens += 1;
                    total.inaccurate_tokens += 1;
                }
            }
        }
    }
    Ok(NoiseReport {
        per_type: counts
            .into_iter()
            .map(|(t, c)| (t, TypeNoise::from_support(c)))
            .collect(),
        total: TypeNoise::from_support(total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;

    #[test]
    fn identical_layers_have_zero_noise() {
        let g = vec![
            Sentence::new(["a", "b", "c"]).with_gold(vec![EntitySpan::new(1, 2, "PER")]),
            Sentence::new(["d"]).with_gold(vec![EntitySpan::new(1, 1, "LOC")]),
        ];
        let report = compute_noise_rates(&g, &g).unwrap();
        for noise in report.per_type.values().chain([&report.total]) {
            assert_eq!(noise.inaccurate_rate, Some(0.0));
            assert_eq!(noise.incomplete_rate, Some(0.0));
        }
    }

    #[test]
    fn hand_counted_fixture() {
        // tokens:   t1  t2  t3  t4  t5  t6 ... t10
        // gold:     PER PER PER PER O   O
        // distant:  PER PER LOC O   PER O
        let tokens: Vec<String> = (1..=10).map(|i| format!("t{i}")).collect();
        let gold = Sentence::new(tokens.clone()).with_gold(vec![EntitySpan::new(1, 4, "PER")]);
        let distant = Sentence::new(tokens).with_distant(vec![
            EntitySpan::new(1, 2, "PER"),
            EntitySpan::new(3, 3, "LOC"),
            EntitySpan::new(5, 5, "PER"),
        ]);
        let report = compute_noise_rates(&[gold], &[distant]).unwrap();
        let per = report.per_type["PER"];
        assert!((per.inaccurate_rate.unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(per.incomplete_rate, Some(25.0));
        let loc = report.per_type["LOC"];
        assert_eq!(loc.inaccurate_rate, Some(100.0));
        // LOC never occurs in gold.
        assert_eq!(loc.incomplete_rate, None);
    }

    #[test]
    fn misaligned_tokens_are_rejected() {
        let a = vec![Sentence::new(["a"]).with_gold(vec![])];
        let b = vec![Sentence::new(["b"]).with_distant(vec![])];
        assert!(matches!(
            compute_noise_rates(&a, &b),
            Err(Error::Alignment { sentence: 0, .. })
        ));
        assert!(compute_noise_rates(&a, &[]).is_err());
    }

    #[test]
    fn absent_rates_are_omitted_from_json() {
        let report = NoiseReport {
            per_type: BTreeMap::from([(
                "LOC".to_string(),
                TypeNoise::from_support(Support {
                    distant_tokens: 2,
                    inaccurate_tokens: 1,
                    ..Support::default()
                }),
            )]),
            total: TypeNoise::default(),
        };
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["per_type"]["LOC"]["inaccurate_rate"], 50.0);
        assert!(json["per_type"]["LOC"].get("incomplete_rate").is_none());
        assert_eq!(json["per_type"]["LOC"]["support"]["distant_tokens"], 2);
    }
}
