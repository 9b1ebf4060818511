use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EncoderKind, ModelConfig, Params, SpanModel, Vocab};
use crate::error::{Error, Result};
use crate::labels::LabelSet;

pub const CHECKPOINT_FORMAT: &str = "dsner-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk model: a JSON document with a format tag and version header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub encoder_kind: EncoderKind,
    pub labels: LabelSet,
    /// SHA-256 of the model configuration.
    pub config_hash: String,
    /// SHA-256 over configuration, labels, vocabulary and every parameter.
    pub model_hash: String,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: Params,
    /// Effective run configuration that produced the model, for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

fn config_hash(config: &ModelConfig) -> String {
    let json = serde_json::to_vec(config).expect("model config serializes");
    hex::encode(Sha256::digest(json))
}

impl SpanModel {
    /// Content hash identifying this exact set of weights.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.config).expect("model config serializes"));
        for name in self.labels.names() {
            hasher.update(name.as_bytes());
            hasher.update([0]);
        }
        for word in self.vocab.words() {
            hasher.update(word.as_bytes());
            hasher.update([0]);
        }
        for tensor in self.params.tensors() {
            hasher.update((tensor.len() as u64).to_le_bytes());
            for v in tensor {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

impl Checkpoint {
    pub fn from_model(model: &SpanModel, run_config: Option<serde_json::Value>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            encoder_kind: model.config.encoder.kind,
            labels: model.labels.clone(),
            config_hash: config_hash(&model.config),
            model_hash: model.fingerprint(),
            config: model.config.clone(),
            vocab: model.vocab.clone(),
            params: model.params.clone(),
            run_config,
        }
    }

    pub fn into_model(self) -> Result<SpanModel> {
        let model = SpanModel {
            config: self.config,
            labels: self.labels,
            vocab: self.vocab,
            params: self.params,
        };
        let d = model.token_dim();
        let w = model.config.encoder.context_radius;
        let checks = [
            (
                "word embeddings",
                model.params.word_emb.rows,
                model.vocab.len(),
            ),
            ("word embeddings", model.params.word_emb.cols, d),
            ("context layer", model.params.context.cols, (2 * w + 1) * d),
            ("projection", model.params.proj.cols, 4 * d),
            ("projection", model.params.proj.rows, model.repr_dim()),
            ("classifier", model.params.cls.rows, model.labels.len()),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(Error::Format {
                    what: "checkpoint",
                    reason: format!("{what}: expected dimension {expected}, found {got}"),
                });
            }
        }
        if model.fingerprint() != self.model_hash {
            return Err(Error::Format {
                what: "checkpoint",
                reason: "model hash does not match the stored parameters".into(),
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let header: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| Error::Format {
                what: "checkpoint",
                reason: e.to_string(),
            })?;
        if header.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Format {
                what: "checkpoint",
                reason: format!("missing {CHECKPOINT_FORMAT:?} format tag"),
            });
        }
        let version = header.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Format {
                what: "checkpoint",
                reason: format!("unsupported version {version:?}"),
            });
        }
        serde_json::from_value(header).map_err(|e| Error::Format {
            what: "checkpoint",
            reason: e.to_string(),
        })
    }

    /// Loads a model and insists on the given label set.
    pub fn load_model(path: impl AsRef<Path>, expected: Option<&LabelSet>) -> Result<SpanModel> {
        let ckpt = Self::load(path)?;
        if let Some(expected) = expected {
            if &ckpt.labels != expected {
                return Err(Error::LabelMismatch {
                    expected: expected.names().to_vec(),
                    found: ckpt.labels.names().to_vec(),
                });
            }
        }
        ckpt.into_model()
    }
}
