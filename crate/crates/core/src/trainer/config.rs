use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::KnnConfig;
use crate::losses::LossWeights;
use crate::mixup::MixupConfig;
use crate::model::ModelConfig;

/// Hyperparameter presets for the benchmark corpora the defaults were tuned on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Bc5cdr,
    #[default]
    Conll2003,
    Ontonotes,
    Webpage,
    Ec,
}

impl Profile {
    pub const ALL: [Profile; 5] = [
        Profile::Bc5cdr,
        Profile::Conll2003,
        Profile::Ontonotes,
        Profile::Webpage,
        Profile::Ec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Bc5cdr => "bc5cdr",
            Profile::Conll2003 => "conll2003",
            Profile::Ontonotes => "ontonotes",
            Profile::Webpage => "webpage",
            Profile::Ec => "ec",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown profile {name:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Separate objectives for entity and non-entity spans.
    #[default]
    Separate,
    /// Plain cross-entropy on every span against its distant label.
    Ce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub lr: f64,
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub max_span_len: usize,
    pub seed: u64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Separate,
            lr: 1e-5,
            batch_size: 16,
            epochs: 10,
            max_span_len: 10,
            seed: 42,
            grad_clip: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Number of previous epochs averaged into a smoothed target.
    pub window: usize,
    /// Weight of the hard label in a smoothed target.
    pub lambda: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            window: 1,
            lambda: 0.8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

/// Everything a training or inference run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub memory: MemoryConfig,
    pub mixup: MixupConfig,
    pub knn: KnnConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_profile(Profile::default())
    }
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (batch_size, repr_dim, k, mu, window) = match profile {
            Profile::Bc5cdr => (16, 256, 64, 0.7, 1),
            Profile::Conll2003 => (16, 256, 64, 0.3, 3),
            Profile::Ontonotes => (16, 256, 64, 0.3, 1),
            Profile::Webpage => (12, 128, 16, 0.7, 1),
            Profile::Ec => (16, 256, 64, 0.7, 1),
        };
        Self {
            profile,
            train: TrainConfig {
                batch_size,
                ..TrainConfig::default()
            },
            model: ModelConfig {
                repr_dim,
                ..ModelConfig::default()
            },
            loss: LossWeights::default(),
            memory: MemoryConfig {
                window,
                ..MemoryConfig::default()
            },
            mixup: MixupConfig::default(),
            knn: KnnConfig {
                k,
                mu,
                ..KnnConfig::default()
            },
            paths: PathsConfig::default(),
        }
    }

    /// Parses a TOML document. Values it sets override the defaults of the
    /// profile it names (or the default profile).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let profile = match doc.get("profile") {
            None => Profile::default(),
            Some(toml::Value::String(name)) => Profile::parse(name)?,
            Some(other) => {
                return Err(Error::Config(format!(
                    "profile must be a string, got {other}"
                )))
            }
        };
        let mut merged = toml::Table::try_from(Self::for_profile(profile))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, doc);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", t.lr)));
        }
        for (name, v) in [
            ("batch_size", t.batch_size),
            ("epochs", t.epochs),
            ("max_span_len", t.max_span_len),
            ("memory.window", self.memory.window),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(t.grad_clip >= 0.0 && t.grad_clip.is_finite()) {
            return Err(Error::Config(format!(
                "grad_clip must be non-negative, got {}",
                t.grad_clip
            )));
        }
        if !(0.0..=1.0).contains(&self.memory.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.memory.lambda
            )));
        }
        self.model.validate()?;
        self.loss.validate()?;
        self.mixup.validate()?;
        self.knn.validate()
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => merge(dst, src),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
