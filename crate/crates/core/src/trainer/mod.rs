//! Training loop, span decoding and entity-level evaluation.

mod config;
mod decode;
mod eval;
mod optim;
mod train;

pub use config::{MemoryConfig, Objective, PathsConfig, Profile, RunConfig, TrainConfig};
pub use decode::{decode, select_spans, ScoredSpan};
pub use eval::{evaluate, predict_corpus, score, EvalResult, Scores};
pub use optim::{clip_grad_norm, Adam};
pub use train::{build_model, train, EpochMetrics, TrainOutcome};
