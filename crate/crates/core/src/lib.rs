//! Span-based named entity recognition trained on distantly supervised data.
//!
//! Entity-labeled spans and non-entity spans are trained with different
//! objectives: entity spans get a focal loss against memory-smoothed targets
//! plus a type-aware contrastive loss, non-entity spans get a noise-tolerant
//! generalized cross entropy with sparse regularization and are mixed with
//! cached entity representations near the decision boundary. At inference the
//! classifier can be interpolated with a nearest-neighbour vote over cached
//! training entities.

pub mod corpus;
pub mod error;
pub mod knn;
pub mod labels;
pub mod losses;
pub mod mixup;
pub mod model;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
pub use labels::LabelSet;
