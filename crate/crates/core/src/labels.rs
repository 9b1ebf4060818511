use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the non-entity label.
pub const OUTSIDE: &str = "O";

/// The full label set `O` plus the entity types, with `O` pinned to index 0 and
/// entity types in lexicographic order after it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn from_entity_types<I, S>(types: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entity: Vec<String> = types.into_iter().map(Into::into).collect();
        entity.sort();
        entity.dedup();
        if let Some(bad) = entity
            .iter()
            .find(|t| t.as_str() == OUTSIDE || t.is_empty())
        {
            return Err(Error::InvalidArgument(format!(
                "{bad:?} cannot be used as an entity type"
            )));
        }
        if entity.is_empty() {
            return Err(Error::InvalidArgument(
                "label set needs at least one entity type".into(),
            ));
        }
        let mut names = Vec::with_capacity(entity.len() + 1);
        names.push(OUTSIDE.to_string());
        names.extend(entity);
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn outside(&self) -> usize {
        0
    }

    pub fn is_entity(&self, idx: usize) -> bool {
        idx != 0 && idx < self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of an entity type; errors on `O` or unknown names.
    pub fn entity_index(&self, name: &str) -> Result<usize> {
        match self.index(name) {
            Some(i) if i != 0 => Ok(i),
            _ => Err(Error::InvalidArgument(format!(
                "{name:?} is not an entity type of {:?}",
                self.entity_types()
            ))),
        }
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn entity_types(&self) -> &[String] {
        &self.names[1..]
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        if names.first().map(String::as_str) != Some(OUTSIDE) {
            return Err(Error::Format {
                what: "label set",
                reason: format!("first label must be {OUTSIDE:?}, got {names:?}"),
            });
        }
        let set = Self::from_entity_types(names[1..].iter().cloned())?;
        if set.names != names {
            return Err(Error::Format {
                what: "label set",
                reason: format!("labels must be unique and sorted, got {names:?}"),
            });
        }
        Ok(set)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(set: LabelSet) -> Self {
        set.names
    }
}
