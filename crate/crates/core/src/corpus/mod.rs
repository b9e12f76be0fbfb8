//! Datasets, the attribute vocabulary and frequency statistics.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub mod fixtures;
mod frequency;
mod load;
mod ontology;
mod vocab;

pub use frequency::{frequency_cluster, FrequencyCluster};
pub use load::{
    load_dataset, parse_dataset, to_canonical_jsonl, write_canonical_jsonl, Dataset,
    DatasetFormat, LoadOptions,
};
pub use ontology::{SemanticType, SemanticTypeOntology};
pub use vocab::{normalize_name, AttributeVocabulary, Domain, ParseMode, SplitCounts};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    #[default]
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

/// One (context, action, entity, gold attribute changes) example.
///
/// Serializes as a canonical JSONL record:
/// `{"id","context","action","entity","changes","split"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    #[serde(rename = "context")]
    pub context_steps: Vec<String>,
    pub action: String,
    pub entity: String,
    #[serde(rename = "changes")]
    pub gold_changes: BTreeSet<String>,
    pub split: Split,
}

impl Instance {
    /// Context steps followed by the action sentence, space separated.
    pub fn context_text(&self) -> String {
        self.context_steps
            .iter()
            .map(|s| s.trim())
            .chain(std::iter::once(self.action.trim()))
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn entity(&self) -> &str {
        self.entity.trim()
    }

    pub fn changed(&self, attribute: &str) -> bool {
        self.gold_changes.contains(attribute)
    }
}
