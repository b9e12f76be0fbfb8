use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fixtures;
use super::vocab::{normalize_name, AttributeVocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticType {
    Spatial,
    Material,
    #[serde(rename = "Entity-Specific")]
    EntitySpecific,
    Behavioral,
    Quantifier,
    Temporal,
    #[serde(rename = "Sensory Perception")]
    SensoryPerception,
}

impl SemanticType {
    pub const ALL: [SemanticType; 7] = [
        SemanticType::Spatial,
        SemanticType::Material,
        SemanticType::EntitySpecific,
        SemanticType::Behavioral,
        SemanticType::Quantifier,
        SemanticType::Temporal,
        SemanticType::SensoryPerception,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SemanticType::Spatial => "Spatial",
            SemanticType::Material => "Material",
            SemanticType::EntitySpecific => "Entity-Specific",
            SemanticType::Behavioral => "Behavioral",
            SemanticType::Quantifier => "Quantifier",
            SemanticType::Temporal => "Temporal",
            SemanticType::SensoryPerception => "Sensory Perception",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for SemanticType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_lowercase();
        SemanticType::ALL
            .into_iter()
            .find(|t| t.label().to_lowercase() == wanted)
            .ok_or_else(|| Error::invalid(format!("unknown semantic type `{}`", s.trim())))
    }
}

/// Attribute → semantic type label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticTypeOntology {
    types: BTreeMap<String, SemanticType>,
}

impl SemanticTypeOntology {
    pub fn openpi() -> Self {
        Self::parse(fixtures::OPENPI_ONTOLOGY).expect("bundled ontology is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut types = BTreeMap::new();
        for (name, label) in fixtures::parse_two_column(text)? {
            let name = normalize_name(&name);
            if types.insert(name.clone(), label.parse()?).is_some() {
                return Err(Error::invalid(format!("attribute `{name}` typed twice")));
            }
        }
        Ok(Self { types })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn uniform(names: &[String], ty: SemanticType) -> Self {
        Self {
            types: names.iter().map(|n| (n.clone(), ty)).collect(),
        }
    }

    pub fn type_of(&self, name: &str) -> Option<SemanticType> {
        self.types.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Attributes of the vocabulary the ontology does not type.
    pub fn uncovered<'a>(&self, vocab: &'a AttributeVocabulary) -> Vec<&'a str> {
        vocab
            .names()
            .iter()
            .filter(|n| !self.types.contains_key(*n))
            .map(String::as_str)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_ontology_covers_openpi() {
        let o = SemanticTypeOntology::openpi();
        let v = AttributeVocabulary::openpi();
        assert!(o.uncovered(&v).is_empty());
        assert_eq!(o.len(), v.len());
        assert_eq!(o.type_of("amount"), Some(SemanticType::Quantifier));
        assert_eq!(o.type_of("availability"), Some(SemanticType::Temporal));
        assert_eq!(o.type_of("age"), Some(SemanticType::Temporal));
    }

    #[test]
    fn labels_round_trip() {
        for t in SemanticType::ALL {
            assert_eq!(t.label().parse::<SemanticType>().unwrap(), t);
        }
        assert!("Gustatory".parse::<SemanticType>().is_err());
    }
}
