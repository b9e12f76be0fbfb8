use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fixtures;
use super::Split;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    InDomain,
    OutDomain,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::InDomain => "in_domain",
            Domain::OutDomain => "out_domain",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "in_domain" | "in" => Ok(Domain::InDomain),
            "out_domain" | "out" => Ok(Domain::OutDomain),
            other => Err(Error::invalid(format!("unknown domain tag `{other}`"))),
        }
    }
}

/// How unknown attribute names are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: u64,
    pub dev: u64,
    pub test: u64,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> u64 {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }

    fn slot(&mut self, split: Split) -> &mut u64 {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }
}

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize_name(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Canonical attribute names with their synonym-merge rules, domain tags and
/// per-split positive counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeVocabulary {
    canonical: Vec<String>,
    merge_map: BTreeMap<String, String>,
    domain: BTreeMap<String, Domain>,
    #[serde(default)]
    frequency: BTreeMap<String, SplitCounts>,
}

impl AttributeVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// The 51 in-domain and 41 out-of-domain OpenPI attributes, the shipped
    /// merge rules and the published training-set frequencies.
    pub fn openpi() -> Self {
        let mut vocab = Self::from_tables(fixtures::OPENPI_VOCABULARY, Some(fixtures::OPENPI_MERGE))
            .expect("bundled OpenPI vocabulary is valid");
        for (name, [train, dev, test]) in fixtures::parse_frequency_table(fixtures::OPENPI_FREQUENCY)
            .expect("bundled frequency table parses")
        {
            vocab.frequency.insert(name, SplitCounts { train, dev, test });
        }
        vocab
    }

    /// The 14 PiGLET attributes.
    pub fn piglet() -> Self {
        Self::from_tables(fixtures::PIGLET_VOCABULARY, None).expect("bundled PiGLET vocabulary is valid")
    }

    /// Builds a vocabulary from an `attribute<TAB>domain` table and an
    /// optional `raw<TAB>canonical` merge table.
    pub fn from_tables(vocabulary: &str, merge: Option<&str>) -> Result<Self> {
        let mut vocab = Self::new();
        for (name, domain) in fixtures::parse_two_column(vocabulary)? {
            vocab.insert(&name, domain.parse()?)?;
        }
        if let Some(merge) = merge {
            for (raw, canonical) in fixtures::parse_two_column(merge)? {
                vocab.add_merge_rule(&raw, &canonical)?;
            }
        }
        Ok(vocab)
    }

    pub fn from_files(vocabulary: &Path, merge: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let vocab_text = read(vocabulary)?;
        let merge_text = merge.map(read).transpose()?;
        Self::from_tables(&vocab_text, merge_text.as_deref())
    }

    pub fn insert(&mut self, name: &str, domain: Domain) -> Result<()> {
        let name = normalize_name(name);
        if name.is_empty() {
            return Err(Error::invalid("attribute name is empty"));
        }
        if self.domain.contains_key(&name) {
            return Err(Error::invalid(format!("attribute `{name}` listed twice")));
        }
        if let Some(target) = self.merge_map.get(&name) {
            return Err(Error::invalid(format!(
                "`{name}` is already a merge alias of `{target}`"
            )));
        }
        self.canonical.push(name.clone());
        self.domain.insert(name, domain);
        Ok(())
    }

    pub fn add_merge_rule(&mut self, raw: &str, canonical: &str) -> Result<()> {
        let raw = normalize_name(raw);
        let canonical = normalize_name(canonical);
        if !self.domain.contains_key(&canonical) {
            return Err(Error::invalid(format!(
                "merge rule `{raw}` -> `{canonical}` targets an unknown attribute"
            )));
        }
        if raw == canonical {
            return Ok(());
        }
        if self.domain.contains_key(&raw) {
            return Err(Error::invalid(format!(
                "merge rule would remap canonical attribute `{raw}`"
            )));
        }
        self.merge_map.insert(raw, canonical);
        Ok(())
    }

    /// Maps a raw surface form onto its canonical name.
    pub fn canonicalize(&self, raw: &str) -> Result<String> {
        let name = normalize_name(raw);
        if name.is_empty() {
            return Err(Error::invalid("attribute name is empty"));
        }
        self.lookup(&name)
            .map(str::to_string)
            .ok_or(Error::UnknownAttribute(name))
    }

    /// Like [`canonicalize`](Self::canonicalize), but in lenient mode an
    /// unmapped name is registered as a new out-of-domain attribute.
    pub fn canonicalize_or_insert(&mut self, raw: &str, mode: ParseMode) -> Result<String> {
        match (self.canonicalize(raw), mode) {
            (Err(Error::UnknownAttribute(name)), ParseMode::Lenient) => {
                self.insert(&name, Domain::OutDomain)?;
                Ok(name)
            }
            (other, _) => other,
        }
    }

    fn lookup(&self, normalized: &str) -> Option<&str> {
        if let Some((name, _)) = self.domain.get_key_value(normalized) {
            return Some(name);
        }
        self.merge_map.get(normalized).map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.domain.contains_key(name)
    }

    pub fn names(&self) -> &[String] {
        &self.canonical
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    pub fn domain_of(&self, name: &str) -> Option<Domain> {
        self.domain.get(name).copied()
    }

    pub fn names_in(&self, domain: Domain) -> Vec<String> {
        self.canonical
            .iter()
            .filter(|n| self.domain[*n] == domain)
            .cloned()
            .collect()
    }

    pub fn in_domain(&self) -> Vec<String> {
        self.names_in(Domain::InDomain)
    }

    pub fn out_domain(&self) -> Vec<String> {
        self.names_in(Domain::OutDomain)
    }

    pub fn merge_rules(&self) -> impl Iterator<Item = (&str, &str)> {
        self.merge_map.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn frequency(&self, name: &str, split: Split) -> u64 {
        self.frequency.get(name).map_or(0, |c| c.get(split))
    }

    pub fn frequencies(&self) -> &BTreeMap<String, SplitCounts> {
        &self.frequency
    }

    pub fn clear_frequency(&mut self) {
        self.frequency.clear();
    }

    pub(crate) fn record_positive(&mut self, name: &str, split: Split) {
        *self
            .frequency
            .entry(name.to_string())
            .or_default()
            .slot(split) += 1;
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.canonical {
            if *name != normalize_name(name) || name.is_empty() {
                return Err(Error::invalid(format!("attribute `{name}` is not normalized")));
            }
            if !seen.insert(name) {
                return Err(Error::invalid(format!("attribute `{name}` listed twice")));
            }
            if !self.domain.contains_key(name) {
                return Err(Error::invalid(format!("attribute `{name}` has no domain tag")));
            }
        }
        if self.domain.len() != self.canonical.len() {
            return Err(Error::invalid("domain tags name attributes outside the vocabulary"));
        }
        for (raw, target) in &self.merge_map {
            if self.domain.contains_key(raw) || !self.domain.contains_key(target) {
                return Err(Error::invalid(format!("merge rule `{raw}` -> `{target}` is not idempotent")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn openpi_has_51_in_and_41_out() {
        let v = AttributeVocabulary::openpi();
        assert_eq!(v.in_domain().len(), 51);
        assert_eq!(v.out_domain().len(), 41);
        v.validate().unwrap();
    }

    #[test]
    fn canonicalize_examples() {
        let v = AttributeVocabulary::openpi();
        assert_eq!(v.canonicalize("Location ").unwrap(), "location");
        assert_eq!(v.canonicalize("placement").unwrap(), "location");
        assert_eq!(v.canonicalize("width").unwrap(), "width");
        assert_eq!(v.canonicalize("  Electric   Conductivity").unwrap(), "electric conductivity");
        assert!(matches!(v.canonicalize("zorbness"), Err(Error::UnknownAttribute(_))));
        assert!(v.canonicalize("   ").is_err());
    }

    #[test]
    fn canonicalize_is_idempotent_over_merge_file() {
        let v = AttributeVocabulary::openpi();
        for (raw, _) in v.merge_rules() {
            let once = v.canonicalize(raw).unwrap();
            assert_eq!(v.canonicalize(&once).unwrap(), once);
        }
        for name in v.names() {
            assert_eq!(&v.canonicalize(name).unwrap(), name);
        }
    }

    #[test]
    fn lenient_inserts_out_domain() {
        let mut v = AttributeVocabulary::openpi();
        assert!(v.canonicalize_or_insert("Zorbness", ParseMode::Strict).is_err());
        assert_eq!(v.canonicalize_or_insert("Zorbness", ParseMode::Lenient).unwrap(), "zorbness");
        assert_eq!(v.domain_of("zorbness"), Some(Domain::OutDomain));
    }

    #[test]
    fn published_train_counts() {
        let v = AttributeVocabulary::openpi();
        assert_eq!(v.frequency("location", Split::Train), 4505);
        assert_eq!(v.frequency("distance", Split::Train), 53);
        assert_eq!(v.frequency("orientation", Split::Train), 330);
        assert_eq!(v.frequency("brightness", Split::Dev), 0);
        assert_eq!(v.frequency("amount", Split::Test), 16);
    }

    #[test]
    fn merge_rule_must_not_remap_canonical() {
        let mut v = AttributeVocabulary::openpi();
        assert!(v.add_merge_rule("width", "length").is_err());
        assert!(v.add_merge_rule("breadth", "nonexistent").is_err());
        v.add_merge_rule("breadth", "Width").unwrap();
        assert_eq!(v.canonicalize("breadth").unwrap(), "width");
    }
}
