use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::Denominator;
use crate::backends::{NgramConfig, RemoteConfig};
use crate::corpus::{AttributeVocabulary, DatasetFormat, ParseMode, SemanticTypeOntology, Split};
use crate::metrics::{Curation, WeightSource};
use crate::pipeline::{Strategy, DEFAULT_K_GRID};
use crate::similarity::SimilarityKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory; every random choice derives from it.
    pub seed: Option<u64>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Ask about at most `k` attributes per multi-attribute prompt.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    /// Seeds for the k-sweep; empty means the run seed only.
    #[serde(default)]
    pub sweep_seeds: Vec<u64>,
    #[serde(default)]
    pub parse_mode: ParseMode,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub fewshot: Option<FewShotConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_strategy() -> Strategy {
    Strategy::Multi
}
fn default_k_grid() -> Vec<usize> {
    DEFAULT_K_GRID.to_vec()
}
fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: DatasetFormat,
    #[serde(default)]
    pub eval_split: Split,
    /// `openpi`, `piglet`, or a path to an `attribute<TAB>domain` table.
    #[serde(default = "default_vocabulary")]
    pub vocabulary: String,
    #[serde(default)]
    pub merge: Option<PathBuf>,
    /// `in_domain`, `out_domain` or `all`; ignored when `attribute_list` is set.
    #[serde(default = "default_attributes")]
    pub attributes: String,
    #[serde(default)]
    pub attribute_list: Option<Vec<String>>,
    #[serde(default)]
    pub ontology: Option<PathBuf>,
    #[serde(default)]
    pub curation: Option<PathBuf>,
}

fn default_vocabulary() -> String {
    "openpi".into()
}
fn default_attributes() -> String {
    "in_domain".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Oracle,
    Ngram,
    Remote,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Oracle => "oracle",
            BackendKind::Ngram => "ngram",
            BackendKind::Remote => "remote",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "oracle" => Ok(BackendKind::Oracle),
            "ngram" | "n-gram" | "logreg" => Ok(BackendKind::Ngram),
            "remote" => Ok(BackendKind::Remote),
            other => Err(Error::invalid(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub flip_probability: f64,
    /// Split the n-gram baseline is fitted on.
    #[serde(default = "default_train_split")]
    pub train_split: Split,
    #[serde(default)]
    pub ngram: NgramConfig,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::default(),
            flip_probability: 0.0,
            train_split: default_train_split(),
            ngram: NgramConfig::default(),
            remote: None,
        }
    }
}

fn default_train_split() -> Split {
    Split::Train
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotConfig {
    #[serde(default = "default_shots")]
    pub n: usize,
    #[serde(default = "default_train_split")]
    pub pool_split: Split,
    #[serde(default)]
    pub similarity: SimilarityKind,
}

fn default_shots() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub weights: WeightSource,
    #[serde(default = "default_train_split")]
    pub cluster_split: Split,
    #[serde(default = "default_threshold")]
    pub match_threshold: f64,
    #[serde(default = "default_matcher")]
    pub matcher: SimilarityKind,
    #[serde(default = "default_threshold")]
    pub synonym_threshold: f64,
    #[serde(default = "default_synonym_scorer")]
    pub synonym_scorer: SimilarityKind,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub denominator: Denominator,
}

fn default_threshold() -> f64 {
    0.5
}
fn default_matcher() -> SimilarityKind {
    SimilarityKind::CharTrigram
}
fn default_synonym_scorer() -> SimilarityKind {
    SimilarityKind::Curated
}
fn default_permutations() -> usize {
    10_000
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            weights: WeightSource::default(),
            cluster_split: default_train_split(),
            match_threshold: default_threshold(),
            matcher: default_matcher(),
            synonym_threshold: default_threshold(),
            synonym_scorer: default_synonym_scorer(),
            permutations: default_permutations(),
            denominator: Denominator::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Malformed {
            path: origin.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text, path)?;
        let base = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
        config.resolve_paths(base.parent().unwrap_or(Path::new("/")));
        Ok(config)
    }

    /// Makes relative paths relative to `base` (the config file's folder).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        for p in [&mut self.dataset.merge, &mut self.dataset.ontology, &mut self.dataset.curation]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        if !matches!(self.dataset.vocabulary.as_str(), "openpi" | "piglet") {
            let mut p = PathBuf::from(&self.dataset.vocabulary);
            fix(&mut p);
            self.dataset.vocabulary = p.to_string_lossy().into_owned();
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::invalid("a seed is required (set `seed` or pass --seed)"))
    }

    pub fn vocabulary(&self) -> Result<AttributeVocabulary> {
        let mut vocab = match self.dataset.vocabulary.as_str() {
            "openpi" => AttributeVocabulary::openpi(),
            "piglet" => AttributeVocabulary::piglet(),
            path => AttributeVocabulary::from_files(Path::new(path), None)?,
        };
        if let Some(merge) = &self.dataset.merge {
            for (raw, canonical) in crate::corpus::fixtures::read_two_column(merge)? {
                vocab.add_merge_rule(&raw, &canonical)?;
            }
        }
        Ok(vocab)
    }

    /// Ontology table text, bundled unless configured.
    pub fn ontology_text(&self) -> Result<String> {
        match &self.dataset.ontology {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
            None => Ok(crate::corpus::fixtures::OPENPI_ONTOLOGY.to_string()),
        }
    }

    pub fn curation_text(&self) -> Result<String> {
        match &self.dataset.curation {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
            None => Ok(crate::corpus::fixtures::OPENPI_CURATION.to_string()),
        }
    }

    /// Attributes queried, in prompt order.
    pub fn attributes(&self, vocab: &AttributeVocabulary) -> Result<Vec<String>> {
        if let Some(list) = &self.dataset.attribute_list {
            return list.iter().map(|a| vocab.canonicalize(a)).collect();
        }
        match self.dataset.attributes.as_str() {
            "in_domain" => Ok(vocab.in_domain()),
            "out_domain" => Ok(vocab.out_domain()),
            "all" => Ok(vocab.names().to_vec()),
            other => Err(Error::invalid(format!("unknown attribute selection `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if self.k == Some(0) || self.k_grid.contains(&0) {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.k.is_some() && self.strategy != Strategy::Multi {
            return Err(Error::invalid("k applies to the multi strategy only"));
        }
        if self.fewshot.as_ref().is_some_and(|f| f.n == 0) {
            return Err(Error::invalid("few-shot n must be at least 1"));
        }
        if self.backend.kind == BackendKind::Remote && self.backend.remote.is_none() {
            return Err(Error::invalid("remote backend needs a [backend.remote] section"));
        }
        Ok(())
    }
}

pub(crate) fn parse_curation(text: &str) -> Result<Curation> {
    Curation::parse(text)
}

pub(crate) fn parse_ontology(text: &str) -> Result<SemanticTypeOntology> {
    SemanticTypeOntology::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 3\n[dataset]\npath = \"data.jsonl\"\n";

    #[test]
    fn defaults_and_snapshot_round_trip() {
        let c = RunConfig::parse(MINIMAL, Path::new("c.toml")).unwrap();
        assert_eq!(c.strategy, Strategy::Multi);
        assert_eq!(c.k_grid, vec![1, 2, 5, 10, 20, 51]);
        assert_eq!(c.metrics.permutations, 10_000);
        let again = RunConfig::parse(&c.to_toml().unwrap(), Path::new("snap")).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
seed = 1
strategy = "k-attribute"
[dataset]
path = "d.jsonl"
attributes = "all"
[backend]
kind = "remote"
[backend.remote]
endpoint = "http://localhost:1/v1/completions"
model = "m"
stop = ["\n"]
[fewshot]
n = 4
[metrics]
weights = { split = "train" }
"#;
        let c = RunConfig::parse(text, Path::new("c.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.metrics.weights, WeightSource::Split(Split::Train));
        let again = RunConfig::parse(&c.to_toml().unwrap(), Path::new("snap")).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn seed_is_mandatory_and_unknown_keys_rejected() {
        let c = RunConfig::parse("[dataset]\npath = \"d\"\n", Path::new("c.toml")).unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::parse("seed = 1\nbogus = 2\n[dataset]\npath = \"d\"\n", Path::new("c.toml")).is_err());
    }
}
