//! Seeded synthetic corpora with lexical cues for each attribute.
//!
//! Every attribute owns a few cue words. An instance mentions one cue of
//! each attribute that changed, plus filler. Optional leakage plants cues
//! in instances where the attribute did not change.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{parse_dataset, to_canonical_jsonl, AttributeVocabulary, Dataset, DatasetFormat, Instance, LoadOptions, Split};
use crate::rng::{stream, substream};
use crate::Result;

const FILLER: [&str; 16] = [
    "carefully", "then", "slowly", "the", "next", "gently", "again", "quickly", "after", "that", "with", "care",
    "before", "moving", "on", "briefly",
];

const ENTITIES: [&str; 8] = ["mug", "towel", "dough", "beans", "rope", "lamp", "shirt", "bowl"];

/// Cue word `variant` of `attribute`; always a single alphanumeric token.
pub fn cue_word(attribute: &str, variant: usize) -> String {
    let stem: String = attribute.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    format!("{stem}cue{variant}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub instances: usize,
    pub attributes: Vec<String>,
    /// Per-attribute probability of a change; one value for all when of length 1.
    pub change_rates: Vec<f64>,
    /// Cue words per attribute; the one used is drawn uniformly.
    pub cue_variants: usize,
    /// Probability of planting a cue for an attribute that did not change.
    pub leak: f64,
    pub split: Split,
    pub id_prefix: String,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(instances: usize, attributes: Vec<String>, seed: u64) -> Self {
        Self {
            instances,
            attributes,
            change_rates: vec![0.2],
            cue_variants: 1,
            leak: 0.0,
            split: Split::Test,
            id_prefix: "syn".into(),
            seed,
        }
    }

    fn rate(&self, i: usize) -> f64 {
        if self.change_rates.len() == 1 {
            self.change_rates[0]
        } else {
            self.change_rates[i]
        }
    }
}

pub fn synthetic_corpus(spec: &SyntheticSpec) -> Vec<Instance> {
    (0..spec.instances)
        .map(|n| {
            let id = format!("{}-{}-{n:05}", spec.id_prefix, spec.split.as_str());
            let mut rng = substream(spec.seed, stream::SYNTHETIC, &[&id]);
            let mut gold = BTreeSet::new();
            let mut words: Vec<String> = Vec::new();
            for (i, attr) in spec.attributes.iter().enumerate() {
                let changed = rng.gen_bool(spec.rate(i).clamp(0.0, 1.0));
                if changed {
                    gold.insert(attr.clone());
                }
                if changed || (spec.leak > 0.0 && rng.gen_bool(spec.leak)) {
                    words.push(cue_word(attr, rng.gen_range(0..spec.cue_variants.max(1))));
                }
            }
            for _ in 0..3 {
                words.push(FILLER.choose(&mut rng).expect("filler").to_string());
            }
            words.shuffle(&mut rng);
            let entity = ENTITIES.choose(&mut rng).expect("entity").to_string();
            Instance {
                id,
                context_steps: vec![format!("Take the {entity}.")],
                action: format!("Work the {entity} {}.", words.join(" ")),
                entity,
                gold_changes: gold,
                split: spec.split,
            }
        })
        .collect()
}

/// Train and test corpora over `vocab`'s in-domain attributes whose train
/// change counts span all four frequency clusters. Positives use one of
/// several cue variants and cues leak into negatives, so attributes seen
/// rarely in training are harder to learn.
pub fn frequency_skewed_dataset(vocab: &AttributeVocabulary, train: usize, test: usize, seed: u64) -> Result<Dataset> {
    let attributes = vocab.in_domain();
    // Expected train positives cycle through the four clusters.
    let targets = [1500.0, 600.0, 200.0, 25.0];
    let rates: Vec<f64> = (0..attributes.len())
        .map(|i| (targets[i % targets.len()] / train as f64).min(0.9))
        .collect();
    let mut spec = SyntheticSpec::new(train, attributes, seed);
    spec.change_rates = rates;
    spec.cue_variants = 8;
    spec.leak = 0.01;
    spec.split = Split::Train;
    let mut all = synthetic_corpus(&spec);
    spec.instances = test;
    spec.split = Split::Test;
    all.extend(synthetic_corpus(&spec));
    let text = to_canonical_jsonl(&all);
    parse_dataset(&text, Path::new("<synthetic>"), DatasetFormat::CanonicalJsonl, &LoadOptions::new(vocab.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_cued() {
        let attrs = vec!["location".to_string(), "electric conductivity".to_string()];
        let spec = SyntheticSpec::new(50, attrs.clone(), 4);
        let a = synthetic_corpus(&spec);
        assert_eq!(a, synthetic_corpus(&spec));
        for inst in &a {
            for attr in &attrs {
                assert_eq!(inst.changed(attr), inst.action.contains(&cue_word(attr, 0)));
            }
        }
        assert!(a.iter().any(|i| i.gold_changes.is_empty()));
        assert!(a.iter().any(|i| !i.gold_changes.is_empty()));
    }

    #[test]
    fn skewed_dataset_spans_clusters() {
        use crate::corpus::{frequency_cluster, FrequencyCluster};
        let vocab = AttributeVocabulary::openpi();
        let data = frequency_skewed_dataset(&vocab, 3000, 10, 1).unwrap();
        let clusters: BTreeSet<FrequencyCluster> = data
            .vocabulary
            .in_domain()
            .iter()
            .map(|a| frequency_cluster(data.vocabulary.frequency(a, Split::Train)))
            .collect();
        assert_eq!(clusters.len(), 4);
    }
}
