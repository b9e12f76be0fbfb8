use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::prf::AttributeScore;
use crate::corpus::{frequency_cluster, AttributeVocabulary, Split};
use crate::{Error, Result};

/// Where the positive-instance counts used as weights come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Gold positives among the scored records (the evaluation split).
    #[default]
    Evaluated,
    /// Per-split counts stored in the vocabulary.
    Split(Split),
}

impl WeightSource {
    pub fn weights(
        self,
        scores: &BTreeMap<String, AttributeScore>,
        vocab: &AttributeVocabulary,
    ) -> BTreeMap<String, u64> {
        scores
            .iter()
            .map(|(name, score)| {
                let w = match self {
                    WeightSource::Evaluated => score.counts.support(),
                    WeightSource::Split(split) => vocab.frequency(name, split),
                };
                (name.clone(), w)
            })
            .collect()
    }
}

/// `sum(count_a * F1_a) / sum(count_a)` per group. Groups whose total
/// weight is zero are left out.
pub fn weighted_f1(
    scores: &BTreeMap<String, AttributeScore>,
    grouping: &BTreeMap<String, String>,
    weights: &BTreeMap<String, u64>,
) -> Result<BTreeMap<String, f64>> {
    let mut sums: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for (name, score) in scores {
        let group = grouping
            .get(name)
            .ok_or_else(|| Error::invalid(format!("attribute `{name}` has no group")))?;
        let w = weights.get(name).copied().unwrap_or(0);
        let slot = sums.entry(group).or_default();
        slot.0 += w as f64 * score.f1;
        slot.1 += w;
    }
    Ok(sums
        .into_iter()
        .filter(|(_, (_, total))| *total > 0)
        .map(|(g, (num, total))| (g.to_string(), num / total as f64))
        .collect())
}

/// Frequency cluster of each name, from the vocabulary's counts for `split`.
pub fn frequency_grouping<'a>(
    names: impl IntoIterator<Item = &'a String>,
    vocab: &AttributeVocabulary,
    split: Split,
) -> BTreeMap<String, String> {
    names
        .into_iter()
        .map(|n| (n.clone(), frequency_cluster(vocab.frequency(n, split)).as_str().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Counts;

    fn score(f1: f64) -> AttributeScore {
        AttributeScore {
            counts: Counts::default(),
            precision: f1,
            recall: f1,
            f1,
        }
    }

    fn map<V: Clone>(xs: &[(&str, V)]) -> BTreeMap<String, V> {
        xs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn weighted_mean() {
        let scores = map(&[("a", score(0.4)), ("b", score(0.8))]);
        let groups = map(&[("a", "g".to_string()), ("b", "g".to_string())]);
        let weights = map(&[("a", 100u64), ("b", 300)]);
        let out = weighted_f1(&scores, &groups, &weights).unwrap();
        assert!((out["g"] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn singleton_group_and_zero_weight() {
        let scores = map(&[("a", score(0.4)), ("b", score(0.8))]);
        let groups = map(&[("a", "x".to_string()), ("b", "y".to_string())]);
        let weights = map(&[("a", 7u64), ("b", 0)]);
        let out = weighted_f1(&scores, &groups, &weights).unwrap();
        assert_eq!(out["x"], 0.4);
        assert!(!out.contains_key("y"));
    }

    #[test]
    fn ungrouped_attribute_is_an_error() {
        let scores = map(&[("a", score(0.4))]);
        assert!(weighted_f1(&scores, &BTreeMap::new(), &BTreeMap::new()).is_err());
    }

    #[test]
    fn published_clusters() {
        let vocab = AttributeVocabulary::openpi();
        let names = ["location".to_string(), "orientation".to_string(), "distance".to_string()];
        let g = frequency_grouping(&names, &vocab, Split::Train);
        assert_eq!(g["location"], "high");
        assert_eq!(g["orientation"], "medium_low");
        assert_eq!(g["distance"], "low");
    }
}
