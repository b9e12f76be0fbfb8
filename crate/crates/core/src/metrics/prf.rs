use std::collections::{BTreeMap, BTreeSet};
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::record::{merge_verdicts, PredictionRecord};
use crate::corpus::{AttributeVocabulary, Domain, Instance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Counts {
    /// Zero when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when nothing was present.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, computed as
    /// `2tp / (2tp + fp + fn)`.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Gold positives.
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn scored(self) -> Scored {
        Scored {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
            counts: self,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub type AttributeScore = Scored;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions<'a> {
    /// Restrict scoring to attributes of one domain of this vocabulary.
    pub domain: Option<(&'a AttributeVocabulary, Domain)>,
}

impl ScoreOptions<'_> {
    fn keeps(&self, attribute: &str) -> bool {
        match self.domain {
            None => true,
            Some((vocab, domain)) => vocab.domain_of(attribute) == Some(domain),
        }
    }
}

/// Per-attribute counts over every queried (instance, attribute) pair.
///
/// Records are union-merged per instance first. Gold changes that were not
/// queried are not scored, and failed records contribute nothing.
pub fn per_attribute(
    records: &[PredictionRecord],
    gold: &[Instance],
    options: &ScoreOptions,
) -> Result<BTreeMap<String, AttributeScore>> {
    let merged = merge_verdicts(records)?;
    let by_id: BTreeMap<&str, &BTreeSet<String>> =
        gold.iter().map(|i| (i.id.as_str(), &i.gold_changes)).collect();
    let mut counts: BTreeMap<String, Counts> = BTreeMap::new();
    for (instance_id, verdicts) in &merged.verdicts {
        let changes = by_id
            .get(instance_id.as_str())
            .ok_or_else(|| Error::invalid(format!("record for unknown instance `{instance_id}`")))?;
        for (attribute, &predicted) in verdicts {
            if !options.keeps(attribute) {
                continue;
            }
            let c = counts.entry(attribute.clone()).or_default();
            match (predicted, changes.contains(attribute)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(counts.into_iter().map(|(a, c)| (a, c.scored())).collect())
}

/// Micro P/R/F1 on positives; the counts are the sums of the
/// per-attribute counts.
pub fn micro_prf(records: &[PredictionRecord], gold: &[Instance], options: &ScoreOptions) -> Result<Scored> {
    let mut total = Counts::default();
    for score in per_attribute(records, gold, options)?.values() {
        total += score.counts;
    }
    Ok(total.scored())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::pipeline::Strategy;

    fn inst(id: &str, gold: &[&str]) -> Instance {
        Instance {
            id: id.into(),
            context_steps: vec![],
            action: "x".into(),
            entity: "e".into(),
            gold_changes: gold.iter().map(|s| s.to_string()).collect(),
            split: Split::Test,
        }
    }

    fn rec(id: &str, queried: &[&str], predicted: &[&str]) -> PredictionRecord {
        PredictionRecord {
            instance_id: id.into(),
            strategy: Strategy::Multi,
            queried: queried.iter().map(|s| s.to_string()).collect(),
            predicted: predicted.iter().map(|s| s.to_string()).collect(),
            off_query: BTreeSet::new(),
            raw: None,
            failed: false,
            failure: None,
            dropped: 0,
            truncated_exemplars: 0,
        }
    }

    const ALL: [&str; 4] = ["location", "size", "temperature", "wetness"];

    #[test]
    fn hand_counted_example() {
        let gold = [inst("a", &["location"]), inst("b", &["wetness", "temperature"])];
        let records = [rec("a", &ALL, &["location", "size"]), rec("b", &ALL, &["wetness"])];
        let s = micro_prf(&records, &gold, &ScoreOptions::default()).unwrap();
        assert_eq!(s.counts, Counts { tp: 2, fp: 1, fn_: 1 });
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let gold = [inst("a", &["location"]), inst("b", &["wetness"])];
        let perfect = [rec("a", &ALL, &["location"]), rec("b", &ALL, &["wetness"])];
        let s = micro_prf(&perfect, &gold, &ScoreOptions::default()).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let empty = [rec("a", &ALL, &[]), rec("b", &ALL, &[])];
        let s = micro_prf(&empty, &gold, &ScoreOptions::default()).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn batching_does_not_matter() {
        let gold = [inst("a", &["location", "wetness"])];
        let single: Vec<_> = ALL
            .iter()
            .map(|a| {
                let hit = *a == "location" || *a == "size";
                rec("a", &[a], if hit { std::slice::from_ref(a) } else { &[] })
            })
            .collect();
        let grouped = [rec("a", &["size", "wetness"], &["size"]), rec("a", &["location", "temperature"], &["location"])];
        let one = [rec("a", &ALL, &["location", "size"])];
        let opts = ScoreOptions::default();
        let expected = micro_prf(&one, &gold, &opts).unwrap();
        assert_eq!(micro_prf(&single, &gold, &opts).unwrap(), expected);
        assert_eq!(micro_prf(&grouped, &gold, &opts).unwrap(), expected);
    }

    #[test]
    fn conflicting_verdicts_are_rejected() {
        let gold = [inst("a", &["location"])];
        let records = [rec("a", &["location"], &["location"]), rec("a", &["location"], &[])];
        assert!(matches!(
            micro_prf(&records, &gold, &ScoreOptions::default()),
            Err(Error::ConflictingVerdict { .. })
        ));
        // agreeing duplicates are fine
        let records = [rec("a", &["location"], &["location"]), rec("a", &["location"], &["location"])];
        assert!(micro_prf(&records, &gold, &ScoreOptions::default()).is_ok());
    }

    #[test]
    fn failed_records_are_excluded() {
        let gold = [inst("a", &["location"]), inst("b", &["wetness"])];
        let mut failed = rec("b", &ALL, &[]);
        failed.failed = true;
        let records = [rec("a", &ALL, &["location"]), failed];
        let s = micro_prf(&records, &gold, &ScoreOptions::default()).unwrap();
        assert_eq!(s.counts, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn domain_filter() {
        let vocab = AttributeVocabulary::openpi();
        let gold = [inst("a", &["location", "width"])];
        let records = [rec("a", &["location", "width"], &["location"])];
        let opts = ScoreOptions { domain: Some((&vocab, Domain::InDomain)) };
        assert_eq!(micro_prf(&records, &gold, &opts).unwrap().f1, 1.0);
        let opts = ScoreOptions { domain: Some((&vocab, Domain::OutDomain)) };
        assert_eq!(micro_prf(&records, &gold, &opts).unwrap().counts, Counts { tp: 0, fp: 0, fn_: 1 });
    }
}
