use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backends::RawOutput;
use crate::pipeline::Strategy;
use crate::{Error, Result};

/// One backend call's outcome for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub strategy: Strategy,
    pub queried: Vec<String>,
    pub predicted: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub off_query: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawOutput>,
    #[serde(default)]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default)]
    pub dropped: usize,
    #[serde(default)]
    pub truncated_exemplars: usize,
}

impl PredictionRecord {
    pub fn failure(instance_id: &str, strategy: Strategy, queried: Vec<String>, reason: String) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            strategy,
            queried,
            predicted: BTreeSet::new(),
            off_query: BTreeSet::new(),
            raw: None,
            failed: true,
            failure: Some(reason),
            dropped: 0,
            truncated_exemplars: 0,
        }
    }
}

/// Per-(instance, attribute) predicted change bits after union-merging all
/// records of an instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergedVerdicts {
    pub verdicts: BTreeMap<String, BTreeMap<String, bool>>,
    pub failed_records: usize,
}

impl MergedVerdicts {
    pub fn predicted(&self, instance_id: &str) -> BTreeSet<String> {
        self.verdicts
            .get(instance_id)
            .map(|v| v.iter().filter(|(_, &b)| b).map(|(a, _)| a.clone()).collect())
            .unwrap_or_default()
    }
}

/// Union-merges records by instance. An attribute queried by two records
/// must receive the same verdict from both. Failed records are skipped and
/// counted.
pub fn merge_verdicts(records: &[PredictionRecord]) -> Result<MergedVerdicts> {
    let mut merged = MergedVerdicts::default();
    for record in records {
        if record.failed {
            merged.failed_records += 1;
            continue;
        }
        let slot = merged.verdicts.entry(record.instance_id.clone()).or_default();
        for attribute in &record.queried {
            let verdict = record.predicted.contains(attribute);
            if let Some(previous) = slot.insert(attribute.clone(), verdict) {
                if previous != verdict {
                    return Err(Error::ConflictingVerdict {
                        instance: record.instance_id.clone(),
                        attribute: attribute.clone(),
                    });
                }
            }
        }
        if let Some(stray) = record.predicted.iter().find(|p| !record.queried.contains(p)) {
            return Err(Error::invalid(format!(
                "record for `{}` predicts `{stray}` without querying it",
                record.instance_id
            )));
        }
    }
    Ok(merged)
}
