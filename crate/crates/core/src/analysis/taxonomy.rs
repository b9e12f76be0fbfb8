use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::fixtures::rows;
use crate::corpus::Instance;
use crate::metrics::PredictionRecord;
use crate::similarity::Similarity;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    FalseNegative,
    WrongContext,
    WrongEntity,
    NoPrediction,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 4] = [
        ErrorCategory::FalseNegative,
        ErrorCategory::WrongContext,
        ErrorCategory::WrongEntity,
        ErrorCategory::NoPrediction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::FalseNegative => "false_negative",
            ErrorCategory::WrongContext => "wrong_context",
            ErrorCategory::WrongEntity => "wrong_entity",
            ErrorCategory::NoPrediction => "no_prediction",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ErrorCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_lowercase().replace([' ', '-'], "_");
        ErrorCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == wanted)
            .ok_or_else(|| Error::invalid(format!("unknown error category `{}`", s.trim())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcategory {
    Synonym,
    Complement,
}

impl Subcategory {
    pub fn as_str(self) -> &'static str {
        match self {
            Subcategory::Synonym => "synonym",
            Subcategory::Complement => "complement",
        }
    }
}

impl std::str::FromStr for Subcategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "synonym" => Ok(Subcategory::Synonym),
            "complement" => Ok(Subcategory::Complement),
            other => Err(Error::invalid(format!("unknown subcategory `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Automatic,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub instance_id: String,
    /// The predicted attribute a false-negative candidate is about.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    pub category: ErrorCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<Subcategory>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl ErrorRecord {
    fn automatic(instance_id: &str, category: ErrorCategory) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            attribute: None,
            category,
            subcategory: None,
            provenance: Provenance::Automatic,
            note: String::new(),
        }
    }

    fn label(&self) -> String {
        match self.subcategory {
            Some(sub) => format!("{}/{}", self.category, sub.as_str()),
            None => self.category.to_string(),
        }
    }
}

fn queried_gold<'a>(record: &'a PredictionRecord, gold: &'a Instance) -> impl Iterator<Item = &'a String> {
    record.queried.iter().filter(|a| gold.changed(a))
}

/// An empty prediction although a queried attribute changed.
pub fn detect_no_prediction(record: &PredictionRecord, gold: &Instance) -> Option<ErrorRecord> {
    if record.failed || !record.predicted.is_empty() || queried_gold(record, gold).next().is_none() {
        return None;
    }
    Some(ErrorRecord::automatic(&record.instance_id, ErrorCategory::NoPrediction))
}

/// Every predicted attribute missing from gold: a synonym candidate when
/// it is at least `threshold` similar to a gold attribute, otherwise a
/// complement candidate. All pending human confirmation.
pub fn flag_false_negative_candidates(
    record: &PredictionRecord,
    gold: &Instance,
    scorer: &dyn Similarity,
    threshold: f64,
) -> Vec<ErrorRecord> {
    if record.failed {
        return Vec::new();
    }
    record
        .predicted
        .iter()
        .filter(|p| !gold.changed(p))
        .map(|p| {
            let synonym = gold.gold_changes.iter().any(|g| scorer.similarity(p, g) >= threshold);
            ErrorRecord {
                attribute: Some(p.clone()),
                subcategory: Some(if synonym { Subcategory::Synonym } else { Subcategory::Complement }),
                ..ErrorRecord::automatic(&record.instance_id, ErrorCategory::FalseNegative)
            }
        })
        .collect()
}

/// Merges each instance's non-failed records into one, then runs both
/// detectors. Returns the automatic records and the ids of erroneous
/// instances, i.e. those whose prediction differs from the queried gold.
pub fn detect_errors(
    records: &[PredictionRecord],
    gold: &[Instance],
    scorer: &dyn Similarity,
    threshold: f64,
) -> Result<(Vec<ErrorRecord>, BTreeSet<String>)> {
    let by_id: BTreeMap<&str, &Instance> = gold.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut merged: BTreeMap<&str, PredictionRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.failed) {
        let slot = merged.entry(&r.instance_id).or_insert_with(|| PredictionRecord {
            queried: Vec::new(),
            predicted: BTreeSet::new(),
            raw: None,
            ..r.clone()
        });
        for a in &r.queried {
            if !slot.queried.contains(a) {
                slot.queried.push(a.clone());
            }
        }
        slot.predicted.extend(r.predicted.iter().cloned());
    }
    let mut errors = Vec::new();
    let mut erroneous = BTreeSet::new();
    for (id, record) in &merged {
        let instance = by_id
            .get(id)
            .ok_or_else(|| Error::invalid(format!("record for unknown instance `{id}`")))?;
        let expected: BTreeSet<&String> = queried_gold(record, instance).collect();
        let got: BTreeSet<&String> = record.predicted.iter().collect();
        if expected == got {
            continue;
        }
        erroneous.insert(id.to_string());
        errors.extend(detect_no_prediction(record, instance));
        errors.extend(flag_false_negative_candidates(record, instance, scorer, threshold));
    }
    Ok((errors, erroneous))
}

/// Reads `instance_id<TAB>category<TAB>subcategory<TAB>note` rows; a
/// leading header row is skipped.
pub fn parse_judgments(text: &str, origin: &Path) -> Result<Vec<ErrorRecord>> {
    let mut out = Vec::new();
    for (line, cols) in rows(text) {
        if cols[0].eq_ignore_ascii_case("instance_id") {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: origin.to_path_buf(),
            line,
            message,
        };
        if cols.len() < 2 || cols.len() > 4 || cols[0].is_empty() {
            return Err(malformed(format!("expected 2 to 4 columns, found {}", cols.len())));
        }
        let category: ErrorCategory = cols[1].parse().map_err(|e: Error| malformed(e.to_string()))?;
        let sub = cols.get(2).copied().unwrap_or("");
        let subcategory = if sub.is_empty() || sub == "-" {
            None
        } else {
            Some(sub.parse::<Subcategory>().map_err(|e| malformed(e.to_string()))?)
        };
        if subcategory.is_some() && category != ErrorCategory::FalseNegative {
            return Err(malformed(format!("subcategory given for {category}")));
        }
        out.push(ErrorRecord {
            instance_id: cols[0].to_string(),
            attribute: None,
            category,
            subcategory,
            provenance: Provenance::Human,
            note: cols.get(3).map(|s| s.to_string()).unwrap_or_default(),
        });
    }
    Ok(out)
}

pub fn ingest_judgments(path: &Path) -> Result<Vec<ErrorRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_judgments(&text, path)
}

/// Final per-instance classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyOutcome {
    pub classified: BTreeMap<String, ErrorRecord>,
    pub unclassified: BTreeSet<String>,
    pub total_instances: usize,
}

fn summarize_automatic(records: &[&ErrorRecord]) -> ErrorRecord {
    if let Some(r) = records.iter().find(|r| r.category == ErrorCategory::NoPrediction) {
        return (*r).clone();
    }
    let synonym = records.iter().find(|r| r.subcategory == Some(Subcategory::Synonym));
    (*synonym.unwrap_or(&records[0])).clone()
}

/// One category per erroneous instance: a human judgment replaces every
/// automatic record for its instance. Instances without any record land
/// in the unclassified bucket.
pub fn merge_judgments(
    automatic: &[ErrorRecord],
    human: &[ErrorRecord],
    erroneous: &BTreeSet<String>,
    known_ids: &BTreeSet<String>,
) -> Result<TaxonomyOutcome> {
    let mut classified: BTreeMap<String, ErrorRecord> = BTreeMap::new();
    let mut by_instance: BTreeMap<&str, Vec<&ErrorRecord>> = BTreeMap::new();
    for r in automatic {
        by_instance.entry(&r.instance_id).or_default().push(r);
    }
    for (id, records) in by_instance {
        classified.insert(id.to_string(), summarize_automatic(&records));
    }
    let mut seen_human: BTreeMap<&str, &ErrorRecord> = BTreeMap::new();
    for r in human {
        if !known_ids.contains(&r.instance_id) {
            return Err(Error::invalid(format!("judgment for unknown instance `{}`", r.instance_id)));
        }
        if let Some(prev) = seen_human.insert(&r.instance_id, r) {
            if (prev.category, prev.subcategory) != (r.category, r.subcategory) {
                return Err(Error::invalid(format!("conflicting judgments for `{}`", r.instance_id)));
            }
        }
        classified.insert(r.instance_id.clone(), r.clone());
    }
    let unclassified = erroneous.iter().filter(|id| !classified.contains_key(*id)).cloned().collect();
    Ok(TaxonomyOutcome {
        classified,
        unclassified,
        total_instances: known_ids.len(),
    })
}

/// What percentages are relative to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Erroneous instances, classified or not.
    #[default]
    Erroneous,
    AllInstances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRow {
    pub label: String,
    pub count: usize,
    pub percent: f64,
    /// Share of classified errors; rows other than `unclassified` sum to 100.
    pub percent_of_classified: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub denominator: Denominator,
    pub denominator_count: usize,
    pub rows: Vec<TallyRow>,
}

const TALLY_LABELS: [&str; 6] = [
    "false_negative/synonym",
    "false_negative/complement",
    "false_negative",
    "wrong_context",
    "wrong_entity",
    "no_prediction",
];

pub fn tally(outcome: &TaxonomyOutcome, denominator: Denominator) -> Tally {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in outcome.classified.values() {
        *counts.entry(r.label()).or_default() += 1;
    }
    let classified = outcome.classified.len();
    let den = match denominator {
        Denominator::Erroneous => classified + outcome.unclassified.len(),
        Denominator::AllInstances => outcome.total_instances,
    };
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    let mut rows: Vec<TallyRow> = TALLY_LABELS
        .iter()
        .map(|label| {
            let count = counts.get(*label).copied().unwrap_or(0);
            TallyRow {
                label: label.to_string(),
                count,
                percent: pct(count, den),
                percent_of_classified: Some(pct(count, classified)),
            }
        })
        .collect();
    rows.push(TallyRow {
        label: "unclassified".into(),
        count: outcome.unclassified.len(),
        percent: pct(outcome.unclassified.len(), den),
        percent_of_classified: None,
    });
    Tally {
        denominator,
        denominator_count: den,
        rows,
    }
}

/// Category rows by model columns, percentages with one decimal.
pub fn render_table(tallies: &[(String, Tally)]) -> String {
    let mut out = String::from("category");
    for (model, _) in tallies {
        let _ = write!(out, "\t{model}");
    }
    out.push('\n');
    let labels: Vec<&str> = TALLY_LABELS.iter().copied().chain(["unclassified"]).collect();
    for label in labels {
        out.push_str(label);
        for (_, t) in tallies {
            let row = t.rows.iter().find(|r| r.label == label);
            let _ = write!(out, "\t{:.1}", row.map_or(0.0, |r| r.percent));
        }
        out.push('\n');
    }
    out
}

/// Unclassified errors for annotators, with gold and predicted sets.
pub fn worklist_tsv(outcome: &TaxonomyOutcome, records: &[PredictionRecord], gold: &[Instance]) -> String {
    let by_id: BTreeMap<&str, &Instance> = gold.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut predicted: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.failed) {
        predicted.entry(&r.instance_id).or_default().extend(r.predicted.iter().map(String::as_str));
    }
    let mut out = String::from("instance_id\tgold\tpredicted\tcontext\n");
    for id in &outcome.unclassified {
        let inst = by_id.get(id.as_str());
        let join = |set: Option<Vec<&str>>| set.map(|v| v.join(", ")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{id}\t{}\t{}\t{}",
            join(inst.map(|i| i.gold_changes.iter().map(String::as_str).collect())),
            join(predicted.get(id.as_str()).map(|s| s.iter().copied().collect())),
            inst.map(|i| i.context_text().replace('\t', " ")).unwrap_or_default(),
        );
    }
    out
}
