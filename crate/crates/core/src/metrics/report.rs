use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::correlation::{pearson, spearman, Correlation, PermutationTest};
use super::matching::{match_out_domain, Curation, OutDomainMatch};
use super::prf::{per_attribute, AttributeScore, Counts, ScoreOptions, Scored};
use super::record::PredictionRecord;
use super::semantic::{group_by_semantic_type, TypeScores};
use super::weighted::{frequency_grouping, weighted_f1, WeightSource};
use crate::corpus::{frequency_cluster, AttributeVocabulary, Domain, Instance, SemanticTypeOntology, Split};
use crate::similarity::{Similarity, TokenJaccard};
use crate::{Error, Result};

/// Everything besides the records that a report depends on.
pub struct ReportContext<'a> {
    pub vocab: &'a AttributeVocabulary,
    pub ontology: &'a SemanticTypeOntology,
    pub curation: Option<&'a Curation>,
    pub matcher: &'a dyn Similarity,
    pub match_threshold: f64,
    pub weights: WeightSource,
    /// Split whose counts define frequency clusters.
    pub cluster_split: Split,
    pub permutation: PermutationTest,
}

impl<'a> ReportContext<'a> {
    pub fn new(vocab: &'a AttributeVocabulary, ontology: &'a SemanticTypeOntology) -> Self {
        Self {
            vocab,
            ontology,
            curation: None,
            matcher: &TokenJaccard,
            match_threshold: 0.5,
            weights: WeightSource::default(),
            cluster_split: Split::Train,
            permutation: PermutationTest::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainScores {
    pub in_domain: Scored,
    pub out_domain: Scored,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// In-domain attributes: cluster-split frequency against F1. Both
    /// correlations skip attributes with no predictions and no gold positives.
    pub frequency_f1_spearman: Option<Correlation>,
    /// Matched pairs: in-domain F1 against out-of-domain F1.
    pub matched_pair_pearson: Option<Correlation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub instances: usize,
    pub records: usize,
    pub failed_records: usize,
    pub dropped_tokens: usize,
    pub off_query_predictions: usize,
    pub truncated_exemplars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro: Scored,
    pub domains: DomainScores,
    pub per_attribute: BTreeMap<String, AttributeScore>,
    pub weight_source: WeightSource,
    pub frequency_clusters: BTreeMap<String, f64>,
    pub semantic_types: BTreeMap<String, TypeScores>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uncovered_attributes: Vec<String>,
    pub out_domain_groups: BTreeMap<String, f64>,
    pub out_domain_match: OutDomainMatch,
    pub correlations: CorrelationSummary,
    pub counts: RecordCounts,
}

impl MetricsReport {
    pub fn build(records: &[PredictionRecord], gold: &[Instance], ctx: &ReportContext) -> Result<Self> {
        let scores = per_attribute(records, gold, &ScoreOptions::default())?;
        let weights = ctx.weights.weights(&scores, ctx.vocab);
        let mut micro = Counts::default();
        let mut in_counts = Counts::default();
        let mut out_counts = Counts::default();
        for (name, s) in &scores {
            micro += s.counts;
            match ctx.vocab.domain_of(name) {
                Some(Domain::InDomain) => in_counts += s.counts,
                Some(Domain::OutDomain) => out_counts += s.counts,
                None => return Err(Error::UnknownAttribute(name.clone())),
            }
        }

        let in_scores: BTreeMap<String, AttributeScore> = scores
            .iter()
            .filter(|(n, _)| ctx.vocab.domain_of(n) == Some(Domain::InDomain))
            .map(|(n, s)| (n.clone(), *s))
            .collect();
        let clusters = frequency_grouping(in_scores.keys(), ctx.vocab, ctx.cluster_split);
        let frequency_clusters = weighted_f1(&in_scores, &clusters, &weights)?;

        let (covered, uncovered): (Vec<_>, Vec<_>) =
            scores.iter().partition(|(n, _)| ctx.ontology.type_of(n).is_some());
        let covered: BTreeMap<String, AttributeScore> = covered.into_iter().map(|(n, s)| (n.clone(), *s)).collect();
        let semantic_types = group_by_semantic_type(&covered, ctx.ontology, ctx.vocab, &weights)?;
        let uncovered_attributes: Vec<String> = uncovered.into_iter().map(|(n, _)| n.clone()).collect();

        let out_domain_match = match_out_domain(
            &ctx.vocab.out_domain(),
            &ctx.vocab.in_domain(),
            ctx.matcher,
            ctx.match_threshold,
            ctx.curation,
        )?;
        let mut groups = BTreeMap::new();
        for name in scores.keys() {
            if out_domain_match.matched.contains_key(name) {
                groups.insert(name.clone(), "matched".to_string());
            } else if out_domain_match.dissimilar.contains(name) {
                groups.insert(name.clone(), "dissimilar".to_string());
            }
        }
        let out_scores: BTreeMap<String, AttributeScore> = scores
            .iter()
            .filter(|(n, _)| groups.contains_key(*n))
            .map(|(n, s)| (n.clone(), *s))
            .collect();
        let out_domain_groups = weighted_f1(&out_scores, &groups, &weights)?;

        // Attributes never predicted nor present have no meaningful F1.
        let observed = |s: &AttributeScore| s.counts != Counts::default();
        let mut correlations = CorrelationSummary::default();
        let (freq, f1): (Vec<f64>, Vec<f64>) = in_scores
            .iter()
            .filter(|(_, s)| observed(s))
            .map(|(n, s)| (ctx.vocab.frequency(n, ctx.cluster_split) as f64, s.f1))
            .unzip();
        match spearman(&freq, &f1, &ctx.permutation) {
            Ok(c) => correlations.frequency_f1_spearman = Some(c),
            Err(e) => correlations.undefined.push(format!("frequency_f1_spearman: {e}")),
        }
        let (pair_in, pair_out): (Vec<f64>, Vec<f64>) = out_domain_match
            .matched
            .iter()
            .filter_map(|(out, inn)| {
                let (a, b) = (scores.get(inn)?, scores.get(out)?);
                (observed(a) && observed(b)).then_some((a.f1, b.f1))
            })
            .unzip();
        match pearson(&pair_in, &pair_out, &ctx.permutation) {
            Ok(c) => correlations.matched_pair_pearson = Some(c),
            Err(e) => correlations.undefined.push(format!("matched_pair_pearson: {e}")),
        }

        let counts = RecordCounts {
            instances: gold.len(),
            records: records.len(),
            failed_records: records.iter().filter(|r| r.failed).count(),
            dropped_tokens: records.iter().map(|r| r.dropped).sum(),
            off_query_predictions: records.iter().map(|r| r.off_query.len()).sum(),
            truncated_exemplars: records.iter().map(|r| r.truncated_exemplars).sum(),
        };

        Ok(Self {
            micro: micro.scored(),
            domains: DomainScores {
                in_domain: in_counts.scored(),
                out_domain: out_counts.scored(),
            },
            per_attribute: scores,
            weight_source: ctx.weights,
            frequency_clusters,
            semantic_types,
            uncovered_attributes,
            out_domain_groups,
            out_domain_match,
            correlations,
            counts,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per scored attribute, for plotting.
    pub fn per_attribute_tsv(&self, vocab: &AttributeVocabulary, ontology: &SemanticTypeOntology, cluster_split: Split) -> String {
        let mut out = String::from(
            "attribute\tdomain\tsemantic_type\tfrequency\tcluster\tgroup\ttp\tfp\tfn\tprecision\trecall\tf1\n",
        );
        for (name, s) in &self.per_attribute {
            let freq = vocab.frequency(name, cluster_split);
            let group = if self.out_domain_match.matched.contains_key(name) {
                "matched"
            } else if self.out_domain_match.dissimilar.contains(name) {
                "dissimilar"
            } else {
                "-"
            };
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{freq}\t{}\t{group}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                vocab.domain_of(name).map_or("-", |d| d.as_str()),
                ontology.type_of(name).map_or("-", |t| t.label()),
                frequency_cluster(freq).as_str(),
                s.counts.tp,
                s.counts.fp,
                s.counts.fn_,
                s.precision,
                s.recall,
                s.f1,
            );
        }
        out
    }
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
