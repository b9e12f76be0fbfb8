//! Scoring of prediction records: micro and per-attribute P/R/F1 on
//! positives, weighted-F1 by attribute group, correlations, out-of-domain
//! matching and the assembled report.

mod correlation;
mod matching;
mod prf;
mod record;
mod report;
mod semantic;
mod weighted;

pub use correlation::{pearson, pearson_r, spearman, spearman_rho, Correlation, PermutationTest};
pub use matching::{match_out_domain, read_curation, Curation, OutDomainMatch};
pub use prf::{micro_prf, per_attribute, AttributeScore, Counts, ScoreOptions, Scored};
pub use record::{merge_verdicts, MergedVerdicts, PredictionRecord};
pub use report::{
    read_report, CorrelationSummary, DomainScores, MetricsReport, RecordCounts, ReportContext,
};
pub use semantic::{group_by_semantic_type, TypeScores};
pub use weighted::{frequency_grouping, weighted_f1, WeightSource};
