//! Error taxonomy: automatic detection of null predictions and
//! false-negative candidates, ingestion of human judgments, and tallies.

mod taxonomy;

pub use taxonomy::{
    detect_errors, detect_no_prediction, flag_false_negative_candidates, ingest_judgments, merge_judgments,
    parse_judgments, render_table, tally, worklist_tsv, Denominator, ErrorCategory, ErrorRecord, Provenance,
    Subcategory, Tally, TallyRow, TaxonomyOutcome,
};
