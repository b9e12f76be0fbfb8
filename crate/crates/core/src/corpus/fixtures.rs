//! Bundled attribute data and the plain-text table formats it ships in.
//!
//! All tables are tab-separated, one record per line; blank lines and lines
//! starting with `#` are ignored.

use std::path::Path;

use crate::{Error, Result};

pub const OPENPI_VOCABULARY: &str = include_str!("../../data/openpi_vocabulary.tsv");
pub const OPENPI_FREQUENCY: &str = include_str!("../../data/openpi_frequency.tsv");
pub const OPENPI_MERGE: &str = include_str!("../../data/openpi_merge.tsv");
pub const OPENPI_ONTOLOGY: &str = include_str!("../../data/openpi_ontology.tsv");
pub const OPENPI_CURATION: &str = include_str!("../../data/openpi_curation.tsv");
pub const ATTRIBUTE_SYNONYMS: &str = include_str!("../../data/attribute_synonyms.tsv");
pub const PIGLET_VOCABULARY: &str = include_str!("../../data/piglet_vocabulary.tsv");

/// Splits a table into `(line number, fields)` rows.
pub fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            None
        } else {
            Some((i + 1, trimmed.split('\t').map(str::trim).collect()))
        }
    })
}

fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    rows(text)
        .map(|(line, fields)| match fields.as_slice() {
            [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
            _ => Err(Error::Malformed {
                path: origin.to_path_buf(),
                line,
                message: format!("expected two tab-separated columns, got {}", fields.len()),
            }),
        })
        .collect()
}

pub fn parse_two_column(text: &str) -> Result<Vec<(String, String)>> {
    parse_pairs(text, Path::new("<bundled>"))
}

pub fn read_two_column(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, path)
}

/// `(attribute, train, dev, test)` rows of a frequency table.
pub fn parse_frequency_table(text: &str) -> Result<Vec<(String, [u64; 3])>> {
    rows(text)
        .map(|(line, fields)| {
            let bad = |message: String| Error::Malformed {
                path: "<frequency table>".into(),
                line,
                message,
            };
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 columns, got {}", fields.len())));
            }
            let mut counts = [0u64; 3];
            for (slot, raw) in counts.iter_mut().zip(&fields[1..]) {
                *slot = raw
                    .parse()
                    .map_err(|_| bad(format!("count `{raw}` is not a nonnegative integer")))?;
            }
            Ok((fields[0].to_string(), counts))
        })
        .collect()
}
