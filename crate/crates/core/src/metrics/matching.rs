use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::fixtures::{self, rows};
use crate::corpus::normalize_name;
use crate::similarity::Similarity;
use crate::{Error, Result};

/// Manual decisions for out-of-domain attributes: a matched in-domain
/// attribute, or `None` for "no counterpart".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Curation {
    entries: BTreeMap<String, (usize, Option<String>)>,
}

impl Curation {
    /// The shipped curation table.
    pub fn bundled() -> Self {
        Self::parse(fixtures::OPENPI_CURATION).expect("bundled curation table parses")
    }

    /// `out<TAB>in` rows, `-` meaning dissimilar.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line, cols) in rows(text) {
            if cols.len() != 2 {
                return Err(Error::Malformed {
                    path: "<curation>".into(),
                    line,
                    message: format!("expected 2 columns, found {}", cols.len()),
                });
            }
            let target = match cols[1].trim() {
                "-" | "" => None,
                name => Some(normalize_name(name)),
            };
            entries.insert(normalize_name(cols[0]), (line, target));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn read_curation(path: &Path) -> Result<Curation> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Curation::parse(&text).map_err(|e| match e {
        Error::Malformed { line, message, .. } => Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutDomainMatch {
    /// Out-of-domain attribute to its most similar in-domain attribute.
    pub matched: BTreeMap<String, String>,
    pub dissimilar: BTreeSet<String>,
}

/// Pairs each out-of-domain attribute with its most similar in-domain
/// attribute when the score reaches `threshold`; curation entries then
/// override the automatic decision.
pub fn match_out_domain(
    out_attrs: &[String],
    in_attrs: &[String],
    scorer: &dyn Similarity,
    threshold: f64,
    curation: Option<&Curation>,
) -> Result<OutDomainMatch> {
    let mut result = OutDomainMatch::default();
    for out in out_attrs {
        let best = in_attrs
            .iter()
            .map(|cand| (scorer.similarity(out, cand), cand))
            .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)));
        match best {
            Some((score, cand)) if score >= threshold => {
                result.matched.insert(out.clone(), cand.clone());
            }
            _ => {
                result.dissimilar.insert(out.clone());
            }
        }
    }
    let Some(curation) = curation else {
        return Ok(result);
    };
    let known_in: BTreeSet<&str> = in_attrs.iter().map(String::as_str).collect();
    let known_out: BTreeSet<&str> = out_attrs.iter().map(String::as_str).collect();
    for (out, (line, target)) in &curation.entries {
        if !known_out.contains(out.as_str()) {
            return Err(Error::Malformed {
                path: "<curation>".into(),
                line: *line,
                message: format!("unknown out-of-domain attribute `{out}`"),
            });
        }
        match target {
            Some(t) if !known_in.contains(t.as_str()) => {
                return Err(Error::Malformed {
                    path: "<curation>".into(),
                    line: *line,
                    message: format!("unknown in-domain attribute `{t}`"),
                });
            }
            Some(t) => {
                result.dissimilar.remove(out);
                result.matched.insert(out.clone(), t.clone());
            }
            None => {
                result.matched.remove(out);
                result.dissimilar.insert(out.clone());
            }
        }
    }
    Ok(result)
}
