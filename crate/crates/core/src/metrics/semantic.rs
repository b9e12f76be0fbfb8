use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::prf::AttributeScore;
use super::weighted::weighted_f1;
use crate::corpus::{AttributeVocabulary, Domain, SemanticTypeOntology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeScores {
    pub in_domain: Option<f64>,
    pub out_domain: Option<f64>,
}

/// Weighted-F1 per semantic type, separately for in-domain and
/// out-of-domain attributes. Keys are type labels.
pub fn group_by_semantic_type(
    scores: &BTreeMap<String, AttributeScore>,
    ontology: &SemanticTypeOntology,
    vocab: &AttributeVocabulary,
    weights: &BTreeMap<String, u64>,
) -> Result<BTreeMap<String, TypeScores>> {
    let mut split: [BTreeMap<String, AttributeScore>; 2] = Default::default();
    let mut grouping = BTreeMap::new();
    for (name, score) in scores {
        let ty = ontology
            .type_of(name)
            .ok_or_else(|| Error::invalid(format!("attribute `{name}` has no semantic type")))?;
        let domain = vocab.domain_of(name).ok_or_else(|| Error::UnknownAttribute(name.clone()))?;
        grouping.insert(name.clone(), ty.label().to_string());
        split[(domain == Domain::OutDomain) as usize].insert(name.clone(), *score);
    }
    let in_scores = weighted_f1(&split[0], &grouping, weights)?;
    let out_scores = weighted_f1(&split[1], &grouping, weights)?;
    let mut result: BTreeMap<String, TypeScores> = BTreeMap::new();
    for (label, f1) in in_scores {
        result.entry(label).or_default().in_domain = Some(f1);
    }
    for (label, f1) in out_scores {
        result.entry(label).or_default().out_domain = Some(f1);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SemanticType;
    use crate::metrics::Counts;

    fn score(tp: u64, fp: u64, fn_: u64) -> AttributeScore {
        Counts { tp, fp, fn_ }.scored()
    }

    #[test]
    fn published_rows() {
        let ontology = SemanticTypeOntology::openpi();
        assert_eq!(ontology.type_of("amount"), Some(SemanticType::Quantifier));
        assert_eq!(ontology.type_of("availability"), Some(SemanticType::Temporal));
    }

    #[test]
    fn uniform_ontology_reproduces_overall_score() {
        let vocab = AttributeVocabulary::openpi();
        let scores: BTreeMap<String, AttributeScore> = [
            ("location".to_string(), score(8, 2, 2)),
            ("wetness".to_string(), score(1, 0, 3)),
            ("temperature".to_string(), score(0, 1, 1)),
        ]
        .into();
        let weights: BTreeMap<String, u64> = scores.iter().map(|(k, s)| (k.clone(), s.counts.support())).collect();
        let names: Vec<String> = scores.keys().cloned().collect();
        let ontology = SemanticTypeOntology::uniform(&names, SemanticType::Material);
        let by_type = group_by_semantic_type(&scores, &ontology, &vocab, &weights).unwrap();
        let overall: f64 = scores.values().map(|s| s.f1 * s.counts.support() as f64).sum::<f64>()
            / weights.values().sum::<u64>() as f64;
        assert_eq!(by_type.len(), 1);
        assert!((by_type["Material"].in_domain.unwrap() - overall).abs() < 1e-12);
        assert_eq!(by_type["Material"].out_domain, None);
    }

    #[test]
    fn failing_type_reports_zero_and_uncovered_is_error() {
        let vocab = AttributeVocabulary::openpi();
        let ontology = SemanticTypeOntology::openpi();
        let scores: BTreeMap<String, AttributeScore> =
            [("amount".to_string(), score(0, 2, 4)), ("location".to_string(), score(3, 0, 0))].into();
        let weights: BTreeMap<String, u64> = scores.iter().map(|(k, s)| (k.clone(), s.counts.support())).collect();
        let by_type = group_by_semantic_type(&scores, &ontology, &vocab, &weights).unwrap();
        assert_eq!(by_type["Quantifier"].in_domain, Some(0.0));

        let empty = SemanticTypeOntology::uniform(&[], SemanticType::Spatial);
        assert!(group_by_semantic_type(&scores, &empty, &vocab, &weights).is_err());
    }
}
