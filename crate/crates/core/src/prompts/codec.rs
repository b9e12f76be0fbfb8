use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::render::{AnswerShape, PromptRequest};
use crate::corpus::{normalize_name, AttributeVocabulary, ParseMode};
use crate::{Error, Result};

/// Replies (or list items) meaning "nothing changed".
pub const NONE_MARKERS: [&str; 3] = ["none", "nothing", ""];

/// Leading words read as a positive yes/no answer; anything else is negative.
pub const AFFIRMATIVE_MARKERS: [&str; 3] = ["yes", "different", "true"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    /// Recognized attributes that were asked about.
    pub predicted: BTreeSet<String>,
    /// Attributes the reply named but the prompt did not ask about.
    pub off_query: BTreeSet<String>,
    /// Tokens that could not be mapped to any attribute.
    pub dropped: usize,
}

fn clean_token(token: &str) -> String {
    let trimmed = token.trim().trim_matches(|c: char| matches!(c, '.' | '"' | '\'' | '*' | '-' | ':' | '!'));
    normalize_name(trimmed)
}

/// Parses a reply into attribute sets.
///
/// Attribute lists are split on commas, semicolons, newlines and " and ";
/// each item is normalized and canonicalized. Unknown items are dropped in
/// strict mode and reported as off-query in lenient mode. Yes/no replies are
/// positive only when they start with an affirmative marker.
pub fn parse_output(
    text: &str,
    request: &PromptRequest,
    vocab: &AttributeVocabulary,
    mode: ParseMode,
) -> Result<ParsedOutput> {
    let mut out = ParsedOutput::default();
    match request.answer_shape {
        AnswerShape::BinaryVector => Err(Error::invalid(
            "binary-vector requests have no text reply to parse",
        )),
        AnswerShape::YesNo => {
            let first = text
                .trim()
                .split(|c: char| !c.is_alphanumeric())
                .next()
                .unwrap_or("")
                .to_lowercase();
            if AFFIRMATIVE_MARKERS.contains(&first.as_str()) {
                out.predicted.extend(request.queried.iter().cloned());
            }
            Ok(out)
        }
        AnswerShape::AttributeList => {
            let queried: BTreeSet<&str> = request.queried.iter().map(String::as_str).collect();
            let items = text
                .split([',', ';', '\n'])
                .flat_map(|chunk| chunk.split(" and "));
            for item in items {
                let token = clean_token(item);
                if NONE_MARKERS.contains(&token.as_str()) {
                    continue;
                }
                match vocab.canonicalize(&token) {
                    Ok(name) if queried.contains(name.as_str()) => {
                        out.predicted.insert(name);
                    }
                    Ok(name) => {
                        out.off_query.insert(name);
                    }
                    Err(_) => match mode {
                        ParseMode::Strict => out.dropped += 1,
                        ParseMode::Lenient => {
                            out.off_query.insert(token);
                        }
                    },
                }
            }
            Ok(out)
        }
    }
}

/// Verbalizes a label set the way a model is expected to answer `request`.
pub fn serialize_answer(labels: &BTreeSet<String>, request: &PromptRequest) -> String {
    match request.answer_shape {
        AnswerShape::YesNo => {
            if request.queried.iter().any(|a| labels.contains(a)) {
                "Yes".into()
            } else {
                "No".into()
            }
        }
        AnswerShape::AttributeList | AnswerShape::BinaryVector => {
            let named: Vec<&str> = if request.queried.is_empty() {
                labels.iter().map(String::as_str).collect()
            } else {
                request
                    .queried
                    .iter()
                    .filter(|a| labels.contains(*a))
                    .map(String::as_str)
                    .collect()
            };
            if named.is_empty() {
                "none".into()
            } else {
                named.join(", ")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Instance, Split};
    use crate::prompts::{render_multi, render_single, render_zero};
    use proptest::prelude::*;

    fn inst() -> Instance {
        Instance {
            id: "lips".into(),
            context_steps: vec![],
            action: "Apply the scrub.".into(),
            entity: "lips".into(),
            gold_changes: BTreeSet::new(),
            split: Split::Test,
        }
    }

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn worked_example_output() {
        let vocab = AttributeVocabulary::openpi();
        let req = render_multi(&inst(), &names(&["softness", "pain", "granularity"])).unwrap();
        let out = parse_output("softness, pain", &req, &vocab, ParseMode::Strict).unwrap();
        assert_eq!(out.predicted, set(&["softness", "pain"]));
        assert!(out.off_query.is_empty());
    }

    #[test]
    fn none_marker_is_empty() {
        let vocab = AttributeVocabulary::openpi();
        let req = render_multi(&inst(), &names(&["softness"])).unwrap();
        for reply in ["none", "None.", "nothing", "", "  "] {
            let out = parse_output(reply, &req, &vocab, ParseMode::Strict).unwrap();
            assert!(out.predicted.is_empty(), "{reply:?}");
            assert_eq!(out.dropped, 0);
        }
    }

    #[test]
    fn off_query_names_are_recorded() {
        let vocab = AttributeVocabulary::openpi();
        let req = render_multi(&inst(), &names(&["width"])).unwrap();
        let out = parse_output("location, cleanness", &req, &vocab, ParseMode::Strict).unwrap();
        // oracle: predicted = named ∩ queried, off-query = named \ queried
        assert!(out.predicted.is_empty());
        assert_eq!(out.off_query, set(&["location", "cleanness"]));
    }

    #[test]
    fn unknown_tokens_strict_vs_lenient() {
        let vocab = AttributeVocabulary::openpi();
        let req = render_multi(&inst(), &names(&["width", "location"])).unwrap();
        let strict = parse_output("Placement and blorp", &req, &vocab, ParseMode::Strict).unwrap();
        assert_eq!(strict.predicted, set(&["location"]));
        assert_eq!(strict.dropped, 1);
        let lenient = parse_output("Placement and blorp", &req, &vocab, ParseMode::Lenient).unwrap();
        assert_eq!(lenient.off_query, set(&["blorp"]));
        assert_eq!(lenient.dropped, 0);
    }

    #[test]
    fn yes_no_markers() {
        let vocab = AttributeVocabulary::openpi();
        let req = render_single(&inst(), "softness");
        for (reply, positive) in [
            ("Yes", true),
            ("yes, it is", true),
            ("Different", true),
            ("TRUE", true),
            ("No", false),
            ("unchanged", false),
            ("maybe yes", false),
            ("", false),
        ] {
            let out = parse_output(reply, &req, &vocab, ParseMode::Strict).unwrap();
            assert_eq!(!out.predicted.is_empty(), positive, "{reply:?}");
        }
    }

    #[test]
    fn binary_vector_has_no_text_codec() {
        let vocab = AttributeVocabulary::openpi();
        assert!(parse_output("x", &render_zero(&inst()), &vocab, ParseMode::Strict).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(mask in proptest::collection::vec(any::<bool>(), 1..30)) {
            let vocab = AttributeVocabulary::openpi();
            let queried: Vec<String> = vocab.names()[..mask.len()].to_vec();
            let req = render_multi(&inst(), &queried).unwrap();
            let labels: BTreeSet<String> = queried.iter().zip(&mask).filter(|(_, m)| **m).map(|(a, _)| a.clone()).collect();
            let text = serialize_answer(&labels, &req);
            let parsed = parse_output(&text, &req, &vocab, ParseMode::Strict).unwrap();
            prop_assert_eq!(parsed.predicted, labels);
        }
    }
}
