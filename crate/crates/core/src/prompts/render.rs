use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::{Error, Result};

/// Cue line that separates a few-shot prompt from its answer.
pub const ANSWER_CUE: &str = "Answer:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Zero,
    Single,
    Multi,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::Zero => "zero",
            PromptKind::Single => "single",
            PromptKind::Multi => "multi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerShape {
    BinaryVector,
    YesNo,
    AttributeList,
}

impl PromptKind {
    pub fn answer_shape(self) -> AnswerShape {
        match self {
            PromptKind::Zero => AnswerShape::BinaryVector,
            PromptKind::Single => AnswerShape::YesNo,
            PromptKind::Multi => AnswerShape::AttributeList,
        }
    }
}

/// A rendered prompt together with what it asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub instance_id: String,
    pub strategy: PromptKind,
    pub queried: Vec<String>,
    pub text: String,
    pub answer_shape: AnswerShape,
    /// Few-shot demonstrations, least similar first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<String>,
}

impl PromptRequest {
    /// Checks the strategy/queried/answer-shape invariants.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.strategy {
            PromptKind::Zero => self.queried.is_empty(),
            PromptKind::Single => self.queried.len() == 1,
            PromptKind::Multi => !self.queried.is_empty(),
        };
        if !ok || self.answer_shape != self.strategy.answer_shape() {
            return Err(Error::invalid(format!(
                "{} request for `{}` queries {} attributes with shape {:?}",
                self.strategy,
                self.instance_id,
                self.queried.len(),
                self.answer_shape
            )));
        }
        Ok(())
    }

    /// The text sent to a model: all exemplars, then the query.
    pub fn full_text(&self) -> String {
        self.text_with_exemplars(self.exemplars.len())
    }

    /// Like [`full_text`](Self::full_text) but keeping only the `keep`
    /// exemplars nearest the query.
    pub fn text_with_exemplars(&self, keep: usize) -> String {
        if self.exemplars.is_empty() {
            return self.text.clone();
        }
        let skip = self.exemplars.len().saturating_sub(keep);
        let mut parts: Vec<String> = self.exemplars[skip..].to_vec();
        parts.push(format!("{}\n{ANSWER_CUE}", self.text));
        parts.join("\n\n")
    }
}

fn with_context(instance: &Instance, question: &str) -> String {
    let ctx = instance.context_text();
    if ctx.is_empty() {
        question.to_string()
    } else {
        format!("{ctx} {question}")
    }
}

pub fn render_zero(instance: &Instance) -> PromptRequest {
    let question = format!("Now what happens next to the {}?", instance.entity());
    PromptRequest {
        instance_id: instance.id.clone(),
        strategy: PromptKind::Zero,
        queried: Vec::new(),
        text: with_context(instance, &question),
        answer_shape: AnswerShape::BinaryVector,
        exemplars: Vec::new(),
    }
}

pub fn render_single(instance: &Instance, attribute: &str) -> PromptRequest {
    let question = format!(
        "Is the {attribute} of the {} different?",
        instance.entity()
    );
    PromptRequest {
        instance_id: instance.id.clone(),
        strategy: PromptKind::Single,
        queried: vec![attribute.to_string()],
        text: with_context(instance, &question),
        answer_shape: AnswerShape::YesNo,
        exemplars: Vec::new(),
    }
}

/// Lists `attributes` in order; duplicates or an empty list are rejected.
pub fn render_multi(instance: &Instance, attributes: &[String]) -> Result<PromptRequest> {
    if attributes.is_empty() {
        return Err(Error::invalid("multi-attribute prompt needs at least one attribute"));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = attributes.iter().find(|a| !seen.insert(a.as_str())) {
        return Err(Error::invalid(format!("attribute `{dup}` listed twice in prompt")));
    }
    let question = format!(
        "Consider the following attributes: {}. Which attribute changed for the {}?",
        attributes.join(", "),
        instance.entity()
    );
    Ok(PromptRequest {
        instance_id: instance.id.clone(),
        strategy: PromptKind::Multi,
        queried: attributes.to_vec(),
        text: with_context(instance, &question),
        answer_shape: AnswerShape::AttributeList,
        exemplars: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn inst(context: &[&str], action: &str, entity: &str) -> Instance {
        Instance {
            id: "i".into(),
            context_steps: context.iter().map(|s| s.to_string()).collect(),
            action: action.into(),
            entity: entity.into(),
            gold_changes: BTreeSet::new(),
            split: Split::Test,
        }
    }

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_prompt_template() {
        let r = render_zero(&inst(&["The mug is on the shelf."], "The mug fell.", "mug"));
        assert_eq!(r.text, "The mug is on the shelf. The mug fell. Now what happens next to the mug?");
        assert_eq!(r.answer_shape, AnswerShape::BinaryVector);
        assert!(r.queried.is_empty());
        r.validate().unwrap();
    }

    #[test]
    fn zero_prompt_action_only_and_trimmed_entity() {
        let r = render_zero(&inst(&[], "Drink a glass of hot milk.", "body  "));
        assert_eq!(r.text, "Drink a glass of hot milk. Now what happens next to the body?");
    }

    #[test]
    fn single_prompt_worked_examples() {
        let yoga = inst(
            &["Begin by standing in Mountain Pose."],
            "Bend your right leg back and hold on to the inside of your foot behind you with your right hand.",
            "person",
        );
        let r = render_single(&yoga, "flexibility");
        assert!(r.text.ends_with("Is the flexibility of the person different?"));
        assert_eq!(r, render_single(&yoga, "flexibility"));

        let beans = inst(&[], "Soak the dried beans and lentils overnight in a large bowl.", "beans");
        let r = render_single(&beans, "hydration");
        assert_eq!(
            r.text,
            "Soak the dried beans and lentils overnight in a large bowl. Is the hydration of the beans different?"
        );
        r.validate().unwrap();
    }

    #[test]
    fn multi_prompt_worked_example() {
        let beans = inst(&[], "Soak the dried beans and lentils overnight in a large bowl.", "beans");
        let r = render_multi(&beans, &names(&["softness", "contents", "granularity", "hydration"])).unwrap();
        assert_eq!(
            r.text,
            "Soak the dried beans and lentils overnight in a large bowl. Consider the following attributes: softness, contents, granularity, hydration. Which attribute changed for the beans?"
        );
        assert_eq!(r.queried, names(&["softness", "contents", "granularity", "hydration"]));
        r.validate().unwrap();
    }

    #[test]
    fn multi_prompt_singleton_and_errors() {
        let i = inst(&[], "Boil it.", "water");
        let r = render_multi(&i, &names(&["temperature"])).unwrap();
        assert!(r.text.ends_with("Consider the following attributes: temperature. Which attribute changed for the water?"));
        assert!(render_multi(&i, &names(&["a", "b", "a"])).is_err());
        assert!(render_multi(&i, &[]).is_err());
    }

    #[test]
    fn exemplars_are_prepended_and_truncated_from_the_front() {
        let mut r = render_zero(&inst(&[], "Act.", "x"));
        r.exemplars = vec!["old".into(), "new".into()];
        assert_eq!(r.full_text(), format!("old\n\nnew\n\n{}\nAnswer:", r.text));
        assert_eq!(r.text_with_exemplars(1), format!("new\n\n{}\nAnswer:", r.text));
        assert_eq!(r.text_with_exemplars(0), format!("{}\nAnswer:", r.text));
    }

    #[test]
    fn validate_rejects_bad_shapes() {
        let mut r = render_single(&inst(&[], "a", "b"), "x");
        r.queried.push("y".into());
        assert!(r.validate().is_err());
    }
}
