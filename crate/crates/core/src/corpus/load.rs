use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::vocab::{AttributeVocabulary, ParseMode};
use super::{Instance, Split};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    CanonicalJsonl,
    OpenpiRaw,
    PigletRaw,
}

impl DatasetFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetFormat::CanonicalJsonl => "canonical_jsonl",
            DatasetFormat::OpenpiRaw => "openpi_raw",
            DatasetFormat::PigletRaw => "piglet_raw",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "canonical_jsonl" | "canonical" | "jsonl" => Ok(DatasetFormat::CanonicalJsonl),
            "openpi_raw" | "openpi" => Ok(DatasetFormat::OpenpiRaw),
            "piglet_raw" | "piglet" => Ok(DatasetFormat::PigletRaw),
            other => Err(Error::invalid(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Vocabulary the raw attribute names are canonicalized against.
    pub vocabulary: AttributeVocabulary,
    pub mode: ParseMode,
    /// Split assigned to records that do not carry one.
    pub default_split: Split,
}

impl LoadOptions {
    pub fn new(vocabulary: AttributeVocabulary) -> Self {
        Self {
            vocabulary,
            mode: ParseMode::Strict,
            default_split: Split::Test,
        }
    }

    pub fn lenient(mut self) -> Self {
        self.mode = ParseMode::Lenient;
        self
    }

    pub fn with_default_split(mut self, split: Split) -> Self {
        self.default_split = split;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub vocabulary: AttributeVocabulary,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<Instance> {
        self.instances
            .iter()
            .filter(|i| i.split == split)
            .cloned()
            .collect()
    }
}

/// A record before attribute canonicalization.
struct RawInstance {
    line: usize,
    id: String,
    context_steps: Vec<String>,
    action: String,
    entity: String,
    changes: Vec<String>,
    split: Split,
}

pub fn load_dataset(path: &Path, format: DatasetFormat, options: &LoadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path, format, options)
}

/// Parses dataset text; `origin` is only used in error messages.
pub fn parse_dataset(
    text: &str,
    origin: &Path,
    format: DatasetFormat,
    options: &LoadOptions,
) -> Result<Dataset> {
    let mut raws = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let parsed = match format {
            DatasetFormat::CanonicalJsonl => parse_canonical(&value, line_no, options.default_split)
                .map(|r| vec![r]),
            DatasetFormat::OpenpiRaw => parse_openpi(&value, line_no, options.default_split),
            DatasetFormat::PigletRaw => {
                parse_piglet(&value, line_no, options.default_split).map(|r| vec![r])
            }
        };
        raws.extend(parsed.map_err(malformed)?);
    }
    finish(raws, origin, options)
}

fn finish(raws: Vec<RawInstance>, origin: &Path, options: &LoadOptions) -> Result<Dataset> {
    let mut vocabulary = options.vocabulary.clone();
    let at = |line: usize, message: String| Error::Malformed {
        path: origin.to_path_buf(),
        line,
        message,
    };

    // Unknown names are registered in sorted order so the resulting
    // vocabulary does not depend on record order.
    let mut unknown = BTreeSet::new();
    for raw in &raws {
        for change in &raw.changes {
            match vocabulary.canonicalize(change) {
                Ok(_) => {}
                Err(Error::UnknownAttribute(name)) => match options.mode {
                    ParseMode::Strict => {
                        return Err(at(raw.line, format!("unknown attribute `{name}`")))
                    }
                    ParseMode::Lenient => {
                        unknown.insert(name);
                    }
                },
                Err(e) => return Err(at(raw.line, e.to_string())),
            }
        }
    }
    for name in unknown {
        vocabulary.canonicalize_or_insert(&name, ParseMode::Lenient)?;
    }

    vocabulary.clear_frequency();
    let mut seen = BTreeMap::new();
    let mut instances = Vec::with_capacity(raws.len());
    for raw in raws {
        if raw.entity.trim().is_empty() {
            return Err(at(raw.line, "entity is empty".into()));
        }
        if let Some(first) = seen.insert(raw.id.clone(), raw.line) {
            return Err(at(
                raw.line,
                format!("{} (first seen on line {first})", Error::DuplicateId(raw.id)),
            ));
        }
        let mut gold = BTreeSet::new();
        for change in &raw.changes {
            gold.insert(vocabulary.canonicalize(change)?);
        }
        for name in &gold {
            vocabulary.record_positive(name, raw.split);
        }
        instances.push(Instance {
            id: raw.id,
            context_steps: raw.context_steps,
            action: raw.action,
            entity: raw.entity.trim().to_string(),
            gold_changes: gold,
            split: raw.split,
        });
    }
    Ok(Dataset {
        instances,
        vocabulary,
    })
}

fn get_str<'a>(value: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| value.get(*k).and_then(Value::as_str))
}

fn get_id(value: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match value.get(*k) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    })
}

fn context_steps(value: Option<&Value>) -> std::result::Result<Vec<String>, String> {
    match value {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| "context entries must be strings".to_string())
            })
            .collect(),
        Some(_) => Err("context must be a string or a list of strings".into()),
    }
}

fn split_of(value: &Value, default: Split) -> std::result::Result<Split, String> {
    match get_str(value, &["split"]) {
        Some(s) => s.parse().map_err(|e: Error| e.to_string()),
        None => Ok(default),
    }
}

fn string_list(value: Option<&Value>, field: &str) -> std::result::Result<Vec<String>, String> {
    match value {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| format!("`{field}` entries must be strings"))
            })
            .collect(),
        Some(_) => Err(format!("`{field}` must be a list of strings")),
    }
}

fn parse_canonical(value: &Value, line: usize, default_split: Split) -> std::result::Result<RawInstance, String> {
    if !value.is_object() {
        return Err("record is not a JSON object".into());
    }
    let action = get_str(value, &["action"]).ok_or("missing string field `action`")?;
    let entity = get_str(value, &["entity"]).ok_or("missing string field `entity`")?;
    Ok(RawInstance {
        line,
        id: get_id(value, &["id"]).unwrap_or_else(|| format!("line-{line}")),
        context_steps: context_steps(value.get("context"))?,
        action: action.to_string(),
        entity: entity.to_string(),
        changes: string_list(value.get("changes"), "changes")?,
        split: split_of(value, default_split)?,
    })
}

fn openpi_answer_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| {
        Regex::new(r"(?i)^\s*(.+?)\s+of\s+(.+?)\s+(?:was|were)\s+(.*?)\s+before,?\s+and\s+(.*?)\s+after(?:wards)?\.?\s*$")
            .expect("valid regex")
    })
}

/// Extracts `(attribute, entity)` from a templated OpenPI state-change
/// sentence, `"<attr> of <entity> was <pre> before and <post> afterwards"`.
pub(crate) fn parse_openpi_answer(answer: &str) -> Option<(String, String)> {
    let caps = openpi_answer_pattern().captures(answer)?;
    Some((caps[1].trim().to_string(), caps[2].trim().to_string()))
}

fn parse_openpi(value: &Value, line: usize, default_split: Split) -> std::result::Result<Vec<RawInstance>, String> {
    let id = get_id(value, &["id"]).ok_or("missing field `id`")?;
    let question = value.get("question").filter(|q| q.is_object());
    let context = value
        .get("context")
        .or_else(|| question.and_then(|q| q.get("context")));
    let action = get_str(value, &["action", "query"])
        .or_else(|| question.and_then(|q| get_str(q, &["action", "query"])))
        .ok_or("missing field `action` (or `query`)")?;
    let answers = string_list(value.get("answers"), "answers")?;
    let steps = context_steps(context)?;
    let split = split_of(value, default_split)?;

    let mut by_entity: Vec<(String, Vec<String>)> = Vec::new();
    for answer in &answers {
        let Some((attribute, entity)) = parse_openpi_answer(answer) else {
            log::debug!("line {line}: skipping non-templated answer `{answer}`");
            continue;
        };
        match by_entity.iter_mut().find(|(e, _)| *e == entity) {
            Some((_, attrs)) => attrs.push(attribute),
            None => by_entity.push((entity, vec![attribute])),
        }
    }
    Ok(by_entity
        .into_iter()
        .map(|(entity, changes)| RawInstance {
            line,
            id: format!("{id}|{entity}"),
            context_steps: steps.clone(),
            action: action.to_string(),
            entity,
            changes,
            split,
        })
        .collect())
}

fn parse_piglet(value: &Value, line: usize, default_split: Split) -> std::result::Result<RawInstance, String> {
    let id = get_id(value, &["id", "annot_id"]).unwrap_or_else(|| format!("line-{line}"));
    let context = value
        .get("precondition_language")
        .or_else(|| value.get("context"));
    let action = get_str(value, &["action_language", "action"]).ok_or("missing field `action_language`")?;
    let entity = get_str(value, &["entity", "object_name", "object"]).ok_or("missing field `entity`")?;
    // pre-state values are only used to decide which attributes changed
    let changes = if let Some(list) = value.get("changes") {
        string_list(Some(list), "changes")?
    } else {
        let pre = value.get("pre").and_then(Value::as_object).ok_or("missing `changes` or `pre`/`post` states")?;
        let post = value.get("post").and_then(Value::as_object).ok_or("missing `post` state")?;
        post.iter()
            .filter(|(k, v)| pre.get(*k) != Some(*v))
            .map(|(k, _)| k.clone())
            .collect()
    };
    Ok(RawInstance {
        line,
        id,
        context_steps: context_steps(context)?,
        action: action.to_string(),
        entity: entity.to_string(),
        changes,
        split: split_of(value, default_split)?,
    })
}

pub fn to_canonical_jsonl(instances: &[Instance]) -> String {
    let mut out = String::new();
    for inst in instances {
        out.push_str(&serde_json::to_string(inst).expect("instances serialize"));
        out.push('\n');
    }
    out
}

pub fn write_canonical_jsonl(path: &Path, instances: &[Instance]) -> Result<()> {
    std::fs::write(path, to_canonical_jsonl(instances)).map_err(|e| Error::io(PathBuf::from(path), e))
}
