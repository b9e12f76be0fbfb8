use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.toml";
pub const INSTANCES: &str = "instances.jsonl";
pub const VOCABULARY: &str = "vocabulary.json";
pub const ONTOLOGY: &str = "ontology.tsv";
pub const CURATION: &str = "curation.tsv";
pub const REQUESTS: &str = "requests.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const METRICS: &str = "metrics.json";
pub const PER_ATTRIBUTE: &str = "per_attribute.tsv";
pub const ENVIRONMENT: &str = "environment.json";
pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const SWEEP: &str = "sweep.json";
pub const SWEEP_TABLE: &str = "sweep.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Eval,
    SweepK,
}

impl RunKind {
    fn required(self) -> &'static [&'static str] {
        match self {
            RunKind::Eval => &[
                CONFIG, INSTANCES, VOCABULARY, ONTOLOGY, CURATION, ENVIRONMENT, REQUESTS, PREDICTIONS, METRICS,
                PER_ATTRIBUTE,
            ],
            RunKind::SweepK => &[CONFIG, INSTANCES, VOCABULARY, ONTOLOGY, CURATION, ENVIRONMENT, SWEEP, SWEEP_TABLE],
        }
    }
}

/// Lists every artifact of a finished run with its SHA-256; written last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: RunKind,
    pub files: BTreeMap<String, String>,
}

/// A run directory being written.
pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunDir {
    /// Creates `root`; refuses a directory that already holds files.
    pub fn create(root: &Path) -> Result<Self> {
        if root.exists() {
            let mut entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if entries.next().is_some() {
                return Err(Error::invalid(format!("refusing to write into non-empty {}", root.display())));
            }
        }
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), digest(contents));
        Ok(())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        let mut out = String::new();
        for item in items {
            out.push_str(&serde_json::to_string(item)?);
            out.push('\n');
        }
        self.write(name, out.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut out = serde_json::to_string_pretty(value)?;
        out.push('\n');
        self.write(name, out.as_bytes())
    }

    /// Registers a file written by someone else (the transcript).
    pub fn adopt(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(name.to_string(), digest(&bytes));
        Ok(())
    }

    pub fn finish(mut self, kind: RunKind) -> Result<Manifest> {
        let manifest = Manifest {
            kind,
            files: std::mem::take(&mut self.files),
        };
        let mut out = serde_json::to_string_pretty(&manifest)?;
        out.push('\n');
        let path = self.path(MANIFEST);
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// Checks that `dir` holds a manifest, every required artifact, and that
/// each listed file still has its recorded hash.
pub fn validate(dir: &Path) -> Result<Manifest> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        let mut missing = vec![MANIFEST.to_string()];
        missing.extend(
            RunKind::Eval
                .required()
                .iter()
                .filter(|f| !dir.join(f).exists())
                .map(|f| f.to_string()),
        );
        return Err(Error::IncompleteRun {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let missing: Vec<String> = manifest
        .kind
        .required()
        .iter()
        .map(|f| f.to_string())
        .chain(manifest.files.keys().cloned())
        .filter(|f| !dir.join(f).exists())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRun {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    for (name, want) in &manifest.files {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if &digest(&bytes) != want {
            return Err(Error::invalid(format!("{} changed after the run finished", path.display())));
        }
    }
    for name in manifest.kind.required() {
        if !manifest.files.contains_key(*name) {
            return Err(Error::IncompleteRun {
                dir: dir.to_path_buf(),
                missing: vec![name.to_string()],
            });
        }
    }
    Ok(manifest)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
