//! Prediction backends.
//!
//! A backend turns a [`PromptRequest`] into a raw output: a probability
//! vector for zero-prompt requests, or reply text for yes/no and
//! attribute-list requests. Backends declare which answer shapes they
//! support and must reject the others.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::prompts::{AnswerShape, PromptRequest};

mod ngram;
mod oracle;
pub mod remote;

pub use ngram::{train_ngram_baseline, NgramConfig, NgramModel};
pub use oracle::{oracle_predict, OracleBackend, OracleConfig};
pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};

/// Decision threshold applied to probability vectors.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawOutput {
    Vector(Vec<f64>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub output: RawOutput,
    /// Few-shot exemplars dropped to fit the backend's prompt limit.
    pub truncated_exemplars: usize,
}

impl BackendReply {
    pub fn new(output: RawOutput) -> Self {
        Self {
            output,
            truncated_exemplars: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend `{backend}` does not produce {shape:?} answers")]
    Unsupported { backend: String, shape: AnswerShape },

    #[error("probability vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("transport failure: {message}")]
    Transport { message: String, transient: bool },

    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },

    #[error("prompt of {chars} characters exceeds the limit of {limit} even without exemplars")]
    PromptTooLong { chars: usize, limit: usize },

    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> &[AnswerShape];

    /// Attribute order of the probability vector, for backends that emit
    /// [`AnswerShape::BinaryVector`].
    fn vector_attributes(&self) -> Option<&[String]> {
        None
    }

    fn predict(&self, request: &PromptRequest, instance: &Instance) -> Result<BackendReply, BackendError>;

    fn supports(&self, shape: AnswerShape) -> bool {
        self.capabilities().contains(&shape)
    }
}

pub fn ensure_supported(backend: &dyn Backend, shape: AnswerShape) -> Result<(), BackendError> {
    if backend.supports(shape) {
        Ok(())
    } else {
        Err(BackendError::Unsupported {
            backend: backend.name().to_string(),
            shape,
        })
    }
}

/// `{attribute_i : p_i > 0.5}`.
pub fn decisions_from_vector(
    probabilities: &[f64],
    attributes: &[String],
) -> Result<BTreeSet<String>, BackendError> {
    if probabilities.len() != attributes.len() {
        return Err(BackendError::DimensionMismatch {
            expected: attributes.len(),
            got: probabilities.len(),
        });
    }
    Ok(attributes
        .iter()
        .zip(probabilities)
        .filter(|(_, p)| **p > DECISION_THRESHOLD)
        .map(|(a, _)| a.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn threshold_semantics() {
        let attrs = names(&["location", "wetness"]);
        assert!(decisions_from_vector(&[0.0, 0.0], &attrs).unwrap().is_empty());
        assert_eq!(
            decisions_from_vector(&[0.9, 0.2], &attrs).unwrap(),
            BTreeSet::from(["location".to_string()])
        );
        // exactly 0.5 is not a change
        assert!(decisions_from_vector(&[0.5, 0.5], &attrs).unwrap().is_empty());
        assert!(matches!(
            decisions_from_vector(&[0.9], &attrs),
            Err(BackendError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}
