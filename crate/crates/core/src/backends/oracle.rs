use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ensure_supported, Backend, BackendError, BackendReply, RawOutput};
use crate::corpus::Instance;
use crate::prompts::{serialize_answer, AnswerShape, PromptRequest};
use crate::rng::{substream, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(default)]
    pub flip_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

impl OracleConfig {
    pub fn perfect() -> Self {
        Self {
            flip_probability: 0.0,
            seed: 0,
        }
    }
}

/// Reads gold labels back, flipping each (instance, attribute) bit
/// independently with the configured probability.
///
/// The flip for a bit depends only on the seed, the instance id and the
/// attribute, so every strategy sees the same noisy labels.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    config: OracleConfig,
    attributes: Vec<String>,
}

const ALL_SHAPES: [AnswerShape; 3] = [
    AnswerShape::BinaryVector,
    AnswerShape::YesNo,
    AnswerShape::AttributeList,
];

impl OracleBackend {
    /// `attributes` fixes the order of the zero-prompt probability vector.
    pub fn new(config: OracleConfig, attributes: Vec<String>) -> Result<Self, BackendError> {
        if !(0.0..=1.0).contains(&config.flip_probability) {
            return Err(BackendError::Config(format!(
                "flip probability {} outside [0, 1]",
                config.flip_probability
            )));
        }
        Ok(Self { config, attributes })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// The emitted (possibly flipped) change bit.
    pub fn bit(&self, instance: &Instance, attribute: &str) -> bool {
        noisy_bit(&self.config, instance, attribute)
    }
}

fn noisy_bit(config: &OracleConfig, instance: &Instance, attribute: &str) -> bool {
    let gold = instance.changed(attribute);
    if config.flip_probability == 0.0 {
        return gold;
    }
    let mut rng = substream(config.seed, stream::ORACLE, &[&instance.id, attribute]);
    gold ^ rng.gen_bool(config.flip_probability)
}

/// Oracle output for one request; zero-prompt vectors follow `attributes`.
pub fn oracle_predict(
    request: &PromptRequest,
    instance: &Instance,
    config: &OracleConfig,
    attributes: &[String],
) -> RawOutput {
    match request.answer_shape {
        AnswerShape::BinaryVector => RawOutput::Vector(
            attributes
                .iter()
                .map(|a| if noisy_bit(config, instance, a) { 1.0 } else { 0.0 })
                .collect(),
        ),
        AnswerShape::YesNo | AnswerShape::AttributeList => {
            let labels = request
                .queried
                .iter()
                .filter(|a| noisy_bit(config, instance, a))
                .cloned()
                .collect();
            RawOutput::Text(serialize_answer(&labels, request))
        }
    }
}

impl Backend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn capabilities(&self) -> &[AnswerShape] {
        &ALL_SHAPES
    }

    fn vector_attributes(&self) -> Option<&[String]> {
        Some(&self.attributes)
    }

    fn predict(&self, request: &PromptRequest, instance: &Instance) -> Result<BackendReply, BackendError> {
        ensure_supported(self, request.answer_shape)?;
        Ok(BackendReply::new(oracle_predict(
            request,
            instance,
            &self.config,
            &self.attributes,
        )))
    }
}
