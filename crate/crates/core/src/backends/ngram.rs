//! Bag-of-n-grams logistic regression, one independent binary model per
//! attribute.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{decisions_from_vector, ensure_supported, Backend, BackendError, BackendReply, RawOutput};
use crate::corpus::Instance;
use crate::prompts::{AnswerShape, PromptRequest};
use crate::similarity::tokenize;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NgramConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// L2 penalty on the weights (not the bias), per training example.
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Features seen fewer times than this in training are discarded.
    pub min_count: usize,
}

impl Default for NgramConfig {
    fn default() -> Self {
        Self {
            ngram_min: 1,
            ngram_max: 2,
            l2: 1e-4,
            epochs: 150,
            learning_rate: 0.1,
            min_count: 1,
        }
    }
}

fn ngrams(text: &str, entity: &str, config: &NgramConfig) -> BTreeSet<String> {
    let tokens = tokenize(text);
    let mut out = BTreeSet::new();
    for n in config.ngram_min.max(1)..=config.ngram_max {
        for window in tokens.windows(n) {
            out.insert(window.join(" "));
        }
    }
    for token in tokenize(entity) {
        out.insert(format!("entity={token}"));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BinaryModel {
    weights: Vec<f64>,
    bias: f64,
    /// No positive training examples: always predicts "unchanged".
    always_negative: bool,
}

/// A fitted multi-label baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NgramModel {
    config: NgramConfig,
    attributes: Vec<String>,
    features: BTreeMap<String, usize>,
    models: Vec<BinaryModel>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch Adam on the mean log-loss plus L2.
fn fit_binary(rows: &[Vec<usize>], labels: &[bool], dim: usize, config: &NgramConfig) -> BinaryModel {
    let n = rows.len() as f64;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; dim + 1];
    let mut v = vec![0.0; dim + 1];
    let mut grad = vec![0.0; dim + 1];
    for epoch in 1..=config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &y) in rows.iter().zip(labels) {
            let z = b + row.iter().map(|&j| w[j]).sum::<f64>();
            let err = (sigmoid(z) - if y { 1.0 } else { 0.0 }) / n;
            for &j in row {
                grad[j] += err;
            }
            grad[dim] += err;
        }
        for j in 0..dim {
            grad[j] += config.l2 * w[j];
        }
        let c1 = 1.0 - beta1.powi(epoch as i32);
        let c2 = 1.0 - beta2.powi(epoch as i32);
        for j in 0..=dim {
            m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
            let step = config.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            if j == dim {
                b -= step;
            } else {
                w[j] -= step;
            }
        }
    }
    BinaryModel {
        weights: w,
        bias: b,
        always_negative: false,
    }
}

/// Fits one logistic model per attribute over bag-of-n-gram features of
/// the context, action and entity.
///
/// Training data is sorted by instance id first, so the fit does not
/// depend on input order.
pub fn train_ngram_baseline(
    train: &[Instance],
    attribute_list: &[String],
    config: &NgramConfig,
) -> Result<NgramModel> {
    if train.is_empty() {
        return Err(Error::invalid("n-gram baseline needs training data"));
    }
    if config.ngram_min == 0 || config.ngram_min > config.ngram_max {
        return Err(Error::invalid(format!(
            "bad n-gram range {}..={}",
            config.ngram_min, config.ngram_max
        )));
    }
    let known: BTreeSet<&str> = attribute_list.iter().map(String::as_str).collect();
    for inst in train {
        if let Some(bad) = inst.gold_changes.iter().find(|a| !known.contains(a.as_str())) {
            return Err(Error::invalid(format!(
                "instance `{}` is labeled with `{bad}`, which is not in the attribute list",
                inst.id
            )));
        }
    }

    let mut sorted: Vec<&Instance> = train.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let bags: Vec<BTreeSet<String>> = sorted
        .iter()
        .map(|i| ngrams(&i.context_text(), i.entity(), config))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for bag in &bags {
        for g in bag {
            *counts.entry(g.as_str()).or_default() += 1;
        }
    }
    let features: BTreeMap<String, usize> = counts
        .into_iter()
        .filter(|(_, c)| *c >= config.min_count)
        .enumerate()
        .map(|(idx, (g, _))| (g.to_string(), idx))
        .collect();
    let rows: Vec<Vec<usize>> = bags
        .iter()
        .map(|bag| bag.iter().filter_map(|g| features.get(g).copied()).collect())
        .collect();

    let dim = features.len();
    let fit_one = |attribute: &String| -> BinaryModel {
        let labels: Vec<bool> = sorted.iter().map(|i| i.changed(attribute)).collect();
        if !labels.iter().any(|&y| y) {
            log::warn!("attribute `{attribute}` has no positive training examples; it will never be predicted");
            return BinaryModel {
                weights: vec![0.0; dim],
                bias: f64::NEG_INFINITY,
                always_negative: true,
            };
        }
        fit_binary(&rows, &labels, dim, config)
    };

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(attribute_list.len().max(1));
    let mut models: Vec<Option<BinaryModel>> = vec![None; attribute_list.len()];
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in models.chunks_mut(attribute_list.len().div_ceil(workers).max(1)).enumerate() {
            let fit_one = &fit_one;
            let start = chunk_idx * attribute_list.len().div_ceil(workers).max(1);
            scope.spawn(move || {
                for (offset, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(fit_one(&attribute_list[start + offset]));
                }
            });
        }
    });

    Ok(NgramModel {
        config: config.clone(),
        attributes: attribute_list.to_vec(),
        features,
        models: models.into_iter().map(|m| m.expect("every attribute fitted")).collect(),
    })
}

impl NgramModel {
    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn probabilities(&self, instance: &Instance) -> Vec<f64> {
        let row: Vec<usize> = ngrams(&instance.context_text(), instance.entity(), &self.config)
            .iter()
            .filter_map(|g| self.features.get(g).copied())
            .collect();
        self.models
            .iter()
            .map(|m| {
                if m.always_negative {
                    0.0
                } else {
                    sigmoid(m.bias + row.iter().map(|&j| m.weights[j]).sum::<f64>())
                }
            })
            .collect()
    }

    /// Probability vector and the decisions at threshold 0.5. `attributes`
    /// must be the list the model was fitted with.
    pub fn predict_binary_vector(
        &self,
        instance: &Instance,
        attributes: &[String],
    ) -> Result<(Vec<f64>, BTreeSet<String>), BackendError> {
        if attributes != self.attributes.as_slice() {
            return Err(BackendError::DimensionMismatch {
                expected: self.attributes.len(),
                got: attributes.len(),
            });
        }
        let probs = self.probabilities(instance);
        let decisions = decisions_from_vector(&probs, attributes)?;
        Ok((probs, decisions))
    }
}

impl Backend for NgramModel {
    fn name(&self) -> &str {
        "ngram-logreg"
    }

    fn capabilities(&self) -> &[AnswerShape] {
        &[AnswerShape::BinaryVector]
    }

    fn vector_attributes(&self) -> Option<&[String]> {
        Some(&self.attributes)
    }

    fn predict(&self, request: &PromptRequest, instance: &Instance) -> Result<BackendReply, BackendError> {
        ensure_supported(self, request.answer_shape)?;
        Ok(BackendReply::new(RawOutput::Vector(self.probabilities(instance))))
    }
}
