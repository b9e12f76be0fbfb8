//! Drives a backend over a dataset: builds requests for a strategy,
//! optionally attaches few-shot exemplars, runs them concurrently and
//! parses the replies into prediction records.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backends::{decisions_from_vector, Backend, BackendError, RawOutput};
use crate::corpus::{AttributeVocabulary, Instance, ParseMode};
use crate::metrics::{micro_prf, PredictionRecord, ScoreOptions, Scored};
use crate::prompts::{
    build_fewshot, make_k_groups, make_partition, parse_output, render_multi, render_single, render_zero,
    PromptRequest,
};
use crate::rng::{derive_seed, stream};
use crate::similarity::Similarity;
use crate::{Error, Result};

/// Default k grid for sweeps.
pub const DEFAULT_K_GRID: [usize; 6] = [1, 2, 5, 10, 20, 51];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "zero")]
    Zero,
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "multi")]
    Multi,
    #[serde(rename = "k-attribute")]
    KAttribute,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Zero, Strategy::Single, Strategy::Multi, Strategy::KAttribute];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Zero => "zero",
            Strategy::Single => "single",
            Strategy::Multi => "multi",
            Strategy::KAttribute => "k-attribute",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "zero" | "zero-prompt" => Ok(Strategy::Zero),
            "single" | "single-attribute" => Ok(Strategy::Single),
            "multi" | "all" | "multi-attribute" | "all-attribute" => Ok(Strategy::Multi),
            "k-attribute" | "k" | "partition" => Ok(Strategy::KAttribute),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

/// How multi-attribute requests split the attribute list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// The strategy's own scheme.
    Default,
    /// Groups of at most `k` attributes (k-sweep).
    AtMost(usize),
}

pub struct FewShot<'a> {
    pub n: usize,
    pub pool: &'a [Instance],
    pub similarity: &'a dyn Similarity,
}

pub struct EvalPlan<'a> {
    pub strategy: Strategy,
    /// Attributes asked about, in prompt order.
    pub attributes: Vec<String>,
    pub seed: u64,
    pub grouping: Grouping,
    pub fewshot: Option<FewShot<'a>>,
    pub parse_mode: ParseMode,
    pub workers: usize,
}

impl<'a> EvalPlan<'a> {
    pub fn new(strategy: Strategy, attributes: Vec<String>, seed: u64) -> Self {
        Self {
            strategy,
            attributes,
            seed,
            grouping: Grouping::Default,
            fewshot: None,
            parse_mode: ParseMode::Strict,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub requests: Vec<PromptRequest>,
    pub records: Vec<PredictionRecord>,
}

/// The requests one instance receives under a plan, before few-shot
/// exemplars are attached.
pub fn build_requests(instance: &Instance, plan: &EvalPlan) -> Result<Vec<PromptRequest>> {
    let attrs = &plan.attributes;
    if attrs.is_empty() {
        return Err(Error::invalid("no attributes to evaluate"));
    }
    if let Grouping::AtMost(k) = plan.grouping {
        let seed = derive_seed(plan.seed, stream::K_SWEEP, &[&instance.id, &k.to_string()]);
        return make_k_groups(attrs, k, seed)?
            .iter()
            .map(|g| render_multi(instance, g))
            .collect();
    }
    match plan.strategy {
        Strategy::Zero => Ok(vec![render_zero(instance)]),
        Strategy::Single => Ok(attrs.iter().map(|a| render_single(instance, a)).collect()),
        Strategy::Multi => Ok(vec![render_multi(instance, attrs)?]),
        Strategy::KAttribute => {
            let seed = derive_seed(plan.seed, stream::PARTITION, &[&instance.id]);
            make_partition(&instance.id, attrs, seed)?
                .groups
                .iter()
                .map(|g| render_multi(instance, g))
                .collect()
        }
    }
}

fn record_strategy(plan: &EvalPlan) -> Strategy {
    match plan.grouping {
        Grouping::AtMost(_) => Strategy::Multi,
        Grouping::Default => plan.strategy,
    }
}

fn run_one(
    backend: &dyn Backend,
    request: &PromptRequest,
    instance: &Instance,
    vocab: &AttributeVocabulary,
    plan: &EvalPlan,
) -> Result<PredictionRecord> {
    let strategy = record_strategy(plan);
    let queried = if request.queried.is_empty() {
        plan.attributes.clone()
    } else {
        request.queried.clone()
    };
    let reply = match backend.predict(request, instance) {
        Ok(reply) => reply,
        Err(e @ BackendError::Unsupported { .. }) => return Err(e.into()),
        Err(e) => return Ok(PredictionRecord::failure(&instance.id, strategy, queried, e.to_string())),
    };
    let mut record = PredictionRecord {
        instance_id: instance.id.clone(),
        strategy,
        queried,
        predicted: Default::default(),
        off_query: Default::default(),
        raw: Some(reply.output.clone()),
        failed: false,
        failure: None,
        dropped: 0,
        truncated_exemplars: reply.truncated_exemplars,
    };
    match &reply.output {
        RawOutput::Vector(probs) => {
            let order = backend.vector_attributes().unwrap_or(&plan.attributes);
            match decisions_from_vector(probs, order) {
                Ok(decided) => {
                    record.queried.retain(|a| order.contains(a));
                    for a in decided {
                        if record.queried.contains(&a) {
                            record.predicted.insert(a);
                        } else {
                            record.off_query.insert(a);
                        }
                    }
                }
                Err(e) => {
                    record.failed = true;
                    record.failure = Some(e.to_string());
                }
            }
        }
        RawOutput::Text(text) => match parse_output(text, request, vocab, plan.parse_mode) {
            Ok(parsed) => {
                record.predicted = parsed.predicted;
                record.off_query = parsed.off_query;
                record.dropped = parsed.dropped;
            }
            Err(e) => {
                record.failed = true;
                record.failure = Some(e.to_string());
            }
        },
    }
    Ok(record)
}

/// Runs `plan` over `instances`. Output order is fixed by sorted instance
/// id and request order, whatever the worker count.
pub fn evaluate(
    backend: &dyn Backend,
    instances: &[Instance],
    vocab: &AttributeVocabulary,
    plan: &EvalPlan,
) -> Result<EvalOutput> {
    let mut sorted: Vec<&Instance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut jobs: Vec<(PromptRequest, &Instance)> = Vec::new();
    for instance in sorted {
        for mut request in build_requests(instance, plan)? {
            crate::backends::ensure_supported(backend, request.answer_shape)?;
            if let Some(fs) = &plan.fewshot {
                if request.answer_shape != crate::prompts::AnswerShape::BinaryVector {
                    request = build_fewshot(&request, instance, fs.pool, fs.n, fs.similarity, plan.seed)?.request;
                }
            }
            jobs.push((request, instance));
        }
    }

    let results: Mutex<BTreeMap<usize, Result<PredictionRecord>>> = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    let workers = plan.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((request, instance)) = jobs.get(i) else { break };
                let out = run_one(backend, request, instance, vocab, plan);
                results.lock().expect("results lock").insert(i, out);
            });
        }
    });
    let records = results
        .into_inner()
        .expect("results lock")
        .into_values()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalOutput {
        requests: jobs.into_iter().map(|(r, _)| r).collect(),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSweepPoint {
    pub k: usize,
    pub seed: u64,
    pub requests: usize,
    pub failed_records: usize,
    pub micro: Scored,
}

/// Micro scores when attributes are asked about in groups of at most `k`,
/// for every `k` and seed. Predictions are union-merged per instance.
pub fn k_sweep(
    backend: &dyn Backend,
    instances: &[Instance],
    vocab: &AttributeVocabulary,
    base: &EvalPlan,
    k_values: &[usize],
    seeds: &[u64],
) -> Result<Vec<KSweepPoint>> {
    let n = base.attributes.len();
    if let Some(bad) = k_values.iter().find(|&&k| k < 1 || k > n) {
        return Err(Error::invalid(format!("k = {bad} outside [1, {n}]")));
    }
    let mut points = Vec::new();
    for &k in k_values {
        for &seed in seeds {
            let plan = EvalPlan {
                strategy: Strategy::Multi,
                attributes: base.attributes.clone(),
                seed,
                grouping: Grouping::AtMost(k),
                fewshot: base.fewshot.as_ref().map(|f| FewShot { n: f.n, pool: f.pool, similarity: f.similarity }),
                parse_mode: base.parse_mode,
                workers: base.workers,
            };
            let out = evaluate(backend, instances, vocab, &plan)?;
            points.push(KSweepPoint {
                k,
                seed,
                requests: out.requests.len(),
                failed_records: out.records.iter().filter(|r| r.failed).count(),
                micro: micro_prf(&out.records, instances, &ScoreOptions::default())?,
            });
        }
    }
    Ok(points)
}
