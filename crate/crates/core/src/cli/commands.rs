use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{parse_curation, parse_ontology, BackendKind, RunConfig};
use super::rundir::{self, read_json, read_jsonl, RunDir, RunKind};
use crate::analysis::{
    detect_errors, ingest_judgments, merge_judgments, render_table, tally, worklist_tsv, Denominator,
};
use crate::backends::remote::{ReplayTransport, TranscriptLog};
use crate::backends::{train_ngram_baseline, Backend, OracleBackend, OracleConfig, RemoteBackend, RemoteConfig};
use crate::corpus::{
    load_dataset, to_canonical_jsonl, AttributeVocabulary, Dataset, DatasetFormat, Instance, LoadOptions, ParseMode,
    Split,
};
use crate::metrics::{MetricsReport, PermutationTest, PredictionRecord, ReportContext};
use crate::pipeline::{evaluate, EvalPlan, FewShot, Grouping, KSweepPoint};
use crate::{Error, Result};

/// `convert`: raw export to canonical JSONL plus vocabulary tables.
pub fn convert(
    input: &Path,
    format: DatasetFormat,
    vocab: AttributeVocabulary,
    mode: ParseMode,
    split: Split,
    out: &Path,
) -> Result<Dataset> {
    let mut options = LoadOptions::new(vocab).with_default_split(split);
    options.mode = mode;
    let data = load_dataset(input, format, &options)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(rundir::INSTANCES, to_canonical_jsonl(&data.instances))?;
    let v = &data.vocabulary;
    let mut table = String::from("# attribute\tdomain\n");
    let mut freq = String::from("# attribute\ttrain\tdev\ttest\n");
    for name in v.names() {
        let domain = v.domain_of(name).map_or("out_domain", |d| d.as_str());
        let _ = writeln!(table, "{name}\t{domain}");
        let _ = writeln!(
            freq,
            "{name}\t{}\t{}\t{}",
            v.frequency(name, Split::Train),
            v.frequency(name, Split::Dev),
            v.frequency(name, Split::Test)
        );
    }
    write("vocabulary.tsv", table)?;
    write("frequency.tsv", freq)?;
    let merges: String = v.merge_rules().map(|(raw, canon)| format!("{raw}\t{canon}\n")).collect();
    write("merge.tsv", format!("# raw\tcanonical\n{merges}"))?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Environment {
    package: String,
    version: String,
    os: String,
    arch: String,
    debug_build: bool,
    backend: BackendKind,
    replay: Option<PathBuf>,
    started_at: String,
    finished_at: String,
}

fn environment(config: &RunConfig, replay: Option<&Path>, started_at: String) -> Environment {
    Environment {
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        os: std::env::consts::OS.into(),
        arch: std::env::consts::ARCH.into(),
        debug_build: cfg!(debug_assertions),
        backend: config.backend.kind,
        replay: replay.map(Path::to_path_buf),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    }
}

/// Everything an evaluation needs, loaded once.
struct Prepared {
    config: RunConfig,
    seed: u64,
    data: Dataset,
    eval: Vec<Instance>,
    attributes: Vec<String>,
    ontology_text: String,
    curation_text: String,
}

fn prepare(config: RunConfig) -> Result<Prepared> {
    config.validate()?;
    let seed = config.seed()?;
    let mut options = LoadOptions::new(config.vocabulary()?);
    options.mode = config.parse_mode;
    let data = load_dataset(&config.dataset.path, config.dataset.format, &options)?;
    let eval = data.split(config.dataset.eval_split);
    if eval.is_empty() {
        return Err(Error::invalid(format!(
            "no {} instances in {}",
            config.dataset.eval_split.as_str(),
            config.dataset.path.display()
        )));
    }
    let attributes = config.attributes(&data.vocabulary)?;
    let ontology_text = config.ontology_text()?;
    let curation_text = config.curation_text()?;
    Ok(Prepared {
        config,
        seed,
        data,
        eval,
        attributes,
        ontology_text,
        curation_text,
    })
}

fn build_backend(p: &Prepared, replay: Option<&Path>, run: &RunDir) -> Result<Box<dyn Backend>> {
    let backend = &p.config.backend;
    Ok(match backend.kind {
        BackendKind::Oracle => Box::new(OracleBackend::new(
            OracleConfig {
                flip_probability: backend.flip_probability,
                seed: p.seed,
            },
            p.attributes.clone(),
        )?),
        BackendKind::Ngram => {
            let train = p.data.split(backend.train_split);
            if train.is_empty() {
                return Err(Error::invalid(format!("no {} instances to fit on", backend.train_split.as_str())));
            }
            Box::new(train_ngram_baseline(&train, &p.attributes, &backend.ngram)?)
        }
        BackendKind::Remote => {
            let remote = backend
                .remote
                .clone()
                .unwrap_or_else(|| RemoteConfig::new("replay", "replay"));
            let log = TranscriptLog::open(&run.path(rundir::TRANSCRIPT))?;
            let base = match replay {
                Some(path) => RemoteBackend::new(remote, Box::new(ReplayTransport::from_file(path)?)),
                None => RemoteBackend::http(remote)?,
            };
            Box::new(base.with_transcript(log))
        }
    })
}

fn report_for(
    config: &RunConfig,
    records: &[PredictionRecord],
    eval: &[Instance],
    vocab: &AttributeVocabulary,
    ontology_text: &str,
    curation_text: &str,
) -> Result<MetricsReport> {
    let ontology = parse_ontology(ontology_text)?;
    let curation = parse_curation(curation_text)?;
    let matcher = config.metrics.matcher.build();
    let mut ctx = ReportContext::new(vocab, &ontology);
    ctx.curation = Some(&curation);
    ctx.matcher = matcher.as_ref();
    ctx.match_threshold = config.metrics.match_threshold;
    ctx.weights = config.metrics.weights;
    ctx.cluster_split = config.metrics.cluster_split;
    ctx.permutation = PermutationTest {
        shuffles: config.metrics.permutations,
        seed: config.seed()?,
    };
    MetricsReport::build(records, eval, &ctx)
}

fn plan_for<'a>(p: &'a Prepared, pool: &'a [Instance], sim: &'a dyn crate::similarity::Similarity) -> EvalPlan<'a> {
    let mut plan = EvalPlan::new(p.config.strategy, p.attributes.clone(), p.seed);
    plan.parse_mode = p.config.parse_mode;
    plan.workers = p.config.workers;
    if let Some(k) = p.config.k {
        plan.grouping = Grouping::AtMost(k);
    }
    plan.fewshot = p.config.fewshot.as_ref().map(|f| FewShot {
        n: f.n,
        pool,
        similarity: sim,
    });
    plan
}

fn write_inputs(run: &mut RunDir, p: &Prepared) -> Result<()> {
    run.write(rundir::CONFIG, p.config.to_toml()?.as_bytes())?;
    run.write(rundir::INSTANCES, to_canonical_jsonl(&p.eval).as_bytes())?;
    run.write_json(rundir::VOCABULARY, &p.data.vocabulary)?;
    run.write(rundir::ONTOLOGY, p.ontology_text.as_bytes())?;
    run.write(rundir::CURATION, p.curation_text.as_bytes())?;
    Ok(())
}

fn write_report(run: &mut RunDir, prefix: &str, p: &Prepared, report: &MetricsReport) -> Result<()> {
    run.write(&format!("{prefix}{}", rundir::METRICS), report.to_json()?.as_bytes())?;
    let ontology = parse_ontology(&p.ontology_text)?;
    let tsv = report.per_attribute_tsv(&p.data.vocabulary, &ontology, p.config.metrics.cluster_split);
    run.write(&format!("{prefix}{}", rundir::PER_ATTRIBUTE), tsv.as_bytes())
}

/// `eval`: one strategy, one backend, one run directory.
pub fn eval(config: RunConfig, out: &Path, replay: Option<&Path>) -> Result<MetricsReport> {
    let started = chrono::Utc::now().to_rfc3339();
    let p = prepare(config)?;
    let mut run = RunDir::create(out)?;
    // The config snapshot goes first so even a failed run records it.
    write_inputs(&mut run, &p)?;
    let backend = build_backend(&p, replay, &run)?;
    let pool = p.config.fewshot.as_ref().map(|f| p.data.split(f.pool_split)).unwrap_or_default();
    let sim = p.config.fewshot.as_ref().map(|f| f.similarity).unwrap_or_default().build();
    let plan = plan_for(&p, &pool, sim.as_ref());
    let output = evaluate(backend.as_ref(), &p.eval, &p.data.vocabulary, &plan)?;
    drop(backend);
    run.write_jsonl(rundir::REQUESTS, &output.requests)?;
    run.write_jsonl(rundir::PREDICTIONS, &output.records)?;
    let report = report_for(&p.config, &output.records, &p.eval, &p.data.vocabulary, &p.ontology_text, &p.curation_text)?;
    write_report(&mut run, "", &p, &report)?;
    if run.path(rundir::TRANSCRIPT).exists() {
        run.adopt(rundir::TRANSCRIPT)?;
    }
    run.write_json(rundir::ENVIRONMENT, &environment(&p.config, replay, started))?;
    run.finish(RunKind::Eval)?;
    let failed = report.counts.failed_records;
    if failed > 0 && failed == report.counts.records {
        return Err(Error::Backend(crate::backends::BackendError::Exhausted {
            attempts: 0,
            last: format!("all {failed} requests failed; see {}", out.join(rundir::PREDICTIONS).display()),
        }));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub seeds: usize,
}

fn summarize(points: &[KSweepPoint]) -> Vec<KSummary> {
    let mut by_k: BTreeMap<usize, Vec<&KSweepPoint>> = BTreeMap::new();
    for p in points {
        by_k.entry(p.k).or_default().push(p);
    }
    by_k.into_iter()
        .map(|(k, ps)| {
            let n = ps.len() as f64;
            KSummary {
                k,
                precision: ps.iter().map(|p| p.micro.precision).sum::<f64>() / n,
                recall: ps.iter().map(|p| p.micro.recall).sum::<f64>() / n,
                f1: ps.iter().map(|p| p.micro.f1).sum::<f64>() / n,
                seeds: ps.len(),
            }
        })
        .collect()
}

fn sweep_table(summary: &[KSummary]) -> String {
    let mut out = String::from("k\tprecision\trecall\tf1\tseeds\n");
    for s in summary {
        let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}\t{}", s.k, s.precision, s.recall, s.f1, s.seeds);
    }
    out
}

/// `sweep-k`: one multi-attribute evaluation per (k, seed).
pub fn sweep_k(mut config: RunConfig, out: &Path, replay: Option<&Path>) -> Result<Vec<KSummary>> {
    let started = chrono::Utc::now().to_rfc3339();
    config.strategy = crate::pipeline::Strategy::Multi;
    config.k = None;
    let p = prepare(config)?;
    let n = p.attributes.len();
    let mut grid: Vec<usize> = p.config.k_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    if let Some(bad) = grid.iter().find(|&&k| k > n) {
        return Err(Error::invalid(format!("k = {bad} exceeds the {n} evaluated attributes")));
    }
    let seeds = if p.config.sweep_seeds.is_empty() {
        vec![p.seed]
    } else {
        p.config.sweep_seeds.clone()
    };
    let mut run = RunDir::create(out)?;
    write_inputs(&mut run, &p)?;
    let backend = build_backend(&p, replay, &run)?;
    let pool = p.config.fewshot.as_ref().map(|f| p.data.split(f.pool_split)).unwrap_or_default();
    let sim = p.config.fewshot.as_ref().map(|f| f.similarity).unwrap_or_default().build();
    let mut points = Vec::new();
    for &k in &grid {
        for &seed in &seeds {
            let mut plan = plan_for(&p, &pool, sim.as_ref());
            plan.seed = seed;
            plan.grouping = Grouping::AtMost(k);
            let output = evaluate(backend.as_ref(), &p.eval, &p.data.vocabulary, &plan)?;
            let prefix = format!("k-{k}/seed-{seed}/");
            run.write_jsonl(&format!("{prefix}{}", rundir::REQUESTS), &output.requests)?;
            run.write_jsonl(&format!("{prefix}{}", rundir::PREDICTIONS), &output.records)?;
            let report =
                report_for(&p.config, &output.records, &p.eval, &p.data.vocabulary, &p.ontology_text, &p.curation_text)?;
            write_report(&mut run, &prefix, &p, &report)?;
            points.push(KSweepPoint {
                k,
                seed,
                requests: output.requests.len(),
                failed_records: report.counts.failed_records,
                micro: report.micro,
            });
        }
    }
    drop(backend);
    let summary = summarize(&points);
    run.write_json(rundir::SWEEP, &points)?;
    run.write(rundir::SWEEP_TABLE, sweep_table(&summary).as_bytes())?;
    if run.path(rundir::TRANSCRIPT).exists() {
        run.adopt(rundir::TRANSCRIPT)?;
    }
    run.write_json(rundir::ENVIRONMENT, &environment(&p.config, replay, started))?;
    run.finish(RunKind::SweepK)?;
    Ok(summary)
}

/// Recomputes an eval run's metrics from its persisted artifacts alone.
pub fn recompute_metrics(dir: &Path) -> Result<MetricsReport> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let config = RunConfig::parse(&read(rundir::CONFIG)?, &dir.join(rundir::CONFIG))?;
    let eval: Vec<Instance> = read_jsonl(&dir.join(rundir::INSTANCES))?;
    let vocab: AttributeVocabulary = read_json(&dir.join(rundir::VOCABULARY))?;
    let records: Vec<PredictionRecord> = read_jsonl(&dir.join(rundir::PREDICTIONS))?;
    report_for(&config, &records, &eval, &vocab, &read(rundir::ONTOLOGY)?, &read(rundir::CURATION)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub tally: crate::analysis::Tally,
    pub outcome: crate::analysis::TaxonomyOutcome,
}

/// `analyze`: error taxonomy for a finished eval run.
pub fn analyze(
    dir: &Path,
    annotations: Option<&Path>,
    denominator: Option<Denominator>,
    out: &Path,
) -> Result<TaxonomyReport> {
    let manifest = rundir::validate(dir)?;
    if manifest.kind != RunKind::Eval {
        return Err(Error::invalid(format!("{} is not an eval run", dir.display())));
    }
    let config_text = std::fs::read_to_string(dir.join(rundir::CONFIG)).map_err(|e| Error::io(dir, e))?;
    let config = RunConfig::parse(&config_text, &dir.join(rundir::CONFIG))?;
    let eval: Vec<Instance> = read_jsonl(&dir.join(rundir::INSTANCES))?;
    let records: Vec<PredictionRecord> = read_jsonl(&dir.join(rundir::PREDICTIONS))?;
    let scorer = config.metrics.synonym_scorer.build();
    let (automatic, erroneous) = detect_errors(&records, &eval, scorer.as_ref(), config.metrics.synonym_threshold)?;
    let human = match annotations {
        Some(path) => ingest_judgments(path)?,
        None => Vec::new(),
    };
    let ids: BTreeSet<String> = eval.iter().map(|i| i.id.clone()).collect();
    let outcome = merge_judgments(&automatic, &human, &erroneous, &ids)?;
    let tally = tally(&outcome, denominator.unwrap_or(config.metrics.denominator));
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    let report = TaxonomyReport { tally, outcome };
    write("taxonomy.json", serde_json::to_string_pretty(&report)? + "\n")?;
    write("taxonomy.tsv", render_table(&[(run_label(dir), report.tally.clone())]))?;
    write("worklist.tsv", worklist_tsv(&report.outcome, &records, &eval))?;
    Ok(report)
}

fn run_label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn fmt_pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// `report`: comparison table over runs, plus plot-ready files when
/// `out` is given. Eval runs are re-scored from their artifacts and must
/// match their stored metrics.
pub fn report(dirs: &[PathBuf], out: Option<&Path>) -> Result<String> {
    let mut table = String::from(
        "run\tstrategy\tbackend\tPr\tRe\tF1\tPr_in\tRe_in\tF1_in\tPr_out\tRe_out\tF1_out\n",
    );
    let mut fig3 = String::from("run\tcluster\tweighted_f1\n");
    let mut fig4 = String::from("run\tk\tprecision\trecall\tf1\n");
    let mut fig5 = String::from("run\tsemantic_type\tin_domain\tout_domain\n");
    let mut groups = String::from("run\tgroup\tweighted_f1\n");
    let mut attrs = String::new();
    let mut labels = BTreeSet::new();
    for dir in dirs {
        let manifest = rundir::validate(dir)?;
        let mut label = run_label(dir);
        while !labels.insert(label.clone()) {
            label.push('\'');
        }
        let config_path = dir.join(rundir::CONFIG);
        let config_text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let config = RunConfig::parse(&config_text, &config_path)?;
        match manifest.kind {
            RunKind::Eval => {
                let stored_text = std::fs::read_to_string(dir.join(rundir::METRICS)).map_err(|e| Error::io(dir, e))?;
                let recomputed = recompute_metrics(dir)?;
                if recomputed.to_json()? != stored_text {
                    return Err(Error::invalid(format!(
                        "{}: stored metrics differ from metrics recomputed from the artifacts",
                        dir.display()
                    )));
                }
                let m = &recomputed;
                let (i, o) = (&m.domains.in_domain, &m.domains.out_domain);
                let _ = writeln!(
                    table,
                    "{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    config.strategy,
                    config.backend.kind.as_str(),
                    fmt_pct(m.micro.precision),
                    fmt_pct(m.micro.recall),
                    fmt_pct(m.micro.f1),
                    fmt_pct(i.precision),
                    fmt_pct(i.recall),
                    fmt_pct(i.f1),
                    fmt_pct(o.precision),
                    fmt_pct(o.recall),
                    fmt_pct(o.f1),
                );
                for (cluster, f1) in &m.frequency_clusters {
                    let _ = writeln!(fig3, "{label}\t{cluster}\t{f1:.6}");
                }
                for (ty, s) in &m.semantic_types {
                    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
                    let _ = writeln!(fig5, "{label}\t{ty}\t{}\t{}", show(s.in_domain), show(s.out_domain));
                }
                for (g, f1) in &m.out_domain_groups {
                    let _ = writeln!(groups, "{label}\t{g}\t{f1:.6}");
                }
                let per = std::fs::read_to_string(dir.join(rundir::PER_ATTRIBUTE)).map_err(|e| Error::io(dir, e))?;
                let mut lines = per.lines();
                if attrs.is_empty() {
                    if let Some(header) = lines.next() {
                        attrs = format!("run\t{header}\n");
                    }
                } else {
                    lines.next();
                }
                for line in lines {
                    let _ = writeln!(attrs, "{label}\t{line}");
                }
            }
            RunKind::SweepK => {
                let points: Vec<KSweepPoint> = read_json(&dir.join(rundir::SWEEP))?;
                for s in summarize(&points) {
                    let _ = writeln!(fig4, "{label}\t{}\t{:.6}\t{:.6}\t{:.6}", s.k, s.precision, s.recall, s.f1);
                }
            }
        }
    }
    if let Some(out) = out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        for (name, text) in [
            ("comparison.tsv", &table),
            ("fig3_frequency.tsv", &fig3),
            ("fig4_k_sweep.tsv", &fig4),
            ("fig5_semantic_types.tsv", &fig5),
            ("out_domain_groups.tsv", &groups),
            ("per_attribute.tsv", &attrs),
        ] {
            let p = out.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(table)
}
