use std::collections::BTreeMap;

use stateshift::corpus::{AttributeVocabulary, Split};
use stateshift::backends::{train_ngram_baseline, NgramConfig};
use stateshift::metrics::{per_attribute, weighted_f1, frequency_grouping, ScoreOptions, WeightSource};
use stateshift::pipeline::{evaluate, EvalPlan, Strategy};
use stateshift::synthetic::frequency_skewed_dataset;

#[test]
fn rare_attributes_score_below_frequent_ones() {
    let vocab = AttributeVocabulary::openpi();
    let data = frequency_skewed_dataset(&vocab, 3000, 600, 11).unwrap();
    let train = data.split(Split::Train);
    let test = data.split(Split::Test);
    let attrs = data.vocabulary.in_domain();
    let model = train_ngram_baseline(&train, &attrs, &NgramConfig::default()).unwrap();
    let mut plan = EvalPlan::new(Strategy::Zero, attrs.clone(), 11);
    plan.workers = 4;
    let out = evaluate(&model, &test, &data.vocabulary, &plan).unwrap();
    let scores = per_attribute(&out.records, &test, &ScoreOptions::default()).unwrap();
    let groups = frequency_grouping(scores.keys(), &data.vocabulary, Split::Train);
    let weights = WeightSource::Evaluated.weights(&scores, &data.vocabulary);
    let by_cluster: BTreeMap<String, f64> = weighted_f1(&scores, &groups, &weights).unwrap();
    eprintln!("{by_cluster:?}");
    assert!(by_cluster["low"] < by_cluster["high"]);
}
