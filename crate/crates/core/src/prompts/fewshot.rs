use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::codec::serialize_answer;
use super::render::{render_multi, render_single, render_zero, PromptKind, PromptRequest, ANSWER_CUE};
use crate::corpus::Instance;
use crate::rng::{derive_seed, stream};
use crate::similarity::Similarity;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub instance_id: String,
    pub score: f64,
    /// Whether the exemplar's gold answer is positive for the queried
    /// attribute; only set for single-attribute prompts.
    pub positive: Option<bool>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPrompt {
    /// The query request with exemplar texts attached.
    pub request: PromptRequest,
    /// Selected exemplars, least similar first.
    pub exemplars: Vec<Exemplar>,
}

impl FewShotPrompt {
    pub fn text(&self) -> String {
        self.request.full_text()
    }
}

fn render_like(query: &PromptRequest, instance: &Instance) -> Result<PromptRequest> {
    Ok(match query.strategy {
        PromptKind::Zero => render_zero(instance),
        PromptKind::Single => render_single(instance, &query.queried[0]),
        PromptKind::Multi => render_multi(instance, &query.queried)?,
    })
}

fn demonstration(query: &PromptRequest, instance: &Instance) -> Result<String> {
    let prompt = render_like(query, instance)?;
    let answer = serialize_answer(&instance.gold_changes, &prompt);
    Ok(format!("{}\n{ANSWER_CUE} {answer}", prompt.text))
}

/// Prepends `n` demonstrations from `pool` to `query`.
///
/// Candidates are ranked by `similarity(query context, candidate context)`,
/// ties broken by a seeded key. Single-attribute queries take `ceil(n/2)`
/// positives and `floor(n/2)` negatives for the queried attribute, filling
/// any shortfall from the other class. The most similar exemplar is placed
/// nearest the query.
pub fn build_fewshot(
    query: &PromptRequest,
    instance: &Instance,
    pool: &[Instance],
    n: usize,
    similarity: &dyn Similarity,
    tie_seed: u64,
) -> Result<FewShotPrompt> {
    query.validate()?;
    if n == 0 {
        return Err(Error::invalid("few-shot prompts need at least one exemplar"));
    }
    let query_ctx = instance.context_text();
    let mut ranked: Vec<(f64, u64, &Instance)> = pool
        .iter()
        .filter(|c| c.id != instance.id)
        .map(|c| {
            let score = similarity.similarity(&query_ctx, &c.context_text());
            let tie = derive_seed(tie_seed, stream::EXEMPLAR_TIES, &[&instance.id, &c.id]);
            (score, tie, c)
        })
        .collect();
    if ranked.is_empty() {
        return Err(Error::invalid(format!(
            "no eligible exemplars for `{}`",
            instance.id
        )));
    }
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });

    // indices into `ranked`, best first
    let chosen: Vec<usize> = match query.strategy {
        PromptKind::Single => {
            let attribute = &query.queried[0];
            let (pos, neg): (Vec<usize>, Vec<usize>) =
                (0..ranked.len()).partition(|&i| ranked[i].2.changed(attribute));
            let want_pos = n.div_ceil(2);
            let want_neg = n / 2;
            let mut take_pos = want_pos.min(pos.len());
            let mut take_neg = want_neg.min(neg.len());
            let short = n.saturating_sub(take_pos + take_neg);
            if short > 0 {
                let spare_pos = pos.len() - take_pos;
                let spare_neg = neg.len() - take_neg;
                let fill_neg = short.min(spare_neg);
                take_neg += fill_neg;
                take_pos += (short - fill_neg).min(spare_pos);
            }
            let mut chosen: Vec<usize> = pos[..take_pos].iter().chain(&neg[..take_neg]).copied().collect();
            chosen.sort_unstable();
            chosen
        }
        PromptKind::Zero | PromptKind::Multi => (0..n.min(ranked.len())).collect(),
    };

    let mut exemplars = Vec::with_capacity(chosen.len());
    for &i in chosen.iter().rev() {
        let (score, _, candidate) = ranked[i];
        exemplars.push(Exemplar {
            instance_id: candidate.id.clone(),
            score,
            positive: (query.strategy == PromptKind::Single)
                .then(|| candidate.changed(&query.queried[0])),
            text: demonstration(query, candidate)?,
        });
    }
    let mut request = query.clone();
    request.exemplars = exemplars.iter().map(|e| e.text.clone()).collect();
    Ok(FewShotPrompt { request, exemplars })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::similarity::TokenJaccard;
    use std::collections::BTreeSet;

    fn inst(id: &str, action: &str, changes: &[&str]) -> Instance {
        Instance {
            id: id.into(),
            context_steps: vec![],
            action: action.into(),
            entity: "thing".into(),
            gold_changes: changes.iter().map(|s| s.to_string()).collect(),
            split: Split::Train,
        }
    }

    #[test]
    fn minimal_pool() {
        let q = inst("q", "Boil the water.", &[]);
        let pool = vec![inst("p", "Pour the water.", &["location"])];
        let req = render_zero(&q);
        let fs = build_fewshot(&req, &q, &pool, 1, &TokenJaccard, 0).unwrap();
        assert_eq!(fs.exemplars.len(), 1);
        let text = fs.text();
        assert!(text.starts_with("Pour the water. Now what happens next to the thing?\nAnswer: location"));
        assert!(text.ends_with("Boil the water. Now what happens next to the thing?\nAnswer:"));
    }

    #[test]
    fn query_excluded_and_empty_pool_errors() {
        let q = inst("q", "Boil the water.", &[]);
        let req = render_zero(&q);
        assert!(build_fewshot(&req, &q, &[q.clone()], 1, &TokenJaccard, 0).is_err());
        assert!(build_fewshot(&req, &q, &[], 1, &TokenJaccard, 0).is_err());
        assert!(build_fewshot(&req, &q, &[inst("p", "x", &[])], 0, &TokenJaccard, 0).is_err());
    }

    #[test]
    fn balanced_single_attribute_selection() {
        let q = inst("q", "Move the box to the shelf.", &[]);
        let mut pool = Vec::new();
        for i in 0..8 {
            pool.push(inst(&format!("pos{i}"), "Move the box somewhere.", &["location"]));
            pool.push(inst(&format!("neg{i}"), "Paint the box.", &["color"]));
        }
        let req = render_single(&q, "location");
        let fs = build_fewshot(&req, &q, &pool, 10, &TokenJaccard, 7).unwrap();
        assert_eq!(fs.exemplars.len(), 10);
        let pos = fs.exemplars.iter().filter(|e| e.positive == Some(true)).count();
        assert_eq!(pos, 5);
        assert!(fs.exemplars.iter().filter(|e| e.positive == Some(true)).all(|e| e.text.ends_with("Answer: Yes")));
    }

    #[test]
    fn shortfall_filled_from_other_class() {
        let q = inst("q", "Move the box.", &[]);
        let mut pool = vec![inst("pos0", "Move it.", &["location"])];
        for i in 0..6 {
            pool.push(inst(&format!("neg{i}"), "Paint it.", &[]));
        }
        let req = render_single(&q, "location");
        let fs = build_fewshot(&req, &q, &pool, 4, &TokenJaccard, 1).unwrap();
        assert_eq!(fs.exemplars.len(), 4);
        assert_eq!(fs.exemplars.iter().filter(|e| e.positive == Some(true)).count(), 1);
    }

    #[test]
    fn most_similar_is_nearest_query() {
        let q = inst("q", "Soak the dried beans overnight.", &[]);
        let pool = vec![
            inst("far", "Sweep the floor.", &[]),
            inst("twin", "Soak the dried beans overnight.", &["wetness"]),
            inst("mid", "Soak the rice.", &[]),
        ];
        // oracle: exhaustive pairwise scoring + sort
        let mut scored: Vec<(f64, &str)> = pool
            .iter()
            .map(|p| (TokenJaccard.similarity(&q.context_text(), &p.context_text()), p.id.as_str()))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        assert_eq!(scored[0].1, "twin");

        let req = render_multi(&q, &["wetness".to_string(), "location".to_string()]).unwrap();
        let fs = build_fewshot(&req, &q, &pool, 3, &TokenJaccard, 0).unwrap();
        let order: Vec<&str> = fs.exemplars.iter().map(|e| e.instance_id.as_str()).collect();
        assert_eq!(order, vec!["far", "mid", "twin"]);
        assert!(fs.exemplars[2].text.ends_with("Answer: wetness"));
        assert_eq!(fs.request.exemplars.len(), 3);
    }

    #[test]
    fn exactly_n_when_pool_is_large_enough() {
        let q = inst("q", "a b c", &[]);
        let pool: Vec<Instance> = (0..20)
            .map(|i| inst(&format!("p{i}"), &format!("a w{i}"), if i % 3 == 0 { &["x"] } else { &[] }))
            .collect();
        for n in 1..=20 {
            for req in [render_zero(&q), render_single(&q, "x")] {
                let fs = build_fewshot(&req, &q, &pool, n, &TokenJaccard, 3).unwrap();
                assert_eq!(fs.exemplars.len(), n);
                let ids: BTreeSet<_> = fs.exemplars.iter().map(|e| &e.instance_id).collect();
                assert_eq!(ids.len(), n);
            }
        }
    }
}
