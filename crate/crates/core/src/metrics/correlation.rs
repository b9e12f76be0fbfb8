use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, substream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub coefficient: f64,
    /// Two-sided permutation p-value.
    pub p_value: f64,
    pub n: usize,
}

/// Permutation test settings. When `n!` does not exceed `shuffles` every
/// permutation is enumerated and the p-value is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub shuffles: usize,
    pub seed: u64,
}

impl Default for PermutationTest {
    fn default() -> Self {
        Self {
            shuffles: 10_000,
            seed: 0,
        }
    }
}

const TIE_EPS: f64 = 1e-12;

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!("need at least 3 points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedCorrelation("non-finite input".into()));
    }
    Ok(())
}

fn raw_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their average rank.
pub(crate) fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    raw_pearson(x, y).ok_or_else(|| Error::UndefinedCorrelation("constant input".into()))
}

/// Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    raw_pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("constant input".into()))
}

fn factorial_at_most(n: usize, limit: usize) -> bool {
    let mut acc: usize = 1;
    for k in 2..=n {
        acc = match acc.checked_mul(k) {
            Some(v) if v <= limit => v,
            _ => return false,
        };
    }
    true
}

fn for_each_permutation(items: &mut Vec<f64>, k: usize, f: &mut dyn FnMut(&[f64])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        for_each_permutation(items, k + 1, f);
        items.swap(k, i);
    }
}

/// `x` is assumed already transformed (ranked for Spearman).
fn permutation_p(x: &[f64], y: &[f64], observed: f64, test: &PermutationTest, label: &str) -> f64 {
    let stat = |perm: &[f64]| raw_pearson(x, perm).unwrap_or(0.0).abs();
    let threshold = observed.abs() - TIE_EPS;
    if factorial_at_most(y.len(), test.shuffles) {
        let (mut hits, mut total) = (0usize, 0usize);
        let mut items = y.to_vec();
        for_each_permutation(&mut items, 0, &mut |perm| {
            total += 1;
            if stat(perm) >= threshold {
                hits += 1;
            }
        });
        return hits as f64 / total as f64;
    }
    let mut rng = substream(test.seed, stream::PERMUTATION, &[label]);
    let mut perm = y.to_vec();
    let mut hits = 0usize;
    for _ in 0..test.shuffles {
        perm.shuffle(&mut rng);
        if stat(&perm) >= threshold {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (test.shuffles + 1) as f64
}

pub fn spearman(x: &[f64], y: &[f64], test: &PermutationTest) -> Result<Correlation> {
    let coefficient = spearman_rho(x, y)?;
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    Ok(Correlation {
        coefficient,
        p_value: permutation_p(&rx, &ry, coefficient, test, "spearman"),
        n: x.len(),
    })
}

pub fn pearson(x: &[f64], y: &[f64], test: &PermutationTest) -> Result<Correlation> {
    let coefficient = pearson_r(x, y)?;
    Ok(Correlation {
        coefficient,
        p_value: permutation_p(x, y, coefficient, test, "pearson"),
        n: x.len(),
    })
}
