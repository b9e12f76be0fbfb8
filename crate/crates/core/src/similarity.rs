//! Pluggable text similarity scorers.
//!
//! Used for few-shot exemplar selection (context vs context), for pairing
//! out-of-domain attributes with in-domain ones, and for flagging
//! synonym-style false negatives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::fixtures;
use crate::Result;

pub trait Similarity: Send + Sync {
    /// Score in `[0, 1]`; 1 means identical for the scorer's purposes.
    fn similarity(&self, a: &str, b: &str) -> f64;
}

impl<S: Similarity + ?Sized> Similarity for Box<S> {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        (**self).similarity(a, b)
    }
}

impl<S: Similarity + ?Sized> Similarity for &S {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        (**self).similarity(a, b)
    }
}

/// Lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard overlap of word-token sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenJaccard;

impl Similarity for TokenJaccard {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let a: BTreeSet<String> = tokenize(a).into_iter().collect();
        let b: BTreeSet<String> = tokenize(b).into_iter().collect();
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        let inter = a.intersection(&b).count();
        let union = a.union(&b).count();
        inter as f64 / union as f64
    }
}

/// Cosine similarity of padded character n-gram count vectors.
#[derive(Debug, Clone, Copy)]
pub struct CharNgramCosine {
    pub n: usize,
}

impl Default for CharNgramCosine {
    fn default() -> Self {
        Self { n: 3 }
    }
}

impl CharNgramCosine {
    fn profile(&self, text: &str) -> BTreeMap<String, f64> {
        let padded: Vec<char> = format!(" {} ", text.trim().to_lowercase())
            .chars()
            .collect();
        let mut counts = BTreeMap::new();
        if padded.len() < self.n {
            *counts.entry(padded.iter().collect()).or_insert(0.0) += 1.0;
            return counts;
        }
        for window in padded.windows(self.n) {
            *counts.entry(window.iter().collect()).or_insert(0.0) += 1.0;
        }
        counts
    }
}

impl Similarity for CharNgramCosine {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let (pa, pb) = (self.profile(a), self.profile(b));
        let dot: f64 = pa
            .iter()
            .filter_map(|(k, v)| pb.get(k).map(|w| v * w))
            .sum();
        let na: f64 = pa.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = pb.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            (dot / (na * nb)).clamp(0.0, 1.0)
        }
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine over vectors produced by an external embedding function
/// (e.g. a sentence encoder exposed through FFI or a service).
pub struct EmbeddingCosine<F> {
    embed: F,
}

impl<F> EmbeddingCosine<F>
where
    F: Fn(&str) -> Vec<f32> + Send + Sync,
{
    pub fn new(embed: F) -> Self {
        Self { embed }
    }
}

impl<F> Similarity for EmbeddingCosine<F>
where
    F: Fn(&str) -> Vec<f32> + Send + Sync,
{
    fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine(&(self.embed)(a), &(self.embed)(b)).clamp(0.0, 1.0)
    }
}

/// Hand-curated attribute pairs score 1.0; everything else defers to the
/// fallback scorer.
pub struct CuratedPairs {
    pairs: BTreeSet<(String, String)>,
    fallback: Box<dyn Similarity>,
}

impl CuratedPairs {
    pub fn new<I, A, B>(pairs: I, fallback: Box<dyn Similarity>) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let pairs = pairs
            .into_iter()
            .map(|(a, b)| ordered(a.into(), b.into()))
            .collect();
        Self { pairs, fallback }
    }

    /// The bundled attribute synonym pairs over a character-trigram fallback.
    pub fn bundled() -> Self {
        let pairs = fixtures::parse_two_column(fixtures::ATTRIBUTE_SYNONYMS)
            .expect("bundled synonym pairs parse");
        Self::new(pairs, Box::new(CharNgramCosine::default()))
    }

    pub fn from_file(path: &Path, fallback: Box<dyn Similarity>) -> Result<Self> {
        let pairs = fixtures::read_two_column(path)?;
        Ok(Self::new(pairs, fallback))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn ordered(a: String, b: String) -> (String, String) {
    let (a, b) = (a.trim().to_lowercase(), b.trim().to_lowercase());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Similarity for CuratedPairs {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        let key = ordered(a.to_string(), b.to_string());
        if key.0 == key.1 || self.pairs.contains(&key) {
            1.0
        } else {
            self.fallback.similarity(a, b)
        }
    }
}

impl fmt::Debug for CuratedPairs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CuratedPairs")
            .field("pairs", &self.pairs.len())
            .finish_non_exhaustive()
    }
}

/// Scorer selection as it appears in run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    #[default]
    Jaccard,
    CharTrigram,
    Curated,
}

impl SimilarityKind {
    pub fn build(self) -> Box<dyn Similarity> {
        match self {
            SimilarityKind::Jaccard => Box::new(TokenJaccard),
            SimilarityKind::CharTrigram => Box::new(CharNgramCosine::default()),
            SimilarityKind::Curated => Box::new(CuratedPairs::bundled()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jaccard_basics() {
        let s = TokenJaccard;
        assert_eq!(s.similarity("Soak the beans", "soak the beans."), 1.0);
        assert_eq!(s.similarity("a b", "c d"), 0.0);
        assert!((s.similarity("a b c", "a b d") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trigram_identity_and_range() {
        let s = CharNgramCosine::default();
        assert!((s.similarity("width", "width") - 1.0).abs() < 1e-12);
        let x = s.similarity("tension", "tenseness");
        assert!(x > 0.0 && x < 1.0);
        assert_eq!(s.similarity("", "abc") >= 0.0, true);
    }

    #[test]
    fn curated_pairs_are_symmetric() {
        let s = CuratedPairs::bundled();
        assert_eq!(s.similarity("posture", "balance"), 1.0);
        assert_eq!(s.similarity("balance", "posture"), 1.0);
        assert!(s.similarity("width", "resistance") < 0.5);
    }

    #[test]
    fn embedding_cosine_uses_vectors() {
        let s = EmbeddingCosine::new(|t: &str| {
            if t.starts_with('a') {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        });
        assert_eq!(s.similarity("ab", "ac"), 1.0);
        assert_eq!(s.similarity("ab", "bc"), 0.0);
    }
}
