//! Desk-scale second stage: a point-wise logistic re-ranker over retrieval
//! features and an oracle re-ranker that knows the labels. Both drive the
//! candidates-versus-quality study.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::InvertedIndex;
use crate::corpus::{Corpus, Qrels};
use crate::dense::dot;
use crate::encoder::RepresentationStore;
use crate::error::{Error, Result};
use crate::eval::{mrr_at, recall_at};
use crate::ranking::{RankedDoc, Ranking};

const CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy `−[y·ln ζ + (1 − y)·ln(1 − ζ)]`, with `ζ` clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(confidence: f64, label: bool) -> f64 {
    let z = confidence.clamp(CLAMP, 1.0 - CLAMP);
    if label {
        -z.ln()
    } else {
        -(1.0 - z).ln()
    }
}

/// Number of features produced by [`FeatureExtractor`].
pub const FEATURES: usize = 4;

/// Per-pair features: BM25 score, dense dot product, fraction of query terms
/// present in the passage, and `ln(1 + passage length)`.
pub struct FeatureExtractor<'a> {
    pub bm25: &'a InvertedIndex,
    pub queries: &'a Corpus,
    pub query_reprs: &'a RepresentationStore,
    pub passage_reprs: &'a RepresentationStore,
}

impl FeatureExtractor<'_> {
    pub fn features(&self, query: &str, doc: &str) -> Result<[f64; FEATURES]> {
        let text = self
            .queries
            .text_of(query)
            .ok_or_else(|| Error::UnknownId(query.to_owned()))?;
        let d = self
            .bm25
            .doc_ids()
            .internal(doc)
            .ok_or_else(|| Error::UnknownId(doc.to_owned()))?;
        let q_repr = self
            .query_reprs
            .get(query)
            .ok_or_else(|| Error::UnknownId(query.to_owned()))?;
        let d_repr = self
            .passage_reprs
            .get(doc)
            .ok_or_else(|| Error::UnknownId(doc.to_owned()))?;
        let terms = self.bm25.query_terms(text);
        let overlap = if terms.is_empty() {
            0.0
        } else {
            let present = terms
                .iter()
                .filter(|t| self.bm25.postings(t).binary_search_by_key(&d, |p| p.doc).is_ok())
                .count();
            present as f64 / terms.len() as f64
        };
        Ok([
            self.bm25.score_doc(text, d),
            f64::from(dot(q_repr, d_repr)),
            overlap,
            (1.0 + f64::from(self.bm25.doc_len(d))).ln(),
        ])
    }
}

/// `ζ = σ(w·φ + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticReranker {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticReranker {
    pub fn zeros(features: usize) -> Self {
        Self {
            weights: vec![0.0; features],
            bias: 0.0,
        }
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn confidence(&self, features: &[f64]) -> f64 {
        sigmoid(self.logit(features))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankerConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_query: usize,
    /// First-stage depth negatives are drawn from.
    pub candidate_depth: usize,
    pub seed: u64,
}

impl Default for RerankerConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.5,
            negatives_per_query: 4,
            candidate_depth: 1000,
            seed: 7,
        }
    }
}

/// Labelled `(query, doc)` pairs: every positive of each ranked query plus
/// random non-relevant docs from its top `candidate_depth` candidates.
pub fn sample_training_pairs(
    first_stage: &[Ranking],
    qrels: &Qrels,
    config: &RerankerConfig,
) -> Vec<(String, String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pairs = Vec::new();
    for ranking in first_stage {
        let positives: Vec<&str> = qrels.relevant(&ranking.query, 1).collect();
        if positives.is_empty() {
            continue;
        }
        let pos_set: HashSet<&str> = positives.iter().copied().collect();
        let negatives: Vec<&str> = ranking
            .docs()
            .take(config.candidate_depth)
            .filter(|d| !pos_set.contains(d))
            .collect();
        for p in positives {
            pairs.push((ranking.query.clone(), p.to_owned(), true));
        }
        for n in negatives.choose_multiple(&mut rng, config.negatives_per_query) {
            pairs.push((ranking.query.clone(), (*n).to_owned(), false));
        }
    }
    pairs
}

/// Full-batch gradient descent on the mean BCE. Features are standardized
/// while fitting and the scaling is folded back into the returned weights.
/// Returns the model and the mean loss before each epoch plus the final loss.
pub fn train_reranker(
    features: &[Vec<f64>],
    labels: &[bool],
    config: &RerankerConfig,
) -> Result<(LogisticReranker, Vec<f64>)> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid("need one label per feature vector and at least one pair"));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim || f.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("feature vectors must share a length and be finite"));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        log::warn!("re-ranker training labels are all one class");
    }
    let n = features.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = features.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|f| (0..dim).map(|j| (f[j] - mean[j]) / scale[j]).collect())
        .collect();

    let mut model = LogisticReranker::zeros(dim);
    let mean_loss = |m: &LogisticReranker| {
        standardized
            .iter()
            .zip(labels)
            .map(|(x, &y)| bce_loss(m.confidence(x), y))
            .sum::<f64>()
            / n
    };
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        trace.push(mean_loss(&model));
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, &y) in standardized.iter().zip(labels) {
            // d BCE / d logit = ζ − y
            let r = model.confidence(x) - f64::from(u8::from(y));
            gb += r;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v;
            }
        }
        model.bias -= config.learning_rate * gb / n;
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g / n;
        }
    }
    trace.push(mean_loss(&model));

    let weights: Vec<f64> = model.weights.iter().zip(&scale).map(|(w, s)| w / s).collect();
    let bias = model.bias - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    Ok((LogisticReranker { weights, bias }, trace))
}

/// Reorders first-stage candidates.
pub trait CandidateReranker {
    /// A permutation of `candidates` truncated to `k`.
    fn rerank(&self, candidates: &Ranking, k: usize) -> Result<Ranking>;
}

fn reorder(candidates: &Ranking, mut keyed: Vec<(usize, f64)>, k: usize) -> Ranking {
    // Stable sort keeps the original order among equal keys.
    keyed.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = Ranking::new(candidates.query.clone());
    for (pos, (orig, key)) in keyed.into_iter().take(k).enumerate() {
        let item = &candidates.items[orig];
        out.items.push(RankedDoc {
            doc: item.doc.clone(),
            score: if key.is_finite() { key } else { -(pos as f64) },
            source: item.source,
        });
    }
    out
}

/// Perfect re-ranker: higher grades first, original order otherwise.
pub struct OracleReranker<'a> {
    pub qrels: &'a Qrels,
}

impl CandidateReranker for OracleReranker<'_> {
    fn rerank(&self, candidates: &Ranking, k: usize) -> Result<Ranking> {
        let keyed = candidates
            .docs()
            .enumerate()
            .map(|(i, d)| (i, f64::from(self.qrels.grade(&candidates.query, d))))
            .collect();
        Ok(reorder(candidates, keyed, k))
    }
}

/// Logistic model over [`FeatureExtractor`] features. Sorting uses the logit,
/// which orders like the confidence without saturating to ties.
pub struct LogisticRanker<'a> {
    pub model: &'a LogisticReranker,
    pub extractor: &'a FeatureExtractor<'a>,
}

impl CandidateReranker for LogisticRanker<'_> {
    fn rerank(&self, candidates: &Ranking, k: usize) -> Result<Ranking> {
        let keyed = candidates
            .docs()
            .enumerate()
            .map(|(i, d)| Ok((i, self.model.logit(&self.extractor.features(&candidates.query, d)?))))
            .collect::<Result<_>>()?;
        Ok(reorder(candidates, keyed, k))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub candidates: usize,
    pub mrr_at_10: f64,
    pub recall_at_20: f64,
    pub recall_all: f64,
}

/// Re-ranks the top `x` candidates of each judged query for every `x` and
/// reports mean MRR@10, Recall@20 and Recall over all `x` candidates.
pub fn candidate_study(
    first_stage: &[Ranking],
    reranker: &dyn CandidateReranker,
    xs: &[usize],
    qrels: &Qrels,
    threshold: u32,
) -> Result<Vec<StudyRow>> {
    let judged: Vec<&Ranking> = first_stage.iter().filter(|r| qrels.contains_query(&r.query)).collect();
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        if x == 0 {
            return Err(Error::invalid("candidate count must be positive"));
        }
        let (mut mrr, mut r20, mut rall, mut with_rel) = (0.0, 0.0, 0.0, 0usize);
        for ranking in &judged {
            let top = ranking.truncated(x);
            let reranked = reranker.rerank(&top, x)?;
            mrr += mrr_at(&reranked, qrels, 10, threshold);
            if let Some(r) = recall_at(&reranked, qrels, 20, threshold) {
                r20 += r;
                rall += recall_at(&reranked, qrels, reranked.len(), threshold).unwrap_or(0.0);
                with_rel += 1;
            }
        }
        let q = judged.len().max(1) as f64;
        let rq = with_rel.max(1) as f64;
        rows.push(StudyRow {
            candidates: x,
            mrr_at_10: mrr / q,
            recall_at_20: r20 / rq,
            recall_all: rall / rq,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::Source;

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, true) - 2f64.ln()).abs() < 1e-15);
        assert!((bce_loss(0.5, false) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_loss(1.0 - 1e-12, true) < 1e-6);
        assert!(bce_loss(1.0, false).is_finite());
        assert!(bce_loss(0.0, true).is_finite());
    }

    #[test]
    fn bce_logit_gradient_matches_finite_differences() {
        for &logit in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
            for &y in &[false, true] {
                let h = 1e-5;
                let f = |z: f64| bce_loss(sigmoid(z), y);
                let numeric = (f(logit + h) - f(logit - h)) / (2.0 * h);
                let analytic = sigmoid(logit) - f64::from(u8::from(y));
                assert!((numeric - analytic).abs() < 1e-8, "{logit} {y}");
            }
        }
    }

    #[test]
    fn separable_set_is_fit_perfectly() {
        let features: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 1.0]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let (model, trace) = train_reranker(&features, &labels, &RerankerConfig::default()).unwrap();
        let acc = features
            .iter()
            .zip(&labels)
            .filter(|(f, &y)| (model.confidence(f) > 0.5) == y)
            .count();
        assert_eq!(acc, 20);
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn zero_epochs_keeps_initial_weights() {
        let cfg = RerankerConfig {
            epochs: 0,
            ..RerankerConfig::default()
        };
        let (model, _) = train_reranker(&[vec![1.0], vec![2.0]], &[true, false], &cfg).unwrap();
        assert_eq!(model.weights, vec![0.0]);
        assert_eq!(model.bias, 0.0);
    }

    #[test]
    fn oracle_promotes_relevant() {
        let docs: Vec<String> = (1..=50).map(|i| format!("d{i}")).collect();
        let cands = Ranking::from_docs("q", docs.clone(), Source::Bm25);
        let mut q = Qrels::new();
        q.insert("q", "d40", 1).unwrap();
        let out = OracleReranker { qrels: &q }.rerank(&cands, 50).unwrap();
        assert_eq!(out.items[0].doc, "d40");
        assert_eq!(out.items[1].doc, "d1");
        assert_eq!(out.len(), 50);
        assert_eq!(OracleReranker { qrels: &q }.rerank(&cands, 5).unwrap().len(), 5);
    }

    #[test]
    fn study_with_oracle_is_monotone() {
        let mut q = Qrels::new();
        let mut runs = Vec::new();
        for i in 0..10 {
            let query = format!("q{i}");
            q.insert(&query, format!("d{}", 3 * i + 1), 1).unwrap();
            runs.push(Ranking::from_docs(&query, (0..64).map(|d| format!("d{d}")), Source::Bm25));
        }
        let rows = candidate_study(&runs, &OracleReranker { qrels: &q }, &[8, 16, 32, 64, 128], &q, 1).unwrap();
        assert!(rows.windows(2).all(|w| w[1].mrr_at_10 >= w[0].mrr_at_10));
        for r in &rows {
            assert_eq!(r.mrr_at_10, r.recall_all);
        }
        assert_eq!(rows[3].mrr_at_10, 1.0);
        assert_eq!(rows[4], StudyRow { candidates: 128, ..rows[3].clone() });
    }
}
