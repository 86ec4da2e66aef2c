//! Synthetic collections with controlled vocabulary mismatch.
//!
//! Every concept has two surface forms that never co-occur as strings. Queries
//! always use the first form. A configurable fraction of relevant passages
//! use only the second form, which makes them invisible to term matching,
//! while the stand-in context encoder maps both forms close together. Each
//! query also gets distractor passages sharing some of its terms.
//!
//! The stand-in encoder averages per-token vectors: concept tokens live in a
//! "semantic" subspace, filler tokens in a separate nuisance subspace, and a
//! segment offset separates query vectors from passage vectors.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, WeightedIndex};

use crate::corpus::{write_embeddings, ContextEmbeddingStore, Corpus, EmbeddingKind, IdMap, Qrels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub n_train_queries: usize,
    pub n_test_queries: usize,
    pub n_concepts: usize,
    pub concepts_per_query: usize,
    /// Fraction of queries whose relevant passage uses only second forms.
    pub mismatch_fraction: f64,
    /// Fraction of the remaining queries whose relevant passage keeps the
    /// first form of the query's popular concept only.
    pub partial_fraction: f64,
    /// Zipf exponent of concept popularity; 0 draws concepts uniformly.
    /// Background passages and the first concept of each query follow it.
    pub concept_skew: f64,
    pub distractors_per_query: usize,
    pub filler_vocab: usize,
    pub filler_per_doc: (usize, usize),
    pub semantic_dim: usize,
    pub nuisance_dim: usize,
    /// Std-dev of the per-form perturbation around a concept vector.
    pub form_noise: f64,
    pub nuisance_scale: f64,
    /// Std-dev of the per-dimension noise added to every context vector.
    pub context_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 10_000,
            n_train_queries: 500,
            n_test_queries: 200,
            n_concepts: 3000,
            concepts_per_query: 3,
            mismatch_fraction: 0.5,
            partial_fraction: 0.6,
            concept_skew: 0.6,
            distractors_per_query: 6,
            filler_vocab: 400,
            filler_per_doc: (12, 24),
            semantic_dim: 32,
            nuisance_dim: 16,
            form_noise: 0.25,
            nuisance_scale: 1.0,
            context_noise: 0.003,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub passages: Corpus,
    pub train_queries: Corpus,
    pub test_queries: Corpus,
    pub qrels: Qrels,
    pub passage_context: ContextEmbeddingStore,
    /// Context vectors of train and test queries.
    pub query_context: ContextEmbeddingStore,
    /// `(first form, second form)` per concept.
    pub synonyms: Vec<(String, String)>,
    /// Queries whose relevant passage shares no term with them.
    pub mismatched: BTreeSet<String>,
}

const FIRST: [&str; 10] = ["ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "ze"];
const SECOND: [&str; 10] = ["bar", "dol", "fen", "gim", "hus", "jor", "kel", "mop", "nix", "pul"];
const FILLER: [&str; 10] = ["a", "e", "i", "o", "u", "ay", "ee", "oo", "ou", "ai"];

fn spell(mut n: usize, syllables: &[&str; 10], prefix: &str, digits: usize) -> String {
    let mut parts = Vec::with_capacity(digits);
    for _ in 0..digits {
        parts.push(syllables[n % 10]);
        n /= 10;
    }
    parts.reverse();
    format!("{prefix}{}", parts.concat())
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v = gaussian(rng, n, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Match {
    Full,
    Partial,
    None,
}

enum Token {
    Concept { concept: usize, second_form: bool },
    Filler(usize),
}

struct Vocab {
    first: Vec<String>,
    second: Vec<String>,
    filler: Vec<String>,
    first_vecs: Vec<Vec<f64>>,
    second_vecs: Vec<Vec<f64>>,
    filler_vecs: Vec<Vec<f64>>,
}

impl Vocab {
    fn word(&self, t: &Token) -> &str {
        match *t {
            Token::Concept { concept, second_form: false } => &self.first[concept],
            Token::Concept { concept, second_form: true } => &self.second[concept],
            Token::Filler(f) => &self.filler[f],
        }
    }

    fn vector(&self, t: &Token) -> &[f64] {
        match *t {
            Token::Concept { concept, second_form: false } => &self.first_vecs[concept],
            Token::Concept { concept, second_form: true } => &self.second_vecs[concept],
            Token::Filler(f) => &self.filler_vecs[f],
        }
    }
}

pub fn synth_corpus(config: &SynthConfig) -> Result<SynthData> {
    let n_queries = config.n_train_queries + config.n_test_queries;
    if config.concepts_per_query < 2 || config.concepts_per_query > config.n_concepts {
        return Err(Error::invalid("need at least two concepts per query and enough concepts"));
    }
    if n_queries * (1 + config.distractors_per_query) > config.n_docs {
        return Err(Error::invalid("too few documents for the requested queries and distractors"));
    }
    if !(0.0..=1.0).contains(&config.mismatch_fraction) || !(0.0..=1.0).contains(&config.partial_fraction) {
        return Err(Error::invalid("mismatch and partial fractions must lie in [0, 1]"));
    }
    if !(config.concept_skew >= 0.0 && config.concept_skew.is_finite()) {
        return Err(Error::invalid("concept skew must be finite and non-negative"));
    }
    if config.filler_per_doc.0 > config.filler_per_doc.1 || config.filler_vocab == 0 {
        return Err(Error::invalid("invalid filler configuration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.semantic_dim + config.nuisance_dim;
    let concept_digits = config.n_concepts.saturating_sub(1).to_string().len().max(3);
    let filler_digits = config.filler_vocab.saturating_sub(1).to_string().len().max(2);

    let embed_semantic = |v: Vec<f64>| {
        let mut full = v;
        full.resize(dim, 0.0);
        full
    };
    let mut vocab = Vocab {
        first: (0..config.n_concepts).map(|c| spell(c, &FIRST, "", concept_digits)).collect(),
        second: (0..config.n_concepts).map(|c| spell(c, &SECOND, "", concept_digits)).collect(),
        filler: (0..config.filler_vocab).map(|f| spell(f, &FILLER, "w", filler_digits)).collect(),
        first_vecs: Vec::new(),
        second_vecs: Vec::new(),
        filler_vecs: Vec::new(),
    };
    for _ in 0..config.n_concepts {
        let base = unit_gaussian(&mut rng, config.semantic_dim);
        let form = |rng: &mut ChaCha8Rng| {
            let noise = gaussian(rng, config.semantic_dim, config.form_noise / (config.semantic_dim as f64).sqrt());
            embed_semantic(base.iter().zip(noise).map(|(b, n)| b + n).collect())
        };
        let a = form(&mut rng);
        let b = form(&mut rng);
        vocab.first_vecs.push(a);
        vocab.second_vecs.push(b);
    }
    for _ in 0..config.filler_vocab {
        let mut v = vec![0.0; config.semantic_dim];
        v.extend(gaussian(&mut rng, config.nuisance_dim, config.nuisance_scale));
        vocab.filler_vecs.push(v);
    }
    let query_segment = gaussian(&mut rng, dim, 0.05);
    let passage_segment = gaussian(&mut rng, dim, 0.05);

    // Popularity ranks are a random permutation so that concept ids carry no
    // frequency information.
    let mut popularity: Vec<usize> = (0..config.n_concepts).collect();
    popularity.shuffle(&mut rng);
    let weights: Vec<f64> = popularity
        .iter()
        .map(|&r| (r as f64 + 1.0).powf(-config.concept_skew))
        .collect();
    let popular = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let draw_concepts = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let c = popular.sample(rng);
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    };
    let fillers = |rng: &mut ChaCha8Rng| -> Vec<Token> {
        let n = rng.gen_range(config.filler_per_doc.0..=config.filler_per_doc.1);
        (0..n).map(|_| Token::Filler(rng.gen_range(0..config.filler_vocab))).collect()
    };

    let mut query_concepts = Vec::with_capacity(n_queries);
    let mut docs: Vec<(Vec<Token>, Option<usize>)> = Vec::with_capacity(config.n_docs);
    let mut mismatched_idx = BTreeSet::new();
    let n_mismatch = (config.mismatch_fraction * n_queries as f64).round() as usize;
    let n_partial = (config.partial_fraction * (n_queries - n_mismatch) as f64).round() as usize;
    let mut match_kind: Vec<Match> = (0..n_queries)
        .map(|i| {
            if i < n_mismatch {
                Match::None
            } else if i < n_mismatch + n_partial {
                Match::Partial
            } else {
                Match::Full
            }
        })
        .collect();
    match_kind.shuffle(&mut rng);

    for (q, &kind) in match_kind.iter().enumerate() {
        // One popular concept plus uniformly drawn ones: the popular term
        // alone matches many passages, while pairs of query concepts rarely
        // co-occur outside the query's own passages.
        let mut concepts = draw_concepts(&mut rng, 1);
        while concepts.len() < config.concepts_per_query {
            let c = rng.gen_range(0..config.n_concepts);
            if !concepts.contains(&c) {
                concepts.push(c);
            }
        }
        if kind == Match::None {
            mismatched_idx.insert(q);
        }
        let mut relevant: Vec<Token> = concepts
            .iter()
            .enumerate()
            .map(|(i, &c)| Token::Concept {
                concept: c,
                second_form: match kind {
                    Match::None => true,
                    Match::Partial => i > 0,
                    Match::Full => false,
                },
            })
            .collect();
        relevant.extend(fillers(&mut rng));
        relevant.shuffle(&mut rng);
        docs.push((relevant, Some(q)));

        for _ in 0..config.distractors_per_query {
            let keep = rng.gen_range(1..config.concepts_per_query);
            let mut tokens: Vec<Token> = concepts
                .choose_multiple(&mut rng, keep)
                .flat_map(|&c| {
                    let reps = if rng.gen_bool(0.5) { 2 } else { 1 };
                    (0..reps).map(move |_| Token::Concept {
                        concept: c,
                        second_form: false,
                    })
                })
                .collect::<Vec<_>>();
            for c in draw_concepts(&mut rng, 2) {
                tokens.push(Token::Concept {
                    concept: c,
                    second_form: rng.gen_bool(0.5),
                });
            }
            tokens.extend(fillers(&mut rng));
            tokens.shuffle(&mut rng);
            docs.push((tokens, None));
        }
        query_concepts.push(concepts);
    }
    while docs.len() < config.n_docs {
        let n = rng.gen_range(2..=4);
        let mut tokens: Vec<Token> = draw_concepts(&mut rng, n)
            .into_iter()
            .map(|c| Token::Concept {
                concept: c,
                second_form: rng.gen_bool(0.5),
            })
            .collect();
        tokens.extend(fillers(&mut rng));
        tokens.shuffle(&mut rng);
        docs.push((tokens, None));
    }
    docs.shuffle(&mut rng);

    let encode = |tokens: &[Token], segment: &[f64], rng: &mut ChaCha8Rng| -> Vec<f32> {
        let mut acc = vec![0.0; dim];
        for t in tokens {
            for (a, v) in acc.iter_mut().zip(vocab.vector(t)) {
                *a += v;
            }
        }
        let n = tokens.len() as f64;
        let noise = gaussian(rng, dim, config.context_noise);
        acc.iter()
            .zip(segment)
            .zip(noise)
            .map(|((a, s), e)| (a / n + s + e) as f32)
            .collect()
    };

    let mut passages = Corpus::new();
    let mut passage_rows = Vec::with_capacity(config.n_docs * dim);
    let mut qrels = Qrels::new();
    for (i, (tokens, owner)) in docs.iter().enumerate() {
        let id = format!("p{i}");
        let text: Vec<&str> = tokens.iter().map(|t| vocab.word(t)).collect();
        passages.push(id.clone(), text.join(" "))?;
        passage_rows.extend(encode(tokens, &passage_segment, &mut rng));
        if let Some(q) = owner {
            qrels.insert(format!("q{q}"), id, 1)?;
        }
    }

    let mut train_queries = Corpus::new();
    let mut test_queries = Corpus::new();
    let mut query_rows = Vec::with_capacity(n_queries * dim);
    let mut query_ids = IdMap::new();
    for (q, concepts) in query_concepts.iter().enumerate() {
        let mut tokens: Vec<Token> = concepts
            .iter()
            .map(|&c| Token::Concept {
                concept: c,
                second_form: false,
            })
            .collect();
        tokens.shuffle(&mut rng);
        let id = format!("q{q}");
        let text: Vec<&str> = tokens.iter().map(|t| vocab.word(t)).collect();
        let target = if q < config.n_train_queries {
            &mut train_queries
        } else {
            &mut test_queries
        };
        target.push(id.clone(), text.join(" "))?;
        query_ids.push(id)?;
        query_rows.extend(encode(&tokens, &query_segment, &mut rng));
    }

    Ok(SynthData {
        passage_context: ContextEmbeddingStore::new(dim, passage_rows, passages.ids().clone(), EmbeddingKind::Passage)?,
        query_context: ContextEmbeddingStore::new(dim, query_rows, query_ids, EmbeddingKind::Query)?,
        passages,
        train_queries,
        test_queries,
        qrels,
        synonyms: vocab.first.iter().cloned().zip(vocab.second.iter().cloned()).collect(),
        mismatched: mismatched_idx.into_iter().map(|q| format!("q{q}")).collect(),
    })
}

impl SynthData {
    /// Writes every artifact into `dir` with fixed file names.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.passages.write_tsv(&dir.join("collection.tsv"))?;
        self.train_queries.write_tsv(&dir.join("queries.train.tsv"))?;
        self.test_queries.write_tsv(&dir.join("queries.test.tsv"))?;
        self.qrels.write(&dir.join("qrels.tsv"))?;
        write_embeddings(&self.passage_context, &dir.join("passages.emb"), &dir.join("passages.ids"))?;
        write_embeddings(&self.query_context, &dir.join("queries.emb"), &dir.join("queries.ids"))?;
        let synonyms: String = self.synonyms.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
        std::fs::write(dir.join("synonyms.tsv"), synonyms).map_err(|e| Error::io(dir, e))?;
        let mismatched: String = self.mismatched.iter().map(|q| format!("{q}\n")).collect();
        std::fs::write(dir.join("mismatched.txt"), mismatched).map_err(|e| Error::io(dir, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mismatch: f64) -> SynthConfig {
        SynthConfig {
            n_docs: 600,
            n_train_queries: 30,
            n_test_queries: 20,
            n_concepts: 400,
            mismatch_fraction: mismatch,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shapes_and_labels() {
        let data = synth_corpus(&small(0.5)).unwrap();
        assert_eq!(data.passages.len(), 600);
        assert_eq!(data.train_queries.len(), 30);
        assert_eq!(data.test_queries.len(), 20);
        assert_eq!(data.qrels.query_count(), 50);
        assert_eq!(data.mismatched.len(), 25);
        assert_eq!(data.query_context.len(), 50);
        assert_eq!(data.passage_context.dim(), 48);
    }

    #[test]
    fn mismatched_relevant_passages_share_no_terms() {
        let data = synth_corpus(&small(0.5)).unwrap();
        for (q, text) in data.train_queries.iter().chain(data.test_queries.iter()) {
            let q_terms: BTreeSet<&str> = text.split(' ').collect();
            let doc = data.qrels.relevant(q, 1).next().unwrap();
            let d_terms: BTreeSet<&str> = data.passages.text_of(doc).unwrap().split(' ').collect();
            let shared = q_terms.intersection(&d_terms).count();
            if data.mismatched.contains(q) {
                assert_eq!(shared, 0, "{q}");
            } else {
                assert!(shared == 1 || shared == q_terms.len(), "{q}");
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_corpus(&small(0.3)).unwrap().write(a.path()).unwrap();
        synth_corpus(&small(0.3)).unwrap().write(b.path()).unwrap();
        for f in ["collection.tsv", "qrels.tsv", "passages.emb", "queries.emb", "queries.test.tsv"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn rejects_impossible_configs() {
        let mut c = small(0.5);
        c.n_docs = 10;
        assert!(synth_corpus(&c).is_err());
        c = small(1.5);
        assert!(synth_corpus(&c).is_err());
    }
}
