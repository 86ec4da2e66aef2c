//! Term-based ranking: tokenizer, inverted index and Okapi BM25 scoring.
//!
//! Scores follow the Lucene family:
//!
//! ```text
//! score(q, d) = Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·dl/avgdl))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Query terms are deduplicated before scoring.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{Corpus, IdMap};
use crate::error::{Error, Result};
use crate::ranking::{top_k_hits, Hit, Ranking, Source};

/// Lucene's classic English stop set.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it", "no", "not",
    "of", "on", "or", "such", "that", "the", "their", "then", "there", "these", "they", "this", "to", "was",
    "will", "with",
];

/// Text analysis options. Lowercasing is always on; the default does
/// nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Analyzer {
    pub remove_stopwords: bool,
    pub stem: bool,
}

impl Analyzer {
    /// Stopword removal plus plural stripping.
    pub fn english() -> Self {
        Self {
            remove_stopwords: true,
            stem: true,
        }
    }

    pub fn analyze(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !self.remove_stopwords || !STOPWORDS.contains(&t.as_str()))
            .map(|t| if self.stem { s_stem(&t) } else { t })
            .collect()
    }
}

/// Lowercased runs of Unicode alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Harman's "S" stemmer: strips English plural suffixes only.
fn s_stem(term: &str) -> String {
    let ends = |s: &str| term.ends_with(s);
    if ends("ies") && !ends("eies") && !ends("aies") {
        format!("{}y", &term[..term.len() - 3])
    } else if ends("es") && !ends("aes") && !ends("ees") && !ends("oes") {
        term[..term.len() - 1].to_owned()
    } else if ends("s") && !ends("us") && !ends("ss") && term.len() > 1 {
        term[..term.len() - 1].to_owned()
    } else {
        term.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    /// Values tuned for MS MARCO passages in Anserini.
    fn default() -> Self {
        Self { k1: 0.82, b: 0.68 }
    }
}

impl Bm25Params {
    pub fn lucene() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    params: Bm25Params,
    analyzer: Analyzer,
    doc_ids: IdMap,
    doc_lengths: Vec<u32>,
    avg_doc_len: f64,
    postings: HashMap<String, Vec<Posting>>,
}

pub fn build_index(corpus: &Corpus, params: Bm25Params, analyzer: Analyzer) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot index an empty corpus"));
    }
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    for (doc, (_, text)) in corpus.iter().enumerate() {
        let tokens = analyzer.analyze(text);
        doc_lengths.push(tokens.len() as u32);
        let mut tfs: HashMap<String, u32> = HashMap::new();
        for t in tokens {
            *tfs.entry(t).or_insert(0) += 1;
        }
        for (term, tf) in tfs {
            postings.entry(term).or_default().push(Posting { doc: doc as u32, tf });
        }
    }
    if doc_lengths.iter().all(|&l| l == 0) {
        return Err(Error::invalid("every document tokenizes to nothing"));
    }
    InvertedIndex::from_parts(params, analyzer, corpus.ids().clone(), doc_lengths, postings)
}

impl InvertedIndex {
    fn from_parts(
        params: Bm25Params,
        analyzer: Analyzer,
        doc_ids: IdMap,
        doc_lengths: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
    ) -> Result<Self> {
        if doc_lengths.is_empty() || doc_lengths.len() != doc_ids.len() {
            return Err(Error::invalid("document count mismatch in index"));
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_len = total as f64 / doc_lengths.len() as f64;
        for list in postings.values() {
            if !list.windows(2).all(|w| w[0].doc < w[1].doc) {
                return Err(Error::invalid("postings not sorted by doc id"));
            }
            if list.iter().any(|p| p.doc as usize >= doc_lengths.len()) {
                return Err(Error::invalid("posting refers to unknown doc"));
            }
        }
        Ok(Self {
            params,
            analyzer,
            doc_ids,
            doc_lengths,
            avg_doc_len,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn analyzer(&self) -> Analyzer {
        self.analyzer
    }

    pub fn doc_ids(&self) -> &IdMap {
        &self.doc_ids
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_len(&self, doc: u32) -> u32 {
        self.doc_lengths[doc as usize]
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.postings(term).len() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * f64::from(self.doc_len(doc)) / self.avg_doc_len;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Distinct analyzed query terms in first-occurrence order.
    pub fn query_terms(&self, query: &str) -> Vec<String> {
        let mut terms = self.analyzer.analyze(query);
        let mut seen = std::collections::HashSet::new();
        terms.retain(|t| seen.insert(t.clone()));
        terms
    }

    /// Top-`k` internal hits. An empty result means no query term is indexed.
    pub fn search_hits(&self, query: &str, k: usize) -> Vec<Hit> {
        let terms = self.query_terms(query);
        let mut scores = vec![0.0f64; self.num_docs()];
        let mut touched = Vec::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in list {
                let slot = &mut scores[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += self.term_weight(idf, p.tf, p.doc);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let hits = touched
            .into_iter()
            .map(|doc| Hit {
                id: doc,
                score: scores[doc as usize],
            })
            .collect();
        top_k_hits(hits, k)
    }

    /// BM25 score of a single document, zero when it shares no term with the query.
    pub fn score_doc(&self, query: &str, doc: u32) -> f64 {
        self.query_terms(query)
            .iter()
            .filter_map(|term| {
                let list = self.postings(term);
                list.binary_search_by_key(&doc, |p| p.doc)
                    .ok()
                    .map(|i| self.term_weight(self.idf(term), list[i].tf, doc))
            })
            .sum()
    }

    pub fn search_batch(&self, queries: &[&str], k: usize) -> Vec<Vec<Hit>> {
        queries.par_iter().map(|q| self.search_hits(q, k)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Serialized layout (all little-endian):
    ///
    /// ```text
    /// "CORTBM25" | u32 version | f64 k1 | f64 b | u8 stopwords | u8 stem
    /// u32 N | N × (u32 len, utf-8 external id) | N × u32 doc length
    /// u32 T | T × (u32 len, utf-8 term, u32 P, P × (u32 doc delta, u32 tf))
    /// ```
    ///
    /// Terms are written in byte order; doc ids are delta-encoded per list.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BM25_MAGIC);
        put_u32(&mut out, BM25_VERSION);
        out.extend_from_slice(&self.params.k1.to_le_bytes());
        out.extend_from_slice(&self.params.b.to_le_bytes());
        out.push(u8::from(self.analyzer.remove_stopwords));
        out.push(u8::from(self.analyzer.stem));
        put_u32(&mut out, self.num_docs() as u32);
        for id in self.doc_ids.iter() {
            put_str(&mut out, id);
        }
        for &len in &self.doc_lengths {
            put_u32(&mut out, len);
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort_unstable();
        put_u32(&mut out, terms.len() as u32);
        for term in terms {
            put_str(&mut out, term);
            let list = &self.postings[term];
            put_u32(&mut out, list.len() as u32);
            let mut prev = 0;
            for p in list {
                put_u32(&mut out, p.doc - prev);
                put_u32(&mut out, p.tf);
                prev = p.doc;
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != BM25_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(BM25_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32()?;
        if version != BM25_VERSION {
            return Err(Error::invalid(format!("unsupported index version {version}")));
        }
        let k1 = r.f64()?;
        let b = r.f64()?;
        let analyzer = Analyzer {
            remove_stopwords: r.u8()? != 0,
            stem: r.u8()? != 0,
        };
        let n = r.u32()? as usize;
        let mut doc_ids = IdMap::new();
        for _ in 0..n {
            doc_ids.push(r.string()?)?;
        }
        let doc_lengths = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let term_count = r.u32()? as usize;
        let mut postings = HashMap::with_capacity(term_count);
        for _ in 0..term_count {
            let term = r.string()?;
            let len = r.u32()? as usize;
            let mut list = Vec::with_capacity(len.min(n));
            let mut doc = 0u32;
            for i in 0..len {
                let delta = r.u32()?;
                if i > 0 && delta == 0 {
                    return Err(Error::invalid("zero delta in postings"));
                }
                doc = doc
                    .checked_add(delta)
                    .ok_or_else(|| Error::invalid("posting delta overflow"))?;
                list.push(Posting { doc, tf: r.u32()? });
            }
            postings.insert(term, list);
        }
        if r.pos != bytes.len() {
            return Err(Error::SizeMismatch(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Self::from_parts(Bm25Params { k1, b }, analyzer, doc_ids, doc_lengths, postings)
    }
}

/// Ranks the index for `query`, returning at most `k` documents.
pub fn bm25_search(index: &InvertedIndex, query_id: &str, query_text: &str, k: usize) -> Ranking {
    let hits = index.search_hits(query_text, k);
    Ranking::from_hits(query_id, &hits, index.doc_ids(), Source::Bm25)
}

const BM25_MAGIC: &[u8; 8] = b"CORTBM25";
const BM25_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::SizeMismatch("index file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::invalid("invalid utf-8 in index"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[(&str, &str)]) -> Corpus {
        let mut c = Corpus::new();
        for (id, t) in texts {
            c.push(*id, *t).unwrap();
        }
        c
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("aluminum weigh 14ft"), vec!["aluminum", "weigh", "14ft"]);
        assert_eq!(tokenize("Größe—ÉTÉ"), vec!["größe", "été"]);
    }

    #[test]
    fn analyzer_toggles() {
        let a = Analyzer {
            remove_stopwords: true,
            stem: true,
        };
        assert_eq!(a.analyze("The cats and the ponies"), vec!["cat", "pony"]);
        assert_eq!(Analyzer::default().analyze("The cats"), vec!["the", "cats"]);
    }

    #[test]
    fn single_doc_term_frequencies() {
        let idx = build_index(&corpus(&[("d", "a a b")]), Bm25Params::default(), Analyzer::default()).unwrap();
        assert_eq!(idx.postings("a"), &[Posting { doc: 0, tf: 2 }]);
        assert_eq!(idx.postings("b"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.doc_len(0), 3);
        assert_eq!(idx.avg_doc_len(), 3.0);
    }

    #[test]
    fn hand_checked_postings() {
        let idx = build_index(
            &corpus(&[("x", "red fish"), ("y", "blue fish fish"), ("z", "red red red")]),
            Bm25Params::default(),
            Analyzer::default(),
        )
        .unwrap();
        assert_eq!(idx.postings("red"), &[Posting { doc: 0, tf: 1 }, Posting { doc: 2, tf: 3 }]);
        assert_eq!(idx.postings("fish"), &[Posting { doc: 0, tf: 1 }, Posting { doc: 1, tf: 2 }]);
        assert_eq!(idx.postings("blue"), &[Posting { doc: 1, tf: 1 }]);
        assert_eq!(idx.num_terms(), 3);
        assert!((idx.avg_doc_len() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_doc_score_is_ln_four_thirds() {
        let idx = build_index(&corpus(&[("d", "a")]), Bm25Params::default(), Analyzer::default()).unwrap();
        let hits = idx.search_hits("a", 1);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].score - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn unknown_terms_give_empty_ranking() {
        let idx = build_index(&corpus(&[("d", "a b")]), Bm25Params::default(), Analyzer::default()).unwrap();
        assert!(idx.search_hits("zzz", 10).is_empty());
        assert!(idx.search_hits("", 10).is_empty());
    }

    #[test]
    fn all_empty_corpus_rejected() {
        assert!(build_index(&corpus(&[("d", "!!!"), ("e", "--")]), Bm25Params::default(), Analyzer::default()).is_err());
        assert!(build_index(&Corpus::new(), Bm25Params::default(), Analyzer::default()).is_err());
    }

    #[test]
    fn serialization_round_trip_and_determinism() {
        let c = corpus(&[("x", "red fish"), ("y", "blue fish fish"), ("z", "red red red")]);
        let a = build_index(&c, Bm25Params::lucene(), Analyzer { remove_stopwords: true, stem: false }).unwrap();
        let b = build_index(&c, Bm25Params::lucene(), Analyzer { remove_stopwords: true, stem: false }).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = InvertedIndex::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        let bytes = a.to_bytes();
        assert!(InvertedIndex::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn score_doc_matches_search() {
        let c = corpus(&[("x", "red fish"), ("y", "blue fish fish"), ("z", "red red red")]);
        let idx = build_index(&c, Bm25Params::default(), Analyzer::default()).unwrap();
        for h in idx.search_hits("red fish", 3) {
            assert_eq!(h.score, idx.score_doc("red fish", h.id));
        }
        assert_eq!(idx.score_doc("blue", 0), 0.0);
    }
}
