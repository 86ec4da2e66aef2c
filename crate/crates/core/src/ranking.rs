//! The ranking value exchanged between retrievers, fusion and evaluation.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::IdMap;

/// Which ranker produced a ranking entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Cort,
    Bm25,
    Fused,
    External,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Cort => "cort",
            Source::Bm25 => "bm25",
            Source::Fused => "fused",
            Source::External => "external",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = std::convert::Infallible;

    /// Unknown run tags map to [`Source::External`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cort" => Source::Cort,
            "bm25" => Source::Bm25,
            "fused" => Source::Fused,
            _ => Source::External,
        })
    }
}

/// A scored hit on an internal row/document index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: u32,
    pub score: f64,
}

impl Hit {
    /// Descending score, then ascending id.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc: String,
    pub score: f64,
    pub source: Source,
}

/// Ordered documents retrieved for one query. Position 0 is rank 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ranking {
    pub query: String,
    pub items: Vec<RankedDoc>,
}

impl Ranking {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            items: Vec::new(),
        }
    }

    pub fn from_hits(query: impl Into<String>, hits: &[Hit], ids: &IdMap, source: Source) -> Self {
        Self {
            query: query.into(),
            items: hits
                .iter()
                .map(|h| RankedDoc {
                    doc: ids.external(h.id).to_owned(),
                    score: h.score,
                    source,
                })
                .collect(),
        }
    }

    /// Builds a ranking from bare doc ids with synthetic `1/position` scores.
    pub fn from_docs<I, S>(query: impl Into<String>, docs: I, source: Source) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            query: query.into(),
            items: docs
                .into_iter()
                .enumerate()
                .map(|(i, d)| RankedDoc {
                    doc: d.into(),
                    score: 1.0 / (i + 1) as f64,
                    source,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.doc.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }

    pub fn truncated(&self, k: usize) -> Self {
        Self {
            query: self.query.clone(),
            items: self.items.iter().take(k).cloned().collect(),
        }
    }

    pub fn has_duplicates(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.items.len());
        !self.items.iter().all(|i| seen.insert(i.doc.as_str()))
    }

    pub fn is_score_sorted(&self) -> bool {
        self.items.windows(2).all(|w| w[0].score >= w[1].score)
    }
}

/// Sorts hits by [`Hit::rank_cmp`] and keeps the first `k`.
pub(crate) fn top_k_hits(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    if hits.len() > k && k > 0 {
        hits.select_nth_unstable_by(k - 1, Hit::rank_cmp);
        hits.truncate(k);
    }
    hits.sort_unstable_by(Hit::rank_cmp);
    hits.truncate(k);
    hits
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_by_score_then_id() {
        let hits = vec![
            Hit { id: 4, score: 0.5 },
            Hit { id: 1, score: 0.9 },
            Hit { id: 2, score: 0.5 },
            Hit { id: 3, score: 0.1 },
        ];
        let top = top_k_hits(hits, 3);
        let ids: Vec<u32> = top.iter().map(|h| h.id).collect();
        assert_eq!(ids, vec![1, 2, 4]);
    }

    #[test]
    fn unknown_tag_is_external() {
        assert_eq!("docTTTTTquery".parse::<Source>().unwrap(), Source::External);
        assert_eq!("bm25".parse::<Source>().unwrap(), Source::Bm25);
    }
}
