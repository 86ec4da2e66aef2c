use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::ranking::Ranking;

/// Per-query pools of term-based negatives plus the seeded generator that
/// draws from them.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    pools: BTreeMap<String, Vec<String>>,
    skipped: Vec<String>,
    rng: ChaCha8Rng,
}

/// Builds negative pools from term-based rankings.
///
/// For every query with at least one positive label, the pool holds the
/// documents at ranks `filter_n + 1 ..= pool_depth` of its ranking, minus every
/// document labelled with grade ≥ 1. Rankings shorter than `pool_depth` give
/// smaller pools. Queries whose pool ends up empty are skipped and tallied.
pub fn sample_negatives(
    qrels: &Qrels,
    rankings: &[Ranking],
    pool_depth: usize,
    filter_n: usize,
    seed: u64,
) -> Result<NegativeSampler> {
    if filter_n >= pool_depth {
        return Err(Error::invalid(format!(
            "filter depth {filter_n} leaves nothing of a pool of depth {pool_depth}"
        )));
    }
    let mut pools = BTreeMap::new();
    let mut skipped = Vec::new();
    for ranking in rankings {
        let positives: HashSet<&str> = qrels.relevant(&ranking.query, 1).collect();
        if positives.is_empty() {
            continue;
        }
        let pool: Vec<String> = ranking
            .docs()
            .take(pool_depth)
            .skip(filter_n)
            .filter(|d| !positives.contains(d))
            .map(str::to_owned)
            .collect();
        if pool.is_empty() {
            skipped.push(ranking.query.clone());
        } else {
            pools.insert(ranking.query.clone(), pool);
        }
    }
    if !skipped.is_empty() {
        log::warn!("{} queries skipped: negative pool exhausted", skipped.len());
    }
    Ok(NegativeSampler {
        pools,
        skipped,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl NegativeSampler {
    /// Uniform draw from the pool of `query`.
    pub fn draw(&mut self, query: &str) -> Option<&str> {
        let pool = self.pools.get(query)?;
        pool.choose(&mut self.rng).map(String::as_str)
    }

    pub fn pool(&self, query: &str) -> Option<&[String]> {
        self.pools.get(query).map(Vec::as_slice)
    }

    /// Queries with a non-empty pool, in id order.
    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }

    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::Source;

    fn ranking(n: usize) -> Ranking {
        Ranking::from_docs("q", (1..=n).map(|r| format!("d{r}")), Source::Bm25)
    }

    #[test]
    fn pool_excludes_top_ranks_and_positives() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d50", 1).unwrap();
        qrels.insert("q", "d3", 1).unwrap();
        qrels.insert("q", "d60", 0).unwrap();
        let sampler = sample_negatives(&qrels, &[ranking(120)], 100, 8, 0).unwrap();
        let pool = sampler.pool("q").unwrap();
        let expected: Vec<String> = (9..=100).filter(|&r| r != 50).map(|r| format!("d{r}")).collect();
        assert_eq!(pool, expected.as_slice());
    }

    #[test]
    fn all_positive_pool_is_skipped() {
        let mut qrels = Qrels::new();
        for r in 1..=100 {
            qrels.insert("q", format!("d{r}"), 1).unwrap();
        }
        let mut sampler = sample_negatives(&qrels, &[ranking(100)], 100, 8, 0).unwrap();
        assert_eq!(sampler.skipped(), ["q".to_string()]);
        assert!(sampler.draw("q").is_none());
    }

    #[test]
    fn draws_are_seeded() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 1).unwrap();
        let draw = |seed| {
            let mut s = sample_negatives(&qrels, &[ranking(100)], 100, 8, seed).unwrap();
            (0..20).map(|_| s.draw("q").unwrap().to_owned()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn unlabelled_queries_have_no_pool() {
        let sampler = sample_negatives(&Qrels::new(), &[ranking(10)], 10, 2, 0).unwrap();
        assert_eq!(sampler.queries().count(), 0);
        assert!(sampler.skipped().is_empty());
    }
}
