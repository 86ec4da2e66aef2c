//! Retrieval latency harness.
//!
//! Each row times one stage over a query set, first one query at a time and
//! then in batches. Only the search (or query encoding) call is inside the
//! measured region; inputs are prepared and indexes loaded beforehand, and a
//! warmup pass runs before any sample is recorded.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::InvertedIndex;
use crate::dense::{AnnGraph, DenseIndex};
use crate::encoder::ProjectionHead;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub k: usize,
    pub repetitions: usize,
    pub warmup: usize,
    /// Batch mode size; single-query mode always runs.
    pub batch_size: usize,
    pub workers: usize,
    pub eps_values: Vec<f32>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            repetitions: 3,
            warmup: 1,
            batch_size: 32,
            workers: rayon::current_num_threads(),
            eps_values: vec![0.01, 0.1, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
}

impl LatencyStats {
    pub fn from_samples(mut samples_ms: Vec<f64>) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::invalid("no latency samples"));
        }
        samples_ms.sort_by(f64::total_cmp);
        let n = samples_ms.len();
        let pick = |q: f64| samples_ms[((q * (n - 1) as f64).round() as usize).min(n - 1)];
        Ok(Self {
            mean_ms: samples_ms.iter().sum::<f64>() / n as f64,
            median_ms: pick(0.5),
            p95_ms: pick(0.95),
            samples: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    /// `encoding` or `retrieval`.
    pub stage: String,
    /// Per-query latency, one query per call.
    pub single: LatencyStats,
    /// Per-query latency in batch mode (batch time / batch length).
    pub batch: Option<LatencyStats>,
    /// Mean nodes scored per query, graph search only.
    pub mean_visited: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub workers: usize,
    pub queries: usize,
    pub k: usize,
    pub repetitions: usize,
    pub batch_size: usize,
    pub rows: Vec<BenchRow>,
}

impl LatencyReport {
    pub fn row(&self, name: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tstage\tsingle_mean_ms\tsingle_median_ms\tsingle_p95_ms\tbatch_mean_ms\n");
        for r in &self.rows {
            let batch = r.batch.as_ref().map_or("-".to_owned(), |b| format!("{:.4}", b.mean_ms));
            out.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{batch}\n",
                r.name, r.stage, r.single.mean_ms, r.single.median_ms, r.single.p95_ms
            ));
        }
        out
    }
}

/// One retrieval method under test.
pub enum Retriever<'a> {
    Bm25(&'a InvertedIndex),
    Exhaustive(&'a DenseIndex),
    Ann {
        graph: &'a AnnGraph,
        index: &'a DenseIndex,
        eps: f32,
    },
}

impl Retriever<'_> {
    pub fn name(&self) -> String {
        match self {
            Retriever::Bm25(_) => "bm25".into(),
            Retriever::Exhaustive(idx) => format!("exhaustive(P={})", idx.partitions().len()),
            Retriever::Ann { eps, .. } => format!("ann(eps={eps})"),
        }
    }
}

/// Prepared inputs: raw query texts for BM25, context vectors for encoding
/// and encoded representations for dense retrieval.
pub struct BenchQueries<'a> {
    pub texts: Vec<&'a str>,
    pub context: Vec<&'a [f32]>,
    pub reprs: Vec<Vec<f32>>,
}

fn check(config: &BenchConfig, n: usize) -> Result<()> {
    if config.repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    if n == 0 {
        return Err(Error::invalid("empty query set"));
    }
    if config.batch_size == 0 || config.k == 0 || config.workers == 0 {
        return Err(Error::invalid("batch size, k and workers must be positive"));
    }
    Ok(())
}

fn time_ms<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Times `single(i)` for every query and `batch(range)` for consecutive
/// chunks. Returns stats plus the values returned by `single` on the last
/// repetition.
fn measure(
    n: usize,
    config: &BenchConfig,
    single: &(dyn Fn(usize) -> Result<usize> + Sync),
    batch: Option<&(dyn Fn(std::ops::Range<usize>) -> Result<()> + Sync)>,
) -> Result<(LatencyStats, Option<LatencyStats>, Vec<usize>)> {
    for _ in 0..config.warmup {
        for i in 0..n {
            single(i)?;
        }
    }
    let mut samples = Vec::with_capacity(n * config.repetitions);
    let mut last = vec![0; n];
    for _ in 0..config.repetitions {
        for (i, slot) in last.iter_mut().enumerate() {
            let (out, ms) = time_ms(|| single(i));
            *slot = out?;
            samples.push(ms);
        }
    }
    let single_stats = LatencyStats::from_samples(samples)?;
    let batch_stats = match batch {
        None => None,
        Some(run) => {
            for _ in 0..config.warmup {
                run(0..config.batch_size.min(n))?;
            }
            let mut samples = Vec::new();
            for _ in 0..config.repetitions {
                let mut start = 0;
                while start < n {
                    let end = (start + config.batch_size).min(n);
                    let (out, ms) = time_ms(|| run(start..end));
                    out?;
                    samples.push(ms / (end - start) as f64);
                    start = end;
                }
            }
            Some(LatencyStats::from_samples(samples)?)
        }
    };
    Ok((single_stats, batch_stats, last))
}

/// Times one retriever on the prepared queries.
pub fn bench_retriever(retriever: &Retriever<'_>, queries: &BenchQueries<'_>, config: &BenchConfig) -> Result<BenchRow> {
    let n = match retriever {
        Retriever::Bm25(_) => queries.texts.len(),
        _ => queries.reprs.len(),
    };
    check(config, n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let k = config.k;
    pool.install(|| {
        let (single, batch, visited) = match *retriever {
            Retriever::Bm25(index) => {
                let single = |i: usize| Ok(index.search_hits(queries.texts[i], k).len());
                let batch = |r: std::ops::Range<usize>| {
                    index.search_batch(&queries.texts[r], k);
                    Ok(())
                };
                let (s, b, _) = measure(n, config, &single, Some(&batch))?;
                (s, b, None)
            }
            Retriever::Exhaustive(index) => {
                let single = |i: usize| Ok(index.exhaustive_hits(&queries.reprs[i], k)?.len());
                let batch = |r: std::ops::Range<usize>| {
                    let qs: Vec<&[f32]> = queries.reprs[r].iter().map(Vec::as_slice).collect();
                    index.exhaustive_batch(&qs, k).map(|_| ())
                };
                let (s, b, _) = measure(n, config, &single, Some(&batch))?;
                (s, b, None)
            }
            Retriever::Ann { graph, index, eps } => {
                let single = |i: usize| Ok(graph.search_hits(index, &queries.reprs[i], k, eps)?.1.visited);
                let batch = |r: std::ops::Range<usize>| {
                    queries.reprs[r]
                        .par_iter()
                        .try_for_each(|q| graph.search_hits(index, q, k, eps).map(|_| ()))
                };
                let (s, b, visited) = measure(n, config, &single, Some(&batch))?;
                (s, b, Some(visited.iter().sum::<usize>() as f64 / n as f64))
            }
        };
        Ok(BenchRow {
            name: retriever.name(),
            stage: "retrieval".into(),
            single,
            batch,
            mean_visited: visited,
        })
    })
}

/// Times query encoding: projection plus normalization.
pub fn bench_encoding(head: &ProjectionHead, queries: &BenchQueries<'_>, config: &BenchConfig) -> Result<BenchRow> {
    let n = queries.context.len();
    check(config, n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    pool.install(|| {
        let single = |i: usize| Ok(head.encode_normalized(queries.context[i])?.len());
        let batch = |r: std::ops::Range<usize>| {
            queries.context[r]
                .par_iter()
                .try_for_each(|c| head.encode_normalized(c).map(|_| ()))
        };
        let (single, batch, _) = measure(n, config, &single, Some(&batch))?;
        Ok(BenchRow {
            name: "query encoding".into(),
            stage: "encoding".into(),
            single,
            batch,
            mean_visited: None,
        })
    })
}

/// The standard table: query encoding, BM25, exhaustive search and one graph
/// search row per configured `eps`.
pub fn bench(
    bm25: &InvertedIndex,
    head: &ProjectionHead,
    index: &DenseIndex,
    graph: Option<&AnnGraph>,
    queries: &BenchQueries<'_>,
    config: &BenchConfig,
) -> Result<LatencyReport> {
    check(config, queries.texts.len())?;
    let mut rows = vec![
        bench_encoding(head, queries, config)?,
        bench_retriever(&Retriever::Bm25(bm25), queries, config)?,
        bench_retriever(&Retriever::Exhaustive(index), queries, config)?,
    ];
    if let Some(graph) = graph {
        for &eps in &config.eps_values {
            rows.push(bench_retriever(&Retriever::Ann { graph, index, eps }, queries, config)?);
        }
    }
    Ok(LatencyReport {
        workers: config.workers,
        queries: queries.texts.len(),
        k: config.k,
        repetitions: config.repetitions,
        batch_size: config.batch_size,
        rows,
    })
}
