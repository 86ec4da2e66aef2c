//! Ranking metrics, TREC run files and the candidate saturation criterion.
//!
//! Binary metrics (MRR, Recall, MAP) count a document as relevant when its
//! grade reaches a threshold: 1 for MS MARCO style labels, 2 for TREC DL
//! style graded labels. NDCG always uses the raw grade as gain.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Qrels;
use crate::error::{Error, Result};
use crate::ranking::{RankedDoc, Ranking, Source};

/// Reciprocal rank of the first relevant document within the top `k`.
pub fn mrr_at(ranking: &Ranking, qrels: &Qrels, k: usize, threshold: u32) -> f64 {
    ranking
        .docs()
        .take(k)
        .position(|d| qrels.grade(&ranking.query, d) >= threshold)
        .map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

fn dcg(gains: impl Iterator<Item = u32>) -> f64 {
    gains
        .enumerate()
        .map(|(i, g)| f64::from(g) / ((i + 2) as f64).log2())
        .sum()
}

/// Graded NDCG@k with linear gain and `1/log2(rank + 1)` discount. Zero when
/// the query has no positive grade.
pub fn ndcg_at(ranking: &Ranking, qrels: &Qrels, k: usize) -> f64 {
    let mut ideal: Vec<u32> = qrels
        .judgments(&ranking.query)
        .map(|j| j.values().copied().filter(|&g| g > 0).collect())
        .unwrap_or_default();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(ranking.docs().take(k).map(|d| qrels.grade(&ranking.query, d))) / idcg
}

/// Fraction of relevant documents found in the top `k`; `None` without any
/// relevant document.
pub fn recall_at(ranking: &Ranking, qrels: &Qrels, k: usize, threshold: u32) -> Option<f64> {
    let total = qrels.relevant_count(&ranking.query, threshold);
    if total == 0 {
        return None;
    }
    let found = ranking
        .docs()
        .take(k)
        .filter(|d| qrels.grade(&ranking.query, d) >= threshold)
        .count();
    Some(found as f64 / total as f64)
}

/// Average precision over the top `k`, divided by the total relevant count;
/// `None` without any relevant document.
pub fn map_at(ranking: &Ranking, qrels: &Qrels, k: usize, threshold: u32) -> Option<f64> {
    let total = qrels.relevant_count(&ranking.query, threshold);
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.docs().take(k).enumerate() {
        if qrels.grade(&ranking.query, d) >= threshold {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub cuts: Vec<usize>,
    /// Minimum grade counted as relevant by MRR, Recall and MAP.
    pub relevance_threshold: u32,
    /// Evaluate judged queries missing from the run as empty rankings.
    pub include_missing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cuts: vec![10, 20, 50, 100, 200, 500, 1000],
            relevance_threshold: 1,
            include_missing: false,
        }
    }
}

impl EvalConfig {
    pub fn trec_dl() -> Self {
        Self {
            relevance_threshold: 2,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query: String,
    /// Metric name (`mrr@10`, `recall@100`, ...) to value. Recall and MAP are
    /// absent for queries without relevant documents.
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: EvalConfig,
    pub per_query: Vec<QueryMetrics>,
    pub means: BTreeMap<String, f64>,
    /// Queries per metric that entered the mean.
    pub counts: BTreeMap<String, usize>,
    /// Run queries without any judgment.
    pub skipped_unjudged: usize,
    /// Judged queries without a ranking in the run.
    pub missing_from_run: usize,
}

impl MetricReport {
    pub fn mean(&self, metric: &str) -> f64 {
        self.means.get(metric).copied().unwrap_or(0.0)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tqueries\tvalue\n");
        for (name, value) in &self.means {
            out.push_str(&format!("{name}\t{}\t{value:.6}\n", self.counts[name]));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn metric_names(cuts: &[usize]) -> Vec<String> {
    ["mrr", "ndcg", "recall", "map"]
        .iter()
        .flat_map(|m| cuts.iter().map(move |k| format!("{m}@{k}")))
        .collect()
}

/// Evaluates every ranking whose query has judgments.
pub fn evaluate(rankings: &[Ranking], qrels: &Qrels, config: &EvalConfig) -> Result<MetricReport> {
    if config.cuts.iter().any(|&k| k == 0) {
        return Err(Error::invalid("metric cuts must be at least 1"));
    }
    let mut per_query = Vec::new();
    let mut skipped = 0;
    let mut seen = HashSet::new();
    let evaluate_one = |ranking: &Ranking| {
        let mut values = BTreeMap::new();
        let t = config.relevance_threshold;
        for &k in &config.cuts {
            values.insert(format!("mrr@{k}"), mrr_at(ranking, qrels, k, t));
            values.insert(format!("ndcg@{k}"), ndcg_at(ranking, qrels, k));
            if let Some(r) = recall_at(ranking, qrels, k, t) {
                values.insert(format!("recall@{k}"), r);
            }
            if let Some(m) = map_at(ranking, qrels, k, t) {
                values.insert(format!("map@{k}"), m);
            }
        }
        QueryMetrics {
            query: ranking.query.clone(),
            values,
        }
    };
    for ranking in rankings {
        if !seen.insert(ranking.query.as_str()) {
            return Err(Error::DuplicateId(format!("query {} ranked twice", ranking.query)));
        }
        if qrels.contains_query(&ranking.query) {
            per_query.push(evaluate_one(ranking));
        } else {
            skipped += 1;
        }
    }
    let missing: Vec<&str> = qrels.queries().filter(|q| !seen.contains(q)).collect();
    if config.include_missing {
        for q in &missing {
            per_query.push(evaluate_one(&Ranking::new(*q)));
        }
    }
    let mut means = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for name in metric_names(&config.cuts) {
        let vals: Vec<f64> = per_query.iter().filter_map(|q| q.values.get(&name).copied()).collect();
        let mean = if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        means.insert(name.clone(), mean);
        counts.insert(name, vals.len());
    }
    if skipped > 0 {
        log::warn!("{skipped} run queries have no judgments and were skipped");
    }
    Ok(MetricReport {
        config: config.clone(),
        per_query,
        means,
        counts,
        skipped_unjudged: skipped,
        missing_from_run: missing.len(),
    })
}

/// Smallest `x` whose doubling improves the metric by less than 0.5 %.
/// Points must be successive doublings of `x`.
pub fn saturation_point(points: &[(usize, f64)]) -> Result<Option<usize>> {
    if points.len() < 2 {
        return Err(Error::invalid("saturation needs at least two points"));
    }
    if points.windows(2).any(|w| w[1].0 != w[0].0 * 2) {
        return Err(Error::invalid("candidate counts must be successive doublings"));
    }
    Ok(points
        .windows(2)
        .find(|w| w[1].1 < 1.005 * w[0].1)
        .map(|w| w[0].0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunWarnings {
    /// Queries whose lines were not in descending score order.
    pub resorted_queries: usize,
}

/// Reads a `qid Q0 docid rank score tag` run file. Queries keep their order
/// of first appearance. Lines of a query that are not sorted by descending
/// score are re-sorted by score, then doc id, with a warning.
pub fn read_run(path: &Path) -> Result<(Vec<Ranking>, RunWarnings)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_run(BufReader::new(file), path)
}

pub(crate) fn parse_run(reader: impl BufRead, path: &Path) -> Result<(Vec<Ranking>, RunWarnings)> {
    let mut order: Vec<Ranking> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut docs_seen: HashMap<String, HashSet<String>> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _, doc, _rank, score, tag] = fields[..] else {
            return Err(parse_err(format!("expected 6 fields, found {}", fields.len())));
        };
        let score: f64 = score
            .parse()
            .map_err(|_| parse_err(format!("invalid score {score:?}")))?;
        if !docs_seen.entry(qid.to_owned()).or_default().insert(doc.to_owned()) {
            return Err(parse_err(format!("document {doc} listed twice for query {qid}")));
        }
        let slot = *index.entry(qid.to_owned()).or_insert_with(|| {
            order.push(Ranking::new(qid));
            order.len() - 1
        });
        order[slot].items.push(RankedDoc {
            doc: doc.to_owned(),
            score,
            source: tag.parse().unwrap_or(Source::External),
        });
    }
    let mut warnings = RunWarnings::default();
    for ranking in &mut order {
        if !ranking.is_score_sorted() {
            warnings.resorted_queries += 1;
            ranking
                .items
                .sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc.cmp(&b.doc)));
        }
    }
    if warnings.resorted_queries > 0 {
        log::warn!(
            "{}: {} queries were not sorted by score and have been re-sorted",
            path.display(),
            warnings.resorted_queries
        );
    }
    Ok((order, warnings))
}

pub fn write_run(path: &Path, rankings: &[Ranking]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_run_to(&mut out, rankings).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_run_to(out: &mut impl Write, rankings: &[Ranking]) -> std::io::Result<()> {
    for ranking in rankings {
        for (i, item) in ranking.items.iter().enumerate() {
            writeln!(
                out,
                "{} Q0 {} {} {} {}",
                ranking.query,
                item.doc,
                i + 1,
                item.score,
                item.source
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ranking(docs: &[&str]) -> Ranking {
        Ranking::from_docs("q", docs.iter().copied(), Source::External)
    }

    fn qrels(pairs: &[(&str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for (d, g) in pairs {
            q.insert("q", *d, *g).unwrap();
        }
        q
    }

    #[test]
    fn mrr_examples() {
        let q = qrels(&[("c", 1)]);
        let docs: Vec<String> = (0..20).map(|i| format!("x{i}")).collect();
        let mut r = ranking(&["a", "b", "c"]);
        assert!((mrr_at(&r, &q, 10, 1) - 1.0 / 3.0).abs() < 1e-15);
        r = ranking(&["a", "b"]);
        assert_eq!(mrr_at(&r, &q, 10, 1), 0.0);
        let mut at11: Vec<&str> = docs.iter().take(10).map(String::as_str).collect();
        at11.push("c");
        assert_eq!(mrr_at(&ranking(&at11), &q, 10, 1), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let q = qrels(&[("a", 3), ("b", 2), ("c", 1)]);
        assert!((ndcg_at(&ranking(&["a", "b", "c"]), &q, 20) - 1.0).abs() < 1e-12);
        let single = qrels(&[("r", 1)]);
        let v = ndcg_at(&ranking(&["x", "r"]), &single, 20);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg_at(&ranking(&["x"]), &qrels(&[("x", 0)]), 20), 0.0);
    }

    #[test]
    fn recall_and_map_examples() {
        let q = qrels(&[("a", 1), ("b", 1)]);
        assert_eq!(recall_at(&ranking(&["a", "b", "x"]), &q, 10, 1), Some(1.0));
        assert_eq!(recall_at(&ranking(&["a", "x"]), &q, 10, 1), Some(0.5));
        assert_eq!(map_at(&ranking(&["a", "b"]), &q, 10, 1), Some(1.0));
        let one = qrels(&[("a", 1)]);
        assert_eq!(map_at(&ranking(&["x", "a"]), &one, 10, 1), Some(0.5));
        assert_eq!(recall_at(&ranking(&["a"]), &Qrels::new(), 10, 1), None);
    }

    #[test]
    fn graded_threshold() {
        let q = qrels(&[("a", 1), ("b", 2)]);
        let r = ranking(&["a", "b"]);
        assert_eq!(mrr_at(&r, &q, 10, 1), 1.0);
        assert_eq!(mrr_at(&r, &q, 10, 2), 0.5);
    }

    #[test]
    fn saturation_examples() {
        let bm25 = [(8, 26.9), (16, 30.3), (32, 33.1), (64, 34.7), (128, 35.7), (256, 36.6), (512, 36.6)];
        assert_eq!(saturation_point(&bm25).unwrap(), Some(256));
        let fused = [(8, 34.7), (16, 36.9), (32, 37.9), (64, 38.5), (128, 38.6), (256, 38.6), (512, 38.6)];
        assert_eq!(saturation_point(&fused).unwrap(), Some(64));
        let growing = [(8, 1.0), (16, 1.1), (32, 1.2)];
        assert_eq!(saturation_point(&growing).unwrap(), None);
        assert!(saturation_point(&[(8, 1.0)]).is_err());
        assert!(saturation_point(&[(8, 1.0), (24, 1.0)]).is_err());
    }

    #[test]
    fn empty_qrels_give_zero_report() {
        let report = evaluate(&[ranking(&["a"])], &Qrels::new(), &EvalConfig::default()).unwrap();
        assert!(report.means.values().all(|&v| v == 0.0));
        assert_eq!(report.skipped_unjudged, 1);
    }

    #[test]
    fn missing_queries_policy() {
        let mut q = qrels(&[("a", 1)]);
        q.insert("other", "z", 1).unwrap();
        let cfg = EvalConfig {
            cuts: vec![10],
            ..EvalConfig::default()
        };
        let r = evaluate(&[ranking(&["a"])], &q, &cfg).unwrap();
        assert_eq!(r.mean("mrr@10"), 1.0);
        assert_eq!(r.missing_from_run, 1);
        let all = evaluate(
            &[ranking(&["a"])],
            &q,
            &EvalConfig {
                include_missing: true,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(all.mean("mrr@10"), 0.5);
        assert!(all.to_tsv().contains("mrr@10\t2\t0.500000"));
    }

    #[test]
    fn run_round_trip_and_resorting() {
        let mut a = ranking(&["d1", "d2", "d3"]);
        a.items[0].source = Source::Bm25;
        let mut b = Ranking::from_docs("q2", ["x"], Source::Cort);
        b.items[0].score = 0.123456789;
        let mut buf = Vec::new();
        write_run_to(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let (back, warn) = parse_run(Cursor::new(buf), Path::new("run")).unwrap();
        assert_eq!(back, vec![a, b]);
        assert_eq!(warn.resorted_queries, 0);

        let text = "q Q0 b 1 1.0 t\nq Q0 a 2 2.0 t\nq Q0 c 3 2.0 t\n";
        let (back, warn) = parse_run(Cursor::new(text), Path::new("run")).unwrap();
        assert_eq!(back[0].docs().collect::<Vec<_>>(), ["a", "c", "b"]);
        assert_eq!(warn.resorted_queries, 1);

        assert!(parse_run(Cursor::new("q Q0 a 1 1.0 t\nq Q0 a 2 0.5 t\n"), Path::new("run")).is_err());
        assert!(parse_run(Cursor::new("q Q0 a 1\n"), Path::new("run")).is_err());
    }
}
