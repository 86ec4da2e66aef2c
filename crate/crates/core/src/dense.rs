//! Top-k retrieval over unit-norm representations.
//!
//! [`DenseIndex`] stores the vectors split into near-equal contiguous
//! partitions and answers queries exhaustively: every partition produces its
//! own top-k by dot product and the partial lists are merged. [`AnnGraph`]
//! adds a navigable neighbor graph searched best-first with a `(1 + ε)`
//! range around the current k-th best distance.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{decode_matrix, encode_matrix, read_u32_at, IdMap};
use crate::encoder::{RepresentationStore, UNIT_NORM_TOLERANCE};
use crate::error::{Error, Result};
use crate::ranking::{top_k_hits, Hit, Ranking, Source};

pub const INDEX_MAGIC: &[u8; 8] = b"CORTIDX1";
pub const ANN_MAGIC: &[u8; 8] = b"CORTANN1";

/// Dot product with a fixed summation order. Exhaustive and graph search
/// both score through this function, so their scores agree bit for bit.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0f32;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    vectors: Vec<f32>,
    ids: IdMap,
    partitions: Vec<Range<usize>>,
}

/// `count` rows split into `parts` contiguous ranges whose sizes differ by
/// at most one; the larger ranges come first.
pub fn balanced_partitions(count: usize, parts: usize) -> Vec<Range<usize>> {
    let base = count / parts;
    let extra = count % parts;
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Builds a partitioned index; rows must be unit norm.
pub fn build_dense(store: &RepresentationStore, partitions: usize) -> Result<DenseIndex> {
    DenseIndex::new(
        store.dim(),
        store.as_slice().to_vec(),
        store.ids().clone(),
        partitions,
    )
}

impl DenseIndex {
    pub fn new(dim: usize, vectors: Vec<f32>, ids: IdMap, partitions: usize) -> Result<Self> {
        if partitions == 0 {
            return Err(Error::invalid("partition count must be at least 1"));
        }
        if dim == 0 || vectors.len() != dim * ids.len() {
            return Err(Error::SizeMismatch(format!(
                "{} values for {} ids of dim {dim}",
                vectors.len(),
                ids.len()
            )));
        }
        for (row, v) in vectors.chunks_exact(dim).enumerate() {
            let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::invalid(format!("row {row} has norm {n}, expected 1")));
            }
        }
        let partitions = balanced_partitions(ids.len(), partitions);
        Ok(Self {
            dim,
            vectors,
            ids,
            partitions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn partitions(&self) -> &[Range<usize>] {
        &self.partitions
    }

    pub fn row(&self, i: u32) -> &[f32] {
        let s = i as usize * self.dim;
        &self.vectors[s..s + self.dim]
    }

    pub fn score(&self, query: &[f32], i: u32) -> f32 {
        dot(query, self.row(i))
    }

    pub fn with_partitions(&self, partitions: usize) -> Result<Self> {
        if partitions == 0 {
            return Err(Error::invalid("partition count must be at least 1"));
        }
        Ok(Self {
            partitions: balanced_partitions(self.len(), partitions),
            ..self.clone()
        })
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    fn scan_partition(&self, range: Range<usize>, query: &[f32], k: usize) -> Vec<Hit> {
        let hits = range
            .map(|i| Hit {
                id: i as u32,
                score: f64::from(self.score(query, i as u32)),
            })
            .collect();
        top_k_hits(hits, k)
    }

    /// Exact top-`k` by dot product; ties go to the smaller row id. The
    /// result is the same for every partition count. `k` larger than the
    /// index returns every row.
    pub fn exhaustive_hits(&self, query: &[f32], k: usize) -> Result<Vec<Hit>> {
        self.check_query(query)?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let partial: Vec<Vec<Hit>> = self
            .partitions
            .par_iter()
            .map(|r| self.scan_partition(r.clone(), query, k))
            .collect();
        Ok(top_k_hits(partial.concat(), k))
    }

    /// Exhaustive search for a batch of queries. Each partition is scanned
    /// once for the whole batch.
    pub fn exhaustive_batch(&self, queries: &[&[f32]], k: usize) -> Result<Vec<Vec<Hit>>> {
        for q in queries {
            self.check_query(q)?;
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let partial: Vec<Vec<Vec<Hit>>> = self
            .partitions
            .par_iter()
            .map(|r| {
                let mut per_query: Vec<Vec<Hit>> = vec![Vec::with_capacity(r.len()); queries.len()];
                for i in r.clone() {
                    let row = self.row(i as u32);
                    for (q, hits) in queries.iter().zip(per_query.iter_mut()) {
                        hits.push(Hit {
                            id: i as u32,
                            score: f64::from(dot(q, row)),
                        });
                    }
                }
                per_query.into_iter().map(|h| top_k_hits(h, k)).collect()
            })
            .collect();
        Ok((0..queries.len())
            .map(|qi| top_k_hits(partial.iter().flat_map(|p| p[qi].iter().copied()).collect(), k))
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = encode_matrix(
            INDEX_MAGIC,
            &[self.partitions.len() as u32],
            self.len(),
            self.dim,
            &self.vectors,
        )?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        self.ids.write(&ids_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (count, dim, vectors) = decode_matrix(&bytes, INDEX_MAGIC, 1)?;
        let partitions = read_u32_at(&bytes, 16) as usize;
        let ids = IdMap::read(&ids_path(path))?;
        if ids.len() != count {
            return Err(Error::SizeMismatch(format!("{} ids for {count} rows", ids.len())));
        }
        Self::new(dim, vectors, ids, partitions)
    }
}

/// Sidecar id file next to a binary index: `<path>.ids`.
pub fn ids_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".ids");
    p.into()
}

pub fn exhaustive_search(index: &DenseIndex, query_id: &str, query: &[f32], k: usize) -> Result<Ranking> {
    let hits = index.exhaustive_hits(query, k)?;
    Ok(Ranking::from_hits(query_id, &hits, index.ids(), Source::Cort))
}

/// Bytes needed for `count` vectors of `dim` f32 values, without overhead.
pub fn estimate_index_size(count: u64, dim: u64) -> Result<u64> {
    count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::invalid("index size overflows u64"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnParams {
    pub max_degree: usize,
    pub build_width: usize,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            max_degree: 32,
            build_width: 200,
        }
    }
}

/// Directed neighbor graph over the rows of a [`DenseIndex`]. Node 0 is the
/// entry point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnGraph {
    max_degree: usize,
    adjacency: Vec<Vec<u32>>,
}

/// Candidate ordered by score: greater means closer to the query.
#[derive(Debug, Clone, Copy)]
struct Scored {
    score: f32,
    id: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    /// Higher score first, then smaller id, matching [`Hit::rank_cmp`].
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Statistics of one graph search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Nodes whose score was computed.
    pub visited: usize,
    /// Nodes whose neighbor lists were expanded.
    pub expanded: usize,
}

struct VisitedSet {
    marks: Vec<u32>,
    epoch: u32,
}

impl VisitedSet {
    fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Marks `i`, returning whether it was unmarked.
    fn insert(&mut self, i: u32) -> bool {
        let m = &mut self.marks[i as usize];
        if *m == self.epoch {
            false
        } else {
            *m = self.epoch;
            true
        }
    }
}

/// Best-first search used both for graph construction and for queries.
///
/// A node is expanded while its distance `1 − score` is within
/// `(1 + range)` of the current `k`-th best distance; `results` keeps the
/// best `k` seen. With `range = 0` this is a plain beam search of width `k`.
fn graph_search(
    index: &DenseIndex,
    adjacency: &[Vec<u32>],
    query: &[f32],
    k: usize,
    range: f32,
    visited: &mut VisitedSet,
) -> (Vec<Scored>, SearchStats) {
    let mut stats = SearchStats::default();
    visited.reset();
    let entry = Scored {
        score: index.score(query, 0),
        id: 0,
    };
    visited.insert(0);
    stats.visited += 1;
    let mut frontier = BinaryHeap::from([entry]);
    // Min-heap of results via Reverse so the worst kept result is on top.
    let mut results = BinaryHeap::from([std::cmp::Reverse(entry)]);
    let bound = |results: &BinaryHeap<std::cmp::Reverse<Scored>>| -> f32 {
        if results.len() < k {
            f32::INFINITY
        } else {
            (1.0 + range) * (1.0 - results.peek().expect("non-empty").0.score)
        }
    };
    while let Some(current) = frontier.pop() {
        if 1.0 - current.score > bound(&results) {
            break;
        }
        stats.expanded += 1;
        for &n in &adjacency[current.id as usize] {
            if !visited.insert(n) {
                continue;
            }
            stats.visited += 1;
            let cand = Scored {
                score: index.score(query, n),
                id: n,
            };
            if 1.0 - cand.score <= bound(&results) {
                frontier.push(cand);
            }
            if results.len() < k {
                results.push(std::cmp::Reverse(cand));
            } else if cand > results.peek().expect("non-empty").0 {
                results.pop();
                results.push(std::cmp::Reverse(cand));
            }
        }
    }
    let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    (out, stats)
}

pub fn build_ann(index: &DenseIndex, params: AnnParams) -> Result<AnnGraph> {
    AnnGraph::build(index, params)
}

impl AnnGraph {
    /// Greedy insertion in row order. Each new node links to the
    /// `max_degree` best rows found by a width-`build_width` beam search over
    /// the graph built so far; reverse edges are added and an overfull list
    /// drops its farthest neighbor, preferring one that keeps another
    /// in-edge. Reachability from node 0 is audited (and repaired if needed)
    /// before returning.
    pub fn build(index: &DenseIndex, params: AnnParams) -> Result<Self> {
        let r = params.max_degree;
        if r < 2 {
            return Err(Error::invalid(format!("max degree {r} < 2")));
        }
        let width = params.build_width.max(r);
        let n = index.len();
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut in_degree = vec![0u32; n];
        let mut visited = VisitedSet::new(n);
        for node in 1..n as u32 {
            let query = index.row(node);
            let (found, _) = graph_search(index, &adjacency[..node as usize], query, width, 0.0, &mut visited);
            let neighbors: Vec<u32> = found.iter().take(r).map(|s| s.id).collect();
            for &nb in &neighbors {
                in_degree[nb as usize] += 1;
                adjacency[nb as usize].push(node);
                in_degree[node as usize] += 1;
                if adjacency[nb as usize].len() > r {
                    Self::prune(index, &mut adjacency, &mut in_degree, nb, r);
                }
            }
            adjacency[node as usize] = neighbors;
        }
        let mut graph = Self {
            max_degree: r,
            adjacency,
        };
        graph.repair_reachability(index)?;
        Ok(graph)
    }

    fn prune(index: &DenseIndex, adjacency: &mut [Vec<u32>], in_degree: &mut [u32], node: u32, r: usize) {
        let base = index.row(node);
        let list = &mut adjacency[node as usize];
        list.sort_by(|&a, &b| {
            dot(base, index.row(b))
                .total_cmp(&dot(base, index.row(a)))
                .then_with(|| a.cmp(&b))
        });
        // Farthest neighbor whose removal does not orphan it, else the farthest.
        let victim = list
            .iter()
            .rposition(|&nb| in_degree[nb as usize] > 1)
            .unwrap_or(list.len() - 1);
        let removed = list.remove(victim);
        in_degree[removed as usize] -= 1;
        debug_assert!(list.len() <= r);
    }

    /// Breadth-first reachability from node 0.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.adjacency.len()];
        if seen.is_empty() {
            return seen;
        }
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &n in &self.adjacency[v as usize] {
                if !seen[n as usize] {
                    seen[n as usize] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.reachable().iter().all(|&s| s)
    }

    /// Links every unreachable node from the closest reachable node that can
    /// take the edge: one with a free slot, or one whose farthest neighbor
    /// stays reachable when replaced.
    fn repair_reachability(&mut self, index: &DenseIndex) -> Result<()> {
        let mut reachable = self.reachable();
        let mut repairs = 0;
        while let Some(orphan) = reachable.iter().position(|&s| !s) {
            let target = index.row(orphan as u32);
            let mut hosts: Vec<usize> = (0..self.adjacency.len()).filter(|&v| reachable[v]).collect();
            hosts.sort_by(|&a, &b| {
                dot(target, index.row(b as u32))
                    .total_cmp(&dot(target, index.row(a as u32)))
                    .then_with(|| a.cmp(&b))
            });
            let mut linked = false;
            'hosts: for host in hosts {
                if self.adjacency[host].len() < self.max_degree {
                    self.adjacency[host].push(orphan as u32);
                    linked = true;
                    break;
                }
                let base = index.row(host as u32);
                let mut order: Vec<usize> = (0..self.adjacency[host].len()).collect();
                order.sort_by(|&a, &b| {
                    let (na, nb) = (self.adjacency[host][a], self.adjacency[host][b]);
                    dot(base, index.row(na)).total_cmp(&dot(base, index.row(nb)))
                });
                for slot in order {
                    let old = std::mem::replace(&mut self.adjacency[host][slot], orphan as u32);
                    let now = self.reachable();
                    if reachable.iter().zip(&now).all(|(&before, &after)| !before || after) {
                        linked = true;
                        break 'hosts;
                    }
                    self.adjacency[host][slot] = old;
                }
            }
            if !linked {
                return Err(Error::invalid("graph cannot be made reachable within max degree"));
            }
            repairs += 1;
            reachable = self.reachable();
        }
        if repairs > 0 {
            log::debug!("ann build: {repairs} reachability repairs");
        }
        Ok(())
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    /// Graph search with search range coefficient `eps`.
    pub fn search_hits(&self, index: &DenseIndex, query: &[f32], k: usize, eps: f32) -> Result<(Vec<Hit>, SearchStats)> {
        index.check_query(query)?;
        if index.len() != self.len() {
            return Err(Error::SizeMismatch(format!(
                "graph has {} nodes, index {} rows",
                self.len(),
                index.len()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(eps >= 0.0) {
            return Err(Error::invalid("eps must be non-negative"));
        }
        if index.is_empty() {
            return Ok((Vec::new(), SearchStats::default()));
        }
        let mut visited = VisitedSet::new(index.len());
        let (found, stats) = graph_search(index, &self.adjacency, query, k, eps, &mut visited);
        let hits = found
            .into_iter()
            .map(|s| Hit {
                id: s.id,
                score: f64::from(s.score),
            })
            .collect();
        Ok((hits, stats))
    }

    /// `CORTANN1 | u32 R | u32 node count | per node: u32 len, len × u32`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(ANN_MAGIC);
        out.extend_from_slice(&(self.max_degree as u32).to_le_bytes());
        out.extend_from_slice(&(self.adjacency.len() as u32).to_le_bytes());
        for list in &self.adjacency {
            out.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for n in list {
                out.extend_from_slice(&n.to_le_bytes());
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[..8] != ANN_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(ANN_MAGIC).into_owned(),
                found: String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned(),
            });
        }
        let max_degree = read_u32_at(&bytes, 8) as usize;
        let n = read_u32_at(&bytes, 12) as usize;
        let mut pos = 16;
        let mut next = || -> Result<u32> {
            if pos + 4 > bytes.len() {
                return Err(Error::SizeMismatch("ann file truncated".into()));
            }
            let v = read_u32_at(&bytes, pos);
            pos += 4;
            Ok(v)
        };
        let mut adjacency = Vec::with_capacity(n);
        for _ in 0..n {
            let len = next()? as usize;
            let list = (0..len).map(|_| next()).collect::<Result<Vec<_>>>()?;
            if list.iter().any(|&v| v as usize >= n) {
                return Err(Error::invalid("neighbor id out of range"));
            }
            adjacency.push(list);
        }
        if pos != bytes.len() {
            return Err(Error::SizeMismatch("trailing bytes in ann file".into()));
        }
        Ok(Self {
            max_degree,
            adjacency,
        })
    }
}

pub fn ann_search(graph: &AnnGraph, index: &DenseIndex, query_id: &str, query: &[f32], k: usize, eps: f32) -> Result<Ranking> {
    let (hits, _) = graph.search_hits(index, query, k, eps)?;
    Ok(Ranking::from_hits(query_id, &hits, index.ids(), Source::Cort))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f32]) -> Vec<f32> {
        let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    fn index_from(rows: &[Vec<f32>], parts: usize) -> DenseIndex {
        let ids = IdMap::from_ids((0..rows.len()).map(|i| format!("r{i}"))).unwrap();
        DenseIndex::new(rows[0].len(), rows.concat(), ids, parts).unwrap()
    }

    #[test]
    fn partition_sizes() {
        let sizes: Vec<usize> = balanced_partitions(10, 4).iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert_eq!(balanced_partitions(10, 1), vec![0..10]);
    }

    #[test]
    fn orthonormal_basis_query() {
        let rows: Vec<Vec<f32>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let idx = index_from(&rows, 2);
        let hits = idx.exhaustive_hits(&rows[0], 4).unwrap();
        assert_eq!(hits[0], Hit { id: 0, score: 1.0 });
        assert!(hits[1..].iter().all(|h| h.score == 0.0));
        let ids: Vec<u32> = hits.iter().map(|h| h.id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_eq!(idx.exhaustive_hits(&rows[0], 100).unwrap().len(), 4);
    }

    #[test]
    fn rejects_non_unit_rows() {
        let ids = IdMap::from_ids(["a"]).unwrap();
        assert!(DenseIndex::new(2, vec![1.0, 1.0], ids, 1).is_err());
    }

    #[test]
    fn three_points_on_a_line() {
        // Angles 0, 0.3 and 0.6 rad: the exact 2-NN graph is complete.
        let rows: Vec<Vec<f32>> = [0.0f32, 0.3, 0.6].iter().map(|t| vec![t.cos(), t.sin()]).collect();
        let idx = index_from(&rows, 1);
        let g = build_ann(
            &idx,
            AnnParams {
                max_degree: 2,
                build_width: 4,
            },
        )
        .unwrap();
        for node in 0..3u32 {
            let mut got = g.neighbors(node).to_vec();
            got.sort_unstable();
            let expected: Vec<u32> = (0..3).filter(|&v| v != node).collect();
            assert_eq!(got, expected, "node {node}");
        }
    }

    #[test]
    fn single_node_graph() {
        let idx = index_from(&[unit(&[1.0, 2.0])], 1);
        let g = build_ann(&idx, AnnParams::default()).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.neighbors(0).is_empty());
        let (hits, _) = g.search_hits(&idx, &unit(&[1.0, 2.0]), 5, 0.1).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(build_ann(&idx, AnnParams { max_degree: 1, build_width: 10 }).is_err());
    }

    #[test]
    fn index_size_arithmetic() {
        assert_eq!(estimate_index_size(0, 128).unwrap(), 0);
        assert_eq!(estimate_index_size(8_800_000, 64).unwrap() * 2, estimate_index_size(8_800_000, 128).unwrap());
        assert!(estimate_index_size(u64::MAX, 2).is_err());
    }

    #[test]
    fn index_and_graph_files_round_trip() {
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|i| unit(&[(i as f32).sin(), (i as f32 * 0.7).cos(), 0.3]))
            .collect();
        let idx = index_from(&rows, 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dense.idx");
        idx.save(&p).unwrap();
        assert_eq!(DenseIndex::load(&p).unwrap(), idx);
        let g = build_ann(&idx, AnnParams { max_degree: 4, build_width: 8 }).unwrap();
        let gp = dir.path().join("dense.ann");
        g.save(&gp).unwrap();
        assert_eq!(AnnGraph::load(&gp).unwrap(), g);
    }
}
