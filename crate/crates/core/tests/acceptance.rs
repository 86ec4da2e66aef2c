//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use comprank::bench::{bench_retriever, BenchConfig, BenchQueries, Retriever};
use comprank::corpus::{IdMap, Qrels};
use comprank::dense::{build_ann, estimate_index_size, AnnParams, DenseIndex};
use comprank::encoder::{angular_similarity, batch_loss_gradient, head_batch_loss, ProjectionHead, TrainTriple};
use comprank::eval::{map_at, mrr_at, ndcg_at, recall_at, saturation_point};
use comprank::fusion::zip_merge;
use comprank::pipeline::{run_synthetic, PipelineConfig, PipelineReport};
use comprank::{Ranking, Source};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit_f64(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn unit_f32(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    unit_f64(rng, dim).into_iter().map(|x| x as f32).collect()
}

/// Re-normalizes in f32 so the stored vectors pass the unit-norm check.
fn random_index(rng: &mut ChaCha8Rng, count: usize, dim: usize, partitions: usize) -> DenseIndex {
    let vectors: Vec<f32> = (0..count).flat_map(|_| unit_f32(rng, dim)).collect();
    let ids = IdMap::from_ids((0..count).map(|i| format!("d{i}"))).unwrap();
    DenseIndex::new(dim, vectors, ids, partitions).unwrap()
}

fn c1_zip() -> Outcome {
    let start = Instant::now();
    let a = Ranking::from_docs("q", ["a", "b", "c", "d"], Source::Cort);
    let b = Ranking::from_docs("q", ["e", "c", "f", "a"], Source::Bm25);
    let fused = zip_merge(&a, &b, 8).map_err(|e| e.to_string())?;
    let docs: Vec<&str> = fused.docs().collect();
    let elapsed = start.elapsed();
    check(
        docs == ["a", "e", "b", "c", "f", "d"] && elapsed < Duration::from_secs(1),
        format!("{docs:?} in {elapsed:?}"),
    )
}

fn c2_saturation() -> Outcome {
    // MRR@10 columns of the published candidate-count table.
    let bm25 = [(8, 26.9), (16, 30.3), (32, 33.1), (64, 34.7), (128, 35.7), (256, 36.6), (512, 36.6)];
    let fused = [(8, 34.7), (16, 36.9), (32, 37.9), (64, 38.5), (128, 38.6), (256, 38.6), (512, 38.6)];
    let a = saturation_point(&bm25).map_err(|e| e.to_string())?;
    let b = saturation_point(&fused).map_err(|e| e.to_string())?;
    check(a == Some(256) && b == Some(64), format!("bm25 {a:?}, fused {b:?}"))
}

fn hinge_arguments(head: &ProjectionHead, batch: &[TrainTriple<'_>], margin: f64) -> Vec<f64> {
    let reps: Vec<[Vec<f64>; 3]> = batch
        .iter()
        .map(|t| [head.apply(t.query).unwrap(), head.apply(t.positive).unwrap(), head.apply(t.negative).unwrap()])
        .collect();
    let mut args = Vec::new();
    for (i, r) in reps.iter().enumerate() {
        let pos = angular_similarity(&r[0], &r[1]).unwrap();
        for (j, other) in reps.iter().enumerate() {
            args.push(angular_similarity(&r[0], &other[2]).unwrap() - pos + margin);
            if j != i {
                args.push(angular_similarity(&r[0], &other[1]).unwrap() - pos + margin);
            }
        }
    }
    args
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let margin = 0.1;
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < 100 {
        let h = rng.gen_range(2..=16);
        let e = rng.gen_range(2..=8);
        let b = rng.gen_range(1..=6);
        let weights: Vec<f64> = (0..h * e).map(|_| rng.gen_range(-0.6..0.6)).collect();
        let bias: Vec<f64> = (0..e).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let head = ProjectionHead::new(h, e, weights, bias).unwrap();
        let vectors: Vec<Vec<f32>> = (0..3 * b)
            .map(|_| (0..h).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let batch: Vec<TrainTriple<'_>> = vectors
            .chunks(3)
            .map(|c| TrainTriple {
                query: &c[0],
                positive: &c[1],
                negative: &c[2],
            })
            .collect();
        if hinge_arguments(&head, &batch, margin).iter().any(|a| a.abs() < 1e-4) {
            skipped += 1;
            continue;
        }
        let (_, grad) = batch_loss_gradient(&head, &batch, margin).map_err(|e| e.to_string())?;
        let step = 1e-6;
        let mut numeric = Vec::with_capacity(h * e + e);
        let analytic: Vec<f64> = grad.weights.iter().chain(&grad.bias).copied().collect();
        for p in 0..h * e + e {
            let shifted = |delta: f64| {
                let mut w = head.weights().to_vec();
                let mut bb = head.bias().to_vec();
                if p < h * e {
                    w[p] += delta;
                } else {
                    bb[p - h * e] += delta;
                }
                let moved = ProjectionHead::new(h, e, w, bb).unwrap();
                head_batch_loss(&moved, &batch, margin).unwrap()
            };
            numeric.push((shifted(step) - shifted(-step)) / (2.0 * step));
        }
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
        let rel = if scale == 0.0 { 0.0 } else { diff / scale };
        worst = worst.max(rel);
        checked += 1;
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("{checked} instances ({skipped} near a kink skipped), worst relative error {worst:.2e}, {elapsed:?}"),
    )
}

fn c4_similarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.gen_range(2..=64);
        let u = unit_f64(&mut rng, dim);
        let scale = rng.gen_range(0.1..10.0);
        let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
        let anti: Vec<f64> = u.iter().map(|x| -x).collect();
        // Gram-Schmidt an orthogonal partner.
        let r = unit_f64(&mut rng, dim);
        let d: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
        let orth: Vec<f64> = r.iter().zip(&u).map(|(a, b)| a - d * b).collect();
        let e = |x: f64, want: f64| (x - want).abs();
        worst = worst
            .max(e(angular_similarity(&u, &scaled).unwrap(), 1.0))
            .max(e(angular_similarity(&u, &anti).unwrap(), 0.0))
            .max(e(angular_similarity(&u, &orth).unwrap(), 0.5));
    }
    let pairs: Vec<(f64, f64)> = (0..1000)
        .map(|_| {
            let u = unit_f64(&mut rng, 16);
            let v = unit_f64(&mut rng, 16);
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            (dot, angular_similarity(&u, &v).unwrap())
        })
        .collect();
    let mut inversions = 0;
    for i in 0..pairs.len() {
        for j in 0..pairs.len() {
            if pairs[i].0 < pairs[j].0 && pairs[i].1 > pairs[j].1 {
                inversions += 1;
            }
        }
    }
    check(
        worst <= 1e-9 && inversions == 0,
        format!("max identity error {worst:.1e}, {inversions} inversions over 1000 pairs"),
    )
}

mod brute {
    //! Textbook metric definitions over plain vectors of grades.

    pub fn rr(grades: &[u32], k: usize, t: u32) -> f64 {
        for (i, &g) in grades.iter().enumerate().take(k) {
            if g >= t {
                return 1.0 / (i as f64 + 1.0);
            }
        }
        0.0
    }

    pub fn ndcg(grades: &[u32], all: &[u32], k: usize) -> f64 {
        let dcg = |gs: &[u32]| -> f64 {
            let mut s = 0.0;
            for (i, &g) in gs.iter().enumerate().take(k) {
                s += g as f64 / (i as f64 + 2.0).log2();
            }
            s
        };
        let mut ideal = all.to_vec();
        ideal.sort_by(|a, b| b.cmp(a));
        let idcg = dcg(&ideal);
        if idcg == 0.0 {
            0.0
        } else {
            dcg(grades) / idcg
        }
    }

    pub fn recall(grades: &[u32], all: &[u32], k: usize, t: u32) -> Option<f64> {
        let total = all.iter().filter(|&&g| g >= t).count();
        if total == 0 {
            return None;
        }
        let found = grades.iter().take(k).filter(|&&g| g >= t).count();
        Some(found as f64 / total as f64)
    }

    pub fn ap(grades: &[u32], all: &[u32], k: usize, t: u32) -> Option<f64> {
        let total = all.iter().filter(|&&g| g >= t).count();
        if total == 0 {
            return None;
        }
        let mut s = 0.0;
        for i in 0..grades.len().min(k) {
            if grades[i] >= t {
                let rel_upto = grades[..=i].iter().filter(|&&g| g >= t).count();
                s += rel_upto as f64 / (i + 1) as f64;
            }
        }
        Some(s / total as f64)
    }
}

fn c5_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for n in 0..500 {
        let pool = rng.gen_range(1..60);
        let docs: Vec<String> = (0..pool).map(|i| format!("d{i}")).collect();
        let mut qrels = Qrels::new();
        let mut grade_of = vec![0u32; pool];
        for (i, d) in docs.iter().enumerate() {
            if rng.gen_bool(0.3) {
                let g = rng.gen_range(0..=3);
                qrels.insert("q", d.clone(), g).unwrap();
                grade_of[i] = g;
            }
        }
        // Judged documents outside the ranking still count for recall and NDCG.
        let mut all: Vec<u32> = grade_of.clone();
        if rng.gen_bool(0.5) {
            let g = rng.gen_range(1..=3);
            qrels.insert("q", "unranked", g).unwrap();
            all.push(g);
        }
        if qrels.judgments("q").is_none() {
            qrels.insert("q", "unranked0", 0).unwrap();
        }
        let mut order: Vec<usize> = (0..pool).collect();
        order.shuffle(&mut rng);
        order.truncate(rng.gen_range(0..=pool));
        let ranking = Ranking::from_docs("q", order.iter().map(|&i| docs[i].clone()), Source::External);
        let grades: Vec<u32> = order.iter().map(|&i| grade_of[i]).collect();
        let k = [1, 3, 5, 10, 20, 100][n % 6];
        let t = 1 + (n % 2) as u32;
        let opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        worst = worst
            .max((mrr_at(&ranking, &qrels, k, t) - brute::rr(&grades, k, t)).abs())
            .max((ndcg_at(&ranking, &qrels, k) - brute::ndcg(&grades, &all, k)).abs())
            .max(opt(recall_at(&ranking, &qrels, k, t), brute::recall(&grades, &all, k, t)))
            .max(opt(map_at(&ranking, &qrels, k, t), brute::ap(&grades, &all, k, t)));
    }
    check(worst <= 1e-9, format!("500 instances, max deviation {worst:.1e}"))
}

fn c6_partitions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base = random_index(&mut rng, 10_000, 32, 1);
    let queries: Vec<Vec<f32>> = (0..100).map(|_| unit_f32(&mut rng, 32)).collect();
    let qs: Vec<&[f32]> = queries.iter().map(Vec::as_slice).collect();
    let reference = base.exhaustive_batch(&qs, 100).map_err(|e| e.to_string())?;
    for p in [3, 8] {
        let other = base.with_partitions(p).map_err(|e| e.to_string())?.exhaustive_batch(&qs, 100).map_err(|e| e.to_string())?;
        let same = reference.iter().zip(&other).all(|(a, b)| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.id == y.id && x.score.to_bits() == y.score.to_bits())
        });
        if !same {
            return Err(format!("P={p} differs from P=1"));
        }
    }
    Ok("P in {1,3,8} identical on 10000 vectors x 100 queries, k=100".into())
}

fn c7_ann() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 24;
    let index = random_index(&mut rng, 50_000, dim, 1);
    let graph = build_ann(&index, AnnParams { max_degree: 32, build_width: 128 }).map_err(|e| e.to_string())?;
    let build = start.elapsed();
    let queries: Vec<Vec<f32>> = (0..200).map(|_| unit_f32(&mut rng, dim)).collect();
    let mut found = 0usize;
    for q in &queries {
        let exact = index.exhaustive_hits(q, 10).map_err(|e| e.to_string())?;
        let (approx, _) = graph.search_hits(&index, q, 10, 0.4).map_err(|e| e.to_string())?;
        found += approx.iter().filter(|h| exact.iter().any(|x| x.id == h.id)).count();
    }
    let recall = found as f64 / (10 * queries.len()) as f64;
    let bq = BenchQueries {
        texts: vec![""; queries.len()],
        context: Vec::new(),
        reprs: queries.clone(),
    };
    let config = BenchConfig {
        k: 10,
        repetitions: 3,
        warmup: 1,
        batch_size: 32,
        workers: 1,
        eps_values: Vec::new(),
    };
    let mut means = Vec::new();
    for eps in [0.01, 0.1, 0.4] {
        let row = bench_retriever(&Retriever::Ann { graph: &graph, index: &index, eps }, &bq, &config).map_err(|e| e.to_string())?;
        means.push((eps, row.single.mean_ms, row.mean_visited.unwrap_or(0.0)));
    }
    let ordered = means[0].1 < means[1].1 && means[1].1 < means[2].1;
    let elapsed = start.elapsed();
    let table: Vec<String> = means
        .iter()
        .map(|(e, ms, v)| format!("eps={e}: {ms:.3} ms, {v:.0} visited"))
        .collect();
    check(
        recall >= 0.95 && ordered && elapsed < Duration::from_secs(300),
        format!("recall@10 {recall:.4} at eps=0.4; {}; build {build:.1?}, total {elapsed:.1?}", table.join("; ")),
    )
}

fn c8_index_size() -> Outcome {
    let bytes = estimate_index_size(8_800_000, 128).map_err(|e| e.to_string())?;
    let gib = bytes as f64 / (1u64 << 30) as f64;
    check(((gib - 4.2) / 4.2).abs() <= 0.02, format!("{gib:.3} GiB"))
}

fn c9_complementarity(report: &PipelineReport, elapsed: Duration) -> Outcome {
    let bm25 = report.metric("bm25", "recall@50");
    let fused = report.metric("fused", "recall@50");
    let sat = |k: &str| report.studies.get(k).and_then(|s| s.saturation);
    let (sb, sf) = (sat("oracle/bm25"), sat("oracle/fused"));
    // Absent saturation means the curve still improves at the largest x.
    let earlier = match (sf, sb) {
        (Some(f), Some(b)) => f <= b,
        (Some(_), None) | (None, None) => sf.is_some() || sb.is_none(),
        (None, Some(_)) => false,
    };
    let losses = &report.train.epoch_losses;
    check(
        fused > bm25 && earlier && sf.is_some() && elapsed < Duration::from_secs(600),
        format!(
            "recall@50 fused {fused:.4} vs bm25 {bm25:.4}; oracle saturation fused {sf:?} vs bm25 {sb:?}; \
             train loss {:.3} -> {:.3}; {elapsed:.1?}",
            losses.first().copied().unwrap_or(f64::NAN),
            losses.last().copied().unwrap_or(f64::NAN)
        ),
    )
}

fn compared_files(root: &Path) -> Vec<String> {
    let mut files = vec!["report.json".to_owned()];
    for sub in ["runs", "eval", "study"] {
        let mut names: Vec<String> = std::fs::read_dir(root.join(sub))
            .map(|rd| rd.filter_map(|e| e.ok()).map(|e| format!("{sub}/{}", e.file_name().to_string_lossy())).collect())
            .unwrap_or_default();
        names.sort();
        files.extend(names);
    }
    files
}

fn c10_determinism(first: &Path, config: &PipelineConfig) -> Outcome {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_synthetic(config, second.path()).map_err(|e| e.to_string())?;
    let files = compared_files(first);
    if files != compared_files(second.path()) {
        return Err("run directories hold different files".into());
    }
    for f in &files {
        let a = std::fs::read(first.join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(second.path().join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs"));
        }
    }
    check(files.len() > 10, format!("{} run, metric and study files byte-identical", files.len()))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "zipping merge worked example", c1_zip()),
        (2, "saturation of the published MRR columns", c2_saturation()),
        (3, "batch-loss gradients vs finite differences", c3_gradients()),
        (4, "similarity identities and dot-product rank equivalence", c4_similarity()),
        (5, "metric oracles", c5_metrics()),
        (6, "partition invariance of exhaustive search", c6_partitions()),
        (7, "graph search quality and latency ordering", c7_ann()),
        (8, "index-size arithmetic", c8_index_size()),
    ];

    let config = PipelineConfig::default();
    let first = tempfile::tempdir().expect("temp dir");
    let start = Instant::now();
    match run_synthetic(&config, first.path()) {
        Ok(report) => {
            results.push((9, "end-to-end complementarity", c9_complementarity(&report, start.elapsed())));
            results.push((10, "pipeline determinism", c10_determinism(first.path(), &config)));
        }
        Err(e) => {
            results.push((9, "end-to-end complementarity", Err(format!("pipeline failed: {e}"))));
            results.push((10, "pipeline determinism", Err(format!("pipeline failed: {e}"))));
        }
    }

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {n:>2}. {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {n:>2}. {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
