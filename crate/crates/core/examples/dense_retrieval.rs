// Exhaustive search over a partitioned index and graph search with a
// widening search range, compared on random unit vectors.

use comprank::corpus::IdMap;
use comprank::dense::{ann_search, build_ann, estimate_index_size, exhaustive_search, AnnParams, DenseIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let (count, dim) = (3000, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vectors: Vec<f32> = (0..count).flat_map(|_| unit(&mut rng, dim)).collect();
    let ids = IdMap::from_ids((0..count).map(|i| format!("p{i}")))?;
    let index = DenseIndex::new(dim, vectors, ids, 4)?;
    let graph = build_ann(&index, AnnParams { max_degree: 16, build_width: 64 })?;

    let query = unit(&mut rng, dim);
    let exact = exhaustive_search(&index, "q", &query, 10)?;
    println!("exact top-3: {:?}", exact.docs().take(3).collect::<Vec<_>>());
    for eps in [0.0, 0.1, 0.4] {
        let approx = ann_search(&graph, &index, "q", &query, 10, eps)?;
        let overlap = approx.docs().filter(|d| exact.docs().any(|e| e == *d)).count();
        println!("eps {eps}: {overlap}/10 of the exact top-10");
    }

    let bytes = estimate_index_size(8_800_000, 128)?;
    println!("8.8M x 128 floats = {:.2} GiB", bytes as f64 / (1u64 << 30) as f64);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
