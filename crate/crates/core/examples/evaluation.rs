// Score a run against graded judgments, round-trip it through the TREC
// run format, and locate the saturation point of a quality curve.

use comprank::corpus::Qrels;
use comprank::eval::{evaluate, read_run, saturation_point, write_run, EvalConfig};
use comprank::{Ranking, Source};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut qrels = Qrels::new();
    qrels.insert("q1", "d3", 1)?;
    qrels.insert("q1", "d7", 2)?;
    qrels.insert("q2", "d1", 1)?;
    let runs = vec![
        Ranking::from_docs("q1", ["d9", "d3", "d4", "d7"], Source::Bm25),
        Ranking::from_docs("q2", ["d5", "d6"], Source::Bm25),
    ];
    let config = EvalConfig {
        cuts: vec![10, 20],
        ..EvalConfig::default()
    };
    let report = evaluate(&runs, &qrels, &config)?;
    print!("{}", report.to_tsv());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("run.txt");
    write_run(&path, &runs)?;
    let (back, _) = read_run(&path)?;
    assert_eq!(back.len(), 2);

    // MRR@10 of a re-ranker over 8..512 candidates.
    let curve = [(8, 26.9), (16, 30.3), (32, 33.1), (64, 34.7), (128, 35.7), (256, 36.6), (512, 36.6)];
    println!("saturates at {:?}", saturation_point(&curve)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
