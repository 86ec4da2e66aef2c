// Candidate-count study: re-rank the top-x candidates with an oracle and
// with a logistic model, then find where quality saturates.

use comprank::corpus::Qrels;
use comprank::eval::saturation_point;
use comprank::rerank::{bce_loss, candidate_study, train_reranker, OracleReranker, RerankerConfig};
use comprank::{Ranking, Source};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("bce(0.5, 1) = {:.4}", bce_loss(0.5, true));

    // Separable toy data: the first feature decides the label.
    let features: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i % 2) * 2.0 - 1.0, f64::from(i) / 40.0]).collect();
    let labels: Vec<bool> = (0..40).map(|i| i % 2 == 1).collect();
    let (model, trace) = train_reranker(&features, &labels, &RerankerConfig::default())?;
    println!("logistic loss {:.4} -> {:.4}, weights {:?}", trace[0], trace[trace.len() - 1], model.weights);

    // One relevant passage per query, at depth 5 * (query index + 1).
    let mut qrels = Qrels::new();
    let mut runs = Vec::new();
    for q in 0..20 {
        let qid = format!("q{q}");
        let docs: Vec<String> = (0..200).map(|d| format!("{qid}-d{d}")).collect();
        qrels.insert(qid.clone(), docs[5 * q + 4].clone(), 1)?;
        runs.push(Ranking::from_docs(qid, docs, Source::Bm25));
    }
    let xs = [8, 16, 32, 64, 128, 256];
    let rows = candidate_study(&runs, &OracleReranker { qrels: &qrels }, &xs, &qrels, 1)?;
    for r in &rows {
        println!("x={:<4} mrr@10 {:.3} recall@all {:.3}", r.candidates, r.mrr_at_10, r.recall_all);
    }
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.candidates, r.mrr_at_10)).collect();
    println!("oracle saturates at {:?}", saturation_point(&points)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
