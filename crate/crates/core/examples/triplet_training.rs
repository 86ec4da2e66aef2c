// Train a projection head on BM25-sampled negatives and watch the batch
// loss fall.

use comprank::bm25::{build_index, Analyzer, Bm25Params};
use comprank::encoder::{angular_similarity, train, ProjectionHead, TrainConfig};
use comprank::synth::{synth_corpus, SynthConfig};
use comprank::{Ranking, Source};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("sim(u, u) = {}", angular_similarity(&[1.0, 2.0], &[1.0, 2.0])?);
    println!("sim(u, -u) = {}", angular_similarity(&[1.0, 2.0], &[-1.0, -2.0])?);

    let data = synth_corpus(&SynthConfig {
        n_docs: 800,
        n_train_queries: 60,
        n_test_queries: 10,
        n_concepts: 300,
        ..SynthConfig::default()
    })?;
    let index = build_index(&data.passages, Bm25Params::default(), Analyzer::default())?;
    let rankings: Vec<Ranking> = data
        .train_queries
        .iter()
        .map(|(q, text)| Ranking::from_hits(q, &index.search_hits(text, 100), index.doc_ids(), Source::Bm25))
        .collect();

    let config = TrainConfig {
        learning_rate: 1e-2,
        accumulation_steps: 1,
        warmup_steps: 5,
        epochs: 8,
        repr_dim: 16,
        ..TrainConfig::default()
    };
    let head = ProjectionHead::init(data.passage_context.dim(), config.repr_dim, config.seed)?;
    let (_, report) = train(head, &data.query_context, &data.passage_context, &data.qrels, &rankings, &config)?;
    for (epoch, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {epoch}: loss {loss:.4}");
    }
    println!("{} updates, {} triples per epoch", report.updates, report.triples_per_epoch);
    assert!(report.epoch_losses.last() < report.epoch_losses.first());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
