// Latency table for query encoding, BM25, exhaustive and graph search.

use comprank::bench::{bench, BenchConfig, BenchQueries};
use comprank::bm25::{build_index, Analyzer, Bm25Params};
use comprank::dense::{build_ann, build_dense, AnnParams};
use comprank::encoder::{encode_store, ProjectionHead};
use comprank::synth::{synth_corpus, SynthConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let data = synth_corpus(&SynthConfig {
        n_docs: 2000,
        n_train_queries: 10,
        n_test_queries: 64,
        n_concepts: 500,
        ..SynthConfig::default()
    })?;
    let bm25 = build_index(&data.passages, Bm25Params::default(), Analyzer::default())?;
    let head = ProjectionHead::init(data.passage_context.dim(), 32, 42)?;
    let index = build_dense(&encode_store(&head, &data.passage_context)?, 2)?;
    let graph = build_ann(&index, AnnParams { max_degree: 16, build_width: 64 })?;

    let mut queries = BenchQueries {
        texts: Vec::new(),
        context: Vec::new(),
        reprs: Vec::new(),
    };
    for (id, text) in data.test_queries.iter() {
        let ctx = data.query_context.get(id).ok_or("missing query vector")?;
        queries.texts.push(text);
        queries.context.push(ctx);
        queries.reprs.push(head.encode_normalized(ctx)?);
    }
    let config = BenchConfig {
        k: 100,
        repetitions: 2,
        workers: 2,
        ..BenchConfig::default()
    };
    let report = bench(&bm25, &head, &index, Some(&graph), &queries, &config)?;
    println!("workers: {}", report.workers);
    print!("{}", report.to_tsv());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
