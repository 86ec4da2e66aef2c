// Build a BM25 index over a handful of passages, query it, and round-trip
// the index through its binary file.

use comprank::bm25::{bm25_search, build_index, Analyzer, Bm25Params, InvertedIndex};
use comprank::corpus::Corpus;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut corpus = Corpus::new();
    for (id, text) in [
        ("d1", "The cat sat on the mat"),
        ("d2", "Dogs and cats are common household pets"),
        ("d3", "A mat is a flat piece of fabric"),
        ("d4", "Stock markets fell sharply on Monday"),
    ] {
        corpus.push(id, text)?;
    }
    let index = build_index(&corpus, Bm25Params::default(), Analyzer::english())?;
    println!("{} passages, {} terms, avg length {:.2}", index.num_docs(), index.num_terms(), index.avg_doc_len());

    let ranking = bm25_search(&index, "q1", "cat on a mat", 10);
    for item in &ranking.items {
        println!("{}\t{:.4}", item.doc, item.score);
    }
    assert_eq!(ranking.items[0].doc, "d1");

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("bm25.idx");
    index.save(&path)?;
    let reloaded = InvertedIndex::load(&path)?;
    assert_eq!(bm25_search(&reloaded, "q1", "cat on a mat", 10), ranking);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
