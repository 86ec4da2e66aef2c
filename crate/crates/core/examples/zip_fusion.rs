// Zip a dense ranking with a BM25 ranking, skipping duplicates.

use comprank::fusion::zip_merge;
use comprank::{Ranking, Source};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dense = Ranking::from_docs("q", ["a", "b", "c", "d"], Source::Cort);
    let bm25 = Ranking::from_docs("q", ["e", "c", "f", "a"], Source::Bm25);
    let fused = zip_merge(&dense, &bm25, 6)?;
    let docs: Vec<&str> = fused.docs().collect();
    println!("fused: {docs:?}");
    for item in &fused.items {
        println!("{}\t{:.4}\t{}", item.doc, item.score, item.source);
    }
    assert_eq!(docs, ["a", "e", "b", "c", "f", "d"]);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
