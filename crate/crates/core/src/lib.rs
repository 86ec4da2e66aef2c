//! Complementary first-stage passage retrieval.
//!
//! A BM25 ranker over an inverted index is paired with a learned dense ranker.
//! Dense representations come from a small projection head trained with an
//! angular triplet-margin objective on BM25-sampled negatives, over context
//! vectors produced by an external encoder. The two rankings are zipped
//! position by position into one candidate list for a downstream re-ranker.
//!
//! | module | role |
//! |--------|------|
//! | [`corpus`] | TSV corpora, qrels, `CORTEMB1` context vectors |
//! | [`bm25`] | tokenizer, inverted index, BM25 search |
//! | [`encoder`] | projection head, losses, gradients, training |
//! | [`dense`] | partitioned exhaustive search and graph ANN |
//! | [`fusion`] | zipping merge |
//! | [`eval`] | metrics, run files, saturation |
//! | [`rerank`] | logistic and oracle re-rankers, candidate study |
//! | [`synth`] | synthetic vocabulary-mismatch collections |
//! | [`bench`] | latency harness |
//! | [`pipeline`] | end-to-end experiment |

pub mod bench;
pub mod bm25;
pub mod config;
pub mod corpus;
pub mod dense;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod pipeline;
pub mod ranking;
pub mod rerank;
pub mod synth;

pub use error::{Error, Result};
pub use ranking::{Hit, RankedDoc, Ranking, Source};
