//! Every example must keep running.

macro_rules! example {
    ($module:ident, $test:ident, $file:literal) => {
        mod $module {
            #![allow(dead_code)]
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(bm25_search, bm25_search_runs, "bm25_search.rs");
example!(zip_fusion, zip_fusion_runs, "zip_fusion.rs");
example!(triplet_training, triplet_training_runs, "triplet_training.rs");
example!(dense_retrieval, dense_retrieval_runs, "dense_retrieval.rs");
example!(evaluation, evaluation_runs, "evaluation.rs");
example!(rerank_study, rerank_study_runs, "rerank_study.rs");
example!(latency_bench, latency_bench_runs, "latency_bench.rs");
example!(synthetic_pipeline, synthetic_pipeline_runs, "synthetic_pipeline.rs");
