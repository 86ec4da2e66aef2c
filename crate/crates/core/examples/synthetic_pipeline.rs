// Full toy experiment on a generated vocabulary-mismatch collection.
//
// `cargo run --release --example synthetic_pipeline -- --full` uses the
// 10k-passage default; without the flag a small collection is used.

use comprank::pipeline::{run_synthetic, PipelineConfig};
use comprank::synth::SynthConfig;

fn small_config() -> PipelineConfig {
    let mut config = PipelineConfig {
        synth: SynthConfig {
            n_docs: 3000,
            n_train_queries: 300,
            n_test_queries: 40,
            n_concepts: 1000,
            ..SynthConfig::default()
        },
        depth: 200,
        study_xs: vec![8, 16, 32, 64, 128],
        ..PipelineConfig::default()
    };
    // Fewer queries per epoch, so more epochs.
    config.train.epochs = 20;
    config
}

fn run_with(config: &PipelineConfig) -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let report = run_synthetic(config, dir.path())?;
    let losses = &report.train.epoch_losses;
    println!("train loss {:.4} -> {:.4} over {} updates", losses[0], losses[losses.len() - 1], report.train.updates);
    for run in ["bm25", "cort", "fused"] {
        println!(
            "{run:>6}: mrr@10 {:.4}  recall@50 {:.4}  recall@{} {:.4}",
            report.metric(run, "mrr@10"),
            report.metric(run, "recall@50"),
            config.depth,
            report.metric(run, &format!("recall@{}", config.depth)),
        );
    }
    for (run, m) in &report.mismatch_metrics {
        println!("{run:>6} on mismatched queries: recall@50 {:.4}", m.get("recall@50").copied().unwrap_or(0.0));
    }
    for (name, s) in &report.studies {
        let curve: Vec<String> = s.rows.iter().map(|r| format!("{}:{:.3}", r.candidates, r.mrr_at_10)).collect();
        println!("{name:>15} saturates at {:?}  [{}]", s.saturation, curve.join(" "));
    }
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    run_with(&small_config())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    if std::env::args().any(|a| a == "--full") {
        run_with(&PipelineConfig::default())
    } else {
        run_example()
    }
}
