//! End-to-end toy experiment: index, train, encode, search, fuse, evaluate.
//!
//! Every artifact goes into one run directory. The JSON report holds no
//! timings, so identical inputs and seeds give a byte-identical report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bm25::{build_index, Analyzer, Bm25Params, InvertedIndex};
use crate::config::KeyValues;
use crate::corpus::{load_corpus, load_embeddings, load_queries, load_qrels, ContextEmbeddingStore, Corpus, EmbeddingKind, Qrels};
use crate::dense::{build_dense, ids_path};
use crate::encoder::{encode_store, train, ProjectionHead, RepresentationStore, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, saturation_point, write_run, EvalConfig, MetricReport};
use crate::fusion::zip_merge;
use crate::ranking::{Ranking, Source};
use crate::rerank::{
    candidate_study, sample_training_pairs, train_reranker, CandidateReranker, FeatureExtractor, LogisticRanker, OracleReranker,
    RerankerConfig, StudyRow,
};
use crate::synth::{synth_corpus, SynthConfig, SynthData};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub bm25: Bm25Params,
    pub train: TrainConfig,
    pub partitions: usize,
    /// Depth of the BM25, dense and fused test runs.
    pub depth: usize,
    pub study_xs: Vec<usize>,
    pub eval: EvalConfig,
    /// Also run the candidate study with a trained logistic re-ranker.
    pub logistic: bool,
    pub reranker: RerankerConfig,
}

impl Default for PipelineConfig {
    /// Training settings scaled to a 500-query collection: few updates, so a
    /// larger step and no accumulation.
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            bm25: Bm25Params::default(),
            train: TrainConfig {
                learning_rate: 1e-2,
                accumulation_steps: 1,
                warmup_steps: 10,
                weight_decay: 0.01,
                repr_dim: 32,
                ..TrainConfig::default()
            },
            partitions: 4,
            depth: 1000,
            study_xs: vec![8, 16, 32, 64, 128, 256, 512],
            eval: EvalConfig::default(),
            logistic: true,
            reranker: RerankerConfig::default(),
        }
    }
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| Error::invalid(format!("config key {key}: {e}")))
        })
        .collect()
}

impl PipelineConfig {
    const OWN_KEYS: &'static [&'static str] = &[
        "k1",
        "b",
        "partitions",
        "depth",
        "study_xs",
        "cuts",
        "relevance_threshold",
        "logistic",
        "reranker_epochs",
        "reranker_learning_rate",
        "reranker_negatives",
        "reranker_seed",
        "synth_docs",
        "synth_train_queries",
        "synth_test_queries",
        "synth_concepts",
        "synth_mismatch_fraction",
        "synth_partial_fraction",
        "synth_concept_skew",
        "synth_form_noise",
        "synth_semantic_dim",
        "synth_nuisance_scale",
        "synth_context_noise",
        "synth_distractors",
        "synth_seed",
    ];

    /// Every accepted key: the training keys plus pipeline-level ones.
    pub fn keys() -> Vec<&'static str> {
        TrainConfig::KEYS.iter().chain(Self::OWN_KEYS).copied().collect()
    }

    /// Applies a flat config; unknown keys are an error.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.reject_unknown(&Self::keys())?;
        self.train.apply(kv)?;
        kv.read_into("k1", &mut self.bm25.k1)?;
        kv.read_into("b", &mut self.bm25.b)?;
        kv.read_into("partitions", &mut self.partitions)?;
        kv.read_into("depth", &mut self.depth)?;
        if let Some(raw) = kv.get("study_xs") {
            self.study_xs = parse_list("study_xs", raw)?;
        }
        if let Some(raw) = kv.get("cuts") {
            self.eval.cuts = parse_list("cuts", raw)?;
        }
        kv.read_into("relevance_threshold", &mut self.eval.relevance_threshold)?;
        kv.read_into("logistic", &mut self.logistic)?;
        kv.read_into("reranker_epochs", &mut self.reranker.epochs)?;
        kv.read_into("reranker_learning_rate", &mut self.reranker.learning_rate)?;
        kv.read_into("reranker_negatives", &mut self.reranker.negatives_per_query)?;
        kv.read_into("reranker_seed", &mut self.reranker.seed)?;
        kv.read_into("synth_docs", &mut self.synth.n_docs)?;
        kv.read_into("synth_train_queries", &mut self.synth.n_train_queries)?;
        kv.read_into("synth_test_queries", &mut self.synth.n_test_queries)?;
        kv.read_into("synth_concepts", &mut self.synth.n_concepts)?;
        kv.read_into("synth_mismatch_fraction", &mut self.synth.mismatch_fraction)?;
        kv.read_into("synth_partial_fraction", &mut self.synth.partial_fraction)?;
        kv.read_into("synth_concept_skew", &mut self.synth.concept_skew)?;
        kv.read_into("synth_form_noise", &mut self.synth.form_noise)?;
        kv.read_into("synth_semantic_dim", &mut self.synth.semantic_dim)?;
        kv.read_into("synth_nuisance_scale", &mut self.synth.nuisance_scale)?;
        kv.read_into("synth_context_noise", &mut self.synth.context_noise)?;
        kv.read_into("synth_distractors", &mut self.synth.distractors_per_query)?;
        kv.read_into("synth_seed", &mut self.synth.seed)?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.partitions == 0 || self.depth == 0 {
            return Err(Error::invalid("partitions and depth must be positive"));
        }
        if self.depth < self.train.pool_depth {
            return Err(Error::invalid("run depth must cover the negative pool depth"));
        }
        Ok(())
    }
}

/// Inputs of one experiment.
#[derive(Debug, Clone)]
pub struct PipelineData {
    pub passages: Corpus,
    pub train_queries: Corpus,
    pub test_queries: Corpus,
    pub qrels: Qrels,
    pub passage_context: ContextEmbeddingStore,
    /// Context vectors of train and test queries.
    pub query_context: ContextEmbeddingStore,
    /// Test queries known to suffer from vocabulary mismatch, if any.
    pub mismatched: BTreeSet<String>,
}

impl From<SynthData> for PipelineData {
    fn from(d: SynthData) -> Self {
        Self {
            passages: d.passages,
            train_queries: d.train_queries,
            test_queries: d.test_queries,
            qrels: d.qrels,
            passage_context: d.passage_context,
            query_context: d.query_context,
            mismatched: d.mismatched,
        }
    }
}

impl PipelineData {
    /// Reads the file layout written by [`SynthData::write`].
    /// `mismatched.txt` is optional.
    pub fn load(dir: &Path) -> Result<Self> {
        let mismatched_path = dir.join("mismatched.txt");
        let mismatched = match std::fs::read_to_string(&mismatched_path) {
            Ok(text) => text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeSet::new(),
            Err(e) => return Err(Error::io(&mismatched_path, e)),
        };
        Ok(Self {
            passages: load_corpus(&dir.join("collection.tsv"))?,
            train_queries: load_queries(&dir.join("queries.train.tsv"))?,
            test_queries: load_queries(&dir.join("queries.test.tsv"))?,
            qrels: load_qrels(&dir.join("qrels.tsv"))?,
            passage_context: load_embeddings(&dir.join("passages.emb"), &dir.join("passages.ids"), EmbeddingKind::Passage)?,
            query_context: load_embeddings(&dir.join("queries.emb"), &dir.join("queries.ids"), EmbeddingKind::Query)?,
            mismatched,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epoch_losses: Vec<f64>,
    pub updates: usize,
    pub triples_per_epoch: usize,
    pub skipped_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub rows: Vec<StudyRow>,
    /// `None` when MRR@10 keeps improving up to the largest `x`.
    pub saturation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub train: TrainSummary,
    /// Mean metrics per run: `bm25`, `cort`, `fused`.
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
    /// Same metrics restricted to the mismatched test queries.
    pub mismatch_metrics: BTreeMap<String, BTreeMap<String, f64>>,
    /// Candidate studies keyed `oracle/bm25`, `oracle/fused`, `logistic/...`.
    pub studies: BTreeMap<String, StudySummary>,
    /// Run-directory paths of the written artifacts.
    pub artifacts: Vec<String>,
}

impl PipelineReport {
    pub fn metric(&self, run: &str, name: &str) -> f64 {
        self.metrics.get(run).and_then(|m| m.get(name)).copied().unwrap_or(0.0)
    }
}

struct RunDir {
    root: PathBuf,
    written: Vec<String>,
}

impl RunDir {
    fn new(root: &Path) -> Result<Self> {
        for sub in ["", "runs", "eval", "study", "model"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> PathBuf {
        self.written.push(rel.to_owned());
        self.root.join(rel)
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.path(rel);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }
}

fn bm25_runs(index: &InvertedIndex, queries: &Corpus, k: usize) -> Vec<Ranking> {
    let (ids, texts): (Vec<&str>, Vec<&str>) = queries.iter().unzip();
    index
        .search_batch(&texts, k)
        .iter()
        .zip(ids)
        .map(|(hits, q)| Ranking::from_hits(q, hits, index.doc_ids(), Source::Bm25))
        .collect()
}

fn restrict(rankings: &[Ranking], keep: &BTreeSet<String>) -> Vec<Ranking> {
    rankings.iter().filter(|r| keep.contains(&r.query)).cloned().collect()
}

fn study(
    name: &str,
    runs: &[Ranking],
    reranker: &dyn CandidateReranker,
    config: &PipelineConfig,
    qrels: &Qrels,
    dir: &mut RunDir,
) -> Result<StudySummary> {
    let rows = candidate_study(runs, reranker, &config.study_xs, qrels, config.eval.relevance_threshold)?;
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.candidates, r.mrr_at_10)).collect();
    let saturation = if points.len() >= 2 { saturation_point(&points)? } else { None };
    let mut tsv = String::from("x\tmrr@10\trecall@20\trecall@all\n");
    for r in &rows {
        tsv.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\n", r.candidates, r.mrr_at_10, r.recall_at_20, r.recall_all));
    }
    dir.write(&format!("study/{}.tsv", name.replace('/', ".")), &tsv)?;
    Ok(StudySummary { rows, saturation })
}

fn write_eval(name: &str, report: &MetricReport, dir: &mut RunDir) -> Result<()> {
    dir.write(&format!("eval/{name}.tsv"), &report.to_tsv())?;
    dir.write(&format!("eval/{name}.json"), &report.to_json()?)
}

/// Generates the synthetic collection into `run_dir/data`, then runs.
pub fn run_synthetic(config: &PipelineConfig, run_dir: &Path) -> Result<PipelineReport> {
    let data = synth_corpus(&config.synth)?;
    data.write(&run_dir.join("data"))?;
    run(data.into(), config, run_dir)
}

/// Runs the experiment on `data`, writing artifacts and `report.json` into
/// `run_dir`.
pub fn run(data: PipelineData, config: &PipelineConfig, run_dir: &Path) -> Result<PipelineReport> {
    config.validate()?;
    let mut dir = RunDir::new(run_dir)?;
    let qrels = &data.qrels;

    log::info!("indexing {} passages", data.passages.len());
    let bm25 = build_index(&data.passages, config.bm25, Analyzer::default())?;
    bm25.save(&dir.path("model/bm25.idx"))?;

    let train_runs = bm25_runs(&bm25, &data.train_queries, config.train.pool_depth);
    write_run(&dir.path("runs/bm25.train.run"), &train_runs)?;

    log::info!("training projection head");
    let init = ProjectionHead::init(data.passage_context.dim(), config.train.repr_dim, config.train.seed)?;
    let (head, train_report) = train(init, &data.query_context, &data.passage_context, qrels, &train_runs, &config.train)?;
    let head_path = dir.path("model/head.bin");
    head.save(&head_path)?;
    dir.write("model/train.cfg", &config.train.to_key_values())?;
    // Everything downstream uses the checkpoint, as a separate process would.
    let head = ProjectionHead::load(&head_path)?;

    log::info!("encoding");
    let passage_reprs = encode_store(&head, &data.passage_context)?;
    let query_reprs = encode_store(&head, &data.query_context)?;
    passage_reprs.save(&dir.path("model/passages.repr"), &dir.path("model/passages.repr.ids"))?;
    query_reprs.save(&dir.path("model/queries.repr"), &dir.path("model/queries.repr.ids"))?;
    let index = build_dense(&passage_reprs, config.partitions)?;
    let index_path = dir.path("model/dense.idx");
    index.save(&index_path)?;
    dir.written.push(format!("model/{}", ids_path(&index_path).file_name().unwrap_or_default().to_string_lossy()));

    log::info!("searching {} test queries", data.test_queries.len());
    let bm25_test = bm25_runs(&bm25, &data.test_queries, config.depth);
    let cort_test = dense_runs(&index, &query_reprs, &data.test_queries, config.depth)?;
    let fused_test = bm25_test
        .iter()
        .zip(&cort_test)
        .map(|(b, c)| zip_merge(c, b, config.depth))
        .collect::<Result<Vec<_>>>()?;

    let mut metrics = BTreeMap::new();
    let mut mismatch_metrics = BTreeMap::new();
    for (name, runs) in [("bm25", &bm25_test), ("cort", &cort_test), ("fused", &fused_test)] {
        write_run(&dir.path(&format!("runs/{name}.test.run")), runs)?;
        let report = evaluate(runs, qrels, &config.eval)?;
        write_eval(name, &report, &mut dir)?;
        metrics.insert(name.to_owned(), report.means);
        if !data.mismatched.is_empty() {
            let subset = restrict(runs, &data.mismatched);
            let report = evaluate(&subset, qrels, &config.eval)?;
            write_eval(&format!("{name}.mismatched"), &report, &mut dir)?;
            mismatch_metrics.insert(name.to_owned(), report.means);
        }
    }

    log::info!("candidate studies");
    let mut studies = BTreeMap::new();
    let oracle = OracleReranker { qrels };
    for (name, runs) in [("bm25", &bm25_test), ("fused", &fused_test)] {
        let key = format!("oracle/{name}");
        studies.insert(key.clone(), study(&key, runs, &oracle, config, qrels, &mut dir)?);
    }
    if config.logistic {
        let extractor = FeatureExtractor {
            bm25: &bm25,
            queries: &all_queries(&data)?,
            query_reprs: &query_reprs,
            passage_reprs: &passage_reprs,
        };
        let pairs = sample_training_pairs(&train_runs, qrels, &config.reranker);
        let features = pairs
            .iter()
            .map(|(q, d, _)| extractor.features(q, d).map(|f| f.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let (model, trace) = train_reranker(&features, &labels, &config.reranker)?;
        log::info!("re-ranker loss {:.4} -> {:.4}", trace[0], trace[trace.len() - 1]);
        dir.write("model/reranker.json", &serde_json::to_string_pretty(&model)?)?;
        let ranker = LogisticRanker {
            model: &model,
            extractor: &extractor,
        };
        for (name, runs) in [("bm25", &bm25_test), ("fused", &fused_test)] {
            let key = format!("logistic/{name}");
            studies.insert(key.clone(), study(&key, runs, &ranker, config, qrels, &mut dir)?);
        }
    }

    let mut artifacts = dir.written.clone();
    artifacts.push("report.json".into());
    artifacts.sort();
    let report = PipelineReport {
        train: TrainSummary {
            epoch_losses: train_report.epoch_losses,
            updates: train_report.updates,
            triples_per_epoch: train_report.triples_per_epoch,
            skipped_queries: train_report.skipped_queries,
        },
        metrics,
        mismatch_metrics,
        studies,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(run_dir.join("report.json"), json).map_err(|e| Error::io(run_dir, e))?;
    Ok(report)
}

fn dense_runs(
    index: &crate::dense::DenseIndex,
    reprs: &RepresentationStore,
    queries: &Corpus,
    k: usize,
) -> Result<Vec<Ranking>> {
    let ids: Vec<&str> = queries.ids().iter().collect();
    let vectors = ids
        .iter()
        .map(|q| reprs.get(q).ok_or_else(|| Error::UnknownId((*q).to_owned())))
        .collect::<Result<Vec<_>>>()?;
    Ok(index
        .exhaustive_batch(&vectors, k)?
        .iter()
        .zip(ids)
        .map(|(hits, q)| Ranking::from_hits(q, hits, index.ids(), Source::Cort))
        .collect())
}

fn all_queries(data: &PipelineData) -> Result<Corpus> {
    let mut all = Corpus::new();
    for (id, text) in data.train_queries.iter().chain(data.test_queries.iter()) {
        all.push(id, text)?;
    }
    Ok(all)
}
