//! Command-line front end. Each subcommand is a thin wrapper over one
//! library operation; see `--help` of each command for file formats.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use comprank::bench::{bench, BenchConfig, BenchQueries};
use comprank::bm25::{build_index, Analyzer, Bm25Params, InvertedIndex};
use comprank::config::KeyValues;
use comprank::corpus::{import_embeddings_tsv, load_corpus, load_embeddings, load_qrels, load_queries, write_embeddings, EmbeddingKind};
use comprank::dense::{build_ann, build_dense, AnnGraph, AnnParams, DenseIndex};
use comprank::encoder::{encode_store, train, ProjectionHead, RepresentationStore, TrainConfig};
use comprank::eval::{evaluate, read_run, saturation_point, write_run, EvalConfig};
use comprank::fusion::zip_merge;
use comprank::pipeline::{run as run_pipeline, run_synthetic, PipelineConfig, PipelineData};
use comprank::rerank::{
    candidate_study, sample_training_pairs, train_reranker, CandidateReranker, FeatureExtractor, LogisticRanker, OracleReranker,
    RerankerConfig,
};
use comprank::synth::{synth_corpus, SynthConfig};
use comprank::{Error, Ranking, Result, Source};

#[derive(Parser)]
#[command(name = "comprank", version, about = "BM25 + learned dense retrieval with rank fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index from a `id<TAB>text` collection.
    BuildBm25(BuildBm25),
    /// Convert `id<TAB>v1 v2 ...` text embeddings to the binary store.
    EmbedImport(EmbedImport),
    /// Train the projection head on BM25-sampled triples.
    TrainHead(TrainHead),
    /// Apply a head checkpoint to context embeddings.
    Encode(Encode),
    /// Build a partitioned dense index from encoded representations.
    IndexDense(IndexDense),
    /// Build a neighbor graph over a dense index.
    IndexAnn(IndexAnn),
    /// Rank queries and write a TREC run.
    Search(Search),
    /// Zip two runs into one.
    Fuse(Fuse),
    /// Evaluate a run against qrels.
    Eval(Eval),
    /// MRR@10 per candidate count and the saturation point.
    Saturation(Saturation),
    /// Re-rank the top-x candidates of a run for several x.
    RerankSim(RerankSim),
    /// Measure encoding and retrieval latency.
    Bench(Bench),
    /// Generate a synthetic vocabulary-mismatch collection.
    Synth(Synth),
    /// Run the whole experiment into a run directory.
    Pipeline(Pipeline),
}

#[derive(Args)]
struct BuildBm25 {
    #[arg(long)]
    collection: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.82)]
    k1: f64,
    #[arg(long, default_value_t = 0.68)]
    b: f64,
    #[arg(long)]
    no_stopwords: bool,
    #[arg(long)]
    no_stem: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Passage,
    Query,
}

impl From<Kind> for EmbeddingKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Passage => EmbeddingKind::Passage,
            Kind::Query => EmbeddingKind::Query,
        }
    }
}

#[derive(Args)]
struct EmbedImport {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "passage")]
    kind: Kind,
}

#[derive(Args)]
struct TrainHead {
    /// key=value file with training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    query_emb: PathBuf,
    #[arg(long)]
    passage_emb: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// BM25 run over the training queries.
    #[arg(long)]
    bm25_run: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON file receiving per-epoch losses.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Encode {
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    emb: PathBuf,
    #[arg(long, value_enum, default_value = "passage")]
    kind: Kind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexDense {
    #[arg(long)]
    reprs: PathBuf,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexAnn {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 32)]
    max_degree: usize,
    #[arg(long, default_value_t = 200)]
    build_width: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Bm25,
    Cort,
}

#[derive(Clone, Copy, ValueEnum)]
enum Retrieval {
    Exhaustive,
    Ann,
}

#[derive(Args)]
struct Search {
    #[arg(long, value_enum)]
    mode: Mode,
    /// BM25 index or dense index, depending on the mode.
    #[arg(long)]
    index: PathBuf,
    /// Query texts (bm25) or encoded query representations (cort).
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, value_enum, default_value = "exhaustive")]
    retrieval: Retrieval,
    /// Graph file, required for `--retrieval ann`.
    #[arg(long)]
    ann: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    eps: f32,
    /// Re-partition the dense index before searching.
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Fuse {
    #[arg(long)]
    primary: PathBuf,
    #[arg(long)]
    secondary: PathBuf,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
    cuts: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    threshold: u32,
    /// Score judged queries absent from the run as empty rankings.
    #[arg(long)]
    include_missing: bool,
    /// Writes `<prefix>.tsv` and `<prefix>.json`; prints TSV otherwise.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct Saturation {
    /// Directory of runs named `<x>.run`, one per candidate count.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value_t = 1)]
    threshold: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum RerankMode {
    Oracle,
    Logistic,
}

#[derive(Args)]
struct RerankSim {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, value_enum, default_value = "oracle")]
    mode: RerankMode,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256,512")]
    x: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    threshold: u32,
    /// Logistic mode: first-stage run over training queries.
    #[arg(long)]
    train_candidates: Option<PathBuf>,
    /// Logistic mode: BM25 index.
    #[arg(long)]
    bm25: Option<PathBuf>,
    /// Logistic mode: query texts of train and test queries.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Logistic mode: encoded query representations.
    #[arg(long)]
    query_reprs: Option<PathBuf>,
    /// Logistic mode: encoded passage representations.
    #[arg(long)]
    passage_reprs: Option<PathBuf>,
    /// Writes the re-ranked top-x run for every x into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct Bench {
    #[arg(long)]
    bm25: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    head: PathBuf,
    #[arg(long)]
    query_emb: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    ann: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.4")]
    eps: Vec<f32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Synth {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    docs: usize,
    #[arg(long, default_value_t = 500)]
    train_queries: usize,
    #[arg(long, default_value_t = 200)]
    test_queries: usize,
    #[arg(long, default_value_t = 0.5)]
    mismatch: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct Pipeline {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Existing data directory in the `synth` layout; generated if absent.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

fn repr_ids(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

fn load_reprs(path: &Path) -> Result<RepresentationStore> {
    RepresentationStore::load(path, &repr_ids(path))
}

fn load_emb(path: &Path, kind: EmbeddingKind) -> Result<comprank::corpus::ContextEmbeddingStore> {
    load_embeddings(path, &repr_ids(path), kind)
}

fn need<'a>(opt: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    opt.as_deref()
        .ok_or_else(|| Error::invalid(format!("{flag} is required in this mode")))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::BuildBm25(a) => {
            let corpus = load_corpus(&a.collection)?;
            let analyzer = Analyzer {
                remove_stopwords: !a.no_stopwords,
                stem: !a.no_stem,
            };
            let index = build_index(&corpus, Bm25Params { k1: a.k1, b: a.b }, analyzer)?;
            index.save(&a.out)?;
            log::info!("indexed {} passages, {} terms", index.num_docs(), index.num_terms());
        }
        Command::EmbedImport(a) => {
            let store = import_embeddings_tsv(&a.input, a.kind.into())?;
            write_embeddings(&store, &a.out, &repr_ids(&a.out))?;
            log::info!("imported {} vectors of dimension {}", store.len(), store.dim());
        }
        Command::TrainHead(a) => {
            let mut config = TrainConfig::default();
            if let Some(path) = &a.config {
                let kv = KeyValues::load(path)?;
                kv.reject_unknown(TrainConfig::KEYS)?;
                config.apply(&kv)?;
            }
            let queries = load_emb(&a.query_emb, EmbeddingKind::Query)?;
            let passages = load_emb(&a.passage_emb, EmbeddingKind::Passage)?;
            let qrels = load_qrels(&a.qrels)?;
            let (runs, _) = read_run(&a.bm25_run)?;
            let init = ProjectionHead::init(passages.dim(), config.repr_dim, config.seed)?;
            let (head, report) = train(init, &queries, &passages, &qrels, &runs, &config)?;
            head.save(&a.out)?;
            log::info!("epoch losses {:?}", report.epoch_losses);
            if let Some(path) = &a.report {
                let mut m = BTreeMap::new();
                m.insert("epoch_losses", serde_json::json!(report.epoch_losses));
                m.insert("updates", serde_json::json!(report.updates));
                write_json(path, &m)?;
            }
        }
        Command::Encode(a) => {
            let head = ProjectionHead::load(&a.head)?;
            let store = load_emb(&a.emb, a.kind.into())?;
            encode_store(&head, &store)?.save(&a.out, &repr_ids(&a.out))?;
        }
        Command::IndexDense(a) => {
            build_dense(&load_reprs(&a.reprs)?, a.partitions)?.save(&a.out)?;
        }
        Command::IndexAnn(a) => {
            let index = DenseIndex::load(&a.index)?;
            let params = AnnParams {
                max_degree: a.max_degree,
                build_width: a.build_width,
            };
            build_ann(&index, params)?.save(&a.out)?;
        }
        Command::Search(a) => {
            let runs = search(&a)?;
            write_run(&a.out, &runs)?;
        }
        Command::Fuse(a) => {
            let (primary, _) = read_run(&a.primary)?;
            let (secondary, _) = read_run(&a.secondary)?;
            let by_query: BTreeMap<&str, &Ranking> = secondary.iter().map(|r| (r.query.as_str(), r)).collect();
            let mut fused = Vec::with_capacity(primary.len());
            for p in &primary {
                let empty = Ranking::new(p.query.clone());
                let s = by_query.get(p.query.as_str()).copied().unwrap_or(&empty);
                fused.push(zip_merge(p, s, a.k)?);
            }
            // Queries only the secondary run covers keep their own list.
            let covered: std::collections::HashSet<&str> = primary.iter().map(|r| r.query.as_str()).collect();
            for s in secondary.iter().filter(|s| !covered.contains(s.query.as_str())) {
                fused.push(zip_merge(&Ranking::new(s.query.clone()), s, a.k)?);
            }
            write_run(&a.out, &fused)?;
        }
        Command::Eval(a) => {
            let (runs, _) = read_run(&a.run)?;
            let qrels = load_qrels(&a.qrels)?;
            let config = EvalConfig {
                cuts: a.cuts,
                relevance_threshold: a.threshold,
                include_missing: a.include_missing,
            };
            let report = evaluate(&runs, &qrels, &config)?;
            match &a.out_prefix {
                Some(prefix) => {
                    let tsv = prefix.with_extension("tsv");
                    std::fs::write(&tsv, report.to_tsv()).map_err(|e| Error::io(&tsv, e))?;
                    let json = prefix.with_extension("json");
                    std::fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
                }
                None => print!("{}", report.to_tsv()),
            }
        }
        Command::Saturation(a) => {
            let qrels = load_qrels(&a.qrels)?;
            let mut points = Vec::new();
            let entries = std::fs::read_dir(&a.runs).map_err(|e| Error::io(&a.runs, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&a.runs, e))?.path();
                let x = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_suffix(".run"))
                    .and_then(|n| n.parse::<usize>().ok());
                if let Some(x) = x {
                    let (runs, _) = read_run(&path)?;
                    let config = EvalConfig {
                        cuts: vec![10],
                        relevance_threshold: a.threshold,
                        include_missing: true,
                    };
                    points.push((x, evaluate(&runs, &qrels, &config)?.mean("mrr@10")));
                }
            }
            points.sort_by_key(|p| p.0);
            println!("x\tmrr@10");
            for (x, v) in &points {
                println!("{x}\t{v:.6}");
            }
            match saturation_point(&points)? {
                Some(x) => println!("# saturates at {x}"),
                None => println!("# no saturation within the measured range"),
            }
        }
        Command::RerankSim(a) => rerank_sim(&a)?,
        Command::Bench(a) => {
            let bm25 = InvertedIndex::load(&a.bm25)?;
            let queries = load_queries(&a.queries)?;
            let head = ProjectionHead::load(&a.head)?;
            let context = load_emb(&a.query_emb, EmbeddingKind::Query)?;
            let index = DenseIndex::load(&a.index)?;
            let graph = a.ann.as_deref().map(AnnGraph::load).transpose()?;
            let mut texts = Vec::new();
            let mut ctx = Vec::new();
            let mut reprs = Vec::new();
            for (id, text) in queries.iter() {
                let c = context.get(id).ok_or_else(|| Error::UnknownId(id.to_owned()))?;
                texts.push(text);
                ctx.push(c);
                reprs.push(head.encode_normalized(c)?);
            }
            let config = BenchConfig {
                k: a.k,
                repetitions: a.repetitions,
                warmup: a.warmup,
                batch_size: a.batch,
                workers: a.workers.unwrap_or_else(rayon::current_num_threads),
                eps_values: a.eps,
            };
            let bq = BenchQueries {
                texts,
                context: ctx,
                reprs,
            };
            let report = bench(&bm25, &head, &index, graph.as_ref(), &bq, &config)?;
            print!("# workers={}\n{}", report.workers, report.to_tsv());
            if let Some(out) = &a.out {
                write_json(out, &report)?;
            }
        }
        Command::Synth(a) => {
            let config = SynthConfig {
                n_docs: a.docs,
                n_train_queries: a.train_queries,
                n_test_queries: a.test_queries,
                mismatch_fraction: a.mismatch,
                seed: a.seed,
                ..SynthConfig::default()
            };
            synth_corpus(&config)?.write(&a.out)?;
        }
        Command::Pipeline(a) => {
            let mut config = PipelineConfig::default();
            if let Some(path) = &a.config {
                config.apply(&KeyValues::load(path)?)?;
            }
            let report = match &a.data {
                Some(dir) => run_pipeline(PipelineData::load(dir)?, &config, &a.out)?,
                None => run_synthetic(&config, &a.out)?,
            };
            for run in ["bm25", "cort", "fused"] {
                println!(
                    "{run}\tmrr@10={:.4}\trecall@50={:.4}\trecall@{}={:.4}",
                    report.metric(run, "mrr@10"),
                    report.metric(run, "recall@50"),
                    config.depth,
                    report.metric(run, &format!("recall@{}", config.depth))
                );
            }
            for (name, s) in &report.studies {
                println!("{name}\tsaturation={:?}", s.saturation);
            }
        }
    }
    Ok(())
}

fn search(a: &Search) -> Result<Vec<Ranking>> {
    match a.mode {
        Mode::Bm25 => {
            let index = InvertedIndex::load(&a.index)?;
            let queries = load_queries(&a.queries)?;
            let (ids, texts): (Vec<&str>, Vec<&str>) = queries.iter().unzip();
            Ok(index
                .search_batch(&texts, a.k)
                .iter()
                .zip(ids)
                .map(|(hits, q)| Ranking::from_hits(q, hits, index.doc_ids(), Source::Bm25))
                .collect())
        }
        Mode::Cort => {
            let mut index = DenseIndex::load(&a.index)?;
            if let Some(p) = a.partitions {
                index = index.with_partitions(p)?;
            }
            let reprs = load_reprs(&a.queries)?;
            let ids: Vec<&str> = reprs.ids().iter().collect();
            let vectors: Vec<&[f32]> = (0..reprs.len() as u32).map(|i| reprs.row(i)).collect();
            let hits = match a.retrieval {
                Retrieval::Exhaustive => index.exhaustive_batch(&vectors, a.k)?,
                Retrieval::Ann => {
                    let graph = AnnGraph::load(need(&a.ann, "--ann")?)?;
                    use rayon::prelude::*;
                    vectors
                        .par_iter()
                        .map(|q| graph.search_hits(&index, q, a.k, a.eps).map(|r| r.0))
                        .collect::<Result<Vec<_>>>()?
                }
            };
            Ok(hits
                .iter()
                .zip(ids)
                .map(|(h, q)| Ranking::from_hits(q, h, index.ids(), Source::Cort))
                .collect())
        }
    }
}

fn rerank_sim(a: &RerankSim) -> Result<()> {
    let (candidates, _) = read_run(&a.candidates)?;
    let qrels = load_qrels(&a.qrels)?;
    let oracle;
    let bm25;
    let queries;
    let query_reprs;
    let passage_reprs;
    let extractor;
    let model;
    let logistic;
    let reranker: &dyn CandidateReranker = match a.mode {
        RerankMode::Oracle => {
            oracle = OracleReranker { qrels: &qrels };
            &oracle
        }
        RerankMode::Logistic => {
            bm25 = InvertedIndex::load(need(&a.bm25, "--bm25")?)?;
            queries = load_queries(need(&a.queries, "--queries")?)?;
            query_reprs = load_reprs(need(&a.query_reprs, "--query-reprs")?)?;
            passage_reprs = load_reprs(need(&a.passage_reprs, "--passage-reprs")?)?;
            extractor = FeatureExtractor {
                bm25: &bm25,
                queries: &queries,
                query_reprs: &query_reprs,
                passage_reprs: &passage_reprs,
            };
            let (train_runs, _) = read_run(need(&a.train_candidates, "--train-candidates")?)?;
            let config = RerankerConfig::default();
            let pairs = sample_training_pairs(&train_runs, &qrels, &config);
            let features = pairs
                .iter()
                .map(|(q, d, _)| extractor.features(q, d).map(|f| f.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
            model = train_reranker(&features, &labels, &config)?.0;
            logistic = LogisticRanker {
                model: &model,
                extractor: &extractor,
            };
            &logistic
        }
    };
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for &x in &a.x {
            let reranked = candidates
                .iter()
                .map(|r| reranker.rerank(&r.truncated(x), x))
                .collect::<Result<Vec<_>>>()?;
            write_run(&dir.join(format!("{x}.run")), &reranked)?;
        }
    }
    let rows = candidate_study(&candidates, reranker, &a.x, &qrels, a.threshold)?;
    println!("x\tmrr@10\trecall@20\trecall@all");
    for r in &rows {
        println!("{}\t{:.6}\t{:.6}\t{:.6}", r.candidates, r.mrr_at_10, r.recall_at_20, r.recall_all);
    }
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.candidates, r.mrr_at_10)).collect();
    if points.len() >= 2 {
        match saturation_point(&points)? {
            Some(x) => println!("# saturates at {x}"),
            None => println!("# no saturation within the measured range"),
        }
    }
    Ok(())
}
