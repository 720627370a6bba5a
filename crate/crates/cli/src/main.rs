use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use becr_core::bench::{run_bench, BenchConfig};
use becr_core::eval::{paired_t_test, Metric, Qrels, Run};
use becr_core::kernel::SIGMA_MIN;
use becr_core::lexical::{Bm25Params, CorpusStats, LexicalConfig, LexicalSchema};
use becr_core::scorer::{check_stores, Mode, Reranker, ScoringConfig};
use becr_core::store::{
    build_doc_store, build_token_store, format_bytes, storage_estimate, DocStore, EstimateParams, ExportReader, Ingestor,
    LayerSelection, Precision, SpaceMode, StorageTarget, TokenStore,
};
use becr_core::synth::{generate, oracle_weights, SynthConfig};
use becr_core::text::parse_queries;
use becr_core::train::{parse_pairs, train, Optimizer, TrainConfig, TrainingSet};
use becr_core::weights::{Component, ModelWeights, DEFAULT_KERNELS};

/// Re-rank candidate documents with precomputed, LSH-compressed contextual embeddings.
#[derive(Parser)]
#[command(name = "becr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hash an encoder export into a document store and write corpus statistics.
    BuildDocStore(BuildArgs),
    /// Hash the token-group embeddings of an encoder export into a token store.
    BuildTokenStore(BuildArgs),
    /// Re-rank first-stage candidates and write a TREC run.
    Rerank(RerankArgs),
    /// Fit scoring weights on pairwise preferences.
    Train(TrainArgs),
    /// Score a TREC run against qrels.
    Eval(EvalArgs),
    /// Time re-ranking on a synthetic store and report operation counts.
    Bench(BenchArgs),
    /// Payload size of the document and token stores.
    StorageEstimate(EstimateArgs),
    /// Break down the score difference between two documents for a query.
    Explain(ExplainArgs),
    /// Generate a synthetic corpus with planted relevance.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Encoder export file (.becrexp).
    #[arg(long)]
    export: PathBuf,
    /// Output store path.
    #[arg(long)]
    out: PathBuf,
    /// Layers to keep: `default`, `all`, or comma-separated layer ids.
    #[arg(long, default_value = "default")]
    layers: String,
    /// Footprint width in bits (multiple of 64).
    #[arg(long, default_value_t = 256)]
    bits: usize,
    /// Hyperplane seed; stores that are used together must share it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stored representation: lsh, full or both.
    #[arg(long, default_value = "lsh")]
    precision: String,
    /// Corpus statistics output (document stores only; default `<out>.stats`).
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct StoreArgs {
    /// Document store.
    #[arg(long)]
    docs: PathBuf,
    /// Token store.
    #[arg(long)]
    tokens: PathBuf,
    /// Corpus statistics (default `<docs>.stats`).
    #[arg(long)]
    stats: Option<PathBuf>,
}

impl StoreArgs {
    fn open(&self) -> Result<(DocStore, TokenStore, CorpusStats)> {
        let docs = DocStore::open(&self.docs).with_context(|| format!("opening {}", self.docs.display()))?;
        let tokens = TokenStore::open(&self.tokens).with_context(|| format!("opening {}", self.tokens.display()))?;
        let stats = self.stats.clone().unwrap_or_else(|| with_suffix(&self.docs, ".stats"));
        let corpus = CorpusStats::load(&stats).with_context(|| format!("reading {}", stats.display()))?;
        Ok((docs, tokens, corpus))
    }
}

#[derive(Args)]
struct ScoringArgs {
    /// Similarity computation: lsh or full.
    #[arg(long, default_value = "lsh")]
    mode: String,
    /// Maximum word distance for query word pairs.
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// BM25 term-frequency saturation.
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    /// BM25 length normalisation.
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Lexical feature schema: full, passage or full+pairs.
    #[arg(long, default_value = "full")]
    schema: String,
    /// Worker threads over candidates.
    #[arg(long, env = "BECR_THREADS", default_value_t = 1)]
    threads: usize,
}

impl ScoringArgs {
    fn config(&self) -> Result<ScoringConfig> {
        let mut config = ScoringConfig::new(Mode::parse(&self.mode)?);
        config.composition.window = self.window;
        config.lexical = LexicalConfig { schema: LexicalSchema::parse(&self.schema)?, bm25: Bm25Params { k1: self.k1, b: self.b } };
        Ok(config)
    }
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    stores: StoreArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Weights file.
    #[arg(long)]
    weights: PathBuf,
    /// Queries, one `qid<TAB>text` per line.
    #[arg(long)]
    queries: PathBuf,
    /// First-stage TREC run holding the candidates per query.
    #[arg(long)]
    candidates: PathBuf,
    /// Output run (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep only the best k documents per query.
    #[arg(long)]
    top_k: Option<usize>,
    /// Run tag written in the last column.
    #[arg(long, default_value = "becr")]
    tag: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    stores: StoreArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Queries, one `qid<TAB>text` per line.
    #[arg(long)]
    queries: PathBuf,
    /// Preference pairs, one `qid<TAB>positive<TAB>negative` per line.
    #[arg(long)]
    pairs: PathBuf,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
    /// Start from these weights instead of the zero model.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Kernel count for a fresh model.
    #[arg(long, default_value_t = DEFAULT_KERNELS)]
    kernels: usize,
    /// Document features scored by the others component (fresh model only).
    #[arg(long, value_delimiter = ',', default_value = "pagerank")]
    other_features: Vec<String>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    optimizer: String,
    /// Shuffle seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Components to zero and keep fixed: deep, lexical, others.
    #[arg(long, value_delimiter = ',')]
    freeze: Vec<String>,
    /// Loss trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run to score.
    #[arg(long)]
    run: PathBuf,
    /// Relevance judgements, `qid 0 docid grade` per line.
    #[arg(long)]
    qrels: PathBuf,
    /// Metrics such as ndcg@5, p@10, mrr@10.
    #[arg(long = "metric", default_values = ["ndcg@5"])]
    metrics: Vec<String>,
    /// Per-query CSV output.
    #[arg(long)]
    per_query: Option<PathBuf>,
    /// Second run for a paired t-test on every metric.
    #[arg(long)]
    baseline: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 150)]
    docs: usize,
    #[arg(long, default_value_t = 857)]
    doc_len: usize,
    #[arg(long, default_value_t = 5)]
    query_len: usize,
    /// Stored layers.
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long, default_value_t = 256)]
    bits: usize,
    #[arg(long, default_value_t = 768)]
    dim: usize,
    /// lsh or full.
    #[arg(long, default_value = "lsh")]
    mode: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, env = "BECR_THREADS", default_value_t = 1)]
    threads: usize,
    /// Timed queries after one warm-up query.
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Average terms per document.
    #[arg(long, default_value_t = 857.0)]
    m: f64,
    /// Encoder layers in the uncompressed layout.
    #[arg(long = "L", default_value_t = 13.0)]
    layers: f64,
    /// Layers kept after compression.
    #[arg(long = "Lp", alias = "layers-kept", default_value_t = 5.0)]
    layers_kept: f64,
    /// Footprint width in bits.
    #[arg(long = "b", alias = "bits", default_value_t = 256.0)]
    bits: f64,
    /// Number of documents.
    #[arg(long = "D", default_value_t = 50e6)]
    docs: f64,
    /// Embedding dimension.
    #[arg(long = "p", default_value_t = 768.0)]
    dim: f64,
    /// Distinct uni-grams in the token store.
    #[arg(long = "V", default_value_t = 0.0)]
    unigrams: f64,
    /// Distinct word pairs in the token store.
    #[arg(long = "H", default_value_t = 0.0)]
    pairs: f64,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    stores: StoreArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[arg(long)]
    weights: PathBuf,
    /// Query text.
    #[arg(long)]
    query: String,
    /// First document id.
    doc_a: String,
    /// Second document id.
    doc_b: String,
    /// Emit JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    candidates: usize,
    #[arg(long, default_value_t = 3)]
    relevant: usize,
    #[arg(long, default_value_t = 40)]
    doc_len: usize,
    #[arg(long, default_value_t = 3)]
    query_len: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Exported encoder layers.
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_queries(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_queries(&text)?)
}

fn build(args: &BuildArgs, docs: bool) -> Result<()> {
    let reader = ExportReader::open(&args.export).with_context(|| format!("opening {}", args.export.display()))?;
    let selection = LayerSelection::parse(&args.layers)?;
    let ingestor = Ingestor::for_reader(&reader, &selection, args.bits, args.seed, Precision::parse(&args.precision)?)?;
    if docs {
        let stats = build_doc_store(&reader, &ingestor, &args.out)?;
        let stats_path = args.stats.clone().unwrap_or_else(|| with_suffix(&args.out, ".stats"));
        stats.save(&stats_path)?;
        println!("documents {} config {} stats {}", reader.document_count(), ingestor.config, stats_path.display());
    } else {
        build_token_store(&reader, &ingestor, &args.out)?;
        println!("groups {} config {}", reader.group_count(), ingestor.config);
    }
    Ok(())
}

fn rerank(args: &RerankArgs) -> Result<()> {
    let (docs, tokens, corpus) = args.stores.open()?;
    let weights = ModelWeights::load(&args.weights).with_context(|| format!("reading {}", args.weights.display()))?;
    let config = args.scoring.config()?;
    check_stores(&docs, &tokens, &weights, config.mode)?;
    let reranker = Reranker::new(&docs, &tokens, &corpus, &weights, config)?.with_threads(args.scoring.threads);
    let candidates = Run::load(&args.candidates).with_context(|| format!("reading {}", args.candidates.display()))?;
    let mut run = Run::default();
    for (qid, text) in read_queries(&args.queries)? {
        let Some(list) = candidates.queries.get(&qid) else {
            eprintln!("skipped qid={qid} reason=no-candidates");
            continue;
        };
        let ids: Vec<String> = list.iter().map(|d| d.doc_id.clone()).collect();
        let out = reranker.rerank(&text, &ids, args.top_k)?;
        for f in &out.failures {
            eprintln!("skipped qid={qid} doc={} kind={} msg={}", f.doc_id, f.kind, f.message);
        }
        run.insert(&qid, out.ranked);
    }
    write_output(args.out.as_deref(), &run.to_text(&args.tag))
}

fn train_cmd(args: &TrainArgs) -> Result<()> {
    let (docs, tokens, corpus) = args.stores.open()?;
    let config = args.scoring.config()?;
    let frozen = args.freeze.iter().map(|c| Component::parse(c)).collect::<becr_core::Result<Vec<_>>>()?;
    let mut init = match &args.init {
        Some(p) => ModelWeights::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let sc = docs.config();
            let others = args.other_features.iter().filter(|s| !s.is_empty()).cloned().collect();
            ModelWeights::init(args.kernels, sc.layers(), sc.dim, config.lexical.schema, others)?
        }
    };
    for c in &frozen {
        init.zero_component(*c);
    }
    check_stores(&docs, &tokens, &init, config.mode)?;
    let reranker = Reranker::new(&docs, &tokens, &corpus, &init, config)?.with_threads(args.scoring.threads);
    let queries: HashMap<String, String> = read_queries(&args.queries)?.into_iter().collect();
    let pairs = parse_pairs(&fs::read_to_string(&args.pairs).with_context(|| format!("reading {}", args.pairs.display()))?)?;
    let set = TrainingSet::build(&reranker, &queries, &pairs)?;
    let train_config = TrainConfig {
        learning_rate: args.lr,
        iterations: args.iterations,
        batch_size: args.batch_size,
        seed: args.seed,
        sigma_min: SIGMA_MIN,
        optimizer: Optimizer::parse(&args.optimizer)?,
        frozen,
    };
    let report = train(&set, &init, &train_config)?;
    report.weights.save(&args.out)?;
    if let Some(t) = &args.trace {
        report.write_trace(t)?;
    }
    println!(
        "pairs {} loss {:.6} -> {:.6} pair-accuracy {:.4} weights {}",
        set.pairs.len(),
        report.initial_loss,
        report.final_loss,
        report.pair_accuracy,
        args.out.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let run = Run::load(&args.run).with_context(|| format!("reading {}", args.run.display()))?;
    let qrels = Qrels::load(&args.qrels).with_context(|| format!("reading {}", args.qrels.display()))?;
    let baseline = args.baseline.as_ref().map(Run::load).transpose()?;
    let mut csv = String::from("qid,metric,value\n");
    for name in &args.metrics {
        let metric = Metric::parse(name)?;
        let result = metric.evaluate(&run, &qrels)?;
        print!("{}\t{:.6}", metric.name(), result.mean);
        if let Some(base) = &baseline {
            let other = metric.evaluate(base, &qrels)?;
            let a: Vec<f64> = result.per_query.values().copied().collect();
            let b: Vec<f64> = other.per_query.values().copied().collect();
            let t = paired_t_test(&a, &b)?;
            print!(
                "\tbaseline {:.6}\tdiff {:+.6}\tp {:.4}{}",
                other.mean,
                t.mean_difference,
                t.p_value,
                if t.significant { "\tsignificant" } else { "" }
            );
        }
        println!();
        csv.push_str(result.to_csv(&metric.name()).lines().skip(1).map(|l| format!("{l}\n")).collect::<String>().as_str());
    }
    if let Some(p) = &args.per_query {
        fs::write(p, csv)?;
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let config = BenchConfig {
        docs: args.docs,
        doc_len: args.doc_len,
        query_len: args.query_len,
        layers: args.layers,
        bits: args.bits,
        dim: args.dim,
        mode: Mode::parse(&args.mode)?,
        seed: args.seed,
        threads: args.threads,
        repetitions: args.repetitions,
        window: args.window,
    };
    let report = run_bench(&config)?;
    print!("{}", report.to_text());
    if let Some(p) = &args.csv {
        fs::write(p, report.to_csv(true))?;
    }
    Ok(())
}

fn whole(name: &str, v: f64) -> Result<u64> {
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(63)) {
        bail!(becr_core::Error::Config(format!("--{name} must be a non-negative integer, got {v}")));
    }
    Ok(v as u64)
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let params = EstimateParams {
        m: whole("m", args.m)?,
        layers: whole("L", args.layers)?,
        layers_kept: whole("Lp", args.layers_kept)?,
        bits: whole("b", args.bits)?,
        docs: whole("D", args.docs)?,
        unigrams: whole("V", args.unigrams)?,
        pairs: whole("H", args.pairs)?,
        dim: whole("p", args.dim)?,
    };
    let mut rows = Vec::new();
    for (target, label) in [(StorageTarget::Documents, "documents"), (StorageTarget::Tokens, "tokens")] {
        if target == StorageTarget::Tokens && params.unigrams + params.pairs == 0 {
            continue;
        }
        for (mode, kind) in [(SpaceMode::Original, "original"), (SpaceMode::Compressed, "compressed")] {
            rows.push((label, kind, storage_estimate(&params, mode, target)?));
        }
    }
    if args.json {
        let items: Vec<_> = rows
            .iter()
            .map(|(t, k, bytes)| serde_json::json!({ "target": t, "layout": k, "bytes": bytes.to_string(), "human": format_bytes(*bytes) }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "params": params, "estimates": items }))?);
    } else {
        println!("{:<10} {:<11} {:>10} {:>22}", "target", "layout", "size", "bytes");
        for (t, k, bytes) in rows {
            println!("{t:<10} {k:<11} {:>10} {bytes:>22}", format_bytes(bytes));
        }
    }
    Ok(())
}

fn explain(args: &ExplainArgs) -> Result<()> {
    let (docs, tokens, corpus) = args.stores.open()?;
    let weights = ModelWeights::load(&args.weights).with_context(|| format!("reading {}", args.weights.display()))?;
    let config = args.scoring.config()?;
    check_stores(&docs, &tokens, &weights, config.mode)?;
    let reranker = Reranker::new(&docs, &tokens, &corpus, &weights, config)?;
    let e = reranker.explain(&args.query, &args.doc_a, &args.doc_b)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&e)?);
    } else {
        print!("{}", e.to_table());
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        queries: args.queries,
        candidates: args.candidates,
        relevant: args.relevant,
        doc_len: args.doc_len,
        query_len: args.query_len,
        dim: args.dim,
        layers: args.layers,
        window: args.window,
        ..SynthConfig::default()
    };
    let corpus = generate(&config)?;
    corpus.write_fixture(&args.out)?;
    let oracle = oracle_weights(args.layers, args.dim, LexicalSchema::full(), Vec::new())?;
    oracle.save(args.out.join("oracle.weights"))?;
    println!(
        "queries {} documents {} groups {} dir {}",
        corpus.queries.len(),
        corpus.export.documents.len(),
        corpus.export.groups.len(),
        args.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::BuildDocStore(a) => build(a, true),
        Command::BuildTokenStore(a) => build(a, false),
        Command::Rerank(a) => rerank(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::StorageEstimate(a) => estimate(a),
        Command::Explain(a) => explain(a),
        Command::Synth(a) => synth(a),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<becr_core::Error>() {
            return e.kind();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "cli"
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let head = msg.split("Usage:").next().unwrap_or_default();
            eprintln!("error kind=usage msg={}", one_line(head.trim().trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg={}", error_kind(&e), one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
