use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use reknos::eval::{
    classify, comparison_table, load_dataset, read_results, run_batch, write_artifacts, write_config,
    write_dataset, FailureClass, Linker,
};
use reknos::store::load_triples;
use reknos::super_relations::derive_super_relations;
use reknos::synthetic::{kg_a, kg_a_dataset, layered_graph, synthetic_dataset, LayeredSpec};
use reknos::{Engine, Graph, QAItem, TripleFormat};

mod config;

use config::{EngineArg, GraphArgs, ReasonerArgs, RunConfig, ScorerArgs};

/// Knowledge-graph question answering over super-relation search paths.
///
/// Every command accepts `--config FILE` (JSON, see README); flags given on
/// the command line override values from the file.
#[derive(Parser, Debug)]
#[command(name = "reknos", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a triples file and write a canonical TSV snapshot
    Ingest(IngestArgs),
    /// Group relations into super-relations and write the mapping
    DeriveSuper(DeriveArgs),
    /// Answer one question and print the answer with its trace as JSON
    Answer(AnswerArgs),
    /// Run one engine over a dataset and write metrics and per-item results
    Eval(EvalArgs),
    /// Run both engines over a dataset and print a side-by-side table
    Compare(EvalArgs),
    /// Recompute the non-retrieval breakdown for a results directory
    ClassifyFailures(ClassifyArgs),
    /// Write a generated graph and dataset
    GenSynthetic(GenArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Triples to read
    #[arg(long, value_name = "FILE")]
    triples: PathBuf,
    /// Input format, tsv or nt [default: from extension, else tsv]
    #[arg(long)]
    format: Option<String>,
    /// Snapshot to write
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DeriveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    graph: GraphArgs,
    /// Mapping file to write [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnswerArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    graph: GraphArgs,
    /// Question text
    #[arg(long)]
    question: String,
    /// Topic entity label; repeat for several
    #[arg(long, required = true)]
    topic: Vec<String>,
    /// Engine [default: reknos]
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[command(flatten)]
    reasoner: ReasonerArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Also write config.json and answer.json here
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    graph: GraphArgs,
    /// JSON Lines dataset
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Engine (eval only) [default: reknos]
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Items run concurrently [default: 1]
    #[arg(long, short = 'j')]
    parallelism: Option<usize>,
    #[command(flatten)]
    reasoner: ReasonerArgs,
    #[command(flatten)]
    scorer: ScorerArgs,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    graph: GraphArgs,
    /// JSON Lines dataset the results were produced from
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    /// Directory written by `eval`
    #[arg(long, value_name = "DIR")]
    results: PathBuf,
    /// Step limit [default: from the results' config.json, else 3]
    #[arg(short = 'L', long)]
    max_len: Option<usize>,
    /// Also traverse edges tail-to-head
    #[arg(long)]
    include_inverse: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GenKind {
    /// Questions answerable within three steps
    Qa,
    /// Layered branching graph with one question per topic
    Layered,
    /// The five-triple fixture with three questions
    Fixture,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// What to generate
    #[arg(long, value_enum, default_value = "qa")]
    kind: GenKind,
    /// Number of questions for --kind qa
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<reknos::Error> for Failure {
    fn from(e: reknos::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::DeriveSuper(a) => derive(a),
        Command::Answer(a) => answer(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
        Command::ClassifyFailures(a) => classify_failures(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn base_config(common: &Common) -> Result<RunConfig, Failure> {
    RunConfig::load(common.config.as_deref()).map_err(usage)
}

fn validated(c: RunConfig) -> Result<RunConfig, Failure> {
    c.validate().map_err(usage)?;
    Ok(c)
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    v.as_deref().ok_or_else(|| usage(format!("{flag} is required")))
}

fn read_graph(path: &Path, format: Option<&str>) -> anyhow::Result<Graph> {
    let format = match format {
        Some(f) => f.parse()?,
        None => TripleFormat::from_path(path),
    };
    let file = File::open(path).with_context(|| format!("{}", path.display()))?;
    load_triples(BufReader::new(file), format).with_context(|| format!("{}", path.display()))
}

fn load_graph(c: &RunConfig) -> Result<Graph, Failure> {
    let path = require(&c.graph, "--graph")?;
    let mut g = read_graph(path, c.format.as_deref())?;
    let strategy = c.grouping().map_err(usage)?;
    derive_super_relations(&mut g, &strategy)?;
    log::info!(
        "{}: {} entities, {} relations, {} triples, {} super-relations",
        path.display(),
        g.entity_count(),
        g.relation_count(),
        g.triple_count(),
        g.super_relation_count()
    );
    Ok(g)
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("stdout"),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("{}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    path.with_file_name(name)
}

fn ingest(a: IngestArgs) -> CmdResult {
    let mut c = base_config(&a.common)?;
    c.graph = Some(a.triples.clone());
    if a.format.is_some() {
        c.format = a.format.clone();
    }
    c.out = Some(a.out.clone());
    let c = validated(c)?;
    let g = read_graph(&a.triples, c.format.as_deref())?;
    let file = File::create(&a.out).with_context(|| format!("{}", a.out.display()))?;
    let mut w = BufWriter::new(file);
    g.write_tsv(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("{}", a.out.display()))?;
    write_json(&sidecar(&a.out), &c)?;
    eprintln!(
        "{} entities, {} relations, {} triples",
        g.entity_count(),
        g.relation_count(),
        g.triple_count()
    );
    Ok(ExitCode::SUCCESS)
}

fn derive(a: DeriveArgs) -> CmdResult {
    let mut c = base_config(&a.common)?;
    a.graph.apply(&mut c);
    if a.out.is_some() {
        c.out = a.out.clone();
    }
    let c = validated(c)?;
    let g = load_graph(&c)?;
    match &c.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("{}", path.display()))?;
            let mut w = BufWriter::new(file);
            g.write_mapping(&mut w)
                .and_then(|_| w.flush())
                .with_context(|| format!("{}", path.display()))?;
            write_json(&sidecar(path), &c)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            g.write_mapping(&mut lock).context("stdout")?;
        }
    }
    eprintln!(
        "{} relations grouped into {} super-relations",
        g.relation_count(),
        g.super_relation_count()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AnswerReport<'a> {
    question: &'a str,
    topic: &'a [String],
    engine: Engine,
    answer: &'a [String],
    retrieved: bool,
    steps_used: usize,
    calls: u32,
    retries: u32,
    search_space: usize,
    extracted: &'a [reknos::reasoner::ExtractedPath],
    trace: &'a reknos::ReasoningTrace,
    config: &'a RunConfig,
}

fn answer(a: AnswerArgs) -> CmdResult {
    let mut c = base_config(&a.common)?;
    a.graph.apply(&mut c);
    a.reasoner.apply(&mut c.reasoner);
    a.scorer.apply(&mut c);
    if let Some(e) = a.engine {
        c.engine = e.into();
    }
    if a.out.is_some() {
        c.out = a.out.clone();
    }
    let c = validated(c)?;
    let g = load_graph(&c)?;
    let oracle = c.oracle()?;
    let outcome = c
        .engine
        .run(&g, &a.question, &a.topic, &c.reasoner, oracle.as_ref())?;
    let report = AnswerReport {
        question: &a.question,
        topic: &a.topic,
        engine: c.engine,
        answer: &outcome.answer,
        retrieved: outcome.retrieved,
        steps_used: outcome.trace.steps_used,
        calls: outcome.trace.total_calls(),
        retries: outcome.trace.retries,
        search_space: outcome.trace.search_space,
        extracted: &outcome.extracted,
        trace: &outcome.trace,
        config: &c,
    };
    if let Some(dir) = &c.out {
        write_config(dir, &c)?;
        write_json(&dir.join("answer.json"), &report)?;
    }
    emit(&format!(
        "{}\n",
        serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?
    ))?;
    Ok(ExitCode::SUCCESS)
}

fn eval_config(a: &EvalArgs) -> Result<RunConfig, Failure> {
    let mut c = base_config(&a.common)?;
    a.graph.apply(&mut c);
    a.reasoner.apply(&mut c.reasoner);
    a.scorer.apply(&mut c);
    if let Some(e) = a.engine {
        c.engine = e.into();
    }
    if a.dataset.is_some() {
        c.dataset = a.dataset.clone();
    }
    if a.out.is_some() {
        c.out = a.out.clone();
    }
    if let Some(p) = a.parallelism {
        c.parallelism = p;
    }
    let c = validated(c)?;
    require(&c.dataset, "--dataset")?;
    require(&c.out, "--out")?;
    require(&c.graph, "--graph")?;
    Ok(c)
}

fn load_items(c: &RunConfig) -> Result<Vec<QAItem>, Failure> {
    Ok(load_dataset(require(&c.dataset, "--dataset")?)?)
}

fn eval(a: EvalArgs) -> CmdResult {
    let c = eval_config(&a)?;
    let items = load_items(&c)?;
    let g = load_graph(&c)?;
    let oracle = c.oracle()?;
    let batch = run_batch(&g, &items, c.engine, &c.reasoner, oracle.as_ref(), c.parallelism)?;
    let out = require(&c.out, "--out")?;
    write_artifacts(out, &batch, &c)?;
    emit(&batch.report.to_text())?;
    for r in batch.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("item {} failed: {}", r.id, r.error.as_deref().unwrap_or(""));
    }
    Ok(if batch.any_failed() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn compare(a: EvalArgs) -> CmdResult {
    let c = eval_config(&a)?;
    let items = load_items(&c)?;
    let g = load_graph(&c)?;
    let oracle = c.oracle()?;
    let out = require(&c.out, "--out")?.to_path_buf();
    write_config(&out, &c)?;
    let mut reports = Vec::new();
    let mut failed = false;
    for engine in [Engine::Reknos, Engine::Beam] {
        let batch = run_batch(&g, &items, engine, &c.reasoner, oracle.as_ref(), c.parallelism)?;
        let cfg = RunConfig {
            engine,
            out: Some(out.join(engine.as_str())),
            ..c.clone()
        };
        write_artifacts(&out.join(engine.as_str()), &batch, &cfg)?;
        failed |= batch.any_failed();
        reports.push(batch.report);
    }
    let table = comparison_table(&reports[0], &reports[1]);
    fs::write(out.join("compare.txt"), &table).with_context(|| format!("{}", out.display()))?;
    emit(&table)?;
    Ok(if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(Serialize)]
struct ClassifiedItem {
    id: String,
    class: FailureClass,
    depth: Option<usize>,
    note: Option<String>,
}

#[derive(Serialize)]
struct FailureReport {
    items: usize,
    non_retrieved: usize,
    failure_breakdown: std::collections::BTreeMap<FailureClass, f64>,
    classified: Vec<ClassifiedItem>,
    max_len: usize,
    include_inverse: bool,
    config: RunConfig,
}

fn classify_failures(a: ClassifyArgs) -> CmdResult {
    let mut c = base_config(&a.common)?;
    let saved = a.results.join("config.json");
    if a.common.config.is_none() && saved.exists() {
        c = RunConfig::load(Some(&saved)).map_err(|e| Failure::Runtime(anyhow!(e)))?;
    }
    a.graph.apply(&mut c);
    c.dataset = Some(a.dataset.clone());
    c.out = Some(a.results.clone());
    if let Some(l) = a.max_len {
        c.reasoner.max_len = l;
    }
    if a.include_inverse {
        c.reasoner.include_inverse = true;
    }
    let c = validated(c)?;
    let items = load_items(&c)?;
    let g = load_graph(&c)?;
    let batch = read_results(&a.results)?;
    let by_id: std::collections::HashMap<&str, &QAItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let linker = Linker::new(&g);
    let mut classified = Vec::new();
    for r in batch.records.iter().filter(|r| !r.retrieved) {
        let item = by_id
            .get(r.id.as_str())
            .ok_or_else(|| anyhow!("result {} is not in {}", r.id, a.dataset.display()))?;
        let cl = classify(&g, &linker, item, c.reasoner.max_len, c.reasoner.include_inverse);
        classified.push(ClassifiedItem {
            id: r.id.clone(),
            class: cl.class,
            depth: cl.depth,
            note: cl.note,
        });
    }
    let mut failure_breakdown: std::collections::BTreeMap<FailureClass, f64> =
        FailureClass::ALL.iter().map(|&k| (k, 0.0)).collect();
    for item in &classified {
        *failure_breakdown.get_mut(&item.class).unwrap() += 1.0 / classified.len() as f64;
    }
    let report = FailureReport {
        items: batch.records.len(),
        non_retrieved: classified.len(),
        failure_breakdown,
        classified,
        max_len: c.reasoner.max_len,
        include_inverse: c.reasoner.include_inverse,
        config: c,
    };
    write_json(&a.results.join("failures.json"), &report)?;
    let mut text = format!("non-retrieved {} of {}\n", report.non_retrieved, report.items);
    for (k, v) in &report.failure_breakdown {
        text.push_str(&format!("  {:<15} {:.4}\n", k.as_str(), v));
    }
    emit(&text)?;
    Ok(ExitCode::SUCCESS)
}

fn gen_synthetic(a: GenArgs) -> CmdResult {
    let mut c = base_config(&a.common)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.out = Some(a.out.clone());
    c.graph = Some(a.out.join("graph.tsv"));
    c.dataset = Some(a.out.join("dataset.jsonl"));
    let c = validated(c)?;
    let (graph, items) = match a.kind {
        GenKind::Qa => {
            let set = synthetic_dataset(c.seed, a.count);
            (set.graph, set.items)
        }
        GenKind::Layered => {
            let spec = LayeredSpec::default();
            let (g, topics) = layered_graph(c.seed, spec);
            let items = topics
                .iter()
                .map(|t| QAItem {
                    id: format!("layered-{t}"),
                    question: format!("Which node lies {} levels below {t}?", spec.depth),
                    topic_entities: vec![t.clone()],
                    answers: vec![format!("v{}_0", spec.depth)],
                })
                .collect();
            (g, items)
        }
        GenKind::Fixture => (kg_a(), kg_a_dataset()),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("{}", a.out.display()))?;
    let graph_path = a.out.join("graph.tsv");
    let file = File::create(&graph_path).with_context(|| format!("{}", graph_path.display()))?;
    let mut w = BufWriter::new(file);
    graph
        .write_tsv(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("{}", graph_path.display()))?;
    write_dataset(&a.out.join("dataset.jsonl"), &items)?;
    write_config(&a.out, &c)?;
    eprintln!(
        "wrote {} triples and {} questions to {}",
        graph.triple_count(),
        items.len(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
