//! Datasets, metrics, batch execution and failure classification.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beam::run_beam;
use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::reasoner::{run, ExtractedPath, ReasonerConfig, ReasoningOutcome, ReasoningTrace};
use crate::scorer::Oracle;
use crate::store::{EntityId, Graph};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub topic_entities: Vec<String>,
    /// Gold aliases.
    pub answers: Vec<String>,
}

fn string_list(
    row: usize,
    obj: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<Vec<String>> {
    let v = obj
        .get(key)
        .ok_or_else(|| Error::Dataset(format!("row {row}: missing field {key}")))?;
    let list = v
        .as_array()
        .and_then(|a| {
            a.iter()
                .map(|x| x.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
        })
        .ok_or_else(|| Error::Dataset(format!("row {row}: field {key} must be a list of strings")))?;
    if list.is_empty() {
        return Err(Error::Dataset(format!(
            "row {row}: field {key} must not be empty"
        )));
    }
    Ok(list)
}

fn string_field(row: usize, obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Result<String> {
    obj.get(key)
        .ok_or_else(|| Error::Dataset(format!("row {row}: missing field {key}")))?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::Dataset(format!("row {row}: field {key} must be a string")))
}

/// Parses JSON Lines text. Rows are numbered from 1 by line; blank lines
/// are skipped.
pub fn parse_dataset(text: &str) -> Result<Vec<QAItem>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::Dataset(format!("row {row}: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Dataset(format!("row {row}: expected a JSON object")))?;
        let item = QAItem {
            id: string_field(row, obj, "id")?,
            question: string_field(row, obj, "question")?,
            topic_entities: string_list(row, obj, "topic_entities")?,
            answers: string_list(row, obj, "answers")?,
        };
        if !seen.insert(item.id.clone()) {
            return Err(Error::Dataset(format!("row {row}: duplicate id {}", item.id)));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QAItem>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn write_dataset(path: &Path, items: &[QAItem]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '‘' | '’' | '“' | '”' | '«' | '»' | '…' | '—' | '–')
}

/// Lowercase, collapse whitespace, then strip surrounding punctuation and
/// leading articles until nothing changes.
pub fn normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut cur = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    loop {
        let stripped = cur.trim_matches(is_punct).trim();
        let body = ["the ", "an ", "a "]
            .iter()
            .find_map(|a| stripped.strip_prefix(a))
            .unwrap_or(stripped)
            .trim();
        if body == cur {
            return cur;
        }
        cur = body.to_string();
    }
}

pub fn hits_at_1(predicted: &[String], gold: &[String]) -> bool {
    let Some(top) = predicted.first() else {
        return false;
    };
    let top = normalize(top);
    gold.iter().any(|g| normalize(g) == top)
}

/// Set F1 over normalized strings. Both sides empty scores 1.
pub fn set_f1(predicted: &[String], gold: &[String]) -> f64 {
    let p: BTreeSet<String> = predicted.iter().map(|s| normalize(s)).collect();
    let g: BTreeSet<String> = gold.iter().map(|s| normalize(s)).collect();
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let hit = p.intersection(&g).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let precision = hit / p.len() as f64;
    let recall = hit / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Whether some gold alias names an entity the engine extracted.
pub fn retrieval_flag(extracted: &[ExtractedPath], gold: &[String]) -> bool {
    let gold: HashSet<String> = gold.iter().map(|s| normalize(s)).collect();
    extracted
        .iter()
        .flat_map(|p| p.entities.iter())
        .any(|e| gold.contains(&normalize(e)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    /// Gold reachable within the step limit through a branch not taken.
    Misdirection,
    /// Gold reachable only beyond the step limit.
    DepthLimit,
    /// Gold unreachable from the topic entities.
    PathAbsence,
}

impl FailureClass {
    pub const ALL: [FailureClass; 3] = [
        FailureClass::Misdirection,
        FailureClass::DepthLimit,
        FailureClass::PathAbsence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::Misdirection => "misdirection",
            FailureClass::DepthLimit => "depth_limit",
            FailureClass::PathAbsence => "path_absence",
        }
    }
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub class: FailureClass,
    /// Hops to the nearest gold entity, when reachable.
    pub depth: Option<usize>,
    pub note: Option<String>,
}

/// Resolves answer strings to entities: exact label first, then normalized.
pub struct Linker<'g> {
    graph: &'g Graph,
    by_norm: HashMap<String, Vec<EntityId>>,
}

impl<'g> Linker<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        let mut by_norm: HashMap<String, Vec<EntityId>> = HashMap::new();
        for e in graph.entities() {
            by_norm
                .entry(normalize(graph.entity_label(e)))
                .or_default()
                .push(e);
        }
        Linker { graph, by_norm }
    }

    pub fn link(&self, labels: &[String]) -> BTreeSet<EntityId> {
        let mut out = BTreeSet::new();
        for l in labels {
            match self.graph.entity(l) {
                Some(e) => {
                    out.insert(e);
                }
                None => {
                    if let Some(ids) = self.by_norm.get(&normalize(l)) {
                        out.extend(ids.iter().copied());
                    }
                }
            }
        }
        out
    }
}

/// Breadth-first distance from `topic` to the nearest of `targets` over
/// concrete edges.
pub fn nearest_depth(
    g: &Graph,
    topic: &BTreeSet<EntityId>,
    targets: &BTreeSet<EntityId>,
    include_inverse: bool,
) -> Option<usize> {
    let mut dist = vec![usize::MAX; g.entity_count()];
    let mut queue = VecDeque::new();
    for &t in topic {
        dist[t.index()] = 0;
        queue.push_back(t);
    }
    while let Some(e) = queue.pop_front() {
        let d = dist[e.index()];
        if targets.contains(&e) {
            return Some(d);
        }
        let forward = g.out_adjacency(e).iter().map(|&(_, n)| n);
        let backward = include_inverse
            .then(|| {
                g.in_edges(e)
                    .expect("entity from this graph")
                    .iter()
                    .map(|&(_, n)| n)
            })
            .into_iter()
            .flatten();
        for n in forward.chain(backward) {
            if dist[n.index()] == usize::MAX {
                dist[n.index()] = d + 1;
                queue.push_back(n);
            }
        }
    }
    None
}

/// Taxonomy label for an item whose gold answer was not retrieved. Depends
/// only on the graph, the gold answers and the step limit.
pub fn classify(
    g: &Graph,
    linker: &Linker<'_>,
    item: &QAItem,
    max_len: usize,
    include_inverse: bool,
) -> Classification {
    let gold = linker.link(&item.answers);
    if gold.is_empty() {
        return Classification {
            class: FailureClass::PathAbsence,
            depth: None,
            note: Some("gold unlinked".into()),
        };
    }
    let topic: BTreeSet<EntityId> = item.topic_entities.iter().filter_map(|t| g.entity(t)).collect();
    match nearest_depth(g, &topic, &gold, include_inverse) {
        None => Classification {
            class: FailureClass::PathAbsence,
            depth: None,
            note: topic.is_empty().then(|| "topic unlinked".to_string()),
        },
        Some(d) if d > max_len => Classification {
            class: FailureClass::DepthLimit,
            depth: Some(d),
            note: None,
        },
        Some(d) => Classification {
            class: FailureClass::Misdirection,
            depth: Some(d),
            note: None,
        },
    }
}

/// [`classify`] with its precondition checked: the outcome must not have
/// retrieved the gold answer.
pub fn classify_non_retrieval(
    g: &Graph,
    item: &QAItem,
    outcome: &ReasoningOutcome,
    max_len: usize,
    include_inverse: bool,
) -> Result<Classification> {
    if retrieval_flag(&outcome.extracted, &item.answers) {
        return Err(Error::Invariant(format!("item {} was retrieved", item.id)));
    }
    Ok(classify(g, &Linker::new(g), item, max_len, include_inverse))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Reknos,
    Beam,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Reknos => "reknos",
            Engine::Beam => "beam",
        }
    }

    pub fn run(
        self,
        g: &Graph,
        question: &str,
        topic: &[String],
        cfg: &ReasonerConfig,
        oracle: &dyn Oracle,
    ) -> Result<ReasoningOutcome> {
        match self {
            Engine::Reknos => run(g, question, topic, cfg, oracle),
            Engine::Beam => run_beam(g, question, topic, cfg, oracle),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reknos" => Ok(Engine::Reknos),
            "beam" => Ok(Engine::Beam),
            other => Err(Error::Config(format!(
                "unknown engine {other:?}; expected reknos or beam"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub engine: Engine,
    pub hits1: bool,
    pub f1: f64,
    pub retrieved: bool,
    pub failure_class: Option<FailureClass>,
    pub failure_note: Option<String>,
    pub calls: u32,
    pub retries: u32,
    pub search_space: usize,
    pub steps_used: usize,
    pub answer: Vec<String>,
    pub extracted: Vec<ExtractedPath>,
    /// Set when the run failed; the trace is then partial or empty.
    pub error: Option<String>,
    pub trace: ReasoningTrace,
}

impl ItemRecord {
    pub fn answer_top1(&self) -> &str {
        self.answer.first().map(String::as_str).unwrap_or("")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub engine: Engine,
    pub items: usize,
    pub failed: usize,
    pub hits_at_1: f64,
    pub f1: f64,
    pub retrieval_rate: f64,
    pub avg_calls: f64,
    pub avg_retries: f64,
    pub avg_search_space: f64,
    pub non_retrieved: usize,
    /// Fractions of non-retrieved items; all zero when there are none.
    pub failure_breakdown: BTreeMap<FailureClass, f64>,
}

impl MetricsReport {
    pub fn from_records(engine: Engine, records: &[ItemRecord]) -> Self {
        let n = records.len();
        let mean = |f: &dyn Fn(&ItemRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                records.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let non_retrieved: Vec<&ItemRecord> = records.iter().filter(|r| !r.retrieved).collect();
        let mut failure_breakdown: BTreeMap<FailureClass, f64> =
            FailureClass::ALL.iter().map(|&c| (c, 0.0)).collect();
        if !non_retrieved.is_empty() {
            for r in &non_retrieved {
                if let Some(c) = r.failure_class {
                    *failure_breakdown.get_mut(&c).unwrap() += 1.0;
                }
            }
            for v in failure_breakdown.values_mut() {
                *v /= non_retrieved.len() as f64;
            }
        }
        MetricsReport {
            engine,
            items: n,
            failed: records.iter().filter(|r| r.error.is_some()).count(),
            hits_at_1: mean(&|r| r.hits1 as u8 as f64),
            f1: mean(&|r| r.f1),
            retrieval_rate: mean(&|r| r.retrieved as u8 as f64),
            avg_calls: mean(&|r| r.calls as f64),
            avg_retries: mean(&|r| r.retries as f64),
            avg_search_space: mean(&|r| r.search_space as f64),
            non_retrieved: non_retrieved.len(),
            failure_breakdown,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "engine            {}", self.engine);
        let _ = writeln!(s, "items             {} ({} failed)", self.items, self.failed);
        let _ = writeln!(s, "hits@1            {:.4}", self.hits_at_1);
        let _ = writeln!(s, "f1                {:.4}", self.f1);
        let _ = writeln!(s, "retrieval rate    {:.4}", self.retrieval_rate);
        let _ = writeln!(s, "avg calls         {:.4}", self.avg_calls);
        let _ = writeln!(s, "avg retries       {:.4}", self.avg_retries);
        let _ = writeln!(s, "avg search space  {:.4}", self.avg_search_space);
        let _ = writeln!(s, "non-retrieved     {}", self.non_retrieved);
        for (c, v) in &self.failure_breakdown {
            let _ = writeln!(s, "  {:<15} {:.4}", c.as_str(), v);
        }
        s
    }
}

/// Side-by-side summary of two reports.
pub fn comparison_table(a: &MetricsReport, b: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>12} {:>12}",
        "metric",
        a.engine.as_str(),
        b.engine.as_str()
    );
    for (name, x, y) in [
        ("avg calls", a.avg_calls, b.avg_calls),
        ("avg search space", a.avg_search_space, b.avg_search_space),
        ("hits@1", a.hits_at_1, b.hits_at_1),
        ("retrieval rate", a.retrieval_rate, b.retrieval_rate),
        ("f1", a.f1, b.f1),
        ("avg retries", a.avg_retries, b.avg_retries),
    ] {
        let _ = writeln!(s, "{name:<18} {x:>12.4} {y:>12.4}");
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub report: MetricsReport,
    /// Sorted by id.
    pub records: Vec<ItemRecord>,
}

impl BatchResult {
    pub fn any_failed(&self) -> bool {
        self.report.failed > 0
    }
}

fn record_for(
    g: &Graph,
    linker: &Linker<'_>,
    item: &QAItem,
    engine: Engine,
    cfg: &ReasonerConfig,
    oracle: &dyn Oracle,
) -> Result<ItemRecord> {
    let (outcome, error, trace) = match engine.run(g, &item.question, &item.topic_entities, cfg, oracle) {
        Ok(o) => {
            let t = o.trace.clone();
            (Some(o), None, t)
        }
        Err(Error::Oracle { error, partial }) => (None, Some(format!("oracle failure: {error}")), *partial),
        Err(e @ (Error::UnknownTopic(_) | Error::Config(_))) => {
            (None, Some(e.to_string()), ReasoningTrace::default())
        }
        Err(e) => return Err(e),
    };
    let calls = trace.total_calls();
    if engine == Engine::Reknos && error.is_none() {
        let bound = 2 * trace.steps_used as u32 + 1;
        if calls > bound || bound > 2 * cfg.max_len as u32 + 1 {
            return Err(Error::Invariant(format!(
                "item {}: {calls} calls over {} steps exceeds the 2L*+1 bound",
                item.id, trace.steps_used
            )));
        }
    }
    let (answer, extracted) = outcome.map(|o| (o.answer, o.extracted)).unwrap_or_default();
    let retrieved = retrieval_flag(&extracted, &item.answers);
    let classification = (!retrieved).then(|| classify(g, linker, item, cfg.max_len, cfg.include_inverse));
    Ok(ItemRecord {
        id: item.id.clone(),
        engine,
        hits1: hits_at_1(&answer, &item.answers),
        f1: set_f1(&answer, &item.answers),
        retrieved,
        failure_class: classification.as_ref().map(|c| c.class),
        failure_note: classification.and_then(|c| c.note),
        calls,
        retries: trace.retries,
        search_space: trace.search_space,
        steps_used: trace.steps_used,
        answer,
        extracted,
        error,
        trace,
    })
}

/// Runs every item and aggregates. Items that fail are recorded, not
/// fatal; a broken engine invariant aborts the batch.
pub fn run_batch(
    g: &Graph,
    items: &[QAItem],
    engine: Engine,
    cfg: &ReasonerConfig,
    oracle: &dyn Oracle,
    parallelism: usize,
) -> Result<BatchResult> {
    cfg.validate()?;
    let threads = if oracle.concurrency_safe() {
        parallelism.max(1)
    } else {
        1
    };
    let linker = Linker::new(g);
    let mut records = map_ordered(items, threads, |item| {
        record_for(g, &linker, item, engine, cfg, oracle)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(BatchResult {
        report: MetricsReport::from_records(engine, &records),
        records,
    })
}

pub fn results_csv(records: &[ItemRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "id",
        "engine",
        "hits1",
        "f1",
        "retrieved",
        "failure_class",
        "calls",
        "retries",
        "search_space",
        "steps_used",
        "answer_top1",
    ])?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.engine.to_string(),
            (r.hits1 as u8).to_string(),
            format!("{:.4}", r.f1),
            r.retrieved.to_string(),
            r.failure_class.map(|c| c.to_string()).unwrap_or_default(),
            r.calls.to_string(),
            r.retries.to_string(),
            r.search_space.to_string(),
            r.steps_used.to_string(),
            r.answer_top1().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of strings is utf-8"))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_config(dir: &Path, config: &impl Serialize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_string_pretty(config)?;
    json.push('\n');
    write_file(&dir.join("config.json"), json)
}

/// Writes `config.json`, `results.csv`, `results.json` and `report.txt`.
pub fn write_artifacts(dir: &Path, batch: &BatchResult, config: &impl Serialize) -> Result<()> {
    write_config(dir, config)?;
    write_file(&dir.join("results.csv"), results_csv(&batch.records)?)?;
    let mut json = serde_json::to_string_pretty(batch)?;
    json.push('\n');
    write_file(&dir.join("results.json"), json)?;
    write_file(&dir.join("report.txt"), batch.report.to_text())
}

pub fn read_results(dir: &Path) -> Result<BatchResult> {
    let path = dir.join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
