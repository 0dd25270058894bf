//! Run configuration: defaults, overlaid by an optional JSON file, overlaid
//! by command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use reknos::scorer::{LexicalOracle, LlmOracle, LlmOracleConfig, Oracle};
use reknos::{Engine, GroupingStrategy, ReasonerConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    #[default]
    Lexical,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Reknos,
    Beam,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Reknos => Engine::Reknos,
            EngineArg::Beam => Engine::Beam,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    /// `tsv` or `nt`; inferred from the extension when absent.
    pub format: Option<String>,
    pub mapping: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub strategy: String,
    pub engine: Engine,
    pub reasoner: ReasonerConfig,
    pub scorer: ScorerKind,
    pub lexical_threshold: f64,
    pub llm: LlmOracleConfig,
    pub parallelism: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            graph: None,
            format: None,
            mapping: None,
            dataset: None,
            out: None,
            strategy: "hier:2".into(),
            engine: Engine::Reknos,
            reasoner: ReasonerConfig::default(),
            scorer: ScorerKind::Lexical,
            lexical_threshold: 0.5,
            llm: LlmOracleConfig::default(),
            parallelism: 1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Parses a config file body. A width given without `top_k` also sets
    /// `top_k`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let width_only = value
            .get("reasoner")
            .is_some_and(|r| r.get("width").is_some() && r.get("top_k").is_none());
        let mut c: RunConfig = serde_json::from_value(value)?;
        if width_only {
            c.reasoner.top_k = c.reasoner.width;
        }
        Ok(c)
    }

    pub fn grouping(&self) -> Result<GroupingStrategy, String> {
        match &self.mapping {
            Some(m) => Ok(GroupingStrategy::ExplicitMapping { file: m.clone() }),
            None => self.strategy.parse().map_err(|e: reknos::Error| e.to_string()),
        }
    }

    /// Checks everything that can be checked before doing work.
    pub fn validate(&self) -> Result<(), String> {
        self.reasoner.validate().map_err(|e| e.to_string())?;
        self.grouping()?;
        if let Some(f) = &self.format {
            f.parse::<reknos::TripleFormat>().map_err(|e| e.to_string())?;
        }
        if self.scorer == ScorerKind::Llm {
            self.llm.validate().map_err(|e| format!("llm scorer: {e}"))?;
        }
        if !(0.0..=1.0).contains(&self.lexical_threshold) {
            return Err("lexical threshold must be in [0, 1]".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be >= 1".into());
        }
        Ok(())
    }

    pub fn oracle(&self) -> anyhow::Result<Box<dyn Oracle>> {
        Ok(match self.scorer {
            ScorerKind::Lexical => Box::new(LexicalOracle {
                threshold: self.lexical_threshold,
            }),
            ScorerKind::Llm => Box::new(LlmOracle::new(self.llm.clone())?),
        })
    }
}

#[derive(Args, Debug, Default)]
pub struct GraphArgs {
    /// Triples file or snapshot to load
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Input format, tsv or nt [default: from extension, else tsv]
    #[arg(long)]
    pub format: Option<String>,
    /// Explicit relation<TAB>super-relation mapping; overrides --strategy
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    /// Grouping strategy: hier:N, cluster:T or file:PATH [default: hier:2]
    #[arg(long)]
    pub strategy: Option<String>,
}

impl GraphArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.graph, &self.graph);
        set(&mut c.format, &self.format);
        set(&mut c.mapping, &self.mapping);
        if let Some(s) = &self.strategy {
            c.strategy = s.clone();
            c.mapping = None;
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct ReasonerArgs {
    /// Super-relations kept per step [default: 3]
    #[arg(short = 'N', long)]
    pub width: Option<usize>,
    /// Maximum reasoning steps [default: 3]
    #[arg(short = 'L', long)]
    pub max_len: Option<usize>,
    /// Paths kept for entity extraction [default: 3]
    #[arg(short = 'K', long)]
    pub top_k: Option<usize>,
    /// Entities shown to the oracle per step [default: 50]
    #[arg(long)]
    pub entity_cap: Option<usize>,
    /// Also traverse edges tail-to-head
    #[arg(long)]
    pub include_inverse: bool,
    /// Connect super-relations anywhere in the graph instead of at the frontier
    #[arg(long)]
    pub global: bool,
}

impl ReasonerArgs {
    pub fn apply(&self, c: &mut ReasonerConfig) {
        if let Some(v) = self.width {
            c.width = v;
            if self.top_k.is_none() {
                c.top_k = v;
            }
        }
        set_copy(&mut c.max_len, self.max_len);
        set_copy(&mut c.top_k, self.top_k);
        set_copy(&mut c.entity_cap, self.entity_cap);
        if self.include_inverse {
            c.include_inverse = true;
        }
        if self.global {
            c.anchored = false;
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct ScorerArgs {
    /// Oracle implementation [default: lexical]
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerKind>,
    /// Lexical decision threshold [default: 0.5]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Chat-completions endpoint URL (required with --scorer llm)
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name [default: gpt-3.5-turbo]
    #[arg(long)]
    pub model: Option<String>,
    /// Sampling temperature [default: 0]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Extra attempts per oracle call [default: 1]
    #[arg(long)]
    pub retry_budget: Option<u32>,
    /// Demonstrations in the scoring prompt, 1 or 3 [default: 3]
    #[arg(long)]
    pub few_shot: Option<usize>,
    /// Include the relevance rubric in the scoring prompt
    #[arg(long)]
    pub rubric: bool,
    /// Environment variable holding the API key [default: OPENAI_API_KEY]
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Concurrent requests to the endpoint [default: 4]
    #[arg(long)]
    pub max_in_flight: Option<usize>,
}

impl ScorerArgs {
    pub fn apply(&self, c: &mut RunConfig) {
        set_copy(&mut c.scorer, self.scorer);
        set_copy(&mut c.lexical_threshold, self.threshold);
        let l = &mut c.llm;
        if let Some(v) = &self.endpoint {
            l.endpoint = v.clone();
        }
        if let Some(v) = &self.model {
            l.model = v.clone();
        }
        set_copy(&mut l.temperature, self.temperature);
        set_copy(&mut l.retry_budget, self.retry_budget);
        set_copy(&mut l.few_shot_count, self.few_shot);
        if self.rubric {
            l.rubric_mode = true;
        }
        if let Some(v) = &self.api_key_env {
            l.api_key_env = v.clone();
        }
        set_copy(&mut l.max_in_flight, self.max_in_flight);
    }
}

fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

fn set_copy<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
