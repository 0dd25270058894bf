//! The oracle role: scoring candidate super-relations, deciding whether the
//! retrieved entities suffice, and producing the final answer.

use serde::{Deserialize, Serialize};

use crate::error::OracleError;

pub mod lexical;
pub mod llm;
pub mod prompt;

pub use lexical::{lexical_score, LexicalOracle};
pub use llm::{LlmOracle, LlmOracleConfig};
pub use prompt::{build_score_prompt, parse_score_response, PromptConfig};

pub struct ScoreRequest<'a> {
    pub question: &'a str,
    pub topic: &'a [String],
    pub candidates: &'a [String],
    /// Number of relations the engine will keep.
    pub width: usize,
}

/// What the engine surfaces to the decision and answer steps.
pub struct StepContext<'a> {
    pub question: &'a str,
    /// Human-readable paths, e.g. `film.director -> people.person`.
    pub paths: &'a [String],
    pub entities: &'a [String],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    Answer,
}

/// An oracle result plus the number of retried requests behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply<T> {
    pub value: T,
    pub retries: u32,
}

impl<T> Reply<T> {
    pub fn direct(value: T) -> Self {
        Reply { value, retries: 0 }
    }
}

pub trait Oracle: Send + Sync {
    /// One score per candidate, in candidate order.
    fn score(&self, req: &ScoreRequest<'_>) -> Result<Reply<Vec<f64>>, OracleError>;

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Reply<Decision>, OracleError>;

    /// Ranked answer strings.
    fn answer(&self, ctx: &StepContext<'_>) -> Result<Reply<Vec<String>>, OracleError>;

    /// Whether concurrent calls from several runs are allowed.
    fn concurrency_safe(&self) -> bool {
        true
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<Reply<Vec<f64>>, OracleError> {
        (**self).score(req)
    }
    fn decide(&self, ctx: &StepContext<'_>) -> Result<Reply<Decision>, OracleError> {
        (**self).decide(ctx)
    }
    fn answer(&self, ctx: &StepContext<'_>) -> Result<Reply<Vec<String>>, OracleError> {
        (**self).answer(ctx)
    }
    fn concurrency_safe(&self) -> bool {
        (**self).concurrency_safe()
    }
}

/// Delegates to `inner` but never accepts the retrieved entities, so every
/// run goes the full length.
#[derive(Clone, Debug, Default)]
pub struct AlwaysContinue<O>(pub O);

impl<O: Oracle> Oracle for AlwaysContinue<O> {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<Reply<Vec<f64>>, OracleError> {
        self.0.score(req)
    }
    fn decide(&self, _ctx: &StepContext<'_>) -> Result<Reply<Decision>, OracleError> {
        Ok(Reply::direct(Decision::Continue))
    }
    fn answer(&self, ctx: &StepContext<'_>) -> Result<Reply<Vec<String>>, OracleError> {
        self.0.answer(ctx)
    }
    fn concurrency_safe(&self) -> bool {
        self.0.concurrency_safe()
    }
}

/// Clamps into [0, 1]; NaN becomes 0.
pub fn clamp_score(s: f64) -> f64 {
    if s.is_nan() {
        0.0
    } else {
        s.clamp(0.0, 1.0)
    }
}
