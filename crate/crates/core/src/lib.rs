//! Knowledge-graph question answering over super-relations.
//!
//! Relations are grouped into super-relations; the reasoning loop walks
//! those groups instead of individual relations. See [`reasoner::run`].

pub mod beam;
pub mod error;
pub mod eval;
pub mod par;
pub mod reasoner;
pub mod scorer;
pub mod store;
pub mod super_relations;
pub mod synthetic;

pub use error::{Error, OracleError, Result};
pub use eval::{run_batch, Engine, MetricsReport, QAItem};
pub use reasoner::{run, ReasonerConfig, ReasoningOutcome, ReasoningTrace};
pub use store::{load_triples, EntityId, Graph, RelationId, SuperRelationId, Triple, TripleFormat};
pub use super_relations::{derive_super_relations, GroupingStrategy};
