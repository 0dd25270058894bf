//! Relation-level beam search baseline.
//!
//! Every beam tracks one concrete relation path and the single entity it
//! ends at. Per level each beam asks the oracle to score its outgoing
//! relations and to judge its own entity, so the call count grows with the
//! beam width. This is a reference point for call counts and search-space
//! size only, not a reimplementation of any published system.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::reasoner::{
    oracle_failure, resolve_topic, surface, ExtractedPath, LevelTrace, PathTrace, ReasonerConfig,
    ReasoningOutcome, ReasoningTrace,
};
use crate::scorer::{clamp_score, Decision, Oracle, ScoreRequest, StepContext};
use crate::store::{EntityId, Graph, RelationId};
use crate::OracleError;

#[derive(Clone, Debug, PartialEq)]
pub struct Beam {
    pub relations: Vec<RelationId>,
    pub entity: EntityId,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamState {
    pub beams: Vec<Beam>,
    pub level: usize,
}

fn beam_order(a: &Beam, b: &Beam) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.relations.cmp(&b.relations))
        .then_with(|| a.entity.cmp(&b.entity))
}

/// Calls a run may make at most: two per beam per level plus the answer.
pub fn call_bound(cfg: &ReasonerConfig) -> u32 {
    (2 * cfg.max_len * cfg.width + 1) as u32
}

/// Beam search with `cfg.width` beams for up to `cfg.max_len` levels.
/// `top_k` and `anchored` are ignored.
pub fn run_beam(
    g: &Graph,
    question: &str,
    topic_labels: &[String],
    cfg: &ReasonerConfig,
    oracle: &dyn Oracle,
) -> Result<ReasoningOutcome> {
    cfg.validate()?;
    let topic = resolve_topic(g, topic_labels)?;
    let topic_names: Vec<String> = topic.iter().map(|&e| g.entity_label(e).to_string()).collect();
    let mut state = BeamState {
        beams: topic
            .iter()
            .take(cfg.width)
            .map(|&entity| Beam {
                relations: Vec::new(),
                entity,
                score: 0.0,
            })
            .collect(),
        level: 0,
    };
    let mut trace = ReasoningTrace::default();
    let mut extracted: Vec<ExtractedPath> = Vec::new();

    for level in 1..=cfg.max_len {
        let mut lt = LevelTrace {
            level,
            scored: true,
            ..Default::default()
        };
        let mut all_candidates = BTreeSet::new();
        let mut expanded = Vec::new();
        for beam in &state.beams {
            let candidates = g.relations_at(beam.entity, cfg.include_inverse)?;
            if candidates.is_empty() {
                continue;
            }
            let labels: Vec<String> = candidates
                .iter()
                .map(|&r| g.relation_label(r).to_string())
                .collect();
            all_candidates.extend(labels.iter().cloned());
            trace.scorer_calls += 1;
            let reply = oracle
                .score(&ScoreRequest {
                    question,
                    topic: &topic_names,
                    candidates: &labels,
                    width: 1,
                })
                .map_err(|e| oracle_failure(e, &trace))?;
            trace.retries += reply.retries;
            if reply.value.len() != candidates.len() {
                let e = OracleError::Parse(format!(
                    "{} scores for {} candidates",
                    reply.value.len(),
                    candidates.len()
                ));
                return Err(oracle_failure(e, &trace));
            }
            let (best, score) = candidates
                .iter()
                .zip(reply.value.iter().map(|&s| clamp_score(s)))
                .fold(None::<(RelationId, f64)>, |acc, (&r, s)| match acc {
                    Some((_, bs)) if bs >= s => acc,
                    _ => Some((r, s)),
                })
                .expect("non-empty candidates");
            lt.raw_scores.push(score);
            lt.selected.push(g.relation_label(best).to_string());

            let (tails, touched) = g.neighbors_via(
                &BTreeSet::from([beam.entity]),
                &BTreeSet::from([best]),
                cfg.include_inverse,
            )?;
            trace.touch(touched);
            for tail in tails {
                let mut relations = beam.relations.clone();
                relations.push(best);
                expanded.push(Beam {
                    relations,
                    entity: tail,
                    score: beam.score + score,
                });
            }
        }
        lt.candidates = all_candidates.into_iter().collect();
        if expanded.is_empty() {
            trace.dead_end = true;
            break;
        }
        expanded.sort_by(beam_order);
        expanded.truncate(cfg.width);
        state = BeamState {
            beams: expanded,
            level,
        };
        trace.steps_used = level;
        lt.frontier_size = state
            .beams
            .iter()
            .map(|b| b.entity)
            .collect::<BTreeSet<_>>()
            .len();

        extracted = state
            .beams
            .iter()
            .map(|b| ExtractedPath {
                hops: b
                    .relations
                    .iter()
                    .map(|&r| g.relation_label(r).to_string())
                    .collect(),
                score: b.score,
                entities: vec![g.entity_label(b.entity).to_string()],
            })
            .collect();
        lt.paths = extracted
            .iter()
            .map(|p| PathTrace {
                hops: p.hops.clone(),
                score: p.score,
                entities: 1,
                truncated: false,
            })
            .collect();

        let mut answer_now = false;
        for p in &extracted {
            trace.decision_calls += 1;
            let reply = oracle
                .decide(&StepContext {
                    question,
                    paths: &[p.hops.join(" -> ")],
                    entities: &p.entities,
                })
                .map_err(|e| oracle_failure(e, &trace))?;
            trace.retries += reply.retries;
            if reply.value == Decision::Answer {
                answer_now = true;
                lt.decision = Some(Decision::Answer);
            }
        }
        lt.decision.get_or_insert(Decision::Continue);
        trace.levels.push(lt);
        if answer_now {
            break;
        }
    }

    let (paths, entities, cut) = surface(&extracted, cfg.entity_cap);
    trace.truncated |= cut;
    trace.answer_calls += 1;
    let reply = oracle
        .answer(&StepContext {
            question,
            paths: &paths,
            entities: &entities,
        })
        .map_err(|e| oracle_failure(e, &trace))?;
    trace.retries += reply.retries;

    if trace.total_calls() > call_bound(cfg) {
        return Err(Error::Invariant(format!(
            "beam search made {} calls, bound is {}",
            trace.total_calls(),
            call_bound(cfg)
        )));
    }
    Ok(ReasoningOutcome {
        answer: reply.value,
        retrieved: !entities.is_empty(),
        extracted,
        trace,
    })
}
