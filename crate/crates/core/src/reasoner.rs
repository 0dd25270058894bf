//! The super-relation reasoning loop.
//!
//! Each step gathers the super-relations reachable from the previous step,
//! scores them (only when there are more than the search width), keeps the
//! best `width`, enumerates the super-relation paths through every level
//! kept so far, and extracts the entities at the end of the best `top_k`
//! paths. The oracle then either accepts those entities or asks for one
//! more step; after the last step it is always asked for the answer.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, OracleError, Result};
use crate::scorer::{clamp_score, Decision, Oracle, ScoreRequest, StepContext};
use crate::store::{Direction, EntityId, Graph, RelationId, SuperRelationId, Triple};
use crate::super_relations::{connects_directed, super_relations_at};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    /// Super-relations kept per level (N).
    pub width: usize,
    /// Maximum number of reasoning steps (L).
    pub max_len: usize,
    /// Super-relation paths kept for extraction (K).
    pub top_k: usize,
    /// Entities surfaced per path and per step to the oracle.
    pub entity_cap: usize,
    pub include_inverse: bool,
    /// Ground every connection at the current frontier instead of anywhere
    /// in the graph.
    pub anchored: bool,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            width: 3,
            max_len: 3,
            top_k: 3,
            entity_cap: 50,
            include_inverse: false,
            anchored: true,
        }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("max_len", self.max_len),
            ("top_k", self.top_k),
            ("entity_cap", self.entity_cap),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub super_relation: SuperRelationId,
    pub raw_score: f64,
    pub norm_score: f64,
}

/// One level of a search path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    /// 1-based.
    pub level: usize,
    pub entries: Vec<ScoredEntry>,
    pub frontier_after: BTreeSet<EntityId>,
}

impl ScoredSet {
    pub fn super_relations(&self) -> impl Iterator<Item = SuperRelationId> + '_ {
        self.entries.iter().map(|e| e.super_relation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchPath {
    pub topic: BTreeSet<EntityId>,
    pub levels: Vec<ScoredSet>,
}

impl SearchPath {
    pub fn new(topic: BTreeSet<EntityId>) -> Self {
        SearchPath {
            topic,
            levels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Entities reached by the last level, or the topic entities.
    pub fn frontier(&self) -> &BTreeSet<EntityId> {
        self.levels
            .last()
            .map(|s| &s.frontier_after)
            .unwrap_or(&self.topic)
    }

    /// Appends a level and expands the frontier through every member
    /// relation of its super-relations. Returns the triples traversed.
    pub fn push_level(
        &mut self,
        g: &Graph,
        entries: Vec<ScoredEntry>,
        include_inverse: bool,
    ) -> Result<BTreeSet<Triple>> {
        let mut rels = BTreeSet::new();
        for e in &entries {
            rels.extend(g.members(e.super_relation)?.iter().copied());
        }
        let (frontier_after, touched) = g.neighbors_via(self.frontier(), &rels, include_inverse)?;
        self.levels.push(ScoredSet {
            level: self.levels.len() + 1,
            entries,
            frontier_after,
        });
        Ok(touched)
    }

    /// Checks the structural invariants the engine maintains.
    ///
    /// Anchored: level 1 is incident to the topic entities and every
    /// super-relation at level i+1 is incident to the frontier after level
    /// i. Global: level 1 is incident to the topic entities and every
    /// super-relation at level i connects to some super-relation at level
    /// i+1.
    pub fn validate(&self, g: &Graph, cfg: &ReasonerConfig) -> std::result::Result<(), String> {
        let mut frontier = self.topic.clone();
        for (i, set) in self.levels.iter().enumerate() {
            if set.level != i + 1 {
                return Err(format!("level {} is numbered {}", i + 1, set.level));
            }
            if set.entries.is_empty() || set.entries.len() > cfg.width {
                return Err(format!("level {} has {} entries", set.level, set.entries.len()));
            }
            let sum: f64 = set.entries.iter().map(|e| e.norm_score).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("level {} scores sum to {sum}", set.level));
            }
            if i == 0 || cfg.anchored {
                let incident =
                    super_relations_at(g, &frontier, cfg.include_inverse).map_err(|e| e.to_string())?;
                if let Some(bad) = set.super_relations().find(|s| !incident.contains(s)) {
                    return Err(format!(
                        "level {}: {} is not incident to the frontier",
                        set.level,
                        g.super_label(bad)
                    ));
                }
            }
            let mut rels = BTreeSet::new();
            for s in set.super_relations() {
                rels.extend(g.members(s).map_err(|e| e.to_string())?.iter().copied());
            }
            let (next, _) = g
                .neighbors_via(&frontier, &rels, cfg.include_inverse)
                .map_err(|e| e.to_string())?;
            if next != set.frontier_after {
                return Err(format!("level {}: stale frontier", set.level));
            }
            frontier = next;
        }
        if !cfg.anchored {
            for pair in self.levels.windows(2) {
                for r in pair[0].super_relations() {
                    let mut ok = false;
                    for r2 in pair[1].super_relations() {
                        if connects_directed(g, r, r2, None, cfg.include_inverse)
                            .map_err(|e| e.to_string())?
                        {
                            ok = true;
                            break;
                        }
                    }
                    if !ok {
                        return Err(format!(
                            "level {}: {} connects to nothing at the next level",
                            pair[0].level,
                            g.super_label(r)
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperRelationPath {
    pub hops: Vec<SuperRelationId>,
    pub score: f64,
}

impl SuperRelationPath {
    pub fn describe(&self, g: &Graph) -> String {
        self.hops
            .iter()
            .map(|&h| g.super_label(h))
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

/// Score descending, then hop labels lexicographically.
fn path_order(a: &SuperRelationPath, b: &SuperRelationPath) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.hops.cmp(&b.hops))
}

/// Candidate super-relations for the next level of `q`, in label order.
pub fn candidate_step(g: &Graph, q: &SearchPath, cfg: &ReasonerConfig) -> Result<Vec<SuperRelationId>> {
    let Some(last) = q.levels.last() else {
        return Ok(super_relations_at(g, &q.topic, cfg.include_inverse)?
            .into_iter()
            .collect());
    };
    if cfg.anchored {
        return Ok(super_relations_at(g, &last.frontier_after, cfg.include_inverse)?
            .into_iter()
            .collect());
    }
    let mut out = Vec::new();
    for r in g.super_relations() {
        for prev in last.super_relations() {
            if connects_directed(g, prev, r, None, cfg.include_inverse)? {
                out.push(r);
                break;
            }
        }
    }
    Ok(out)
}

/// Keeps the `width` best candidates (ties by label) and normalizes their
/// scores to sum to one. All-zero selections normalize uniformly.
///
/// Candidate handles must come from one graph, where handle order is label
/// order.
pub fn select_level(
    candidates: &[SuperRelationId],
    raw_scores: &[f64],
    width: usize,
) -> Result<Vec<ScoredEntry>> {
    if candidates.len() != raw_scores.len() {
        return Err(Error::Invariant(format!(
            "{} scores for {} candidates",
            raw_scores.len(),
            candidates.len()
        )));
    }
    let mut ranked: Vec<(SuperRelationId, f64)> = candidates
        .iter()
        .copied()
        .zip(raw_scores.iter().map(|&s| clamp_score(s)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.dedup_by_key(|(id, _)| *id);
    ranked.truncate(width);

    let total: f64 = ranked.iter().map(|(_, s)| s).sum();
    let n = ranked.len() as f64;
    Ok(ranked
        .into_iter()
        .map(|(super_relation, raw_score)| ScoredEntry {
            super_relation,
            raw_score,
            norm_score: if total > 0.0 { raw_score / total } else { 1.0 / n },
        })
        .collect())
}

/// Every super-relation path through `q`, one hop per level, best first.
pub fn enumerate_paths(g: &Graph, q: &SearchPath, cfg: &ReasonerConfig) -> Result<Vec<SuperRelationPath>> {
    let mut paths = if cfg.anchored {
        anchored_paths(g, q, cfg.include_inverse)?
    } else {
        global_paths(g, q, cfg.include_inverse)?
    };
    paths.sort_by(path_order);
    Ok(paths)
}

/// Level-by-level extension where each partial path carries the entities
/// its own walk has reached; a hop is admitted only if it leaves that set.
fn anchored_paths(g: &Graph, q: &SearchPath, include_inverse: bool) -> Result<Vec<SuperRelationPath>> {
    struct Partial {
        hops: Vec<SuperRelationId>,
        score: f64,
        frontier: BTreeSet<EntityId>,
    }
    let mut members: BTreeMap<SuperRelationId, BTreeSet<RelationId>> = BTreeMap::new();
    let mut partials = vec![Partial {
        hops: Vec::new(),
        score: 0.0,
        frontier: q.topic.clone(),
    }];
    for set in &q.levels {
        let mut next = Vec::new();
        for p in &partials {
            for entry in &set.entries {
                let sr = entry.super_relation;
                let member_set = match members.entry(sr) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(g.member_set(sr)?),
                };
                let (reached, _) = g.neighbors_via(&p.frontier, member_set, include_inverse)?;
                if reached.is_empty() {
                    continue;
                }
                let mut hops = p.hops.clone();
                hops.push(sr);
                next.push(Partial {
                    hops,
                    score: p.score + entry.norm_score,
                    frontier: reached,
                });
            }
        }
        partials = next;
    }
    Ok(partials
        .into_iter()
        .filter(|p| !p.hops.is_empty())
        .map(|p| SuperRelationPath {
            hops: p.hops,
            score: p.score,
        })
        .collect())
}

/// Paths over the global pairwise connection matrix between levels.
fn global_paths(g: &Graph, q: &SearchPath, include_inverse: bool) -> Result<Vec<SuperRelationPath>> {
    if q.levels.is_empty() {
        return Ok(Vec::new());
    }
    let mut links: Vec<Vec<Vec<usize>>> = Vec::with_capacity(q.levels.len());
    for pair in q.levels.windows(2) {
        let mut from = Vec::with_capacity(pair[0].entries.len());
        for a in &pair[0].entries {
            let mut to = Vec::new();
            for (j, b) in pair[1].entries.iter().enumerate() {
                if connects_directed(g, a.super_relation, b.super_relation, None, include_inverse)? {
                    to.push(j);
                }
            }
            from.push(to);
        }
        links.push(from);
    }

    let mut partials: Vec<(Vec<usize>, f64)> = q.levels[0]
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (vec![i], e.norm_score))
        .collect();
    for (lvl, link) in links.iter().enumerate() {
        let entries = &q.levels[lvl + 1].entries;
        partials = partials
            .into_iter()
            .flat_map(|(idx, score)| {
                let last = *idx.last().unwrap();
                link[last].iter().map(move |&j| {
                    let mut idx = idx.clone();
                    idx.push(j);
                    (idx, score + entries[j].norm_score)
                })
            })
            .collect();
    }
    Ok(partials
        .into_iter()
        .map(|(idx, score)| SuperRelationPath {
            hops: idx
                .iter()
                .enumerate()
                .map(|(lvl, &i)| q.levels[lvl].entries[i].super_relation)
                .collect(),
            score,
        })
        .collect())
}

/// The first `k` paths of an [`enumerate_paths`] result.
pub fn select_top_k(paths: &[SuperRelationPath], k: usize) -> Vec<SuperRelationPath> {
    paths.iter().take(k).cloned().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    /// At most `entity_cap` entities, lowest labels first.
    pub entities: BTreeSet<EntityId>,
    /// Size of the full end set before the cap.
    pub total: usize,
    pub truncated: bool,
    pub touched: BTreeSet<Triple>,
}

/// Sequential join of the path's hops starting from `topic`.
pub fn extract_entities(
    g: &Graph,
    path: &SuperRelationPath,
    topic: &BTreeSet<EntityId>,
    entity_cap: usize,
    include_inverse: bool,
) -> Result<Extraction> {
    let mut frontier = topic.clone();
    let mut touched = BTreeSet::new();
    for &hop in &path.hops {
        let (next, t) = g.neighbors_via(&frontier, &g.member_set(hop)?, include_inverse)?;
        touched.extend(t);
        frontier = next;
    }
    let total = frontier.len();
    let entities: BTreeSet<EntityId> = frontier.into_iter().take(entity_cap).collect();
    Ok(Extraction {
        entities,
        total,
        truncated: total > entity_cap,
        touched,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStep {
    pub from: EntityId,
    pub relation: RelationId,
    pub to: EntityId,
    pub direction: Direction,
}

/// A concrete walk `e1 -r1-> ... -rl-> e(l+1)` from `topic` realizing
/// `path`, or `None` if the path's extraction is empty.
pub fn witness_walk(
    g: &Graph,
    path: &SuperRelationPath,
    topic: &BTreeSet<EntityId>,
    include_inverse: bool,
) -> Result<Option<Vec<WalkStep>>> {
    let mut layers = vec![topic.clone()];
    let mut member_sets = Vec::with_capacity(path.hops.len());
    for &hop in &path.hops {
        let members = g.member_set(hop)?;
        let (next, _) = g.neighbors_via(layers.last().unwrap(), &members, include_inverse)?;
        layers.push(next);
        member_sets.push(members);
    }
    let Some(&end) = layers.last().unwrap().iter().next() else {
        return Ok(None);
    };
    let mut steps = Vec::with_capacity(path.hops.len());
    let mut current = end;
    for i in (0..path.hops.len()).rev() {
        let mut found = None;
        'search: for &prev in &layers[i] {
            for edge in g.out_edges(prev, include_inverse)? {
                if edge.neighbor == current && member_sets[i].contains(&edge.relation) {
                    found = Some(WalkStep {
                        from: prev,
                        relation: edge.relation,
                        to: current,
                        direction: edge.direction,
                    });
                    break 'search;
                }
            }
        }
        let step = found.expect("every layer entity has a predecessor");
        current = step.from;
        steps.push(step);
    }
    steps.reverse();
    Ok(Some(steps))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub hops: Vec<String>,
    pub score: f64,
    pub entities: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub candidates: Vec<String>,
    pub scored: bool,
    pub raw_scores: Vec<f64>,
    pub selected: Vec<String>,
    pub norm_scores: Vec<f64>,
    pub frontier_size: usize,
    pub paths: Vec<PathTrace>,
    pub decision: Option<Decision>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub scorer_calls: u32,
    pub decision_calls: u32,
    pub answer_calls: u32,
    /// Retried oracle requests; not counted as reasoning calls.
    pub retries: u32,
    #[serde(skip)]
    pub triples_touched: BTreeSet<Triple>,
    /// Distinct facts traversed.
    pub search_space: usize,
    pub levels: Vec<LevelTrace>,
    /// Reasoning steps executed (L*).
    pub steps_used: usize,
    /// The search ran out of candidates before the oracle answered.
    pub dead_end: bool,
    /// Some surfaced entity set was cut at the cap.
    pub truncated: bool,
}

impl ReasoningTrace {
    pub fn total_calls(&self) -> u32 {
        self.scorer_calls + self.decision_calls + self.answer_calls
    }

    pub(crate) fn touch(&mut self, triples: impl IntoIterator<Item = Triple>) {
        self.triples_touched.extend(triples);
        self.search_space = self.triples_touched.len();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedPath {
    pub hops: Vec<String>,
    pub score: f64,
    pub entities: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasoningOutcome {
    pub answer: Vec<String>,
    /// Extractions the answer step saw.
    pub extracted: Vec<ExtractedPath>,
    pub trace: ReasoningTrace,
    /// The answer step saw at least one extracted entity.
    pub retrieved: bool,
}

impl ReasoningOutcome {
    pub fn extracted_labels(&self) -> impl Iterator<Item = &str> {
        self.extracted
            .iter()
            .flat_map(|p| p.entities.iter().map(String::as_str))
    }
}

pub fn resolve_topic(g: &Graph, topic_labels: &[String]) -> Result<BTreeSet<EntityId>> {
    if topic_labels.is_empty() {
        return Err(Error::Config("at least one topic entity is required".into()));
    }
    let mut missing = Vec::new();
    let mut topic = BTreeSet::new();
    for l in topic_labels {
        match g.entity(l) {
            Some(e) => {
                topic.insert(e);
            }
            None => missing.push(l.clone()),
        }
    }
    if missing.is_empty() {
        Ok(topic)
    } else {
        Err(Error::UnknownTopic(missing))
    }
}

/// Paths and entities shown to the oracle: union over paths in path order,
/// capped.
pub(crate) fn surface(extracted: &[ExtractedPath], cap: usize) -> (Vec<String>, Vec<String>, bool) {
    let paths = extracted.iter().map(|p| p.hops.join(" -> ")).collect();
    let mut seen = BTreeSet::new();
    let mut entities = Vec::new();
    let mut truncated = false;
    for e in extracted.iter().flat_map(|p| p.entities.iter()) {
        if seen.insert(e.as_str()) {
            if entities.len() == cap {
                truncated = true;
                break;
            }
            entities.push(e.clone());
        }
    }
    (paths, entities, truncated)
}

pub(crate) fn oracle_failure(error: OracleError, trace: &ReasoningTrace) -> Error {
    Error::Oracle {
        error,
        partial: Box::new(trace.clone()),
    }
}

/// Answers `question` starting from the entities named in `topic_labels`.
pub fn run(
    g: &Graph,
    question: &str,
    topic_labels: &[String],
    cfg: &ReasonerConfig,
    oracle: &dyn Oracle,
) -> Result<ReasoningOutcome> {
    cfg.validate()?;
    let topic = resolve_topic(g, topic_labels)?;
    let topic_names: Vec<String> = topic.iter().map(|&e| g.entity_label(e).to_string()).collect();
    let mut q = SearchPath::new(topic);
    let mut trace = ReasoningTrace::default();
    let mut extracted: Vec<ExtractedPath> = Vec::new();

    for level in 1..=cfg.max_len {
        let candidates = candidate_step(g, &q, cfg)?;
        if candidates.is_empty() {
            trace.dead_end = true;
            break;
        }
        let labels: Vec<String> = candidates.iter().map(|&c| g.super_label(c).to_string()).collect();
        let mut lt = LevelTrace {
            level,
            candidates: labels.clone(),
            ..Default::default()
        };

        let raw = if candidates.len() > cfg.width {
            trace.scorer_calls += 1;
            lt.scored = true;
            let reply = oracle
                .score(&ScoreRequest {
                    question,
                    topic: &topic_names,
                    candidates: &labels,
                    width: cfg.width,
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
            reply.value.into_iter().map(clamp_score).collect()
        } else {
            vec![1.0; candidates.len()]
        };
        let entries = select_level(&candidates, &raw, cfg.width)?;
        lt.raw_scores = raw;
        lt.selected = entries
            .iter()
            .map(|e| g.super_label(e.super_relation).to_string())
            .collect();
        lt.norm_scores = entries.iter().map(|e| e.norm_score).collect();
        let touched = q.push_level(g, entries, cfg.include_inverse)?;
        trace.touch(touched);
        trace.steps_used = level;
        lt.frontier_size = q.frontier().len();

        let paths = enumerate_paths(g, &q, cfg)?;
        extracted.clear();
        for p in select_top_k(&paths, cfg.top_k) {
            let ex = extract_entities(g, &p, &q.topic, cfg.entity_cap, cfg.include_inverse)?;
            trace.touch(ex.touched);
            trace.truncated |= ex.truncated;
            let hops: Vec<String> = p.hops.iter().map(|&h| g.super_label(h).to_string()).collect();
            lt.paths.push(PathTrace {
                hops: hops.clone(),
                score: p.score,
                entities: ex.total,
                truncated: ex.truncated,
            });
            extracted.push(ExtractedPath {
                hops,
                score: p.score,
                entities: ex
                    .entities
                    .iter()
                    .map(|&e| g.entity_label(e).to_string())
                    .collect(),
            });
        }

        // Every executed step asks for a verdict; at the last step the
        // answer follows regardless of it.
        let (paths, entities, cut) = surface(&extracted, cfg.entity_cap);
        trace.truncated |= cut;
        trace.decision_calls += 1;
        let reply = oracle
            .decide(&StepContext {
                question,
                paths: &paths,
                entities: &entities,
            })
            .map_err(|e| oracle_failure(e, &trace))?;
        trace.retries += reply.retries;
        lt.decision = Some(reply.value);
        trace.levels.push(lt);
        if reply.value == Decision::Answer {
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
    let retrieved = !entities.is_empty();
    Ok(ReasoningOutcome {
        answer: reply.value,
        extracted,
        trace,
        retrieved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{AlwaysContinue, LexicalOracle, Reply};
    use crate::store::tests::kg_a;
    use crate::super_relations::{derive_super_relations, GroupingStrategy};

    fn fixture() -> Graph {
        let mut g = kg_a();
        derive_super_relations(&mut g, &GroupingStrategy::HierarchicalPrefix { levels: 2 }).unwrap();
        g
    }

    fn sr(g: &Graph, l: &str) -> SuperRelationId {
        g.super_relation(l).unwrap()
    }

    fn ents(g: &Graph, labels: &[&str]) -> BTreeSet<EntityId> {
        labels.iter().map(|l| g.entity(l).unwrap()).collect()
    }

    fn labels(g: &Graph, ids: &[SuperRelationId]) -> Vec<String> {
        ids.iter().map(|&i| g.super_label(i).to_string()).collect()
    }

    fn entry(s: SuperRelationId, v: f64) -> ScoredEntry {
        ScoredEntry {
            super_relation: s,
            raw_score: v,
            norm_score: v,
        }
    }

    #[test]
    fn candidates_on_fixture() {
        let g = fixture();
        let cfg = ReasonerConfig::default();
        let mut q = SearchPath::new(ents(&g, &["e1"]));
        assert_eq!(labels(&g, &candidate_step(&g, &q, &cfg).unwrap()), ["a.x"]);
        q.push_level(&g, vec![entry(sr(&g, "a.x"), 1.0)], false).unwrap();
        assert_eq!(labels(&g, &candidate_step(&g, &q, &cfg).unwrap()), ["b.y", "c.z"]);
        q.push_level(
            &g,
            vec![entry(sr(&g, "b.y"), 0.5), entry(sr(&g, "c.z"), 0.5)],
            false,
        )
        .unwrap();
        assert!(candidate_step(&g, &q, &cfg).unwrap().is_empty());
    }

    #[test]
    fn global_candidates_match_anchored_on_fixture() {
        let g = fixture();
        let cfg = ReasonerConfig {
            anchored: false,
            ..Default::default()
        };
        let mut q = SearchPath::new(ents(&g, &["e1"]));
        q.push_level(&g, vec![entry(sr(&g, "a.x"), 1.0)], false).unwrap();
        assert_eq!(labels(&g, &candidate_step(&g, &q, &cfg).unwrap()), ["b.y", "c.z"]);
    }

    #[test]
    fn select_level_examples() {
        let ids = [SuperRelationId(0), SuperRelationId(1), SuperRelationId(2)];
        let sel = select_level(&ids, &[0.8, 0.6, 0.6], 2).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel[0].super_relation, ids[0]);
        assert_eq!(sel[1].super_relation, ids[1]);
        assert!((sel[0].norm_score - 0.8 / 1.4).abs() < 1e-12);
        assert!((sel[1].norm_score - 0.6 / 1.4).abs() < 1e-12);

        let sel = select_level(&ids[..1], &[0.4], 3).unwrap();
        assert_eq!(sel[0].norm_score, 1.0);

        let sel = select_level(&ids, &[0.0, 0.0, 0.0], 3).unwrap();
        assert!(sel.iter().all(|e| (e.norm_score - 1.0 / 3.0).abs() < 1e-12));

        assert!(select_level(&[], &[], 3).unwrap().is_empty());
        assert!(select_level(&ids, &[0.1], 3).is_err());
    }

    #[test]
    fn enumerate_on_fixture() {
        let g = fixture();
        let cfg = ReasonerConfig::default();
        let mut q = SearchPath::new(ents(&g, &["e1"]));
        q.push_level(&g, vec![entry(sr(&g, "a.x"), 1.0)], false).unwrap();
        let one = enumerate_paths(&g, &q, &cfg).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].score, 1.0);

        q.push_level(
            &g,
            vec![entry(sr(&g, "b.y"), 0.6), entry(sr(&g, "c.z"), 0.4)],
            false,
        )
        .unwrap();
        let paths = enumerate_paths(&g, &q, &cfg).unwrap();
        let got: Vec<(String, f64)> = paths.iter().map(|p| (p.describe(&g), p.score)).collect();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, "a.x -> b.y");
        assert!((got[0].1 - 1.6).abs() < 1e-12);
        assert_eq!(got[1].0, "a.x -> c.z");
        assert!((got[1].1 - 1.4).abs() < 1e-12);

        let global = enumerate_paths(
            &g,
            &q,
            &ReasonerConfig {
                anchored: false,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(global, paths);
        q.validate(&g, &cfg).unwrap();
    }

    #[test]
    fn top_k_and_ties() {
        let p = |hops: Vec<u32>, score| SuperRelationPath {
            hops: hops.into_iter().map(SuperRelationId).collect(),
            score,
        };
        let paths = vec![p(vec![0], 1.6), p(vec![1], 1.4), p(vec![2], 0.9)];
        assert_eq!(select_top_k(&paths, 2), paths[..2].to_vec());
        assert_eq!(select_top_k(&paths, 10), paths);

        let mut tied = [p(vec![0, 2], 1.0), p(vec![0, 1], 1.0)];
        tied.sort_by(path_order);
        assert_eq!(tied[0].hops, vec![SuperRelationId(0), SuperRelationId(1)]);
    }

    #[test]
    fn extraction_on_fixture() {
        let g = fixture();
        let topic = ents(&g, &["e1"]);
        let path = |hops: &[&str]| SuperRelationPath {
            hops: hops.iter().map(|h| sr(&g, h)).collect(),
            score: 0.0,
        };
        let ex = extract_entities(&g, &path(&["a.x", "b.y"]), &topic, 50, false).unwrap();
        assert_eq!(ex.entities, ents(&g, &["e4", "e5"]));
        assert_eq!(ex.touched.len(), 4);
        let ex = extract_entities(&g, &path(&["a.x", "c.z"]), &topic, 50, false).unwrap();
        assert_eq!(ex.entities, ents(&g, &["e6"]));
        let ex = extract_entities(&g, &path(&["a.x"]), &topic, 50, false).unwrap();
        assert_eq!(ex.entities, ents(&g, &["e2", "e3"]));

        let ex = extract_entities(&g, &path(&["a.x", "b.y"]), &topic, 1, false).unwrap();
        assert_eq!(ex.entities, ents(&g, &["e4"]));
        assert!(ex.truncated);
        assert_eq!(ex.total, 2);
    }

    #[test]
    fn witness_on_fixture() {
        let g = fixture();
        let topic = ents(&g, &["e1"]);
        let p = SuperRelationPath {
            hops: vec![sr(&g, "a.x"), sr(&g, "b.y")],
            score: 0.0,
        };
        let walk = witness_walk(&g, &p, &topic, false).unwrap().unwrap();
        assert_eq!(walk.len(), 2);
        assert_eq!(g.entity_label(walk[0].from), "e1");
        assert_eq!(walk[0].to, walk[1].from);
        assert_eq!(g.entity_label(walk[1].to), "e4");

        let dead = SuperRelationPath {
            hops: vec![sr(&g, "b.y")],
            score: 0.0,
        };
        assert!(witness_walk(&g, &dead, &topic, false).unwrap().is_none());
    }

    #[test]
    fn run_on_fixture() {
        let g = fixture();
        let cfg = ReasonerConfig {
            max_len: 2,
            ..Default::default()
        };
        let out = run(
            &g,
            "which items does e1's a.x lead to via b.y?",
            &["e1".to_string()],
            &cfg,
            &LexicalOracle::default(),
        )
        .unwrap();
        assert_eq!(&out.answer[..2], ["e4", "e5"]);
        assert!(!out.trace.levels[0].scored);
        assert!(out.trace.scorer_calls <= 1);
        assert!(out.trace.total_calls() <= 2 * 2 + 1);
        assert_eq!(out.trace.steps_used, 2);
        assert!(out.retrieved);
    }

    #[test]
    fn run_single_step() {
        let g = fixture();
        let cfg = ReasonerConfig {
            max_len: 1,
            ..Default::default()
        };
        let out = run(
            &g,
            "anything",
            &["e1".to_string()],
            &cfg,
            &LexicalOracle::default(),
        )
        .unwrap();
        assert_eq!(out.trace.steps_used, 1);
        assert!(out.trace.total_calls() <= 3);
        let mut answer = out.answer.clone();
        answer.sort();
        assert_eq!(answer, ["e2", "e3"]);
    }

    #[test]
    fn dead_end_forces_answer() {
        let g = fixture();
        let out = run(
            &g,
            "anything",
            &["e1".to_string()],
            &ReasonerConfig::default(),
            &AlwaysContinue(LexicalOracle::default()),
        )
        .unwrap();
        assert!(out.trace.dead_end);
        assert_eq!(out.trace.steps_used, 2);
        assert!(out.retrieved);
        assert_eq!(out.trace.total_calls(), 3);

        // a sink topic dead-ends at the first step
        let out = run(
            &g,
            "x",
            &["e4".to_string()],
            &ReasonerConfig::default(),
            &LexicalOracle::default(),
        )
        .unwrap();
        assert_eq!(out.trace.steps_used, 0);
        assert!(!out.retrieved);
        assert!(out.extracted.is_empty());
        assert_eq!(out.trace.total_calls(), 1);
    }

    #[test]
    fn unknown_topic() {
        let g = fixture();
        let err = run(
            &g,
            "q",
            &["zzz".to_string()],
            &ReasonerConfig::default(),
            &LexicalOracle::default(),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "unknown topic entity: zzz");
    }

    struct Broken;

    impl Oracle for Broken {
        fn score(&self, _: &ScoreRequest<'_>) -> std::result::Result<Reply<Vec<f64>>, OracleError> {
            Err(OracleError::Transport("down".into()))
        }
        fn decide(&self, _: &StepContext<'_>) -> std::result::Result<Reply<Decision>, OracleError> {
            Ok(Reply::direct(Decision::Continue))
        }
        fn answer(&self, _: &StepContext<'_>) -> std::result::Result<Reply<Vec<String>>, OracleError> {
            Err(OracleError::Transport("down".into()))
        }
    }

    #[test]
    fn oracle_failure_carries_partial_trace() {
        let g = fixture();
        let err = run(&g, "q", &["e1".to_string()], &ReasonerConfig::default(), &Broken).unwrap_err();
        match err {
            Error::Oracle { partial, .. } => {
                assert_eq!(partial.decision_calls, 2);
                assert_eq!(partial.steps_used, 2);
                assert_eq!(partial.answer_calls, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = ReasonerConfig {
            width: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(ReasonerConfig::default().validate().is_ok());
    }
}
