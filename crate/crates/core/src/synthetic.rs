//! Seeded graph and dataset generators used by tests, benchmarks and the
//! `gen-synthetic` command.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{FailureClass, QAItem};
use crate::reasoner::{candidate_step, select_level, ReasonerConfig, SearchPath};
use crate::store::{load_triples, EntityId, Graph, TripleFormat};
use crate::super_relations::{derive_super_relations, GroupingStrategy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Five-triple fixture: `e1` reaches `e2`, `e3` through `a.x`; from there
/// `b.y` leads to `e4`, `e5` and `c.z` to `e6`.
pub const KG_A_TSV: &str = "e1\ta.x.p\te2\n\
                            e1\ta.x.q\te3\n\
                            e2\tb.y.r\te4\n\
                            e3\tb.y.s\te5\n\
                            e2\tc.z.t\te6\n";

fn with_hierarchy(mut g: Graph) -> Graph {
    derive_super_relations(&mut g, &GroupingStrategy::HierarchicalPrefix { levels: 2 })
        .expect("hierarchical grouping cannot fail");
    g
}

fn graph_of(triples: &[(String, String, String)]) -> Graph {
    with_hierarchy(Graph::from_labeled(triples.iter().cloned()))
}

/// The fixture with its two-level hierarchical super-relations.
pub fn kg_a() -> Graph {
    with_hierarchy(load_triples(KG_A_TSV.as_bytes(), TripleFormat::Tsv).expect("fixture parses"))
}

pub fn kg_a_dataset() -> Vec<QAItem> {
    let item = |id: &str, q: &str, answers: &[&str]| QAItem {
        id: id.into(),
        question: q.into(),
        topic_entities: vec!["e1".into()],
        answers: answers.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        item(
            "kga-1",
            "which items does e1's a.x lead to via b.y?",
            &["e4", "e5"],
        ),
        item("kga-2", "what does e1 reach through a.x and then c.z?", &["e6"]),
        item("kga-3", "which entity is e2?", &["e2"]),
    ]
}

/// Random graph with up to `max_triples` facts over three-part relation
/// labels, grouped by their first two parts.
pub fn random_graph(r: &mut impl Rng, max_triples: usize) -> Graph {
    let entities = r.random_range(4..=40);
    let domains = r.random_range(1..=4);
    let kinds = r.random_range(1..=3);
    let leaves = r.random_range(1..=3);
    let count = r.random_range(1..=max_triples.max(1));
    let triples: Vec<(String, String, String)> = (0..count)
        .map(|_| {
            let h = r.random_range(0..entities);
            let t = r.random_range(0..entities);
            let rel = format!(
                "d{}.k{}.r{}",
                r.random_range(0..domains),
                r.random_range(0..kinds),
                r.random_range(0..leaves)
            );
            (format!("n{h:02}"), rel, format!("n{t:02}"))
        })
        .collect();
    graph_of(&triples)
}

/// A search path grown from random candidate subsets with random scores.
/// Under global semantics the walk may violate the level connectivity
/// rule, in which case `None` is returned.
pub fn random_search_path(g: &Graph, r: &mut impl Rng, cfg: &ReasonerConfig) -> Option<SearchPath> {
    let starts: Vec<EntityId> = g
        .entities()
        .filter(|&e| !g.relations_at(e, cfg.include_inverse).unwrap().is_empty())
        .collect();
    if starts.is_empty() {
        return None;
    }
    let picks = r.random_range(1..=2.min(starts.len()));
    let topic: BTreeSet<EntityId> = starts.choose_multiple(r, picks).copied().collect();
    let mut q = SearchPath::new(topic);
    for _ in 0..cfg.max_len {
        let mut candidates = candidate_step(g, &q, cfg).unwrap();
        if candidates.is_empty() {
            break;
        }
        candidates.shuffle(r);
        candidates.truncate(r.random_range(1..=cfg.width.min(candidates.len())));
        candidates.sort();
        let scores: Vec<f64> = candidates
            .iter()
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random() })
            .collect();
        let entries = select_level(&candidates, &scores, cfg.width).unwrap();
        q.push_level(g, entries, cfg.include_inverse).unwrap();
    }
    if q.is_empty() || q.validate(g, cfg).is_err() {
        return None;
    }
    Some(q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayeredSpec {
    pub depth: usize,
    /// Super-relations leaving every entity at each level.
    pub supers: usize,
    /// Member relations per super-relation.
    pub members: usize,
    /// Entities per level below the topic layer.
    pub pool: usize,
    pub topics: usize,
}

impl Default for LayeredSpec {
    fn default() -> Self {
        LayeredSpec {
            depth: 3,
            supers: 3,
            members: 3,
            pool: 6,
            topics: 1,
        }
    }
}

/// Layered graph where every entity above the last layer has, for each of
/// `supers` super-relations and each of their `members` relations, one
/// edge into a random entity of the next layer. Returns the graph and the
/// topic labels.
pub fn layered_graph(seed: u64, spec: LayeredSpec) -> (Graph, Vec<String>) {
    let mut r = rng(seed);
    let topics: Vec<String> = (0..spec.topics).map(|i| format!("root{i}")).collect();
    let mut layer = topics.clone();
    let mut triples = Vec::new();
    for d in 1..=spec.depth {
        let next: Vec<String> = (0..spec.pool).map(|i| format!("v{d}_{i}")).collect();
        for head in &layer {
            for s in 0..spec.supers {
                for m in 0..spec.members {
                    let tail = next.choose(&mut r).unwrap().clone();
                    triples.push((head.clone(), format!("lv{d}.g{s}.m{m}"), tail));
                }
            }
        }
        layer = next;
    }
    (graph_of(&triples), topics)
}

const HOP_WORDS: &[&str] = &[
    "film", "director", "album", "artist", "river", "basin", "company", "founder", "book", "author", "team",
    "coach", "city", "mayor", "planet", "moon", "language", "family", "drug", "target", "gene", "protein",
    "school", "alumni", "ship", "captain", "painting", "museum", "song", "composer",
];

const NOISE_WORDS: &[&str] = &[
    "common", "topic", "base", "type", "object", "kg", "user", "media", "schema", "misc", "meta", "notable",
    "alias", "webpage", "image", "key",
];

const ANSWER_TYPES: &[&str] = &[
    "person",
    "place",
    "organization",
    "work",
    "event",
    "species",
    "award",
    "station",
];

/// Graph plus questions, each answerable within three steps by following
/// the relations the question names.
pub struct SyntheticSet {
    pub graph: Graph,
    pub items: Vec<QAItem>,
}

fn noise_label(r: &mut impl Rng) -> String {
    let picks: Vec<&&str> = NOISE_WORDS.choose_multiple(r, 2).collect();
    format!("{}.{}", picks[0], picks[1])
}

/// `count` questions, each in its own component. Question `i` has its
/// gold answer `1 + i % 3` hops from the topic along a chain whose
/// super-relation labels are spelled out in the question; every chain
/// entity also has 4 to 6 noise super-relations leading to sinks.
pub fn synthetic_dataset(seed: u64, count: usize) -> SyntheticSet {
    let mut r = rng(seed);
    let mut triples = Vec::new();
    let mut items = Vec::new();
    for i in 0..count {
        let hops = 1 + i % 3;
        let words: Vec<&str> = HOP_WORDS.choose_multiple(&mut r, 2 * hops).copied().collect();
        let answer_type = *ANSWER_TYPES.choose(&mut r).unwrap();
        let topic = format!("t{i}");
        let gold = format!("{answer_type}_{i}");
        let mut current = topic.clone();
        let mut phrase = Vec::new();
        for h in 0..hops {
            let (d, a) = (words[2 * h], words[2 * h + 1]);
            phrase.push(format!("{d} {a}"));
            let next = if h + 1 == hops {
                gold.clone()
            } else {
                format!("c{i}_{h}")
            };
            triples.push((current.clone(), format!("{d}.{a}.link"), next.clone()));
            let noise = r.random_range(4..=6);
            let mut used = BTreeSet::new();
            while used.len() < noise {
                used.insert(noise_label(&mut r));
            }
            for (j, label) in used.into_iter().enumerate() {
                triples.push((current.clone(), format!("{label}.rel"), format!("s{i}_{h}_{j}")));
            }
            current = next;
        }
        items.push(QAItem {
            id: format!("syn-{i:03}"),
            question: format!(
                "Which {answer_type} does the {} chain reach?",
                phrase.join(" then ")
            ),
            topic_entities: vec![topic],
            answers: vec![gold],
        });
    }
    SyntheticSet {
        graph: graph_of(&triples),
        items,
    }
}

pub struct FailureCase {
    pub graph: Graph,
    pub item: QAItem,
    pub cfg: ReasonerConfig,
    pub expected: FailureClass,
}

/// `per_class` constructed instances of each non-retrieval mode.
///
/// Depth limit: the gold entity ends a chain longer than the step limit.
/// Misdirection: the gold branch is within reach but its super-relation
/// scores below a decoy named in the question, at width 1. Path absence:
/// the gold entity sits in a separate component, or is not in the graph.
pub fn failure_cases(seed: u64, per_class: usize) -> Vec<FailureCase> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for k in 0..per_class {
        let max_len = r.random_range(1..=3);
        let cfg = ReasonerConfig {
            width: 1,
            max_len,
            top_k: 1,
            ..Default::default()
        };
        let words: Vec<&str> = HOP_WORDS.choose_multiple(&mut r, 8).copied().collect();

        // gold one to three hops past the limit
        let depth = max_len + r.random_range(1..=3);
        let mut triples = Vec::new();
        for h in 0..depth {
            let from = if h == 0 {
                "start".to_string()
            } else {
                format!("m{h}")
            };
            let to = if h + 1 == depth {
                "goal".to_string()
            } else {
                format!("m{}", h + 1)
            };
            triples.push((from, format!("{}.{}.link", words[h % 4], words[4 + h % 4]), to));
        }
        out.push(FailureCase {
            graph: graph_of(&triples),
            item: case_item(format!("depth-{k}"), "which goal lies at the end?"),
            cfg,
            expected: FailureClass::DepthLimit,
        });

        // decoy branch named in the question, gold branch within reach
        let near = r.random_range(1..=max_len);
        let mut triples = vec![(
            "start".to_string(),
            format!("{}.{}.link", words[0], words[1]),
            "decoy".to_string(),
        )];
        for h in 0..near {
            let from = if h == 0 {
                "start".to_string()
            } else {
                format!("g{h}")
            };
            let to = if h + 1 == near {
                "goal".to_string()
            } else {
                format!("g{}", h + 1)
            };
            triples.push((from, format!("{}.{}.side", words[2 + h], words[5 + h % 3]), to));
        }
        out.push(FailureCase {
            graph: graph_of(&triples),
            item: case_item(
                format!("misdirect-{k}"),
                &format!("what does the {} {} relation give?", words[0], words[1]),
            ),
            cfg,
            expected: FailureClass::Misdirection,
        });

        // gold disconnected from the topic, or missing altogether
        let mut triples = vec![
            (
                "start".to_string(),
                format!("{}.{}.link", words[0], words[1]),
                "near".to_string(),
            ),
            (
                "island".to_string(),
                format!("{}.{}.link", words[2], words[3]),
                "goal".to_string(),
            ),
        ];
        if k % 2 == 1 {
            triples.pop();
        }
        out.push(FailureCase {
            graph: graph_of(&triples),
            item: case_item(format!("absent-{k}"), "where is the goal?"),
            cfg,
            expected: FailureClass::PathAbsence,
        });
    }
    out
}

fn case_item(id: String, question: &str) -> QAItem {
    QAItem {
        id,
        question: question.to_string(),
        topic_entities: vec!["start".into()],
        answers: vec!["goal".into()],
    }
}
