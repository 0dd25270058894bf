use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use reknos::eval::normalize;
use reknos::reasoner::{enumerate_paths, extract_entities, select_level};
use reknos::scorer::{AlwaysContinue, LexicalOracle};
use reknos::super_relations::cluster_labels;
use reknos::synthetic::{random_graph, random_search_path, rng};
use reknos::{derive_super_relations, load_triples, run, run_batch, Engine, Graph, GroupingStrategy, QAItem};
use reknos::{ReasonerConfig, SuperRelationId, TripleFormat};

fn twelve_supers() -> (Graph, Vec<SuperRelationId>) {
    let mut g =
        Graph::from_labeled((0..12).map(|i| (format!("h{i}"), format!("s{i:02}.x.r"), "t".to_string())));
    derive_super_relations(&mut g, &GroupingStrategy::HierarchicalPrefix { levels: 2 }).unwrap();
    let ids = g.super_relations().collect();
    (g, ids)
}

fn score() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => 0.0..=1.0f64,
        2 => Just(0.0),
        2 => Just(0.5),
        1 => -2.0..3.0f64,
        1 => Just(f64::NAN),
    ]
}

fn cfg_strategy() -> impl Strategy<Value = ReasonerConfig> {
    (1..=4usize, 1..=3usize, 1..=4usize, any::<bool>(), any::<bool>()).prop_map(
        |(width, max_len, top_k, inv, anchored)| ReasonerConfig {
            width,
            max_len,
            top_k,
            include_inverse: inv,
            anchored,
            ..Default::default()
        },
    )
}

/// A question built from relation tokens and a topic drawn from the graph.
fn random_item(g: &Graph, seed: u64) -> QAItem {
    let mut r = rng(seed);
    let ents: Vec<_> = g.entities().collect();
    let rels: Vec<_> = g.relations().collect();
    let topic = g.entity_label(ents[r.random_range(0..ents.len())]).to_string();
    let rel = g
        .relation_label(rels[r.random_range(0..rels.len())])
        .replace('.', " ");
    let gold = g.entity_label(ents[r.random_range(0..ents.len())]).to_string();
    QAItem {
        id: format!("p{seed}"),
        question: format!("what {rel} from {topic}?"),
        topic_entities: vec![topic],
        answers: vec![gold],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn selection_is_normalized_and_ordered(
        picks in proptest::sample::subsequence((0..12usize).collect::<Vec<_>>(), 1..=12),
        scores in proptest::collection::vec(score(), 12),
        width in 1..=6usize,
    ) {
        let (g, ids) = twelve_supers();
        let cands: Vec<SuperRelationId> = picks.iter().map(|&i| ids[i]).collect();
        let raw: Vec<f64> = picks.iter().map(|&i| scores[i]).collect();
        let sel = select_level(&cands, &raw, width).unwrap();
        prop_assert_eq!(sel.len(), width.min(cands.len()));
        let sum: f64 = sel.iter().map(|e| e.norm_score).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        for w in sel.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            prop_assert!(a.raw_score >= b.raw_score);
            if a.raw_score == b.raw_score {
                prop_assert!(g.super_label(a.super_relation) < g.super_label(b.super_relation));
            }
        }
    }

    #[test]
    fn wider_selection_extends_narrower(
        scores in proptest::collection::vec(score(), 12),
        width in 1..=11usize,
    ) {
        let (_, ids) = twelve_supers();
        let narrow = select_level(&ids, &scores, width).unwrap();
        let wide = select_level(&ids, &scores, width + 1).unwrap();
        let a: Vec<_> = narrow.iter().map(|e| e.super_relation).collect();
        let b: Vec<_> = wide.iter().map(|e| e.super_relation).collect();
        prop_assert_eq!(&a[..], &b[..a.len()]);
    }

    #[test]
    fn anchored_extraction_stays_in_frontier(seed in any::<u64>(), cfg in cfg_strategy()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 150);
        let cfg = ReasonerConfig { anchored: true, ..cfg };
        if let Some(q) = random_search_path(&g, &mut r, &cfg) {
            let paths = enumerate_paths(&g, &q, &cfg).unwrap();
            prop_assert!(!paths.is_empty());
            for p in &paths {
                prop_assert_eq!(p.hops.len(), q.len());
                let x = extract_entities(&g, p, &q.topic, usize::MAX, cfg.include_inverse).unwrap();
                prop_assert!(!x.entities.is_empty());
                prop_assert!(x.entities.is_subset(q.frontier()));
            }
        }
    }

    #[test]
    fn reasoning_is_deterministic_and_bounded(seed in any::<u64>(), cfg in cfg_strategy(), forced in any::<bool>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 200);
        let item = random_item(&g, seed);
        let lexical = LexicalOracle { threshold: 0.5 };
        let always = AlwaysContinue(lexical.clone());
        let oracle: &dyn reknos::scorer::Oracle = if forced { &always } else { &lexical };
        let a = run(&g, &item.question, &item.topic_entities, &cfg, oracle).unwrap();
        let b = run(&g, &item.question, &item.topic_entities, &cfg, oracle).unwrap();
        prop_assert_eq!(&a, &b);
        let t = &a.trace;
        prop_assert!(t.total_calls() <= 2 * t.steps_used as u32 + 1);
        prop_assert!(t.steps_used <= cfg.max_len);
        prop_assert_eq!(t.answer_calls, 1);
        if forced && !t.dead_end {
            prop_assert_eq!(t.steps_used, cfg.max_len);
        }
    }

    #[test]
    fn batch_is_independent_of_threads(seed in any::<u64>(), cfg in cfg_strategy()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 120);
        let items: Vec<QAItem> = (0..6).map(|i| random_item(&g, seed.wrapping_add(i))).collect();
        let mut seen = std::collections::BTreeSet::new();
        let items: Vec<QAItem> = items.into_iter().filter(|i| seen.insert(i.id.clone())).collect();
        let oracle = LexicalOracle { threshold: 0.5 };
        for engine in [Engine::Reknos, Engine::Beam] {
            let one = run_batch(&g, &items, engine, &cfg, &oracle, 1).unwrap();
            let many = run_batch(&g, &items, engine, &cfg, &oracle, 4).unwrap();
            prop_assert_eq!(&one.records, &many.records);
        }
    }

    #[test]
    fn snapshot_round_trips(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 200);
        let mut first = Vec::new();
        g.write_tsv(&mut first).unwrap();
        let back = load_triples(&first[..], TripleFormat::Tsv).unwrap();
        let mut second = Vec::new();
        back.write_tsv(&mut second).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(back.triple_count(), g.triple_count());
    }

    #[test]
    fn clustering_ignores_input_order(seed in any::<u64>(), threshold in 0.05..=1.0f64) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 200);
        let mut labels: Vec<&str> = g.relations().map(|id| g.relation_label(id)).collect();
        let before: BTreeMap<&str, String> = labels.iter().copied().zip(cluster_labels(&labels, threshold)).collect();
        labels.shuffle(&mut r);
        let after: BTreeMap<&str, String> = labels.iter().copied().zip(cluster_labels(&labels, threshold)).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,24}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once.clone());
    }
}
