//! Immutable in-memory triple store.
//!
//! Labels are interned in sorted byte order, so every handle comparison is
//! also a label comparison. Deterministic ordering throughout the engine
//! relies on this.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! handle {
    ($(#[$meta:meta])* $name:ident, $kind:literal) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub(crate) u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }

            pub(crate) const KIND: &'static str = $kind;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}#{}", $kind, self.0)
            }
        }
    };
}

handle!(
    /// Dense handle for an interned entity label.
    EntityId,
    "entity"
);
handle!(
    /// Dense handle for an interned concrete relation label.
    RelationId,
    "relation"
);
handle!(
    /// Dense handle for an interned super-relation label.
    SuperRelationId,
    "super-relation"
);

/// A stored fact `head --relation--> tail`.
///
/// Inverse traversal yields the same `Triple`, so a fact counts once in any
/// set of touched triples no matter which direction reached it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One adjacency step out of an entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub relation: RelationId,
    pub neighbor: EntityId,
    pub direction: Direction,
    pub triple: Triple,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripleFormat {
    /// `head<TAB>relation<TAB>tail` rows.
    Tsv,
    /// `<iri> <iri> <iri> .` rows; IRIs become labels without the brackets.
    NTriples,
}

impl TripleFormat {
    /// `.nt` files are N-Triples, anything else TSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nt") => TripleFormat::NTriples,
            _ => TripleFormat::Tsv,
        }
    }
}

impl std::str::FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(TripleFormat::Tsv),
            "nt" | "ntriples" => Ok(TripleFormat::NTriples),
            other => Err(Error::Config(format!(
                "unknown triple format {other:?}; expected tsv or nt"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct LabelTable {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl LabelTable {
    /// Builds a table from labels that are already sorted and unique.
    fn from_sorted(labels: Vec<String>) -> Self {
        debug_assert!(labels.windows(2).all(|w| w[0] < w[1]));
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        LabelTable { labels, index }
    }

    pub(crate) fn from_unsorted<I: IntoIterator<Item = String>>(labels: I) -> Self {
        let set: BTreeSet<String> = labels.into_iter().collect();
        Self::from_sorted(set.into_iter().collect())
    }

    fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

type Adjacency = Vec<Vec<(RelationId, EntityId)>>;

#[derive(Clone, Debug, Default)]
pub struct Graph {
    entities: LabelTable,
    relations: LabelTable,
    triples: Vec<Triple>,
    out_index: Adjacency,
    in_index: Adjacency,
    // (head, tail) pairs per relation, sorted
    by_relation: Vec<Vec<(EntityId, EntityId)>>,
    supers: LabelTable,
    rel_to_super: Vec<SuperRelationId>,
    super_members: Vec<Vec<RelationId>>,
}

impl Graph {
    /// Builds a graph from labeled triples, interning labels and removing
    /// duplicate facts.
    pub fn from_labeled<I, S>(triples: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        let raw: BTreeSet<(String, String, String)> = triples
            .into_iter()
            .map(|(h, r, t)| (h.into(), r.into(), t.into()))
            .collect();

        let entities = LabelTable::from_unsorted(raw.iter().flat_map(|(h, _, t)| [h.clone(), t.clone()]));
        let relations = LabelTable::from_unsorted(raw.iter().map(|(_, r, _)| r.clone()));

        let mut triples: Vec<Triple> = raw
            .iter()
            .map(|(h, r, t)| Triple {
                head: EntityId(entities.get(h).unwrap()),
                relation: RelationId(relations.get(r).unwrap()),
                tail: EntityId(entities.get(t).unwrap()),
            })
            .collect();
        triples.sort_unstable();

        let mut out_index: Adjacency = vec![Vec::new(); entities.len()];
        let mut in_index: Adjacency = vec![Vec::new(); entities.len()];
        let mut by_relation = vec![Vec::new(); relations.len()];
        for t in &triples {
            out_index[t.head.index()].push((t.relation, t.tail));
            in_index[t.tail.index()].push((t.relation, t.head));
            by_relation[t.relation.index()].push((t.head, t.tail));
        }
        for list in out_index.iter_mut().chain(in_index.iter_mut()) {
            list.sort_unstable();
        }
        for list in &mut by_relation {
            list.sort_unstable();
        }

        Graph {
            entities,
            relations,
            triples,
            out_index,
            in_index,
            by_relation,
            ..Default::default()
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn super_relation_count(&self) -> usize {
        self.supers.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn super_relations(&self) -> impl Iterator<Item = SuperRelationId> + '_ {
        (0..self.supers.len() as u32).map(SuperRelationId)
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn super_relation(&self, label: &str) -> Option<SuperRelationId> {
        self.supers.get(label).map(SuperRelationId)
    }

    /// Panics if `id` did not come from this graph.
    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id.0)
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        self.relations.label(id.0)
    }

    pub fn super_label(&self, id: SuperRelationId) -> &str {
        self.supers.label(id.0)
    }

    pub fn check_entity(&self, id: EntityId) -> Result<()> {
        check(id.0, self.entities.len(), EntityId::KIND)
    }

    pub fn check_relation(&self, id: RelationId) -> Result<()> {
        check(id.0, self.relations.len(), RelationId::KIND)
    }

    pub fn check_super(&self, id: SuperRelationId) -> Result<()> {
        check(id.0, self.supers.len(), SuperRelationId::KIND)
    }

    /// Edges leaving `e`, ordered by relation label then neighbor label.
    /// With `include_inverse`, incoming edges are reported as `Inverse`
    /// steps from `e` to the head.
    pub fn out_edges(&self, e: EntityId, include_inverse: bool) -> Result<Vec<Edge>> {
        self.check_entity(e)?;
        let mut edges: Vec<Edge> = self.out_index[e.index()]
            .iter()
            .map(|&(relation, tail)| Edge {
                relation,
                neighbor: tail,
                direction: Direction::Forward,
                triple: Triple {
                    head: e,
                    relation,
                    tail,
                },
            })
            .collect();
        if include_inverse {
            edges.extend(self.in_index[e.index()].iter().map(|&(relation, head)| Edge {
                relation,
                neighbor: head,
                direction: Direction::Inverse,
                triple: Triple {
                    head,
                    relation,
                    tail: e,
                },
            }));
            edges.sort_by_key(|edge| (edge.relation, edge.neighbor, edge.direction));
        }
        Ok(edges)
    }

    /// Raw incoming adjacency of `e` as `(relation, head)` pairs.
    pub fn in_edges(&self, e: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.check_entity(e)?;
        Ok(&self.in_index[e.index()])
    }

    /// One-hop join: every entity reachable from `frontier` through one of
    /// `rels`, plus the exact triples traversed.
    pub fn neighbors_via(
        &self,
        frontier: &BTreeSet<EntityId>,
        rels: &BTreeSet<RelationId>,
        include_inverse: bool,
    ) -> Result<(BTreeSet<EntityId>, BTreeSet<Triple>)> {
        for &r in rels {
            self.check_relation(r)?;
        }
        let mut next = BTreeSet::new();
        let mut touched = BTreeSet::new();
        for &e in frontier {
            self.check_entity(e)?;
            for &r in rels {
                for &(_, tail) in relation_range(&self.out_index[e.index()], r) {
                    next.insert(tail);
                    touched.insert(Triple {
                        head: e,
                        relation: r,
                        tail,
                    });
                }
                if include_inverse {
                    for &(_, head) in relation_range(&self.in_index[e.index()], r) {
                        next.insert(head);
                        touched.insert(Triple {
                            head,
                            relation: r,
                            tail: e,
                        });
                    }
                }
            }
        }
        Ok((next, touched))
    }

    /// Distinct relations incident to `e`, in label order.
    pub fn relations_at(&self, e: EntityId, include_inverse: bool) -> Result<Vec<RelationId>> {
        self.check_entity(e)?;
        let mut rels: Vec<RelationId> = self.out_index[e.index()].iter().map(|&(r, _)| r).collect();
        if include_inverse {
            rels.extend(self.in_index[e.index()].iter().map(|&(r, _)| r));
            rels.sort_unstable();
        }
        rels.dedup();
        Ok(rels)
    }

    /// `(head, tail)` pairs carrying relation `r`.
    pub fn facts_of(&self, r: RelationId) -> Result<&[(EntityId, EntityId)]> {
        self.check_relation(r)?;
        Ok(&self.by_relation[r.index()])
    }

    pub(crate) fn out_adjacency(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_index[e.index()]
    }

    pub fn has_mapping(&self) -> bool {
        !self.rel_to_super.is_empty() || self.relations.len() == 0
    }

    pub fn super_of(&self, r: RelationId) -> Option<SuperRelationId> {
        self.rel_to_super.get(r.index()).copied()
    }

    pub fn members(&self, sr: SuperRelationId) -> Result<&[RelationId]> {
        self.check_super(sr)?;
        Ok(&self.super_members[sr.index()])
    }

    pub fn member_set(&self, sr: SuperRelationId) -> Result<BTreeSet<RelationId>> {
        Ok(self.members(sr)?.iter().copied().collect())
    }

    /// Replaces the super-relation mapping. `labels[r]` is the super-relation
    /// label for relation `r`.
    pub(crate) fn install_mapping(&mut self, labels: Vec<String>) {
        assert_eq!(labels.len(), self.relations.len());
        let supers = LabelTable::from_unsorted(labels.iter().cloned());
        let rel_to_super: Vec<SuperRelationId> = labels
            .iter()
            .map(|l| SuperRelationId(supers.get(l).unwrap()))
            .collect();
        let mut super_members = vec![Vec::new(); supers.len()];
        for (r, s) in rel_to_super.iter().enumerate() {
            super_members[s.index()].push(RelationId(r as u32));
        }
        self.supers = supers;
        self.rel_to_super = rel_to_super;
        self.super_members = super_members;
    }

    /// Canonical snapshot: one sorted, deduplicated TSV row per fact.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_label(t.head),
                self.relation_label(t.relation),
                self.entity_label(t.tail)
            )?;
        }
        Ok(())
    }

    /// Current mapping as `relation<TAB>super_relation` rows.
    pub fn write_mapping<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in self.relations() {
            if let Some(s) = self.super_of(r) {
                writeln!(out, "{}\t{}", self.relation_label(r), self.super_label(s))?;
            }
        }
        Ok(())
    }
}

fn check(id: u32, len: usize, kind: &'static str) -> Result<()> {
    if (id as usize) < len {
        Ok(())
    } else {
        Err(Error::UnknownHandle { kind, id })
    }
}

fn relation_range(list: &[(RelationId, EntityId)], r: RelationId) -> &[(RelationId, EntityId)] {
    let start = list.partition_point(|&(rel, _)| rel < r);
    let end = start + list[start..].partition_point(|&(rel, _)| rel == r);
    &list[start..end]
}

/// Parses a triple file. Blank lines and lines starting with `#` are skipped.
pub fn load_triples<R: BufRead>(source: R, format: TripleFormat) -> Result<Graph> {
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Load {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let row = match format {
            TripleFormat::Tsv => parse_tsv_row(line),
            TripleFormat::NTriples => parse_nt_row(line),
        }
        .map_err(|message| Error::Load {
            line: lineno,
            message,
        })?;
        rows.push(row);
    }
    Ok(Graph::from_labeled(rows))
}

fn parse_tsv_row(line: &str) -> Result<(String, String, String), String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err("expected 3 fields".to_string());
    }
    if fields.iter().any(|f| f.is_empty()) {
        return Err("empty field".to_string());
    }
    Ok((
        fields[0].to_string(),
        fields[1].to_string(),
        fields[2].to_string(),
    ))
}

fn parse_nt_row(line: &str) -> Result<(String, String, String), String> {
    let mut rest = line.trim_start();
    let mut terms = Vec::with_capacity(3);
    for _ in 0..3 {
        match rest.chars().next() {
            Some('<') => {}
            Some('"') => return Err("literals are not supported".to_string()),
            Some('_') => return Err("blank nodes are not supported".to_string()),
            Some(c) => return Err(format!("expected '<', found '{c}'")),
            None => return Err("expected 3 terms".to_string()),
        }
        let end = rest.find('>').ok_or_else(|| "unterminated IRI".to_string())?;
        let iri = &rest[1..end];
        if iri.is_empty() || iri.chars().any(char::is_whitespace) {
            return Err(format!("invalid IRI <{iri}>"));
        }
        terms.push(iri.to_string());
        rest = rest[end + 1..].trim_start();
    }
    let rest = rest
        .strip_prefix('.')
        .ok_or_else(|| "expected terminal '.'".to_string())?
        .trim();
    if !(rest.is_empty() || rest.starts_with('#')) {
        return Err("trailing content after '.'".to_string());
    }
    let mut terms = terms.into_iter();
    Ok((
        terms.next().unwrap(),
        terms.next().unwrap(),
        terms.next().unwrap(),
    ))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const KG_A: &str = "e1\ta.x.p\te2\n\
                                   e1\ta.x.q\te3\n\
                                   e2\tb.y.r\te4\n\
                                   e3\tb.y.s\te5\n\
                                   e2\tc.z.t\te6\n";

    pub(crate) fn kg_a() -> Graph {
        load_triples(KG_A.as_bytes(), TripleFormat::Tsv).unwrap()
    }

    fn ids(g: &Graph, labels: &[&str]) -> BTreeSet<EntityId> {
        labels.iter().map(|l| g.entity(l).unwrap()).collect()
    }

    fn rels(g: &Graph, labels: &[&str]) -> BTreeSet<RelationId> {
        labels.iter().map(|l| g.relation(l).unwrap()).collect()
    }

    #[test]
    fn loads_fixture_counts() {
        let g = kg_a();
        assert_eq!(g.entity_count(), 6);
        assert_eq!(g.relation_count(), 5);
        assert_eq!(g.triple_count(), 5);
        assert!(!g.has_mapping());
    }

    #[test]
    fn empty_input_is_valid() {
        let g = load_triples("".as_bytes(), TripleFormat::Tsv).unwrap();
        assert_eq!(g.triple_count(), 0);
        assert_eq!(g.entity_count(), 0);
    }

    #[test]
    fn malformed_row_names_line() {
        let err = load_triples("e1\ta.x.p\n".as_bytes(), TripleFormat::Tsv).unwrap_err();
        assert_eq!(err.to_string(), "line 1: expected 3 fields");

        let err = load_triples("e1\tr\te2\n\ne1\tr\n".as_bytes(), TripleFormat::Tsv).unwrap_err();
        assert_eq!(err.to_string(), "line 3: expected 3 fields");
    }

    #[test]
    fn duplicates_collapse() {
        let doubled = format!("{KG_A}{KG_A}");
        let g = load_triples(doubled.as_bytes(), TripleFormat::Tsv).unwrap();
        assert_eq!(g.triple_count(), 5);
    }

    #[test]
    fn ntriples_subset() {
        let src = "<http://x/e1> <http://x/p> <http://x/e2> .\n\
                   # comment\n\
                   <http://x/e2> <http://x/p> <http://x/e3> . # trailing\n";
        let g = load_triples(src.as_bytes(), TripleFormat::NTriples).unwrap();
        assert_eq!(g.triple_count(), 2);
        assert!(g.entity("http://x/e1").is_some());
        assert!(g.relation("http://x/p").is_some());

        let err = load_triples(
            "<http://x/e1> <http://x/p> \"lit\" .\n".as_bytes(),
            TripleFormat::NTriples,
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "line 1: literals are not supported");

        let err = load_triples("<a> <b> <c>\n".as_bytes(), TripleFormat::NTriples).unwrap_err();
        assert_eq!(err.to_string(), "line 1: expected terminal '.'");
    }

    #[test]
    fn out_edges_on_fixture() {
        let g = kg_a();
        let e1 = g.entity("e1").unwrap();
        let got: Vec<(&str, &str)> = g
            .out_edges(e1, false)
            .unwrap()
            .iter()
            .map(|e| (g.relation_label(e.relation), g.entity_label(e.neighbor)))
            .collect();
        assert_eq!(got, vec![("a.x.p", "e2"), ("a.x.q", "e3")]);

        let e4 = g.entity("e4").unwrap();
        assert!(g.out_edges(e4, false).unwrap().is_empty());

        let inv = g.out_edges(e4, true).unwrap();
        assert_eq!(inv.len(), 1);
        assert_eq!(g.relation_label(inv[0].relation), "b.y.r");
        assert_eq!(g.entity_label(inv[0].neighbor), "e2");
        assert_eq!(inv[0].direction, Direction::Inverse);
        assert_eq!(g.entity_label(inv[0].triple.head), "e2");
    }

    #[test]
    fn unknown_handle_is_error() {
        let g = kg_a();
        let err = g.out_edges(EntityId(99), false).unwrap_err();
        assert!(matches!(
            err,
            Error::UnknownHandle {
                kind: "entity",
                id: 99
            }
        ));
    }

    #[test]
    fn neighbors_via_on_fixture() {
        let g = kg_a();
        let frontier = ids(&g, &["e2", "e3"]);
        let (next, touched) = g
            .neighbors_via(&frontier, &rels(&g, &["b.y.r", "b.y.s"]), false)
            .unwrap();
        assert_eq!(next, ids(&g, &["e4", "e5"]));
        assert_eq!(touched.len(), 2);

        let (next, touched) = g.neighbors_via(&frontier, &rels(&g, &["c.z.t"]), false).unwrap();
        assert_eq!(next, ids(&g, &["e6"]));
        assert_eq!(touched.len(), 1);

        let (next, touched) = g
            .neighbors_via(&BTreeSet::new(), &rels(&g, &["c.z.t"]), false)
            .unwrap();
        assert!(next.is_empty() && touched.is_empty());
    }

    #[test]
    fn inverse_twin_counts_once() {
        let g = kg_a();
        let all: BTreeSet<RelationId> = g.relations().collect();
        let both = ids(&g, &["e1", "e2"]);
        let (_, touched) = g.neighbors_via(&both, &all, true).unwrap();
        // e1->e2 is reached forward from e1 and inverse from e2
        let e1e2 = touched
            .iter()
            .filter(|t| g.entity_label(t.head) == "e1" && g.entity_label(t.tail) == "e2")
            .count();
        assert_eq!(e1e2, 1);
    }

    #[test]
    fn snapshot_round_trip() {
        let g = kg_a();
        let mut buf = Vec::new();
        g.write_tsv(&mut buf).unwrap();
        let h = load_triples(buf.as_slice(), TripleFormat::Tsv).unwrap();
        assert_eq!(g.triples(), h.triples());
    }
}
