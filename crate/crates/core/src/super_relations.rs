//! Grouping concrete relations into super-relations, and the connection
//! queries the reasoner builds its search paths from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::store::{EntityId, Graph, SuperRelationId};

#[derive(Clone, Debug, PartialEq)]
pub enum GroupingStrategy {
    /// Super-relation = the first `levels` dot-separated segments.
    HierarchicalPrefix { levels: usize },
    /// `relation<TAB>super_relation` rows read from a file.
    ExplicitMapping { file: PathBuf },
    /// Greedy token-set Jaccard agglomeration over relation labels.
    LabelClustering { similarity_threshold: f64 },
}

impl Default for GroupingStrategy {
    fn default() -> Self {
        GroupingStrategy::HierarchicalPrefix { levels: 2 }
    }
}

impl GroupingStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GroupingStrategy::HierarchicalPrefix { levels } if levels < 1 => {
                Err(Error::Config("hierarchy levels must be >= 1".into()))
            }
            GroupingStrategy::LabelClustering {
                similarity_threshold: t,
            } if !(t > 0.0 && t <= 1.0) => Err(Error::Config(format!(
                "similarity threshold must be in (0, 1], got {t}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Parses `hier:2`, `cluster:0.5` or `file:path/to/mapping.tsv`.
impl FromStr for GroupingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let strategy = match kind {
            "hier" => GroupingStrategy::HierarchicalPrefix {
                levels: if arg.is_empty() {
                    2
                } else {
                    arg.parse()
                        .map_err(|_| Error::Config(format!("bad hierarchy depth '{arg}'")))?
                },
            },
            "cluster" => GroupingStrategy::LabelClustering {
                similarity_threshold: if arg.is_empty() {
                    0.5
                } else {
                    arg.parse()
                        .map_err(|_| Error::Config(format!("bad threshold '{arg}'")))?
                },
            },
            "file" if !arg.is_empty() => GroupingStrategy::ExplicitMapping { file: arg.into() },
            _ => {
                return Err(Error::Config(format!(
                    "unknown grouping strategy '{s}' (expected hier:N, cluster:T or file:PATH)"
                )))
            }
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Populates the graph's super-relation mapping. Returns warnings (unknown
/// relations named in an explicit mapping file).
pub fn derive_super_relations(g: &mut Graph, strategy: &GroupingStrategy) -> Result<Vec<String>> {
    strategy.validate()?;
    let labels: Vec<&str> = g.relations().map(|r| g.relation_label(r)).collect();
    let (assigned, warnings) = match strategy {
        GroupingStrategy::HierarchicalPrefix { levels } => (
            labels.iter().map(|l| hierarchical_label(l, *levels)).collect(),
            Vec::new(),
        ),
        GroupingStrategy::ExplicitMapping { file } => {
            let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
            apply_explicit_mapping(&labels, &text)?
        }
        GroupingStrategy::LabelClustering { similarity_threshold } => {
            (cluster_labels(&labels, *similarity_threshold), Vec::new())
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    g.install_mapping(assigned);
    Ok(warnings)
}

/// Like [`derive_super_relations`] with an in-memory mapping file body.
pub fn derive_from_mapping_text(g: &mut Graph, text: &str) -> Result<Vec<String>> {
    let labels: Vec<&str> = g.relations().map(|r| g.relation_label(r)).collect();
    let (assigned, warnings) = apply_explicit_mapping(&labels, text)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    g.install_mapping(assigned);
    Ok(warnings)
}

pub fn hierarchical_label(label: &str, levels: usize) -> String {
    let segments: Vec<&str> = label.split('.').collect();
    if segments.len() <= levels {
        label.to_string()
    } else {
        segments[..levels].join(".")
    }
}

fn apply_explicit_mapping(labels: &[&str], text: &str) -> Result<(Vec<String>, Vec<String>)> {
    let known: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let mut assigned: Vec<Option<String>> = vec![None; labels.len()];
    let mut seen = HashMap::new();
    let mut warnings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((rel, sup)) = line.split_once('\t') else {
            return Err(Error::Mapping(format!("line {lineno}: expected 2 fields")));
        };
        if rel.is_empty() || sup.is_empty() || sup.contains('\t') {
            return Err(Error::Mapping(format!("line {lineno}: expected 2 fields")));
        }
        if let Some(prev) = seen.insert(rel.to_string(), lineno) {
            return Err(Error::Mapping(format!(
                "line {lineno}: relation '{rel}' already mapped on line {prev}"
            )));
        }
        match known.get(rel) {
            Some(&idx) => assigned[idx] = Some(sup.to_string()),
            None => warnings.push(format!("line {lineno}: relation '{rel}' not in graph, ignored")),
        }
    }
    let assigned = assigned
        .into_iter()
        .zip(labels)
        .map(|(a, l)| a.unwrap_or_else(|| l.to_string()))
        .collect();
    Ok((assigned, warnings))
}

/// Splits a relation label on `._-/`, whitespace and lower-to-upper case
/// boundaries; tokens are lowercased.
pub fn relation_tokens(label: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for c in label.chars() {
        if matches!(c, '.' | '_' | '-' | '/') || c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        current.extend(c.to_lowercase());
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

struct Cluster {
    members: Vec<usize>,
    token_counts: BTreeMap<String, usize>,
}

impl Cluster {
    /// Tokens carried by at least half of the members.
    fn centroid(&self) -> BTreeSet<String> {
        let n = self.members.len();
        self.token_counts
            .iter()
            .filter(|(_, &c)| c * 2 >= n)
            .map(|(t, _)| t.clone())
            .collect()
    }
}

fn token_set(label: &str) -> BTreeSet<String> {
    let set: BTreeSet<String> = relation_tokens(label).into_iter().collect();
    if set.is_empty() {
        BTreeSet::from([label.to_lowercase()])
    } else {
        set
    }
}

/// Returns one cluster label per input label. Input order does not matter:
/// labels are processed in sorted order.
pub fn cluster_labels(labels: &[&str], threshold: f64) -> Vec<String> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].cmp(labels[b]).then(a.cmp(&b)));

    let mut clusters: Vec<Cluster> = Vec::new();
    for &i in &order {
        let tokens = token_set(labels[i]);
        let target = clusters
            .iter()
            .position(|c| jaccard(&c.centroid(), &tokens) >= threshold);
        let cluster = match target {
            Some(idx) => &mut clusters[idx],
            None => {
                clusters.push(Cluster {
                    members: Vec::new(),
                    token_counts: BTreeMap::new(),
                });
                clusters.last_mut().unwrap()
            }
        };
        cluster.members.push(i);
        for t in tokens {
            *cluster.token_counts.entry(t).or_default() += 1;
        }
    }

    let mut out = vec![String::new(); labels.len()];
    let mut used: HashMap<String, usize> = HashMap::new();
    for cluster in &clusters {
        let base = cluster_name(cluster.members.iter().map(|&i| labels[i]));
        let n = used.entry(base.clone()).or_default();
        *n += 1;
        let name = if *n == 1 { base } else { format!("{base}~{n}") };
        for &i in &cluster.members {
            out[i] = name.clone();
        }
    }
    out
}

/// Most common token-sequence prefix among the members; ties prefer the
/// longer prefix, then the lexicographically smaller one.
fn cluster_name<'a>(members: impl Iterator<Item = &'a str>) -> String {
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for label in members {
        let tokens = relation_tokens(label);
        let tokens = if tokens.is_empty() {
            vec![label.to_lowercase()]
        } else {
            tokens
        };
        let prefixes: BTreeSet<Vec<String>> = (1..=tokens.len()).map(|n| tokens[..n].to_vec()).collect();
        for p in prefixes {
            *counts.entry(p).or_default() += 1;
        }
    }
    let best = counts
        .iter()
        .max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb)
                .then(pa.len().cmp(&pb.len()))
                .then_with(|| pb.join("_").cmp(&pa.join("_")))
        })
        .map(|(p, _)| p.join("_"))
        .unwrap_or_default();
    best
}

fn require_mapping(g: &Graph) -> Result<()> {
    if g.has_mapping() {
        Ok(())
    } else {
        Err(Error::Mapping("super-relations have not been derived".into()))
    }
}

/// Super-relations of every relation incident to the frontier.
pub fn super_relations_at(
    g: &Graph,
    frontier: &BTreeSet<EntityId>,
    include_inverse: bool,
) -> Result<BTreeSet<SuperRelationId>> {
    require_mapping(g)?;
    let mut out = BTreeSet::new();
    for &e in frontier {
        for r in g.relations_at(e, include_inverse)? {
            out.insert(g.super_of(r).expect("mapping is total"));
        }
    }
    Ok(out)
}

/// Super-relation connection `r1 -> r2`: some `e1 -r-> e2 -r'-> e3` with
/// `r` in `r1` and `r'` in `r2`. With an anchor, `e1` must be in it.
pub fn connects(
    g: &Graph,
    r1: SuperRelationId,
    r2: SuperRelationId,
    anchor: Option<&BTreeSet<EntityId>>,
) -> Result<bool> {
    connects_directed(g, r1, r2, anchor, false)
}

/// [`connects`] where each hop may also run tail-to-head.
pub fn connects_directed(
    g: &Graph,
    r1: SuperRelationId,
    r2: SuperRelationId,
    anchor: Option<&BTreeSet<EntityId>>,
    include_inverse: bool,
) -> Result<bool> {
    require_mapping(g)?;
    let first = g.members(r1)?;
    g.check_super(r2)?;
    let continues = |e: EntityId| -> Result<bool> {
        Ok(g.relations_at(e, include_inverse)?
            .into_iter()
            .any(|r| g.super_of(r) == Some(r2)))
    };
    let admitted = |e: &EntityId| anchor.is_none_or(|a| a.contains(e));
    for &r in first {
        for &(head, tail) in g.facts_of(r)? {
            if admitted(&head) && continues(tail)? {
                return Ok(true);
            }
            if include_inverse && admitted(&tail) && continues(head)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::tests::kg_a;

    fn hier(g: &mut Graph) {
        derive_super_relations(g, &GroupingStrategy::HierarchicalPrefix { levels: 2 }).unwrap();
    }

    fn sr(g: &Graph, l: &str) -> SuperRelationId {
        g.super_relation(l).unwrap()
    }

    fn ents(g: &Graph, labels: &[&str]) -> BTreeSet<EntityId> {
        labels.iter().map(|l| g.entity(l).unwrap()).collect()
    }

    #[test]
    fn hierarchical_on_fixture() {
        let mut g = kg_a();
        hier(&mut g);
        let mapping: Vec<(&str, &str)> = g
            .relations()
            .map(|r| (g.relation_label(r), g.super_label(g.super_of(r).unwrap())))
            .collect();
        assert_eq!(
            mapping,
            vec![
                ("a.x.p", "a.x"),
                ("a.x.q", "a.x"),
                ("b.y.r", "b.y"),
                ("b.y.s", "b.y"),
                ("c.z.t", "c.z"),
            ]
        );
        assert_eq!(g.super_relation_count(), 3);
    }

    #[test]
    fn shallow_labels_map_to_themselves() {
        assert_eq!(hierarchical_label("music", 2), "music");
        assert_eq!(hierarchical_label("music.artist", 2), "music.artist");
        assert_eq!(hierarchical_label("music.artist.album", 1), "music");
    }

    #[test]
    fn tokenizer_splits_case_and_separators() {
        assert_eq!(relation_tokens("developer_of"), vec!["developer", "of"]);
        assert_eq!(
            relation_tokens("film/film.directedBy"),
            vec!["film", "film", "directed", "by"]
        );
        assert_eq!(relation_tokens("P31"), vec!["p31"]);
    }

    #[test]
    fn clustering_example() {
        // {developer, of} vs {designer, of}: Jaccard 1/3
        let a = token_set("developer_of");
        let b = token_set("designer_of");
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-12);

        let labels = cluster_labels(&["developer_of", "designer_of"], 0.3);
        assert_eq!(labels[0], labels[1]);
        let labels = cluster_labels(&["developer_of", "designer_of"], 0.5);
        assert_ne!(labels[0], labels[1]);
    }

    #[test]
    fn clustering_ignores_input_order() {
        let a = [
            "film_director",
            "film_producer",
            "music_artist",
            "music_album",
            "born_in",
        ];
        let mut b = a;
        b.reverse();
        let la = cluster_labels(&a, 0.3);
        let lb = cluster_labels(&b, 0.3);
        for (i, label) in a.iter().enumerate() {
            let j = b.iter().position(|x| x == label).unwrap();
            assert_eq!(la[i], lb[j]);
        }
        assert_eq!(la[0], la[1]);
        assert_eq!(la[2], la[3]);
        assert_ne!(la[0], la[2]);
    }

    #[test]
    fn clustering_labels_stay_distinct() {
        // both clusters would be named "x" by prefix frequency
        let labels = cluster_labels(&["x_p_1", "x_q_1", "x_r_2", "x_s_2"], 0.5);
        assert_eq!(labels, vec!["x", "x", "x~2", "x~2"]);
    }

    #[test]
    fn explicit_mapping_rules() {
        let mut g = kg_a();
        let warnings =
            derive_from_mapping_text(&mut g, "# comment\na.x.p\tgroup1\na.x.q\tgroup1\nghost\tgroup9\n")
                .unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(
            g.super_label(g.super_of(g.relation("a.x.p").unwrap()).unwrap()),
            "group1"
        );
        // unmapped relations fall back to themselves
        assert_eq!(
            g.super_label(g.super_of(g.relation("c.z.t").unwrap()).unwrap()),
            "c.z.t"
        );

        let err = derive_from_mapping_text(&mut g, "a.x.p\tg1\na.x.p\tg2\n").unwrap_err();
        assert!(err.to_string().contains("already mapped"));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(
            "hier:2".parse::<GroupingStrategy>().unwrap(),
            GroupingStrategy::HierarchicalPrefix { levels: 2 }
        );
        assert_eq!(
            "cluster:0.5".parse::<GroupingStrategy>().unwrap(),
            GroupingStrategy::LabelClustering {
                similarity_threshold: 0.5
            }
        );
        assert!("cluster:0".parse::<GroupingStrategy>().is_err());
        assert!("hier:0".parse::<GroupingStrategy>().is_err());
        assert!("bogus".parse::<GroupingStrategy>().is_err());
    }

    #[test]
    fn hierarchical_is_idempotent() {
        let mut g = kg_a();
        hier(&mut g);
        let first: Vec<_> = g.relations().map(|r| g.super_of(r)).collect();
        hier(&mut g);
        let second: Vec<_> = g.relations().map(|r| g.super_of(r)).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn super_relations_at_fixture() {
        let mut g = kg_a();
        hier(&mut g);
        let at = super_relations_at(&g, &ents(&g, &["e1"]), false).unwrap();
        assert_eq!(at, BTreeSet::from([sr(&g, "a.x")]));
        let at = super_relations_at(&g, &ents(&g, &["e2", "e3"]), false).unwrap();
        assert_eq!(at, BTreeSet::from([sr(&g, "b.y"), sr(&g, "c.z")]));
        assert!(super_relations_at(&g, &BTreeSet::new(), false)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn connects_fixture() {
        let mut g = kg_a();
        hier(&mut g);
        let (a, b, c) = (sr(&g, "a.x"), sr(&g, "b.y"), sr(&g, "c.z"));
        assert!(connects(&g, a, b, None).unwrap());
        assert!(!connects(&g, b, a, None).unwrap());
        assert!(connects(&g, a, c, Some(&ents(&g, &["e1"]))).unwrap());
        assert!(!connects(&g, a, c, Some(&ents(&g, &["e3"]))).unwrap());
        assert!(connects(&g, a, SuperRelationId(42), None).is_err());
    }

    #[test]
    fn connects_requires_mapping() {
        let g = kg_a();
        assert!(super_relations_at(&g, &BTreeSet::new(), false).is_err());
    }
}
