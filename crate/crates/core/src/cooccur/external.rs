use std::collections::{BTreeMap, BTreeSet};

use super::{CooccurError, MatrixKind, UncertaintyMatrix, Vocabulary};

/// Relation names recognised in an edge dump.
pub const CONCEPTNET_RELATIONS: &[&str] = &[
    "RelatedTo",
    "FormOf",
    "IsA",
    "PartOf",
    "HasA",
    "UsedFor",
    "CapableOf",
    "AtLocation",
    "Causes",
    "HasSubevent",
    "HasFirstSubevent",
    "HasLastSubevent",
    "HasPrerequisite",
    "HasProperty",
    "MotivatedByGoal",
    "ObstructedBy",
    "Desires",
    "CreatedBy",
    "Synonym",
    "Antonym",
    "DistinctFrom",
    "DerivedFrom",
    "SymbolOf",
    "DefinedAs",
    "MannerOf",
    "LocatedNear",
    "HasContext",
    "SimilarTo",
    "EtymologicallyRelatedTo",
    "EtymologicallyDerivedFrom",
    "CausesDesire",
    "MadeOf",
    "ReceivesAction",
    "ExternalURL",
    "Entails",
    "InstanceOf",
    "NotDesires",
    "NotUsedFor",
    "NotCapableOf",
    "NotHasProperty",
];

/// Relations that connect activity concepts by purpose, order, or manner.
pub const DEFAULT_SELECTED_RELATIONS: &[&str] = &[
    "MotivatedByGoal",
    "HasPrerequisite",
    "MannerOf",
    "UsedFor",
    "Entails",
    "LocatedNear",
    "HasFirstSubevent",
    "HasSubevent",
    "HasLastSubevent",
    "Causes",
    "CreatedBy",
    "ReceivesAction",
    "CausesDesire",
    "CapableOf",
];

/// Lowercases and joins words with underscores; a ConceptNet URI such as
/// `/c/en/ice_cream/n` is reduced to its term (`ice_cream`).
pub fn normalize_lemma(raw: &str) -> String {
    let raw = raw.trim();
    let term = if let Some(rest) = raw.strip_prefix("/c/") {
        rest.split('/').nth(1).unwrap_or(rest)
    } else {
        raw
    };
    term.split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Strips a `/r/` prefix and checks the name against [`CONCEPTNET_RELATIONS`].
pub fn normalize_relation(raw: &str) -> Option<&'static str> {
    let name = raw.trim();
    let name = name.strip_prefix("/r/").unwrap_or(name);
    CONCEPTNET_RELATIONS.iter().copied().find(|r| *r == name)
}

/// Knowledge-graph edges plus the relation filter used for path counting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeEdgeSet {
    edges: BTreeSet<(String, String, String)>,
    selected: BTreeSet<String>,
}

impl Default for KnowledgeEdgeSet {
    fn default() -> Self {
        Self {
            edges: BTreeSet::new(),
            selected: DEFAULT_SELECTED_RELATIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl KnowledgeEdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_relations<I, S>(relations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            edges: BTreeSet::new(),
            selected: relations.into_iter().map(Into::into).collect(),
        }
    }

    /// Adds one edge after normalising lemmas and checking the relation.
    pub fn insert(&mut self, head: &str, relation: &str, tail: &str) -> Result<(), String> {
        let rel = normalize_relation(relation)
            .ok_or_else(|| format!("unknown relation {relation:?}"))?;
        let (h, t) = (normalize_lemma(head), normalize_lemma(tail));
        if h.is_empty() || t.is_empty() {
            return Err("empty lemma".to_string());
        }
        self.edges.insert((h, rel.to_string(), t));
        Ok(())
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.edges
            .iter()
            .map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn selected_relations(&self) -> &BTreeSet<String> {
        &self.selected
    }

    /// Undirected neighbour sets restricted to selected relations, without
    /// self-loops. Parallel edges collapse to one neighbour.
    pub fn neighbours(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for (h, r, t) in &self.edges {
            if h == t || !self.selected.contains(r) {
                continue;
            }
            adj.entry(h).or_default().insert(t);
            adj.entry(t).or_default().insert(h);
        }
        adj
    }

    /// Number of distinct intermediate nodes `x` with `a - x - b`.
    pub fn two_hop_paths(adj: &BTreeMap<&str, BTreeSet<&str>>, a: &str, b: &str) -> u64 {
        match (adj.get(a), adj.get(b)) {
            (Some(na), Some(nb)) if a != b => na.intersection(nb).count() as u64,
            _ => 0,
        }
    }
}

/// Verb, noun, and activity external matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalMatrices {
    /// Indexed by position in `Vocabulary::verbs()` order.
    pub verb: UncertaintyMatrix,
    /// Indexed by position in `Vocabulary::nouns()` order.
    pub noun: UncertaintyMatrix,
    pub activity: UncertaintyMatrix,
}

fn lemma_matrix(
    kind: MatrixKind,
    lemmas: &[String],
    adj: &BTreeMap<&str, BTreeSet<&str>>,
) -> UncertaintyMatrix {
    let mut m = UncertaintyMatrix::zeros(kind, lemmas.len());
    for i in 0..lemmas.len() {
        for j in i + 1..lemmas.len() {
            let paths = KnowledgeEdgeSet::two_hop_paths(adj, &lemmas[i], &lemmas[j]);
            m.add_pair(i, j, paths);
        }
    }
    m
}

/// Counts one-intermediate-node paths between vocabulary lemmas over the
/// selected relations (edges treated as undirected). Activity entry
/// `(c1, c2)` is `verb(v1, v2) + noun(n1, n2)`. Lemmas missing from the
/// graph contribute zero.
pub fn build_external_matrix(
    edges: &KnowledgeEdgeSet,
    vocab: &Vocabulary,
) -> Result<ExternalMatrices, CooccurError> {
    if edges.selected_relations().is_empty() {
        return Err(CooccurError::NoRelations);
    }
    let adj = edges.neighbours();
    let verb_ids: Vec<u32> = vocab.verbs().keys().copied().collect();
    let noun_ids: Vec<u32> = vocab.nouns().keys().copied().collect();
    let verb_lemmas: Vec<String> = vocab.verbs().values().map(|l| normalize_lemma(l)).collect();
    let noun_lemmas: Vec<String> = vocab.nouns().values().map(|l| normalize_lemma(l)).collect();
    let verb = lemma_matrix(MatrixKind::ExternalVerb, &verb_lemmas, &adj);
    let noun = lemma_matrix(MatrixKind::ExternalNoun, &noun_lemmas, &adj);

    let pos = |ids: &[u32], id: u32| ids.binary_search(&id).expect("id from vocabulary");
    let classes = vocab.num_activities();
    let mut activity = UncertaintyMatrix::zeros(MatrixKind::ExternalActivity, classes);
    let split: Vec<(usize, usize)> = (0..classes)
        .map(|c| {
            let (v, n) = vocab.activity(c).expect("dense activity ids");
            (pos(&verb_ids, v), pos(&noun_ids, n))
        })
        .collect();
    for a in 0..classes {
        for b in a + 1..classes {
            let (va, na) = split[a];
            let (vb, nb) = split[b];
            activity.add_pair(a, b, verb.get(va, vb) + noun.get(na, nb));
        }
    }
    Ok(ExternalMatrices {
        verb,
        noun,
        activity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(verbs: &[&str], nouns: &[&str]) -> Vocabulary {
        let v: BTreeMap<u32, String> = verbs
            .iter()
            .enumerate()
            .map(|(i, s)| (i as u32, s.to_string()))
            .collect();
        let n: BTreeMap<u32, String> = nouns
            .iter()
            .enumerate()
            .map(|(i, s)| (i as u32, s.to_string()))
            .collect();
        let pairs: Vec<(u32, u32)> = (0..verbs.len() as u32)
            .flat_map(|a| (0..nouns.len() as u32).map(move |b| (a, b)))
            .collect();
        Vocabulary::new(v, n, pairs).unwrap()
    }

    #[test]
    fn lemma_normalisation() {
        assert_eq!(normalize_lemma("Ice Cream"), "ice_cream");
        assert_eq!(normalize_lemma("/c/en/chopping_board/n"), "chopping_board");
        assert_eq!(normalize_relation("/r/UsedFor"), Some("UsedFor"));
        assert_eq!(normalize_relation("Bogus"), None);
    }

    #[test]
    fn empty_edges_zero_matrices() {
        let voc = vocab(&["cut", "slice"], &["knife"]);
        let m = build_external_matrix(&KnowledgeEdgeSet::new(), &voc).unwrap();
        assert!(m.verb.values().iter().all(|&v| v == 0));
        assert!(m.activity.values().iter().all(|&v| v == 0));
    }

    #[test]
    fn shared_tool_links_verbs() {
        let voc = vocab(&["cut", "slice"], &["bread"]);
        let mut e = KnowledgeEdgeSet::new();
        e.insert("cut", "UsedFor", "knife").unwrap();
        e.insert("slice", "UsedFor", "knife").unwrap();
        let m = build_external_matrix(&e, &voc).unwrap();
        assert_eq!(m.verb.get(0, 1), 1);
        // activities (cut, bread) and (slice, bread)
        assert_eq!(m.activity.get(0, 1), 1);
    }

    #[test]
    fn unselected_relations_ignored() {
        let voc = vocab(&["cut", "slice"], &["bread"]);
        let mut e = KnowledgeEdgeSet::new();
        e.insert("cut", "Antonym", "join").unwrap();
        e.insert("join", "Antonym", "slice").unwrap();
        let m = build_external_matrix(&e, &voc).unwrap();
        assert_eq!(m.verb.get(0, 1), 0);
    }

    #[test]
    fn no_relations_rejected() {
        let voc = vocab(&["cut"], &["bread"]);
        let e = KnowledgeEdgeSet::with_relations(Vec::<String>::new());
        assert!(matches!(
            build_external_matrix(&e, &voc),
            Err(CooccurError::NoRelations)
        ));
    }

    #[test]
    fn activity_adds_verb_and_noun_scores() {
        let voc = vocab(&["cut", "slice"], &["bread", "cake"]);
        let mut e = KnowledgeEdgeSet::new();
        e.insert("cut", "UsedFor", "knife").unwrap();
        e.insert("slice", "UsedFor", "knife").unwrap();
        e.insert("bread", "LocatedNear", "plate").unwrap();
        e.insert("cake", "LocatedNear", "plate").unwrap();
        e.insert("cake", "CreatedBy", "oven").unwrap();
        e.insert("bread", "CreatedBy", "oven").unwrap();
        let m = build_external_matrix(&e, &voc).unwrap();
        assert_eq!(m.noun.get(0, 1), 2);
        // (cut, bread) = 0 vs (slice, cake) = 3
        let a = voc.activity_id(0, 0).unwrap();
        let b = voc.activity_id(1, 1).unwrap();
        assert_eq!(m.activity.get(a, b), 3);
        // same verb: only the noun score
        let c = voc.activity_id(0, 1).unwrap();
        assert_eq!(m.activity.get(a, c), 2);
    }
}
