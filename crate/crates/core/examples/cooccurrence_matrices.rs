//! Internal matrix from two short annotation streams and external matrix
//! from a four-edge knowledge graph.
//!
//! cargo run --example cooccurrence_matrices

use std::collections::BTreeMap;

use ubant::cooccur::{
    build_external_matrix, build_internal_matrix, merge_rows, AnnotationCorpus, KnowledgeEdgeSet, Segment, Video,
    Vocabulary,
};

fn seg(k: usize, activity: usize) -> Segment {
    Segment {
        start: k as f64,
        stop: k as f64 + 1.0,
        activity,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let verbs: BTreeMap<u32, String> = [(0, "open"), (1, "take"), (2, "close"), (3, "cut"), (4, "slice")]
        .into_iter()
        .map(|(i, s)| (i, s.to_string()))
        .collect();
    let nouns: BTreeMap<u32, String> = [(0, "fridge"), (1, "milk"), (2, "bread")]
        .into_iter()
        .map(|(i, s)| (i, s.to_string()))
        .collect();
    let vocab = Vocabulary::new(verbs, nouns, [(0, 0), (1, 1), (2, 0), (3, 2), (4, 2)])?;
    for c in 0..vocab.num_activities() {
        println!("class {c}: {}", vocab.activity_name(c));
    }

    // open fridge -> take milk, open fridge -> close fridge
    let corpus = AnnotationCorpus::new(vec![
        Video {
            id: "a".into(),
            segments: vec![seg(0, 0), seg(1, 2)],
        },
        Video {
            id: "b".into(),
            segments: vec![seg(0, 0), seg(1, 1)],
        },
    ])?;
    let internal = build_internal_matrix(&corpus, &vocab)?;
    println!("\ninternal nonzero pairs {:?}", internal.ranked_pairs());

    let mut edges = KnowledgeEdgeSet::new();
    edges.insert("cut", "UsedFor", "knife")?;
    edges.insert("slice", "UsedFor", "knife")?;
    edges.insert("cut", "Antonym", "join")?;
    edges.insert("join", "Antonym", "slice")?;
    let ext = build_external_matrix(&edges, &vocab)?;
    println!("verb matrix (cut, slice) = {}", ext.verb.get(3, 4));
    println!("activity nonzero pairs {:?}", ext.activity.ranked_pairs());

    let set = merge_rows(internal.row(1), ext.activity.row(1), 1, None)?;
    println!("\nco-occurrence set of {}: {:?}", vocab.activity_name(1), set.members());
    Ok(())
}
