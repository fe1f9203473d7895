//! Generates a corpus with known successor structure and checks that the
//! matrices recover it.
//!
//! cargo run --example synthetic_corpus

use std::collections::BTreeSet;

use ubant::cooccur::{build_external_matrix, build_internal_matrix};
use ubant::data::{family_batches, generate_synthetic, FamilyGeometry, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        classes: 12,
        branching: 3,
        videos: 30,
        test_videos: 10,
        seed: 5,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic(&spec)?;
    let train = syn.train();
    println!(
        "{} train videos, {} test videos, {} segments, {} edges",
        train.videos().len(),
        syn.test().videos().len(),
        syn.corpus.num_segments(),
        syn.edges.len()
    );
    for c in 0..4 {
        println!("class {c} ({}) -> {:?}", syn.vocab.activity_name(c), syn.truth.successors[c]);
    }

    let truth: BTreeSet<(usize, usize)> = syn.truth.sibling_pairs().into_iter().collect();
    let internal = build_internal_matrix(&train, &syn.vocab)?;
    let external = build_external_matrix(&syn.edges, &syn.vocab)?.activity;
    let support = |m: &ubant::cooccur::UncertaintyMatrix| -> BTreeSet<(usize, usize)> {
        m.ranked_pairs().into_iter().map(|(a, b, _)| (a, b)).collect()
    };
    println!("sibling pairs {}", truth.len());
    println!("internal support {} (matches: {})", support(&internal).len(), support(&internal) == truth);
    println!("external support {} (matches: {})", support(&external).len(), support(&external) == truth);

    let (families, skipped) = family_batches(&train, &syn.store, &FamilyGeometry::default())?;
    let f = &families[0];
    println!(
        "{} families ({skipped} skipped); first: video {} target {} members {:?}",
        families.len(),
        f.video_id,
        f.target,
        f.members.iter().map(|w| (w.n_o(), w.n_a())).collect::<Vec<_>>()
    );
    Ok(())
}
