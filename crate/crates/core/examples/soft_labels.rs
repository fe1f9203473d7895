//! Soft labels for single samples and mixed pairs.
//!
//! cargo run --example soft_labels

use ubant::cooccur::{MatrixKind, UncertaintyMatrix};
use ubant::labelspace::LabelSpace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Classes 0..5; {0, 1, 2} share antecedents, as do {3, 4}.
    let mut values = vec![0u64; 36];
    for (a, b, v) in [(0, 1, 4), (0, 2, 2), (1, 2, 1), (3, 4, 3)] {
        values[a * 6 + b] = v;
        values[b * 6 + a] = v;
    }
    let internal = UncertaintyMatrix::from_values(MatrixKind::Internal, 6, values)?;
    let labels = LabelSpace::new(Some(internal), None, 0.4, None)?;

    for c in [0, 3, 5] {
        let y = labels.single(c)?;
        println!("class {c}: set {:?} label {:?}", labels.set(c).member_ids(), y.sparse());
    }
    let y = labels.pair(0, 3)?;
    println!("pair (0, 3): {:?}", y.sparse());
    let sum: f64 = y.probs().iter().sum();
    println!("pair label sums to {sum}");

    let plain = LabelSpace::one_hot(6);
    println!("one-hot class 2: {:?}", plain.single(2)?.sparse());
    Ok(())
}
