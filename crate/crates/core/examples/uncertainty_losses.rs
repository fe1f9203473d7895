//! Temperature adjustment, relative-uncertainty mixing and the ranking
//! loss on hand-picked numbers.
//!
//! cargo run --example uncertainty_losses

use ubant::losses::{
    adjust_distribution, entropy, mix_features, permutation_probability, relative_weights, total_loss, trul_loss,
    wd_loss, HyperParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let logits = [2.0, 1.0, 0.5, -1.0];
    println!("u      entropy  distribution");
    for u in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let p = adjust_distribution(&logits, u)?;
        let shown: Vec<String> = p.iter().map(|x| format!("{x:.3}")).collect();
        println!("{u:<6} {:.4}   [{}]", entropy(&p), shown.join(", "));
    }

    // The less certain sample gets the larger mixing weight.
    let w = relative_weights(&[2.0, 3.0])?;
    let mixed = mix_features(&[vec![1.0, 0.0], vec![0.0, 1.0]], &w)?;
    println!("\nweights {w:?}, mixed feature {mixed:?}");

    let u = [3.0, 2.0, 1.0];
    println!(
        "\nP(ideal order | {u:?}) = {:.4}",
        permutation_probability(&u, &[0, 1, 2])?
    );
    for fam in [vec![3.0, 2.0, 1.0], vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 2.0]] {
        println!("ranking loss {fam:?} = {:.4}", trul_loss(&[fam.clone()])?.0);
    }

    let hp = HyperParams::new(0.4, 0.005, 5e-6)?;
    let l = total_loss(1.8, trul_loss(&[u.to_vec()])?.0, wd_loss(&u), &hp);
    println!("\n{l:?}");
    Ok(())
}
