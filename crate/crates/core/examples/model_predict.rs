//! Runs an untrained encoder-decoder on a random stream and prints the
//! class distribution and uncertainty at every anticipation step.
//!
//! cargo run --example model_predict

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ubant::eval::topk;
use ubant::model::{AnticipationWindow, Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig {
        feat_dim: 8,
        hidden: 16,
        classes: 10,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, 42)?;
    for (name, t) in model.names().iter().zip(model.params()) {
        println!("{name:<9} {:?}", t.shape());
    }

    let window = AnticipationWindow::new(1.5, 1.0, 0.25)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stream: Vec<Vec<f64>> = (0..window.n_o())
        .map(|_| (0..cfg.feat_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let pred = model.predict(&[&stream[..]], &window)?;

    println!("\nobserved {} snippets, {} decoder steps", window.n_o(), window.n_a());
    for (k, step) in pred[0].steps.iter().enumerate() {
        println!(
            "horizon {:.2}s  u {:.3}  top-3 {:?}",
            window.step_horizon(k),
            step.u,
            topk(&step.probs, 3)
        );
    }
    Ok(())
}
