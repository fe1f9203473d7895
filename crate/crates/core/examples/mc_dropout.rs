//! Monte Carlo dropout on the anticipated features: predictive entropy
//! and mutual information next to the learned data uncertainty.
//!
//! cargo run --release --example mc_dropout

use ubant::cli::{sub_seed, Matrices, TrainConfig, Trainer};
use ubant::data::{family_batches, generate_synthetic, SyntheticSpec};
use ubant::model::{mc_dropout_forward, Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        classes: 12,
        branching: 3,
        videos: 20,
        test_videos: 5,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic(&spec)?;
    let mut cfg = TrainConfig::desk();
    cfg.seed = 4;
    cfg.epochs = 4;
    let geo = cfg.geometry();
    let train_corpus = syn.train();
    let (train, _) = family_batches(&train_corpus, &syn.store, &geo)?;
    let (test, _) = family_batches(&syn.test(), &syn.store, &geo)?;
    let labels = Matrices::build(&train_corpus, &syn.vocab, Some(&syn.edges))?.label_space(&cfg)?;
    let mc = ModelConfig {
        feat_dim: spec.feat_dim,
        hidden: cfg.hidden,
        classes: spec.classes,
        ..ModelConfig::default()
    };
    let mut trainer = Trainer::new(&cfg, Model::new(mc, sub_seed(cfg.seed, "init"))?, &train, &syn.store, &labels)?;
    trainer.run(|_| {}, |_, _| Ok(()))?;
    let model = trainer.into_model();

    let window = geo.window(cfg.eval.report_tau_a)?;
    let sample = &test[..8];
    let streams: Vec<&[Vec<f64>]> = sample.iter().map(|f| f.stream(&syn.store)).collect();
    let plain = model.predict(&streams, &window)?;
    let s = mc_dropout_forward(
        &model,
        &streams,
        &window,
        cfg.eval.passes,
        cfg.eval.drop_rate,
        sub_seed(cfg.seed, "dropout"),
    )?;
    println!("{} passes at drop rate {}", s.passes, s.drop_rate);
    println!("sample  target  data u  pred entropy  mutual info");
    for (i, f) in sample.iter().enumerate() {
        println!(
            "{i:>6}  {:>6}  {:>6.3}  {:>12.4}  {:>11.4}",
            f.target,
            plain[i].last().u,
            s.predictive_entropy[i],
            s.model_uncertainty[i]
        );
    }
    println!("mean mutual information {:.4}", s.mean_model_uncertainty());
    Ok(())
}
