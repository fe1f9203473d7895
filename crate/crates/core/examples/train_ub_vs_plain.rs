//! Trains an uncertainty-boosted model and a plain cross-entropy model on
//! the same synthetic corpus and compares held-out top-5 accuracy.
//!
//! cargo run --release --example train_ub_vs_plain [epochs]

use ubant::cli::{sub_seed, Matrices, TrainConfig, Trainer};
use ubant::data::{family_batches, generate_synthetic, SyntheticSpec};
use ubant::eval::evaluate_at;
use ubant::model::{Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(20), |s| s.parse())?;
    let spec = SyntheticSpec {
        videos: 30,
        test_videos: 20,
        seed: 3,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic(&spec)?;
    let mut ub = TrainConfig::desk();
    ub.seed = 3;
    ub.epochs = epochs;
    let geo = ub.geometry();
    let train_corpus = syn.train();
    let (train, _) = family_batches(&train_corpus, &syn.store, &geo)?;
    let (test, _) = family_batches(&syn.test(), &syn.store, &geo)?;
    let matrices = Matrices::build(&train_corpus, &syn.vocab, Some(&syn.edges))?;
    println!("{} training families, {} held-out families", train.len(), test.len());

    for (name, cfg) in [("ub", ub.clone()), ("plain", ub.plain())] {
        let labels = matrices.label_space(&cfg)?;
        let mc = ModelConfig {
            feat_dim: spec.feat_dim,
            hidden: cfg.hidden,
            classes: spec.classes,
            pooling: cfg.pooling,
            ..ModelConfig::default()
        };
        let model = Model::new(mc, sub_seed(cfg.seed, "init"))?;
        let mut trainer = Trainer::new(&cfg, model, &train, &syn.store, &labels)?;
        let report = trainer.run(
            |_| {},
            |e, _| {
                println!(
                    "{name:>5} epoch {:>2}  loss {:.4}  srul {:.4}  trul {:.4}  mean u {:.3}",
                    e.epoch, e.mean_total, e.mean_srul, e.mean_trul, e.mean_u
                );
                Ok(())
            },
        )?;
        let model = trainer.into_model();
        let accs = cfg
            .eval_tau_a
            .iter()
            .map(|&t| Ok(evaluate_at(&model, &test, &syn.store, &geo, t)?.topk_accuracy(5)?))
            .collect::<Result<Vec<f64>, Box<dyn std::error::Error>>>()?;
        let shown: Vec<String> = cfg.eval_tau_a.iter().zip(&accs).map(|(t, a)| format!("{t}:{a:.3}")).collect();
        println!(
            "{name:>5} {} epochs, held-out top-5 by tau_a [{}], mean {:.3}\n",
            report.epochs.len(),
            shown.join(" "),
            accs.iter().sum::<f64>() / accs.len() as f64
        );
    }
    Ok(())
}
