//! Trains a small model, then prints the reliability reports: metrics,
//! rejection curve, noise sweep, uncertainty histogram, class-weight norms,
//! partitions and temporal rank agreement.
//!
//! cargo run --release --example evaluation_reports

use ubant::cli::{sub_seed, Matrices, TrainConfig, Trainer};
use ubant::data::{family_batches, generate_synthetic, SyntheticSpec};
use ubant::eval::{
    class_partition_report, evaluate_at, family_rank_agreement, metric_report, noise_sweep, rejection_curve,
    uncertainty_histogram, uncertainty_quartile_report, weight_norm_report, write_partitions_csv, PartitionScheme,
};
use ubant::model::{Model, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        videos: 30,
        test_videos: 20,
        seed: 9,
        ..SyntheticSpec::default()
    };
    let syn = generate_synthetic(&spec)?;
    let mut cfg = TrainConfig::desk();
    cfg.seed = 9;
    cfg.epochs = 8;
    let geo = cfg.geometry();
    let train_corpus = syn.train();
    let (train, _) = family_batches(&train_corpus, &syn.store, &geo)?;
    let (test, _) = family_batches(&syn.test(), &syn.store, &geo)?;
    let matrices = Matrices::build(&train_corpus, &syn.vocab, Some(&syn.edges))?;
    let labels = matrices.label_space(&cfg)?;
    let mc = ModelConfig {
        feat_dim: spec.feat_dim,
        hidden: cfg.hidden,
        classes: spec.classes,
        ..ModelConfig::default()
    };
    let mut trainer = Trainer::new(&cfg, Model::new(mc, sub_seed(cfg.seed, "init"))?, &train, &syn.store, &labels)?;
    trainer.run(|_| {}, |_, _| Ok(()))?;
    let model = trainer.into_model();

    let opts = &cfg.eval;
    let ev = evaluate_at(&model, &test, &syn.store, &geo, opts.report_tau_a)?;
    let m = metric_report(&ev.probs, &ev.truths, opts.many_shot)?;
    println!(
        "tau_a {}: {} samples, top-1 {:.3}, top-5 {:.3}, mean top-5 recall {:?}",
        ev.tau_a, m.samples, m.top1, m.top5, m.mean_top5_recall
    );

    let curve = rejection_curve(&ev.probs, &ev.truths, &ev.u, &opts.rejection, 5)?;
    for p in &curve.points {
        println!("reject {:>3.0}%  top-5 {:.3}", 100.0 * p.rejection, p.accuracy);
    }

    for r in noise_sweep(&model, &test, &syn.store, &geo, opts.report_tau_a, &opts.noise, sub_seed(cfg.seed, "noise"))? {
        println!("noise eta {:>4}  top-5 {:.3}  mean u {:.3}", r.eta, r.top5, r.mean_u);
    }

    let h = uncertainty_histogram(&ev.u, opts.bins)?;
    println!("u in [{:.3}, {:.3}], histogram {:?}", h.min, h.max, h.counts);

    let counts = train_corpus.class_counts(spec.classes);
    let norms = weight_norm_report(&model.classifier_rows(), &counts)?;
    println!("class-weight norm: head mean {:.3}, tail mean {:.3}", norms.head_mean, norms.tail_mean);

    let merged = matrices.merged();
    let reports = vec![
        class_partition_report(&merged, &ev, PartitionScheme::TopPairs(opts.top_pairs))?,
        class_partition_report(&merged, &ev, PartitionScheme::PairQuartiles)?,
    ];
    let quartiles = uncertainty_quartile_report(&ev)?;
    write_partitions_csv(&reports, &quartiles, std::io::stdout().lock())?;

    let evals = cfg
        .tau_a_grid
        .iter()
        .map(|&t| evaluate_at(&model, &test, &syn.store, &geo, t))
        .collect::<Result<Vec<_>, _>>()?;
    let agree = family_rank_agreement(&evals)?;
    println!("rank agreement: mean tau {:?} over {} families", agree.mean_tau, agree.families);
    Ok(())
}
