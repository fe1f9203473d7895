//! The gen / stats / train / eval pipeline through the library entry
//! points the `ubant` binary uses, writing into a temporary directory.
//!
//! cargo run --release --example cli_pipeline

use ubant::cli::{cmd_eval, cmd_gen, cmd_stats, cmd_train, EvalMode, TrainConfig};
use ubant::data::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let (data, stats, train, eval) = (
        root.path().join("data"),
        root.path().join("stats"),
        root.path().join("train"),
        root.path().join("eval"),
    );
    let spec = SyntheticSpec {
        classes: 12,
        branching: 3,
        videos: 16,
        test_videos: 6,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let mut cfg = TrainConfig::desk();
    cfg.seed = 11;
    cfg.epochs = 3;

    let m = cmd_gen(&spec, &data)?;
    println!("gen   -> {:?}", m.outputs);
    let m = cmd_stats(&data, &cfg, &stats)?;
    println!("stats -> {:?}", m.outputs);
    println!("{}", std::fs::read_to_string(stats.join("summary.json"))?);

    let done = cmd_train(&data, &cfg, &train)?;
    println!("train -> {:?}, best epoch {}", done.manifest.outputs, done.best_epoch);

    let m = cmd_eval(&data, &train.join("model_best.ckpt"), &cfg, EvalMode::All, &eval)?;
    println!("eval  -> {:?}", m.outputs);
    println!("{}", std::fs::read_to_string(eval.join("rejection.csv"))?);
    println!("{}", std::fs::read_to_string(eval.join("noise.csv"))?);
    Ok(())
}
