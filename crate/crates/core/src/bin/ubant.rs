use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ubant::cli::{cmd_eval, cmd_gen, cmd_stats, cmd_train, CliError, EvalMode, TrainConfig};
use ubant::data::{SuccessorLayout, SyntheticSpec};

/// Uncertainty-boosted activity anticipation.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-value (TOML) config file; its keys override the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base settings: `desk` or `full`.
    #[arg(long, global = true, default_value = "desk")]
    profile: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Build co-occurrence matrices and summary statistics.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    branching: Option<usize>,
    #[arg(long)]
    entropy: Option<f64>,
    #[arg(long, value_parser = parse_layout)]
    layout: Option<SuccessorLayout>,
    #[arg(long)]
    videos: Option<usize>,
    #[arg(long)]
    test_videos: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    feat_dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    mode: EvalMode,
    #[arg(long)]
    passes: Option<usize>,
}

fn parse_layout(s: &str) -> Result<SuccessorLayout, String> {
    match s {
        "grouped" => Ok(SuccessorLayout::Grouped),
        "random" => Ok(SuccessorLayout::Random),
        _ => Err(format!("unknown layout {s:?}; expected grouped or random")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn synthetic_spec(cli: &Cli, a: &GenArgs) -> Result<SyntheticSpec, CliError> {
    let mut spec = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    set(&mut spec.classes, a.classes);
    set(&mut spec.branching, a.branching);
    set(&mut spec.successor_entropy, a.entropy);
    set(&mut spec.layout, a.layout);
    set(&mut spec.videos, a.videos);
    set(&mut spec.test_videos, a.test_videos);
    set(&mut spec.segments_per_video, a.segments);
    set(&mut spec.feat_dim, a.feat_dim);
    set(&mut spec.feature_noise, a.noise);
    set(&mut spec.seed, cli.seed);
    Ok(spec)
}

fn train_config(cli: &Cli) -> Result<TrainConfig, CliError> {
    let base = TrainConfig::profile(&cli.profile)?;
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::load(p, &base)?,
        None => base,
    };
    set(&mut cfg.seed, cli.seed);
    Ok(cfg)
}

fn out_dir(cli: &Cli, command: &str) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(command))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen(a) => {
            let out = out_dir(cli, "gen");
            cmd_gen(&synthetic_spec(cli, a)?, &out)?;
            println!("corpus written to {}", out.display());
        }
        Command::Stats { data } => {
            let out = out_dir(cli, "stats");
            cmd_stats(data, &train_config(cli)?, &out)?;
            println!("matrices written to {}", out.display());
        }
        Command::Train(a) => {
            let mut cfg = train_config(cli)?;
            set(&mut cfg.alpha, a.alpha);
            set(&mut cfg.beta, a.beta);
            set(&mut cfg.gamma, a.gamma);
            set(&mut cfg.epochs, a.epochs);
            set(&mut cfg.batch_size, a.batch_size);
            set(&mut cfg.lr, a.lr);
            let out = out_dir(cli, "train");
            let done = cmd_train(&a.data, &cfg, &out)?;
            for e in &done.report.epochs {
                println!(
                    "epoch {:>3}  loss {:.4}  srul {:.4}  trul {:.4}  mean u {:.3}",
                    e.epoch, e.mean_total, e.mean_srul, e.mean_trul, e.mean_u
                );
            }
            println!("checkpoints written to {}", out.display());
        }
        Command::Eval(a) => {
            let mut cfg = train_config(cli)?;
            set(&mut cfg.eval.passes, a.passes);
            let out = out_dir(cli, "eval");
            let m = cmd_eval(&a.data, &a.checkpoint, &cfg, a.mode, &out)?;
            println!("{} written to {}", m.outputs.join(", "), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
