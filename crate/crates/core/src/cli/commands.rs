use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{sub_seed, TrainConfig};
use super::train::{TrainError, Trainer};
use super::CliError;
use crate::cooccur::io::{
    corpus_from_rows, read_annotations, read_edges, read_lemmas, vocabulary_from_rows,
    write_annotations, write_edges, write_lemmas, write_matrix, AnnotationRow,
};
use crate::cooccur::{
    build_external_matrix, build_internal_matrix, AnnotationCorpus, KnowledgeEdgeSet,
    UncertaintyMatrix, Vocabulary,
};
use crate::data::{
    family_batches, generate_synthetic, read_features, write_features, FamilySample, FeatureStore,
    SyntheticSpec,
};
use crate::eval::{self, Evaluation, PartitionScheme};
use crate::labelspace::LabelSpace;
use crate::model::{load_checkpoint, mc_dropout_forward, save_checkpoint, Model, ModelConfig};

pub const ANNOTATIONS: &str = "annotations.csv";
pub const VERBS: &str = "verbs.csv";
pub const NOUNS: &str = "nouns.csv";
pub const EDGES: &str = "edges.tsv";
pub const FEATURES: &str = "features.csv";
pub const TRUTH: &str = "truth.json";
pub const SPEC: &str = "spec.toml";
pub const MANIFEST: &str = "manifest.json";

/// Videos whose id starts with this prefix are held out from training and
/// from matrix construction.
pub const TEST_PREFIX: &str = "test_";

/// Record of one command run: enough to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input path to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn finish(mut self, out: &Path) -> Result<Self, CliError> {
        self.outputs.sort();
        let text = serde_json::to_string_pretty(&self).expect("manifest serialises");
        write_text(out, MANIFEST, &text)?;
        Ok(self)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())
        .and_then(|()| w.write_all(b"\n"))
        .and_then(|()| w.flush())
        .map_err(|e| CliError::io(&dir.join(name), e))
}

/// Writes a file with `f` and records it in the manifest.
fn emit<E: std::fmt::Display>(
    m: &mut RunManifest,
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), E>,
) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    f(&mut w).map_err(|e| CliError::Data(format!("{}: {e}", dir.join(name).display())))?;
    w.flush().map_err(|e| CliError::io(&dir.join(name), e))?;
    m.outputs.push(name.to_string());
    Ok(())
}

fn emit_json(m: &mut RunManifest, dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serialises");
    write_text(dir, name, &text)?;
    m.outputs.push(name.to_string());
    Ok(())
}

fn ensure_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

/// Annotations, vocabulary, optional knowledge edges and optional features
/// read from one directory.
pub struct Dataset {
    pub vocab: Vocabulary,
    pub corpus: AnnotationCorpus,
    pub edges: Option<KnowledgeEdgeSet>,
    pub store: Option<FeatureStore>,
    /// Annotation rows naming an unknown verb-noun pair.
    pub dropped_rows: usize,
}

impl Dataset {
    /// Reads the files, recording each one in `m`. `features` controls
    /// whether the feature table is required.
    pub fn load(dir: &Path, features: bool, m: &mut RunManifest) -> Result<Self, CliError> {
        let ann = dir.join(ANNOTATIONS);
        let (verbs, nouns) = (dir.join(VERBS), dir.join(NOUNS));
        let rows = read_annotations(&ann).map_err(data)?;
        let vocab = vocabulary_from_rows(
            read_lemmas(&verbs, "verb_id").map_err(data)?,
            read_lemmas(&nouns, "noun_id").map_err(data)?,
            &rows,
        )
        .map_err(data)?;
        let (corpus, dropped_rows) = corpus_from_rows(&rows, &vocab).map_err(data)?;
        for p in [&ann, &verbs, &nouns] {
            m.input(p)?;
        }
        let edge_path = dir.join(EDGES);
        let edges = if edge_path.exists() {
            m.input(&edge_path)?;
            Some(read_edges(&edge_path, KnowledgeEdgeSet::new()).map_err(data)?)
        } else {
            None
        };
        let store = if features {
            let p = dir.join(FEATURES);
            let s = read_features(&p).map_err(data)?;
            m.input(&p)?;
            Some(s)
        } else {
            None
        };
        Ok(Self {
            vocab,
            corpus,
            edges,
            store,
            dropped_rows,
        })
    }

    pub fn train_split(&self) -> AnnotationCorpus {
        self.corpus.filter(|id| !id.starts_with(TEST_PREFIX))
    }

    /// Held-out videos, or every video when none is held out.
    pub fn eval_split(&self) -> (AnnotationCorpus, &'static str) {
        let test = self.corpus.filter(|id| id.starts_with(TEST_PREFIX));
        if test.videos().is_empty() {
            (self.corpus.clone(), "all")
        } else {
            (test, "test")
        }
    }

    fn features(&self) -> &FeatureStore {
        self.store.as_ref().expect("loaded with features")
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Internal and (when edges are present) external matrices of a corpus.
pub struct Matrices {
    pub internal: UncertaintyMatrix,
    pub external: Option<UncertaintyMatrix>,
}

impl Matrices {
    pub fn build(
        corpus: &AnnotationCorpus,
        vocab: &Vocabulary,
        edges: Option<&KnowledgeEdgeSet>,
    ) -> Result<Self, CliError> {
        let internal = build_internal_matrix(corpus, vocab).map_err(data)?;
        let external = match edges {
            Some(e) => Some(build_external_matrix(e, vocab).map_err(data)?.activity),
            None => None,
        };
        Ok(Self { internal, external })
    }

    pub fn merged(&self) -> UncertaintyMatrix {
        match &self.external {
            Some(e) => self.internal.sum(e).expect("same class count"),
            None => self.internal.clone(),
        }
    }

    pub fn label_space(&self, cfg: &TrainConfig) -> Result<LabelSpace, CliError> {
        let classes = self.internal.size();
        if cfg.hyper_params().is_plain() || (!cfg.use_internal && !cfg.use_external) {
            return Ok(LabelSpace::one_hot(classes));
        }
        let internal = cfg.use_internal.then(|| self.internal.clone());
        let external = if cfg.use_external { self.external.clone() } else { None };
        if internal.is_none() && external.is_none() {
            return Ok(LabelSpace::one_hot(classes));
        }
        LabelSpace::new(internal, external, cfg.alpha, (cfg.top_k > 0).then_some(cfg.top_k))
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn class_ids(vocab: &Vocabulary) -> Vec<String> {
    (0..vocab.num_activities()).map(|c| c.to_string()).collect()
}

/// Writes a synthetic corpus in the on-disk dataset layout.
pub fn cmd_gen(spec: &SyntheticSpec, out: &Path) -> Result<RunManifest, CliError> {
    let syn = generate_synthetic(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    ensure_dir(out)?;
    let mut m = RunManifest::new("gen", spec.seed, serde_json::to_value(spec).expect("spec serialises"));
    let spec_text = toml::to_string(spec).expect("spec serialises");
    write_text(out, SPEC, spec_text.trim_end())?;
    m.outputs.push(SPEC.into());

    let rows: Vec<AnnotationRow> = syn
        .corpus
        .videos()
        .iter()
        .flat_map(|v| {
            let vocab = &syn.vocab;
            v.segments.iter().map(move |s| {
                let (verb_id, noun_id) = vocab.activity(s.activity).expect("dense ids");
                AnnotationRow {
                    video_id: v.id.clone(),
                    start_s: s.start,
                    stop_s: s.stop,
                    verb_id,
                    noun_id,
                }
            })
        })
        .collect();
    emit(&mut m, out, ANNOTATIONS, |w| write_annotations(&rows, w))?;
    emit(&mut m, out, VERBS, |w| write_lemmas(syn.vocab.verbs(), "verb_id", w))?;
    emit(&mut m, out, NOUNS, |w| write_lemmas(syn.vocab.nouns(), "noun_id", w))?;
    emit(&mut m, out, EDGES, |w| write_edges(&syn.edges, w))?;
    emit(&mut m, out, FEATURES, |w| write_features(&syn.store, w))?;
    emit_json(&mut m, out, TRUTH, &syn.truth)?;
    m.finish(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PairSummary {
    a: usize,
    b: usize,
    internal: u64,
    external: u64,
    merged: u64,
}

/// Matrices and summary statistics of the training split.
pub fn cmd_stats(data_dir: &Path, cfg: &TrainConfig, out: &Path) -> Result<RunManifest, CliError> {
    let mut m = RunManifest::new("stats", cfg.seed, json!({ "alpha": cfg.alpha, "top_k": cfg.top_k }));
    let ds = Dataset::load(data_dir, false, &mut m)?;
    ensure_dir(out)?;
    let train = ds.train_split();
    let mats = Matrices::build(&train, &ds.vocab, ds.edges.as_ref())?;
    let ids = class_ids(&ds.vocab);
    emit(&mut m, out, "internal.csv", |w| write_matrix(&mats.internal, &ids, w))?;
    if let Some(ext) = &mats.external {
        emit(&mut m, out, "external.csv", |w| write_matrix(ext, &ids, w))?;
    }
    let merged = mats.merged();
    let top: Vec<PairSummary> = merged
        .ranked_pairs()
        .into_iter()
        .take(10)
        .map(|(a, b, v)| PairSummary {
            a,
            b,
            internal: mats.internal.get(a, b),
            external: mats.external.as_ref().map_or(0, |e| e.get(a, b)),
            merged: v,
        })
        .collect();
    let classes = ds.vocab.num_activities();
    let summary = json!({
        "split": "train",
        "videos": train.videos().len(),
        "segments": train.num_segments(),
        "classes": classes,
        "dropped_rows": ds.dropped_rows,
        "class_counts": train.class_counts(classes),
        "internal_nonzero_pairs": mats.internal.nonzero_pairs(),
        "external_nonzero_pairs": mats.external.as_ref().map(UncertaintyMatrix::nonzero_pairs),
        "top_pairs": top,
        "class_names": (0..classes).map(|c| ds.vocab.activity_name(c)).collect::<Vec<_>>(),
    });
    emit_json(&mut m, out, "summary.json", &summary)?;
    let labels = LabelSpace::new(
        Some(mats.internal.clone()),
        mats.external.clone(),
        cfg.alpha,
        (cfg.top_k > 0).then_some(cfg.top_k),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    emit_json(&mut m, out, "label_sets.json", &labels.export_json())?;
    m.finish(out)
}

fn families_of(
    corpus: &AnnotationCorpus,
    store: &FeatureStore,
    cfg: &TrainConfig,
) -> Result<Vec<FamilySample>, CliError> {
    let (families, _) = family_batches(corpus, store, &cfg.geometry()).map_err(data)?;
    if families.is_empty() {
        return Err(CliError::Data("no segment has enough preceding footage".into()));
    }
    Ok(families)
}

fn model_config(ds: &Dataset, cfg: &TrainConfig) -> ModelConfig {
    ModelConfig {
        feat_dim: ds.features().dim(),
        hidden: cfg.hidden,
        classes: ds.vocab.num_activities(),
        pooling: cfg.pooling,
        ..ModelConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub manifest: RunManifest,
    pub report: super::TrainReport,
    pub best_epoch: usize,
}

/// Trains on the training split and writes the log and checkpoints.
pub fn cmd_train(data_dir: &Path, cfg: &TrainConfig, out: &Path) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let mut m = RunManifest::new("train", cfg.seed, serde_json::to_value(cfg).expect("config serialises"));
    let ds = Dataset::load(data_dir, true, &mut m)?;
    ensure_dir(out)?;
    let train = ds.train_split();
    let store = ds.features();
    let families = families_of(&train, store, cfg)?;
    let labels = Matrices::build(&train, &ds.vocab, ds.edges.as_ref())?.label_space(cfg)?;
    let model = Model::new(model_config(&ds, cfg), sub_seed(cfg.seed, "init")).map_err(data)?;

    write_text(out, "config.toml", cfg.to_toml().trim_end())?;
    m.outputs.push("config.toml".into());
    let log_path = out.join("train_log.jsonl");
    let mut log = create(out, "train_log.jsonl")?;
    let mut log_err = None;
    let mut best = (f64::INFINITY, 0usize);
    let extra = |epoch: usize| json!({ "manifest": MANIFEST, "epoch": epoch, "config": cfg });

    let mut trainer = Trainer::new(cfg, model, &families, store, &labels).map_err(data)?;
    let result = trainer.run(
        |step| {
            let line = serde_json::to_string(step).expect("log serialises");
            if let Err(e) = writeln!(log, "{line}") {
                log_err.get_or_insert(e);
            }
        },
        |summary, model| {
            if summary.mean_total < best.0 {
                best = (summary.mean_total, summary.epoch);
                save_checkpoint(model, &extra(summary.epoch), &out.join("model_best.ckpt"))?;
            }
            Ok(())
        },
    );
    log.flush().map_err(|e| CliError::io(&log_path, e))?;
    if let Some(e) = log_err {
        return Err(CliError::io(&log_path, e));
    }
    m.outputs.push("train_log.jsonl".into());
    let report = match result {
        Ok(r) => r,
        Err(TrainError::NonFinite { epoch, batch }) => {
            save_checkpoint(trainer.model(), &extra(epoch), &out.join("model_last_good.ckpt")).map_err(data)?;
            m.outputs.push("model_last_good.ckpt".into());
            m.finish(out)?;
            return Err(CliError::Numerical(format!(
                "non-finite loss at epoch {epoch}, batch {batch}; last good model in model_last_good.ckpt"
            )));
        }
        Err(e) => return Err(data(e)),
    };
    m.outputs.push("model_best.ckpt".into());
    save_checkpoint(trainer.model(), &extra(cfg.epochs - 1), &out.join("model_final.ckpt")).map_err(data)?;
    m.outputs.push("model_final.ckpt".into());
    emit_json(&mut m, out, "train_summary.json", &json!({ "report": report, "best_epoch": best.1 }))?;
    Ok(TrainOutcome {
        manifest: m.finish(out)?,
        report,
        best_epoch: best.1,
    })
}

/// Report selected by `ubant eval --mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    Metrics,
    Reject,
    Noise,
    Histogram,
    Norms,
    Partitions,
    Mcdropout,
    All,
}

impl EvalMode {
    fn wants(self, other: EvalMode) -> bool {
        self == other || (self == EvalMode::All && other != EvalMode::Mcdropout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TauMetrics {
    tau_a: f64,
    samples: usize,
    top1: f64,
    top5: f64,
    mean_top5_recall: Option<f64>,
    mean_u: f64,
}

/// Loads a checkpoint and writes the requested reports for the held-out
/// split.
pub fn cmd_eval(
    data_dir: &Path,
    checkpoint: &Path,
    cfg: &TrainConfig,
    mode: EvalMode,
    out: &Path,
) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let opts = &cfg.eval;
    opts.validate()?;
    let mut m = RunManifest::new(
        "eval",
        cfg.seed,
        json!({ "config": cfg, "mode": format!("{mode:?}").to_lowercase() }),
    );
    let ds = Dataset::load(data_dir, true, &mut m)?;
    m.input(checkpoint)?;
    let expected = model_config(&ds, cfg);
    let (model, _) = load_checkpoint(checkpoint, Some(&expected)).map_err(|e| CliError::Usage(e.to_string()))?;
    ensure_dir(out)?;
    let (split, split_name) = ds.eval_split();
    let store = ds.features();
    let families = families_of(&split, store, cfg)?;
    let geo = cfg.geometry();
    let at = |tau_a: f64| eval::evaluate_at(&model, &families, store, &geo, tau_a).map_err(data);
    let report = at(opts.report_tau_a)?;

    if mode.wants(EvalMode::Metrics) {
        let mut rows = Vec::new();
        for &t in &cfg.eval_tau_a {
            let ev = at(t)?;
            let r = eval::metric_report(&ev.probs, &ev.truths, opts.many_shot).map_err(data)?;
            rows.push(TauMetrics {
                tau_a: t,
                samples: r.samples,
                top1: r.top1,
                top5: r.top5,
                mean_top5_recall: r.mean_top5_recall,
                mean_u: ev.mean_u(),
            });
        }
        let members: Vec<Evaluation> = cfg.tau_a_grid.iter().map(|&t| at(t)).collect::<Result<_, _>>()?;
        let agreement = eval::family_rank_agreement(&members).map_err(data)?;
        let detail = eval::metric_report(&report.probs, &report.truths, opts.many_shot).map_err(data)?;
        emit_json(
            &mut m,
            out,
            "metrics.json",
            &json!({
                "split": split_name,
                "per_tau": rows,
                "rank_agreement": agreement,
                "report_tau_a": opts.report_tau_a,
                "report": detail,
            }),
        )?;
    }
    if mode.wants(EvalMode::Reject) {
        let curve = eval::rejection_curve(&report.probs, &report.truths, &report.u, &opts.rejection, 5)
            .map_err(data)?;
        emit(&mut m, out, "rejection.csv", |w| eval::write_rejection_csv(&curve, w))?;
    }
    if mode.wants(EvalMode::Noise) {
        let rows = eval::noise_sweep(
            &model,
            &families,
            store,
            &geo,
            opts.report_tau_a,
            &opts.noise,
            sub_seed(cfg.seed, "noise"),
        )
        .map_err(data)?;
        emit(&mut m, out, "noise.csv", |w| eval::write_noise_csv(&rows, w))?;
    }
    if mode.wants(EvalMode::Histogram) {
        let h = eval::uncertainty_histogram(&report.u, opts.bins).map_err(data)?;
        emit(&mut m, out, "histogram.csv", |w| eval::write_histogram_csv(&h, w))?;
    }
    if mode.wants(EvalMode::Norms) {
        let counts = ds.train_split().class_counts(ds.vocab.num_activities());
        let r = eval::weight_norm_report(&model.classifier_rows(), &counts).map_err(data)?;
        emit(&mut m, out, "weight_norms.csv", |w| eval::write_weight_norms_csv(&r, w))?;
    }
    if mode.wants(EvalMode::Partitions) {
        let merged = Matrices::build(&ds.train_split(), &ds.vocab, ds.edges.as_ref())?.merged();
        let reports = [
            eval::class_partition_report(&merged, &report, PartitionScheme::TopPairs(opts.top_pairs))
                .map_err(data)?,
            eval::class_partition_report(&merged, &report, PartitionScheme::PairQuartiles).map_err(data)?,
        ];
        let quartiles = eval::uncertainty_quartile_report(&report).map_err(data)?;
        emit(&mut m, out, "partitions.csv", |w| {
            eval::write_partitions_csv(&reports, &quartiles, w)
        })?;
    }
    if mode == EvalMode::Mcdropout {
        let window = geo.window(opts.report_tau_a).map_err(data)?;
        let streams: Vec<&[Vec<f64>]> = families
            .iter()
            .map(|f| {
                let rows = store.video(&f.video_id).expect("family video in store");
                &rows[f.stream_start..f.stream_start + window.n_o()]
            })
            .collect();
        let s = mc_dropout_forward(
            &model,
            &streams,
            &window,
            opts.passes,
            opts.drop_rate,
            sub_seed(cfg.seed, "dropout"),
        )
        .map_err(data)?;
        let truths: Vec<usize> = families.iter().map(|f| f.target).collect();
        let n = truths.len() as f64;
        emit_json(
            &mut m,
            out,
            "mcdropout.json",
            &json!({
                "passes": s.passes,
                "drop_rate": s.drop_rate,
                "tau_a": opts.report_tau_a,
                "samples": truths.len(),
                "top5": eval::topk_accuracy(&s.mean_probs, &truths, 5).map_err(data)?,
                "mean_data_u": report.mean_u(),
                "mean_predictive_entropy": s.predictive_entropy.iter().sum::<f64>() / n,
                "mean_model_uncertainty": s.mean_model_uncertainty(),
            }),
        )?;
    }
    m.finish(out)
}

