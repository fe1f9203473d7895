//! Snippet features, windowing, synthetic corpora and batch streams.

mod batching;
mod io;
mod synthetic;

pub use batching::{pair_batches, PairBatch, PairStream};
pub use io::{parse_features, read_features, write_features};
pub use synthetic::{generate_synthetic, GroundTruth, SuccessorLayout, SyntheticCorpus, SyntheticSpec};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccur::{AnnotationCorpus, CooccurError};
use crate::model::{AnticipationWindow, ModelError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("video {0:?} has annotations but no features")]
    MissingVideo(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("pairing needs at least two classes, found {0}")]
    SingleClass(usize),
    #[error(transparent)]
    Window(#[from] ModelError),
    #[error(transparent)]
    Cooccur(#[from] CooccurError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Ingested,
    Synthetic,
}

/// Per-video snippet features; snippet `i` covers `[i*delta, (i+1)*delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    source: FeatureSource,
    videos: BTreeMap<String, Vec<Vec<f64>>>,
}

impl FeatureStore {
    pub fn new(dim: usize, source: FeatureSource) -> Self {
        Self {
            dim,
            source,
            videos: BTreeMap::new(),
        }
    }

    /// Adds or replaces a video; every row must have length `dim`.
    pub fn insert(&mut self, video: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<(), DataError> {
        let video = video.into();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != self.dim) {
            return Err(DataError::Parse {
                path: video,
                line: i as u64,
                message: format!("feature width {} != {}", r.len(), self.dim),
            });
        }
        self.videos.insert(video, rows);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn video(&self, id: &str) -> Option<&[Vec<f64>]> {
        self.videos.get(id).map(Vec::as_slice)
    }

    pub fn videos(&self) -> impl Iterator<Item = (&str, &[Vec<f64>])> {
        self.videos.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn num_videos(&self) -> usize {
        self.videos.len()
    }

    pub fn num_snippets(&self) -> usize {
        self.videos.values().map(Vec::len).sum()
    }
}

/// Additive Gaussian noise of intensity `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub eta: f64,
    pub seed: u64,
}

/// `f + eta * eps` with `eps ~ N(0, 1)`, drawn in video-id, snippet, and
/// dimension order.
pub fn pollute(store: &FeatureStore, cfg: NoiseConfig) -> Result<FeatureStore, DataError> {
    if !(cfg.eta >= 0.0) {
        return Err(DataError::Spec(format!("noise intensity {} < 0", cfg.eta)));
    }
    if cfg.eta == 0.0 {
        return Ok(store.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = store.clone();
    for rows in out.videos.values_mut() {
        for row in rows {
            for x in row {
                let e: f64 = StandardNormal.sample(&mut rng);
                *x += cfg.eta * e;
            }
        }
    }
    Ok(out)
}

fn snippet_of(t: f64, delta: f64) -> i64 {
    (t / delta + 1e-9).floor() as i64
}

/// One observed window ending `tau_a` before a target segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSample {
    pub video_id: String,
    pub segment: usize,
    pub target: usize,
    pub window: AnticipationWindow,
    /// First observed snippet.
    pub obs_start: usize,
}

impl TrainSample {
    pub fn observed<'a>(&self, store: &'a FeatureStore) -> &'a [Vec<f64>] {
        let rows = store.video(&self.video_id).expect("sample video in store");
        &rows[self.obs_start..self.obs_start + self.window.n_o()]
    }
}

/// Samples for every segment with enough preceding footage, plus the number
/// of segments dropped.
pub fn window_samples(
    corpus: &AnnotationCorpus,
    store: &FeatureStore,
    window: &AnticipationWindow,
) -> Result<(Vec<TrainSample>, usize), DataError> {
    let (n_o, n_a) = (window.n_o() as i64, window.n_a() as i64);
    let mut out = Vec::new();
    let mut dropped = 0;
    for video in corpus.videos() {
        let rows = store
            .video(&video.id)
            .ok_or_else(|| DataError::MissingVideo(video.id.clone()))?;
        for (k, seg) in video.segments.iter().enumerate() {
            let end = snippet_of(seg.start, window.delta) - n_a;
            let start = end - n_o;
            if start < 0 || end > rows.len() as i64 {
                dropped += 1;
                continue;
            }
            out.push(TrainSample {
                video_id: video.id.clone(),
                segment: k,
                target: seg.activity,
                window: *window,
                obs_start: start as usize,
            });
        }
    }
    Ok((out, dropped))
}

/// Windows sharing one target: member `k` observes `span - tau_a[k]`
/// seconds starting from the same snippet, so observations are prefixes of
/// one stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilySample {
    pub video_id: String,
    pub segment: usize,
    pub target: usize,
    pub stream_start: usize,
    pub members: Vec<AnticipationWindow>,
}

impl FamilySample {
    /// Snippets observed by the longest member.
    pub fn stream<'a>(&self, store: &'a FeatureStore) -> &'a [Vec<f64>] {
        let n = self.members.iter().map(|w| w.n_o()).max().unwrap_or(0);
        let rows = store.video(&self.video_id).expect("family video in store");
        &rows[self.stream_start..self.stream_start + n]
    }

    pub fn member_observed<'a>(&self, k: usize, store: &'a FeatureStore) -> &'a [Vec<f64>] {
        &self.stream(store)[..self.members[k].n_o()]
    }

    pub fn member_sample(&self, k: usize) -> TrainSample {
        TrainSample {
            video_id: self.video_id.clone(),
            segment: self.segment,
            target: self.target,
            window: self.members[k],
            obs_start: self.stream_start,
        }
    }
}

/// Family geometry: observation plus anticipation always spans `span`
/// seconds; `tau_a_grid` must be strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyGeometry {
    pub span: f64,
    pub delta: f64,
    pub tau_a_grid: Vec<f64>,
}

impl Default for FamilyGeometry {
    fn default() -> Self {
        Self {
            span: 3.5,
            delta: 0.25,
            tau_a_grid: vec![2.0, 1.5, 1.0, 0.5],
        }
    }
}

impl FamilyGeometry {
    pub fn window(&self, tau_a: f64) -> Result<AnticipationWindow, DataError> {
        Ok(AnticipationWindow::new(self.span - tau_a, tau_a, self.delta)?)
    }

    pub fn windows(&self) -> Result<Vec<AnticipationWindow>, DataError> {
        if self.tau_a_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DataError::Spec(format!(
                "tau_a grid {:?} must be strictly decreasing",
                self.tau_a_grid
            )));
        }
        self.tau_a_grid.iter().map(|&t| self.window(t)).collect()
    }
}

/// One family per segment with `span` seconds of footage before it; the
/// second value counts skipped segments.
pub fn family_batches(
    corpus: &AnnotationCorpus,
    store: &FeatureStore,
    geometry: &FamilyGeometry,
) -> Result<(Vec<FamilySample>, usize), DataError> {
    let members = geometry.windows()?;
    let span = AnticipationWindow::new(geometry.span, geometry.span, geometry.delta)?.n_o() as i64;
    let mut out = Vec::new();
    let mut skipped = 0;
    for video in corpus.videos() {
        let rows = store
            .video(&video.id)
            .ok_or_else(|| DataError::MissingVideo(video.id.clone()))?;
        for (k, seg) in video.segments.iter().enumerate() {
            let start = snippet_of(seg.start, geometry.delta) - span;
            let longest = members.iter().map(|w| w.n_o()).max().unwrap_or(0) as i64;
            if start < 0 || start + longest > rows.len() as i64 {
                skipped += 1;
                continue;
            }
            out.push(FamilySample {
                video_id: video.id.clone(),
                segment: k,
                target: seg.activity,
                stream_start: start as usize,
                members: members.clone(),
            });
        }
    }
    Ok((out, skipped))
}
