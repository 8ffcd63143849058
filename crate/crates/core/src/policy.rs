//! Combining augmentations: the joint-training policy, which applies each
//! augmentation to a batch at random, and inference-time ensembling of
//! prediction tracks from separately trained models.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cutmix::{cutmix_view, cutmix_window, default_delta, sample_cutmix_params, CutMixMode};
use crate::error::{Result, VolaugError};
use crate::freeze::{freeze_multi, sample_freeze_params};
use crate::mixup::{mixup, mixup_hard, sample_mixup_shift};
use crate::record::AugRecord;
use crate::rng::{sample_rng, SampleRng};
use crate::volume::{ClipVolume, LabelTrack};
use crate::window::fit_length;

/// Per-batch application probabilities, in composition order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugProbs {
    pub freeze: f64,
    pub mixup: f64,
    pub cutmix: f64,
}

impl Default for AugProbs {
    fn default() -> Self {
        AugProbs {
            freeze: 0.5,
            mixup: 0.5,
            cutmix: 0.5,
        }
    }
}

impl AugProbs {
    pub fn new(freeze: f64, mixup: f64, cutmix: f64) -> Self {
        AugProbs { freeze, mixup, cutmix }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.freeze, self.mixup, self.cutmix] {
            if !(0.0..=1.0).contains(&p) {
                return Err(VolaugError::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl FromStr for AugProbs {
    type Err = VolaugError;

    /// Parses `a,b,c`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| VolaugError::Config(format!("bad probabilities {s:?}: {e}")))?;
        match parts.as_slice() {
            &[a, b, c] => {
                let probs = AugProbs::new(a, b, c);
                probs.validate()?;
                Ok(probs)
            }
            _ => Err(VolaugError::Config(format!("expected three probabilities, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub probs: AugProbs,
    /// Freeze segments applied per frozen sample.
    pub freeze_segments: usize,
    pub hard_mixup: bool,
    pub cutmix_mode: CutMixMode,
    pub delta: Option<usize>,
    /// Fit blended outputs to this many frames.
    pub fit: Option<usize>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            probs: AugProbs::default(),
            freeze_segments: 1,
            hard_mixup: false,
            cutmix_mode: CutMixMode::Window,
            delta: None,
            fit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clip: ClipVolume,
    pub labels: LabelTrack,
}

impl Sample {
    pub fn new(clip: ClipVolume, labels: LabelTrack) -> Self {
        Sample { clip, labels }
    }
}

/// A policy output together with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedSample {
    #[serde(skip)]
    pub clip: ClipVolume,
    #[serde(skip)]
    pub labels: LabelTrack,
    pub source: String,
    pub seed: u64,
    /// Applied augmentations, in order; empty when none applied.
    pub steps: Vec<AugRecord>,
    /// Draws that were skipped and why.
    pub notes: Vec<String>,
}

impl AugmentedSample {
    /// `freeze+mixup`, or `none`.
    pub fn kind_label(&self) -> String {
        if self.steps.is_empty() {
            "none".to_string()
        } else {
            self.steps
                .iter()
                .map(|s| s.kind().as_str())
                .collect::<Vec<_>>()
                .join("+")
        }
    }
}

/// Which augmentations fire for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchDraw {
    pub freeze: bool,
    pub mixup: bool,
    pub cutmix: bool,
}

pub fn draw_batch(probs: &AugProbs, rng: &mut SampleRng) -> BatchDraw {
    BatchDraw {
        freeze: rng.random_bool(probs.freeze),
        mixup: rng.random_bool(probs.mixup),
        cutmix: rng.random_bool(probs.cutmix),
    }
}

fn pick_partner(batch_len: usize, own: usize, rng: &mut SampleRng) -> usize {
    let j = rng.random_range(0..batch_len - 1);
    if j >= own {
        j + 1
    } else {
        j
    }
}

/// Applies the drawn augmentations to one sample, in the order
/// freeze, mixup, cutmix. Partners are the other batch members as they were
/// before augmentation.
fn augment_one(
    batch: &[Sample],
    index: usize,
    draw: BatchDraw,
    cfg: &PolicyConfig,
    seed: u64,
) -> Result<AugmentedSample> {
    let mut rng = sample_rng(seed);
    let own = &batch[index];
    let mut clip = own.clip.clone();
    let mut labels = own.labels.clone();
    let mut steps = Vec::new();
    let mut notes = Vec::new();

    if draw.freeze {
        let mut segments = Vec::with_capacity(cfg.freeze_segments);
        for _ in 0..cfg.freeze_segments {
            match sample_freeze_params(clip.len(), &mut rng) {
                Ok(seg) => segments.push(seg),
                Err(e) => {
                    notes.push(format!("freeze skipped: {e}"));
                    break;
                }
            }
        }
        if !segments.is_empty() {
            let (c, l, rec) = freeze_multi(&clip, &labels, &segments)?;
            (clip, labels) = (c, l);
            steps.push(rec.with_seed(seed));
        }
    }

    if draw.mixup {
        if batch.len() < 2 {
            notes.push("mixup skipped: batch has no partner".into());
        } else {
            let partner = &batch[pick_partner(batch.len(), index, &mut rng)];
            let r = sample_mixup_shift(clip.len(), partner.clip.len(), &mut rng)?;
            let (c, l, mut rec) = if cfg.hard_mixup {
                mixup_hard(&clip, &labels, &partner.clip, &partner.labels, r)?
            } else {
                mixup(&clip, &labels, &partner.clip, &partner.labels, r)?
            };
            (clip, labels) = (c, l);
            if let Some(t) = cfg.fit {
                (clip, labels) = fit_length(&clip, &labels, t)?;
                rec.set_fit(t);
            }
            steps.push(rec.with_seed(seed));
        }
    }

    if draw.cutmix {
        if batch.len() < 2 {
            notes.push("cutmix skipped: batch has no partner".into());
        } else {
            let partner = &batch[pick_partner(batch.len(), index, &mut rng)];
            let delta = cfg.delta.unwrap_or_else(|| default_delta(clip.width()));
            let params = sample_cutmix_params(clip.len(), partner.clip.len(), cfg.cutmix_mode, delta, &mut rng)?;
            let outcome = match params.mode {
                CutMixMode::Window => cutmix_window(&clip, &labels, &partner.clip, &partner.labels, params.r, delta)
                    .and_then(|(c, l, mut rec)| match cfg.fit {
                        Some(t) => {
                            rec.set_fit(t);
                            fit_length(&c, &l, t).map(|(c, l)| (c, l, rec))
                        }
                        None => Ok((c, l, rec)),
                    }),
                CutMixMode::View => cutmix_view(&clip, &labels, &partner.clip, &partner.labels, delta),
            };
            match outcome {
                Ok((c, l, rec)) => {
                    (clip, labels) = (c, l);
                    steps.push(rec.with_seed(seed));
                }
                Err(e @ (VolaugError::UnequalLengths(..) | VolaugError::Param(_))) => {
                    notes.push(format!("cutmix skipped: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
    }

    Ok(AugmentedSample {
        clip,
        labels,
        source: own.clip.id().to_string(),
        seed,
        steps,
        notes,
    })
}

/// Joint-training policy for one batch. `batch_rng` decides which
/// augmentations fire for the whole batch; each sample's parameters come
/// from its own seed in `sample_seeds`.
pub fn joint_policy(
    batch: &[Sample],
    cfg: &PolicyConfig,
    batch_rng: &mut SampleRng,
    sample_seeds: &[u64],
) -> Result<(BatchDraw, Vec<AugmentedSample>)> {
    cfg.probs.validate()?;
    if sample_seeds.len() != batch.len() {
        return Err(VolaugError::Param(format!(
            "{} seeds for a batch of {}",
            sample_seeds.len(),
            batch.len()
        )));
    }
    let draw = draw_batch(&cfg.probs, batch_rng);
    let out = (0..batch.len())
        .map(|i| augment_one(batch, i, draw, cfg, sample_seeds[i]))
        .collect::<Result<_>>()?;
    Ok((draw, out))
}

/// Replays an augmented sample's steps from its original inputs.
pub fn replay_steps(own: &Sample, partners: &[Sample], steps: &[AugRecord]) -> Result<(ClipVolume, LabelTrack)> {
    let mut clip = own.clip.clone();
    let mut labels = own.labels.clone();
    for step in steps {
        let partner = step.sources.get(1).map(|id| {
            partners
                .iter()
                .find(|p| p.clip.id() == id)
                .ok_or_else(|| VolaugError::Param(format!("partner {id} not supplied")))
        });
        (clip, labels) = match partner {
            Some(p) => {
                let p = p?;
                step.replay(&[(&clip, &labels), (&p.clip, &p.labels)])?
            }
            None => step.replay(&[(&clip, &labels)])?,
        };
    }
    Ok((clip, labels))
}

/// Per-frame, per-class multi-label scores from a model.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrack {
    num_classes: usize,
    scores: Vec<f64>,
}

impl PredictionTrack {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_classes = rows.first().map_or(0, Vec::len);
        let mut scores = Vec::with_capacity(rows.len() * num_classes);
        for (t, row) in rows.into_iter().enumerate() {
            if row.len() != num_classes {
                return Err(VolaugError::ShapeMismatch(format!(
                    "prediction row {t} has {} scores, expected {num_classes}",
                    row.len()
                )));
            }
            scores.extend(row);
        }
        Self::from_flat(num_classes, scores)
    }

    pub fn from_flat(num_classes: usize, scores: Vec<f64>) -> Result<Self> {
        if num_classes == 0 && !scores.is_empty() {
            return Err(VolaugError::ShapeMismatch("scores with zero classes".into()));
        }
        if num_classes > 0 && !scores.len().is_multiple_of(num_classes) {
            return Err(VolaugError::ShapeMismatch(format!(
                "{} scores do not form rows of {num_classes}",
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(VolaugError::Param(format!("score {bad} outside [0, 1]")));
        }
        Ok(PredictionTrack { num_classes, scores })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.scores.len().checked_div(self.num_classes).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.scores[t * self.num_classes + k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.scores[t * self.num_classes..(t + 1) * self.num_classes]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

#[derive(Serialize, Deserialize)]
struct PredictionJson {
    scores: Vec<Vec<f64>>,
}

impl Serialize for PredictionTrack {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PredictionJson {
            scores: (0..self.len()).map(|t| self.row(t).to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PredictionTrack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PredictionJson::deserialize(d)?;
        PredictionTrack::new(raw.scores).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combiner {
    #[default]
    Mean,
    Geometric,
}

/// Element-wise arithmetic mean of the tracks.
pub fn ensemble(predictions: &[PredictionTrack]) -> Result<PredictionTrack> {
    ensemble_with(predictions, Combiner::Mean)
}

pub fn ensemble_with(predictions: &[PredictionTrack], combiner: Combiner) -> Result<PredictionTrack> {
    let first = predictions
        .first()
        .ok_or_else(|| VolaugError::Param("ensemble needs at least one track".into()))?;
    for (i, p) in predictions.iter().enumerate() {
        if p.num_classes != first.num_classes || p.scores.len() != first.scores.len() {
            return Err(VolaugError::ShapeMismatch(format!(
                "track {i} is {}x{}, expected {}x{}",
                p.len(),
                p.num_classes,
                first.len(),
                first.num_classes
            )));
        }
    }
    let count = predictions.len() as f64;
    let scores = (0..first.scores.len())
        .map(|e| {
            let v0 = first.scores[e];
            if predictions.iter().all(|p| p.scores[e] == v0) {
                return v0;
            }
            let mean = match combiner {
                Combiner::Mean => predictions.iter().map(|p| p.scores[e]).sum::<f64>() / count,
                Combiner::Geometric => {
                    if predictions.iter().any(|p| p.scores[e] == 0.0) {
                        0.0
                    } else {
                        (predictions.iter().map(|p| p.scores[e].ln()).sum::<f64>() / count).exp()
                    }
                }
            };
            mean.clamp(0.0, 1.0)
        })
        .collect();
    PredictionTrack::from_flat(first.num_classes, scores)
}
