//! Per-frame multi-label detection evaluation.
//!
//! Frames from all videos are pooled per class, AP is precision averaged
//! at each positive in descending-score order (ties keep their original
//! order), and mAP is the mean over classes that have at least one
//! positive. Reported values are percentages.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolaugError};
use crate::par;
use crate::policy::PredictionTrack;
use crate::volume::LabelTrack;
use crate::window::div_round_half_up;

/// Frames evaluated per video by the sparse protocol.
pub const CHARADES_FRAMES: usize = 25;

/// Boundary radius used for the transition split unless configured.
pub const DEFAULT_DILATION: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMaps {
    pub single_action: Option<f64>,
    pub multi_action: Option<f64>,
    pub boundary: Option<f64>,
    pub non_boundary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// mAP in percent; absent when no class has a positive frame.
    pub map: Option<f64>,
    /// Per-class AP in percent; absent for classes without positives.
    pub per_class_ap: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_maps: Option<SplitMaps>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    PerFrame,
    Charades25,
}

impl std::str::FromStr for Protocol {
    type Err = VolaugError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-frame" => Ok(Protocol::PerFrame),
            "charades25" => Ok(Protocol::Charades25),
            other => Err(VolaugError::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Average precision of one ranking; `None` when `truth` has no positive.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Result<Option<f64>> {
    if scores.len() != truth.len() {
        return Err(VolaugError::ShapeMismatch(format!(
            "{} scores vs {} truth values",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(VolaugError::Param(format!("score {bad} is not a number")));
    }
    let positives = truth.iter().filter(|&&p| p).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: equal scores keep input order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truth[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

/// Binary truth matrix of one video.
struct Truth {
    frames: usize,
    classes: usize,
    active: Vec<bool>,
}

impl Truth {
    fn from_labels(video: usize, labels: &LabelTrack) -> Result<Self> {
        let mut active = Vec::with_capacity(labels.weights().len());
        for &w in labels.weights() {
            if w == 1.0 {
                active.push(true);
            } else if w == 0.0 {
                active.push(false);
            } else {
                return Err(VolaugError::NonBinaryTruth(format!("video {video} has weight {w}")));
            }
        }
        Ok(Truth {
            frames: labels.len(),
            classes: labels.num_classes(),
            active,
        })
    }

    fn get(&self, t: usize, k: usize) -> bool {
        self.active[t * self.classes + k]
    }

    fn row_count(&self, t: usize) -> usize {
        self.active[t * self.classes..(t + 1) * self.classes]
            .iter()
            .filter(|&&a| a)
            .count()
    }

    fn row_changed(&self, t: usize) -> bool {
        let k = self.classes;
        self.active[t * k..(t + 1) * k] != self.active[(t - 1) * k..t * k]
    }
}

fn prepare(preds: &[PredictionTrack], truths: &[LabelTrack]) -> Result<(usize, Vec<Truth>)> {
    if preds.len() != truths.len() {
        return Err(VolaugError::ShapeMismatch(format!(
            "{} prediction tracks vs {} truth tracks",
            preds.len(),
            truths.len()
        )));
    }
    let classes = truths.first().map_or(0, LabelTrack::num_classes);
    let mut out = Vec::with_capacity(truths.len());
    for (v, (p, t)) in preds.iter().zip(truths).enumerate() {
        if p.len() != t.len() || p.num_classes() != t.num_classes() || t.num_classes() != classes {
            return Err(VolaugError::ShapeMismatch(format!(
                "video {v}: prediction {}x{} vs truth {}x{}",
                p.len(),
                p.num_classes(),
                t.len(),
                t.num_classes()
            )));
        }
        out.push(Truth::from_labels(v, t)?);
    }
    Ok((classes, out))
}

/// Per-class AP over the selected frames of every video, pooled.
fn pooled_class_aps(
    preds: &[PredictionTrack],
    truths: &[Truth],
    classes: usize,
    frames: &[Vec<usize>],
) -> Vec<Option<f64>> {
    let class_ids: Vec<usize> = (0..classes).collect();
    par::map(&class_ids, |_, &k| {
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for ((p, t), sel) in preds.iter().zip(truths).zip(frames) {
            for &f in sel {
                scores.push(p.get(f, k));
                truth.push(t.get(f, k));
            }
        }
        average_precision(&scores, &truth)
            .expect("shapes checked and scores validated")
            .map(|ap| ap * 100.0)
    })
}

fn mean_ap(aps: &[Option<f64>], weights: Option<&[f64]>) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, ap) in aps.iter().enumerate() {
        if let Some(ap) = ap {
            let w = weights.map_or(1.0, |w| w[k]);
            num += w * ap;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

fn report(
    preds: &[PredictionTrack],
    truths: &[Truth],
    classes: usize,
    frames: &[Vec<usize>],
    weights: Option<&[f64]>,
) -> EvalReport {
    let per_class_ap = pooled_class_aps(preds, truths, classes, frames);
    EvalReport {
        map: mean_ap(&per_class_ap, weights),
        per_class_ap,
        split_maps: None,
    }
}

/// Unweighted mAP over every frame of every video.
pub fn map_per_frame(preds: &[PredictionTrack], truths: &[LabelTrack]) -> Result<EvalReport> {
    let (classes, truths) = prepare(preds, truths)?;
    let frames: Vec<Vec<usize>> = truths.iter().map(|t| (0..t.frames).collect()).collect();
    Ok(report(preds, &truths, classes, &frames, None))
}

/// `round(i·(T-1)/24)` for `i = 0..24`.
pub fn charades_frame_indices(frames: usize) -> Vec<usize> {
    if frames == 0 {
        return Vec::new();
    }
    let last = CHARADES_FRAMES - 1;
    (0..CHARADES_FRAMES)
        .map(|i| div_round_half_up(i * (frames - 1), last))
        .collect()
}

/// Sparse 25-frame protocol with a class-weighted mean:
/// `Σ w_k·AP_k / Σ w_k` over classes with positives.
pub fn map_charades_protocol(
    preds: &[PredictionTrack],
    truths: &[LabelTrack],
    class_weights: Option<&[f64]>,
) -> Result<EvalReport> {
    let weights = class_weights.ok_or(VolaugError::MissingWeights)?;
    let (classes, truths) = prepare(preds, truths)?;
    if weights.len() != classes {
        return Err(VolaugError::ShapeMismatch(format!(
            "{} class weights for {classes} classes",
            weights.len()
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(VolaugError::Param(format!(
            "class weight {bad} must be finite and >= 0"
        )));
    }
    let frames: Vec<Vec<usize>> = truths.iter().map(|t| charades_frame_indices(t.frames)).collect();
    Ok(report(preds, &truths, classes, &frames, Some(weights)))
}

/// Frame partitions of one video used by the split statistics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitFrames {
    /// Exactly one active class.
    pub single: Vec<usize>,
    /// More than one active class.
    pub multi: Vec<usize>,
    /// No active class.
    pub empty: Vec<usize>,
    /// Within `dilation` frames of a label change.
    pub boundary: Vec<usize>,
    pub non_boundary: Vec<usize>,
}

fn split_truth(truth: &Truth, dilation: usize) -> SplitFrames {
    let n = truth.frames;
    let mut out = SplitFrames::default();
    for t in 0..n {
        match truth.row_count(t) {
            0 => out.empty.push(t),
            1 => out.single.push(t),
            _ => out.multi.push(t),
        }
    }
    let mut near = vec![false; n];
    for t in 1..n {
        if truth.row_changed(t) {
            let lo = t.saturating_sub(dilation);
            let hi = (t + dilation).min(n - 1);
            near[lo..=hi].iter_mut().for_each(|b| *b = true);
        }
    }
    for (t, b) in near.into_iter().enumerate() {
        if b {
            out.boundary.push(t);
        } else {
            out.non_boundary.push(t);
        }
    }
    out
}

/// Splits one binary truth track into action-count and boundary subsets.
/// A change point is a frame whose truth row differs from the previous one.
pub fn split_frames(truth: &LabelTrack, dilation: usize) -> Result<SplitFrames> {
    Ok(split_truth(&Truth::from_labels(0, truth)?, dilation))
}

/// mAP restricted to single-action, multi-action, boundary and
/// non-boundary frames.
pub fn split_statistics(preds: &[PredictionTrack], truths: &[LabelTrack], dilation: usize) -> Result<SplitMaps> {
    let (classes, truths) = prepare(preds, truths)?;
    let splits: Vec<SplitFrames> = truths.iter().map(|t| split_truth(t, dilation)).collect();
    let subset = |pick: fn(&SplitFrames) -> &Vec<usize>| {
        let frames: Vec<Vec<usize>> = splits.iter().map(|s| pick(s).clone()).collect();
        if frames.iter().all(Vec::is_empty) {
            None
        } else {
            report(preds, &truths, classes, &frames, None).map
        }
    };
    Ok(SplitMaps {
        single_action: subset(|s| &s.single),
        multi_action: subset(|s| &s.multi),
        boundary: subset(|s| &s.boundary),
        non_boundary: subset(|s| &s.non_boundary),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub protocol: Protocol,
    pub class_weights: Option<Vec<f64>>,
    pub dilation: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            protocol: Protocol::PerFrame,
            class_weights: None,
            dilation: DEFAULT_DILATION,
        }
    }
}

/// Full report: protocol mAP plus the split statistics over all frames.
pub fn evaluate(preds: &[PredictionTrack], truths: &[LabelTrack], opts: &EvalOptions) -> Result<EvalReport> {
    let mut rep = match opts.protocol {
        Protocol::PerFrame => map_per_frame(preds, truths)?,
        Protocol::Charades25 => map_charades_protocol(preds, truths, opts.class_weights.as_deref())?,
    };
    rep.split_maps = Some(split_statistics(preds, truths, opts.dilation)?);
    Ok(rep)
}
