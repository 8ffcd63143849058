//! Volume MixUp: a temporal convex blend of two clips under a piecewise
//! linear alpha mask, producing multi-action frames and soft labels.
//!
//! Clip 2 is shifted by `r` frames. When `n2 + r >= n1` the output hands
//! over from clip 1 to clip 2 and has `n2 + r` frames; otherwise clip 2 is
//! embedded inside clip 1 and the output keeps `n1` frames. Absent frames
//! are zero-padded, but the mask always gives them zero weight.

use rand::Rng;

use crate::error::{Result, VolaugError};
use crate::record::{AugParams, AugRecord};
use crate::rng::SampleRng;
use crate::volume::{truncate01, AlphaMask, ClipVolume, Dtype, LabelTrack, Pixel, Scenario};

fn check_mask_params(n1: usize, n2: usize, r: usize) -> Result<Scenario> {
    if n1 < 2 || n2 < 2 {
        return Err(VolaugError::Param(format!(
            "mixup needs clips of at least 2 frames (got {n1}, {n2})"
        )));
    }
    if r >= n1 {
        return Err(VolaugError::NoOverlap { r, n1 });
    }
    Ok(if n2 + r >= n1 {
        Scenario::Handover
    } else {
        Scenario::Sandwich
    })
}

/// Output length for the given clip lengths and shift.
pub fn mixed_length(n1: usize, n2: usize, r: usize) -> usize {
    if n2 + r >= n1 {
        n2 + r
    } else {
        n1
    }
}

/// Mask value at a (possibly fractional) output position `t`.
fn alpha_at(scenario: Scenario, n1: usize, n2: usize, r: usize, t: f64) -> Result<f64> {
    let (n1, n2, r) = (n1 as f64, n2 as f64, r as f64);
    match scenario {
        Scenario::Handover => truncate01((n1 - t) / (n1 - r)),
        Scenario::Sandwich => truncate01((n2 + 2.0 * r - 2.0 * t).abs() / n2),
    }
}

pub fn alpha_mask(n1: usize, n2: usize, r: usize) -> Result<AlphaMask> {
    let scenario = check_mask_params(n1, n2, r)?;
    let values = (0..mixed_length(n1, n2, r))
        .map(|t| alpha_at(scenario, n1, n2, r, t as f64))
        .collect::<Result<_>>()?;
    Ok(AlphaMask {
        values,
        scenario,
        n1,
        n2,
        r,
    })
}

/// The same mask sampled at `len_out` evenly spaced positions, for blending
/// feature maps whose temporal length differs from the input clip.
pub fn alpha_mask_at_resolution(n1: usize, n2: usize, r: usize, len_out: usize) -> Result<AlphaMask> {
    let scenario = check_mask_params(n1, n2, r)?;
    if len_out < 2 {
        return Err(VolaugError::Param(format!("output resolution {len_out} < 2")));
    }
    let len = mixed_length(n1, n2, r);
    let scale = (len - 1) as f64 / (len_out - 1) as f64;
    let values = (0..len_out)
        .map(|t| alpha_at(scenario, n1, n2, r, t as f64 * scale))
        .collect::<Result<_>>()?;
    Ok(AlphaMask {
        values,
        scenario,
        n1,
        n2,
        r,
    })
}

/// Thresholds a soft mask at 0.5; ties go to clip 1.
pub fn harden(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&a| if a >= 0.5 { 1.0 } else { 0.0 }).collect()
}

/// Shift drawn uniformly from `[0, n1-1]`.
pub fn sample_mixup_shift(n1: usize, _n2: usize, rng: &mut SampleRng) -> Result<usize> {
    if n1 < 2 {
        return Err(VolaugError::Param(format!("mixup needs n1 >= 2, got {n1}")));
    }
    Ok(rng.random_range(0..n1))
}

pub(crate) fn check_pair(c1: &ClipVolume, l1: &LabelTrack, c2: &ClipVolume, l2: &LabelTrack) -> Result<()> {
    c1.check_geometry(c2)?;
    if l1.num_classes() != l2.num_classes() {
        return Err(VolaugError::ShapeMismatch(format!(
            "label spaces differ ({} vs {} classes)",
            l1.num_classes(),
            l2.num_classes()
        )));
    }
    for (c, l) in [(c1, l1), (c2, l2)] {
        l.check_soft()?;
        if c.len() != l.len() {
            return Err(VolaugError::ShapeMismatch(format!(
                "clip {} has {} frames but {} label rows",
                c.id(),
                c.len(),
                l.len()
            )));
        }
    }
    Ok(())
}

/// Label row `w * l1[t] + (1 - w) * l2[t - r]`, absent rows counting as zero.
pub(crate) fn mix_label_rows(out: &mut Vec<f64>, weight: f64, row1: Option<&[f64]>, row2: Option<&[f64]>, k: usize) {
    for c in 0..k {
        let a = row1.map_or(0.0, |r| r[c]);
        let b = row2.map_or(0.0, |r| r[c]);
        out.push(if a == b { a } else { weight * a + (1.0 - weight) * b });
    }
}

fn blend_frames<P: Pixel>(out: &mut Vec<P>, weight: f32, f1: Option<&[P]>, f2: Option<&[P]>, frame_len: usize) {
    match (f1, f2) {
        // weights of exactly 1 or 0 reproduce one operand
        (Some(a), _) if weight == 1.0 => out.extend_from_slice(a),
        (_, Some(b)) if weight == 0.0 => out.extend_from_slice(b),
        (Some(a), Some(b)) => out.extend(a.iter().zip(b).map(|(&x, &y)| P::blend(weight, x, y))),
        (Some(a), None) => out.extend(a.iter().map(|&x| P::blend(weight, x, P::ZERO))),
        (None, Some(b)) => out.extend(b.iter().map(|&y| P::blend(weight, P::ZERO, y))),
        (None, None) => {
            debug_assert!(false, "frame with neither clip present");
            out.extend(std::iter::repeat_n(P::ZERO, frame_len));
        }
    }
}

fn temporal_blend_typed<P: Pixel>(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
    weights: &[f64],
) -> (ClipVolume, LabelTrack) {
    let (n1, n2) = (c1.len(), c2.len());
    let frame_len = c1.frame_len();
    let k = l1.num_classes();
    let mut pixels = Vec::with_capacity(weights.len() * frame_len);
    let mut labels = Vec::with_capacity(weights.len() * k);
    for (t, &w) in weights.iter().enumerate() {
        let i1 = (t < n1).then_some(t);
        let i2 = (t >= r && t - r < n2).then(|| t - r);
        blend_frames(
            &mut pixels,
            w as f32,
            i1.map(|i| c1.frame::<P>(i)),
            i2.map(|i| c2.frame::<P>(i)),
            frame_len,
        );
        mix_label_rows(&mut labels, w, i1.map(|i| l1.row(i)), i2.map(|i| l2.row(i)), k);
    }
    let clip = ClipVolume::from_parts(
        c1.id().to_string(),
        weights.len(),
        c1.height(),
        c1.width(),
        c1.channels(),
        pixels,
    );
    (clip, LabelTrack::from_flat_unchecked(k, labels))
}

/// Blends clip 1 with clip 2 shifted by `r`, using per-frame clip-1 weights.
pub(crate) fn temporal_blend(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
    weights: &[f64],
) -> (ClipVolume, LabelTrack) {
    match c1.dtype() {
        Dtype::U8 => temporal_blend_typed::<u8>(c1, l1, c2, l2, r, weights),
        Dtype::F32 => temporal_blend_typed::<f32>(c1, l1, c2, l2, r, weights),
    }
}

fn mixup_impl(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
    hard: bool,
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    check_pair(c1, l1, c2, l2)?;
    let mask = alpha_mask(c1.len(), c2.len(), r)?;
    let weights = if hard { harden(&mask.values) } else { mask.values };
    let (clip, labels) = temporal_blend(c1, l1, c2, l2, r, &weights);
    let record = AugRecord::new(
        AugParams::Mixup {
            r,
            scenario: mask.scenario,
            hard,
            fit: None,
        },
        vec![c1.id().to_string(), c2.id().to_string()],
    );
    Ok((clip, labels, record))
}

/// Seamless Volume MixUp.
pub fn mixup(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    mixup_impl(c1, l1, c2, l2, r, false)
}

/// Volume MixUp with the mask hardened to {0, 1}: every frame is a copy of
/// one source frame and labels stay one-hot.
pub fn mixup_hard(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    mixup_impl(c1, l1, c2, l2, r, true)
}
