//! Volume CutMix: per-frame spatial composites of two clips split by a
//! vertical plane with a `2δ`-wide linear transition band.
//!
//! * Transient window: the split column follows the MixUp alpha mask,
//!   `w_t = round(W·α[t])`, so the window of clip 1 sweeps out over time.
//! * Transient view: the split stays at `W/2` while each clip's content pans
//!   left to right through its half-frame window.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolaugError};
use crate::mixup::{alpha_mask, check_pair, mix_label_rows, sample_mixup_shift};
use crate::record::{AugParams, AugRecord};
use crate::rng::SampleRng;
use crate::volume::{ClipVolume, Dtype, LabelTrack, Pixel, SpatialMask};
use crate::window::div_round_half_up;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutMixMode {
    #[default]
    Window,
    View,
}

impl FromStr for CutMixMode {
    type Err = VolaugError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(CutMixMode::Window),
            "view" => Ok(CutMixMode::View),
            other => Err(VolaugError::Config(format!("unknown cutmix mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutMixParams {
    pub mode: CutMixMode,
    /// Temporal shift; always 0 for the view mode.
    pub r: usize,
    pub delta: usize,
}

/// Half-width of the transition band when none is configured: 5% of the
/// frame width, at least one pixel.
pub fn default_delta(width: usize) -> usize {
    div_round_half_up(width, 20).max(1)
}

fn check_delta(width: usize, delta: usize) -> Result<()> {
    if delta < 1 || 4 * delta > width {
        return Err(VolaugError::Param(format!(
            "transition half-width {delta} outside [1, {width}/4]"
        )));
    }
    Ok(())
}

/// Mask column weights for a split at `split` on a frame `width` wide.
///
/// A split at either frame edge saturates the whole row: no band is drawn
/// when one window has zero width.
fn mask_row(width: usize, split: usize, delta: usize) -> Vec<f64> {
    if split == 0 {
        return vec![0.0; width];
    }
    if split >= width {
        return vec![1.0; width];
    }
    let (w, d) = (split as f64, delta as f64);
    (0..width)
        .map(|j| {
            if j + delta < split {
                1.0
            } else if j >= split + delta {
                0.0
            } else {
                (w + d - j as f64) / (2.0 * d)
            }
        })
        .collect()
}

pub fn spatial_mask(height: usize, width: usize, split: usize, delta: usize) -> Result<SpatialMask> {
    if height == 0 || width == 0 {
        return Err(VolaugError::Param("mask needs a non-empty frame".into()));
    }
    if split > width {
        return Err(VolaugError::Param(format!(
            "split column {split} beyond frame width {width}"
        )));
    }
    check_delta(width, delta)?;
    Ok(SpatialMask {
        height,
        width,
        split_column: split,
        delta,
        row: mask_row(width, split, delta),
    })
}

/// `round(W·α)` with halves rounded up.
pub fn split_column(width: usize, alpha: f64) -> usize {
    ((width as f64 * alpha + 0.5).floor() as usize).min(width)
}

/// Pan offset `o_t = round(t·(W/2)/(n-1))` of each clip inside its window.
pub fn pan_offsets(frames: usize, width: usize) -> Vec<usize> {
    let half = width / 2;
    if frames < 2 {
        return vec![0; frames];
    }
    (0..frames).map(|t| div_round_half_up(t * half, frames - 1)).collect()
}

/// Composites one frame row-by-row: `m[j]·a[src_a(j)] + (1-m[j])·b[src_b(j)]`.
/// An absent frame reads as zeros.
#[allow(clippy::too_many_arguments)]
fn composite_frame<P: Pixel>(
    out: &mut Vec<P>,
    a: Option<&[P]>,
    b: Option<&[P]>,
    weights: &[f32],
    src_a: &[usize],
    src_b: &[usize],
    height: usize,
    channels: usize,
) {
    let width = weights.len();
    let row_len = width * channels;
    let zeros;
    let (a, b) = match (a, b) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => {
            zeros = vec![P::ZERO; a.len()];
            (a, zeros.as_slice())
        }
        (None, Some(b)) => {
            zeros = vec![P::ZERO; b.len()];
            (zeros.as_slice(), b)
        }
        (None, None) => {
            out.extend(std::iter::repeat_n(P::ZERO, height * row_len));
            return;
        }
    };
    let plan = row_plan(weights, src_a, src_b);
    for i in 0..height {
        let ra = &a[i * row_len..(i + 1) * row_len];
        let rb = &b[i * row_len..(i + 1) * row_len];
        for span in &plan {
            match *span {
                Span::CopyA { src, len } => out.extend_from_slice(&ra[src * channels..(src + len) * channels]),
                Span::CopyB { src, len } => out.extend_from_slice(&rb[src * channels..(src + len) * channels]),
                Span::Blend { j } => {
                    let xa = &ra[src_a[j] * channels..(src_a[j] + 1) * channels];
                    let yb = &rb[src_b[j] * channels..(src_b[j] + 1) * channels];
                    out.extend(xa.iter().zip(yb).map(|(&x, &y)| P::blend(weights[j], x, y)));
                }
            }
        }
    }
}

/// One stretch of an output row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Span {
    /// Contiguous source columns copied from clip 1 (weight 1).
    CopyA {
        src: usize,
        len: usize,
    },
    /// Contiguous source columns copied from clip 2 (weight 0).
    CopyB {
        src: usize,
        len: usize,
    },
    Blend {
        j: usize,
    },
}

/// Splits a row into copy runs and blended columns. Weights of exactly 1 or
/// 0 reproduce one operand, so copying is bit-identical to blending.
fn row_plan(weights: &[f32], src_a: &[usize], src_b: &[usize]) -> Vec<Span> {
    let mut plan: Vec<Span> = Vec::new();
    for (j, &m) in weights.iter().enumerate() {
        let span = if m == 1.0 {
            Span::CopyA { src: src_a[j], len: 1 }
        } else if m == 0.0 {
            Span::CopyB { src: src_b[j], len: 1 }
        } else {
            Span::Blend { j }
        };
        match (plan.last_mut(), span) {
            (Some(Span::CopyA { src, len }), Span::CopyA { src: s, .. })
            | (Some(Span::CopyB { src, len }), Span::CopyB { src: s, .. })
                if *src + *len == s =>
            {
                *len += 1
            }
            _ => plan.push(span),
        }
    }
    plan
}

fn window_typed<P: Pixel>(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
    delta: usize,
    alpha: &[f64],
) -> (ClipVolume, LabelTrack) {
    let (n1, n2) = (c1.len(), c2.len());
    let (h, w, ch) = (c1.height(), c1.width(), c1.channels());
    let k = l1.num_classes();
    let identity: Vec<usize> = (0..w).collect();
    let mut pixels = Vec::with_capacity(alpha.len() * c1.frame_len());
    let mut labels = Vec::with_capacity(alpha.len() * k);
    for (t, &a) in alpha.iter().enumerate() {
        let mask = spatial_mask(h, w, split_column(w, a), delta).expect("delta validated by caller");
        let weights: Vec<f32> = mask.row.iter().map(|&m| m as f32).collect();
        let i1 = (t < n1).then_some(t);
        let i2 = (t >= r && t - r < n2).then(|| t - r);
        composite_frame(
            &mut pixels,
            i1.map(|i| c1.frame::<P>(i)),
            i2.map(|i| c2.frame::<P>(i)),
            &weights,
            &identity,
            &identity,
            h,
            ch,
        );
        mix_label_rows(
            &mut labels,
            mask.area(),
            i1.map(|i| l1.row(i)),
            i2.map(|i| l2.row(i)),
            k,
        );
    }
    let clip = ClipVolume::from_parts(c1.id().to_string(), alpha.len(), h, w, ch, pixels);
    (clip, LabelTrack::from_flat_unchecked(k, labels))
}

/// Transient-window CutMix. Labels are weighted by the true area of the
/// rounded mask, so pixels and labels agree exactly.
pub fn cutmix_window(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    r: usize,
    delta: usize,
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    check_pair(c1, l1, c2, l2)?;
    check_delta(c1.width(), delta)?;
    let mask = alpha_mask(c1.len(), c2.len(), r)?;
    let (clip, labels) = match c1.dtype() {
        Dtype::U8 => window_typed::<u8>(c1, l1, c2, l2, r, delta, &mask.values),
        Dtype::F32 => window_typed::<f32>(c1, l1, c2, l2, r, delta, &mask.values),
    };
    let record = AugRecord::new(
        AugParams::CutmixWindow {
            r,
            scenario: mask.scenario,
            delta,
            fit: None,
        },
        vec![c1.id().to_string(), c2.id().to_string()],
    );
    Ok((clip, labels, record))
}

fn view_typed<P: Pixel>(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    delta: usize,
) -> (ClipVolume, LabelTrack) {
    let n = c1.len();
    let (h, w, ch) = (c1.height(), c1.width(), c1.channels());
    let half = w / 2;
    let k = l1.num_classes();
    let mask = spatial_mask(h, w, half, delta).expect("delta validated by caller");
    let weights: Vec<f32> = mask.row.iter().map(|&m| m as f32).collect();
    let mut pixels = Vec::with_capacity(n * c1.frame_len());
    let mut labels = Vec::with_capacity(n * k);
    for (t, offset) in pan_offsets(n, w).into_iter().enumerate() {
        debug_assert!(offset <= half);
        // The band reaches δ columns past each window; those columns read
        // the nearest in-range source column.
        let src_a: Vec<usize> = (0..w).map(|j| (offset + j).min(w - 1)).collect();
        let src_b: Vec<usize> = (0..w).map(|j| (offset + j).saturating_sub(half).min(w - 1)).collect();
        composite_frame(
            &mut pixels,
            Some(c1.frame::<P>(t)),
            Some(c2.frame::<P>(t)),
            &weights,
            &src_a,
            &src_b,
            h,
            ch,
        );
        mix_label_rows(&mut labels, 0.5, Some(l1.row(t)), Some(l2.row(t)), k);
    }
    let clip = ClipVolume::from_parts(c1.id().to_string(), n, h, w, ch, pixels);
    (clip, LabelTrack::from_flat_unchecked(k, labels))
}

/// Transient-view CutMix on two equal-length clips. Labels are split
/// 0.5/0.5 on every frame.
pub fn cutmix_view(
    c1: &ClipVolume,
    l1: &LabelTrack,
    c2: &ClipVolume,
    l2: &LabelTrack,
    delta: usize,
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    check_pair(c1, l1, c2, l2)?;
    if c1.len() != c2.len() {
        return Err(VolaugError::UnequalLengths(c1.len(), c2.len()));
    }
    if c1.len() < 2 {
        return Err(VolaugError::Param("transient view needs at least 2 frames".into()));
    }
    if !c1.width().is_multiple_of(2) {
        return Err(VolaugError::Param(format!(
            "transient view needs an even frame width, got {}",
            c1.width()
        )));
    }
    check_delta(c1.width(), delta)?;
    let (clip, labels) = match c1.dtype() {
        Dtype::U8 => view_typed::<u8>(c1, l1, c2, l2, delta),
        Dtype::F32 => view_typed::<f32>(c1, l1, c2, l2, delta),
    };
    let record = AugRecord::new(
        AugParams::CutmixView { delta },
        vec![c1.id().to_string(), c2.id().to_string()],
    );
    Ok((clip, labels, record))
}

/// Mode and `δ` come from configuration; `r` is drawn as for MixUp in the
/// window mode.
pub fn sample_cutmix_params(
    n1: usize,
    n2: usize,
    mode: CutMixMode,
    delta: usize,
    rng: &mut SampleRng,
) -> Result<CutMixParams> {
    let r = match mode {
        CutMixMode::Window => sample_mixup_shift(n1, n2, rng)?,
        CutMixMode::View => 0,
    };
    Ok(CutMixParams { mode, r, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudo_label::pseudo_label;
    use crate::rng::sample_rng;
    use crate::volume::{mask_area, FrameData};

    /// Clip whose pixel value encodes its column (and frame).
    fn columns(n: usize, h: usize, w: usize, base: u8) -> ClipVolume {
        let mut data = Vec::new();
        for t in 0..n {
            for _ in 0..h {
                for j in 0..w {
                    data.push(base + (t * w + j) as u8);
                }
            }
        }
        ClipVolume::new(format!("b{base}"), n, h, w, 1, FrameData::U8(data)).unwrap()
    }

    #[test]
    fn row_plan_merges_contiguous_copies() {
        let w = [1.0, 1.0, 0.5, 0.0, 0.0, 0.0];
        let ident: Vec<usize> = (0..6).collect();
        let plan = row_plan(&w, &ident, &ident);
        assert_eq!(
            plan,
            vec![
                Span::CopyA { src: 0, len: 2 },
                Span::Blend { j: 2 },
                Span::CopyB { src: 3, len: 3 }
            ]
        );
        // a clamped source column breaks the run
        let clamped = [0, 1, 2, 3, 5, 5];
        let plan = row_plan(&[0.0; 6], &ident, &clamped);
        assert_eq!(
            plan,
            vec![
                Span::CopyB { src: 0, len: 4 },
                Span::CopyB { src: 5, len: 1 },
                Span::CopyB { src: 5, len: 1 }
            ]
        );
    }

    #[test]
    fn mask_examples() {
        let m = spatial_mask(3, 8, 0, 1).unwrap();
        assert!(m.row.iter().all(|&v| v == 0.0));
        assert_eq!(mask_area(&m), 0.0);
        let m = spatial_mask(3, 8, 8, 2).unwrap();
        assert!(m.row.iter().all(|&v| v == 1.0));
        assert_eq!(mask_area(&m), 1.0);
        let m = spatial_mask(5, 8, 4, 1).unwrap();
        assert_eq!(m.row, vec![1.0, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(mask_area(&m), 0.5625);
    }

    #[test]
    fn mask_parameter_errors() {
        assert!(spatial_mask(2, 8, 4, 0).is_err());
        assert!(spatial_mask(2, 8, 4, 3).is_err());
        assert!(spatial_mask(2, 8, 9, 1).is_err());
        assert!(spatial_mask(2, 8, 4, 2).is_ok());
    }

    #[test]
    fn rows_non_increasing() {
        for w in 4..20 {
            for d in 1..=w / 4 {
                for s in 0..=w {
                    let m = spatial_mask(1, w, s, d).unwrap();
                    assert!(m.row.windows(2).all(|p| p[1] <= p[0]), "w={w} d={d} s={s}");
                    assert!(m.row.iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }

    #[test]
    fn split_rounding() {
        assert_eq!(split_column(8, 0.5), 4);
        assert_eq!(split_column(8, 1.0), 8);
        assert_eq!(split_column(8, 0.0), 0);
        assert_eq!(split_column(5, 0.5), 3);
        assert_eq!(split_column(8, 0.3125), 3);
    }

    #[test]
    fn pan_offsets_example() {
        assert_eq!(pan_offsets(4, 8), vec![0, 1, 3, 4]);
        let o = pan_offsets(7, 10);
        assert_eq!(o[0], 0);
        assert_eq!(*o.last().unwrap(), 5);
    }

    #[test]
    fn window_label_at_half_alpha() {
        let (c1, c2) = (columns(8, 2, 8, 0), columns(6, 2, 8, 100));
        let (l1, l2) = (pseudo_label(8, 0, 2).unwrap(), pseudo_label(6, 1, 2).unwrap());
        let (out, labels, _) = cutmix_window(&c1, &l1, &c2, &l2, 4, 1).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(labels.row(6), &[0.5625, 0.4375]);
        // alpha = 1 before the shift: pure clip 1
        for t in 0..4 {
            assert_eq!(out.frame::<u8>(t), c1.frame::<u8>(t));
            assert_eq!(labels.row(t), &[1.0, 0.0]);
        }
        for t in 8..10 {
            assert_eq!(out.frame::<u8>(t), c2.frame::<u8>(t - 4));
            assert_eq!(labels.row(t), &[0.0, 1.0]);
        }
    }

    #[test]
    fn view_first_frame_and_labels() {
        let (c1, c2) = (columns(4, 2, 8, 0), columns(4, 2, 8, 100));
        let (l1, l2) = (pseudo_label(4, 0, 3).unwrap(), pseudo_label(4, 2, 3).unwrap());
        let (out, labels, _) = cutmix_view(&c1, &l1, &c2, &l2, 1).unwrap();
        // t = 0: columns left of the band come straight from clip 1 columns 0..
        let f = out.frame::<u8>(0);
        assert_eq!(&f[..3], &[0, 1, 2]);
        // right of the band: clip 2 columns starting at offset 0
        assert_eq!(&f[5..8], &[101, 102, 103]);
        // last frame has offset 4: clip 1 columns 4.., clip 2 columns 4..
        let f = out.frame::<u8>(3);
        assert_eq!(&f[..3], &[24 + 4, 24 + 5, 24 + 6]);
        assert_eq!(&f[5..8], &[100 + 24 + 5, 100 + 24 + 6, 100 + 24 + 7]);
        for row in labels.rows() {
            assert_eq!(row, &[0.5, 0.0, 0.5]);
        }
    }

    #[test]
    fn view_errors() {
        let l4 = pseudo_label(4, 0, 1).unwrap();
        let l5 = pseudo_label(5, 0, 1).unwrap();
        assert!(matches!(
            cutmix_view(&columns(4, 1, 8, 0), &l4, &columns(5, 1, 8, 0), &l5, 1),
            Err(VolaugError::UnequalLengths(4, 5))
        ));
        let odd = ClipVolume::new("o", 4, 1, 9, 1, FrameData::U8(vec![0; 36])).unwrap();
        assert!(cutmix_view(&odd, &l4, &odd, &l4, 1).is_err());
    }

    #[test]
    fn default_delta_values() {
        assert_eq!(default_delta(8), 1);
        assert_eq!(default_delta(112), 6);
        assert_eq!(default_delta(224), 11);
        assert_eq!(default_delta(30), 2);
    }

    #[test]
    fn sampler() {
        let p = sample_cutmix_params(8, 8, CutMixMode::View, 2, &mut sample_rng(1)).unwrap();
        assert_eq!(
            p,
            CutMixParams {
                mode: CutMixMode::View,
                r: 0,
                delta: 2
            }
        );
        let a = sample_cutmix_params(8, 5, CutMixMode::Window, 1, &mut sample_rng(9)).unwrap();
        let b = sample_cutmix_params(8, 5, CutMixMode::Window, 1, &mut sample_rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.r < 8);
    }
}
