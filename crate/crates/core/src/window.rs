//! Temporal window sampling and length fitting.

use crate::error::{Result, VolaugError};
use crate::volume::{ClipVolume, LabelTrack};

/// `round(num / den)` with halves rounded up, for non-negative integers.
#[inline]
pub(crate) fn div_round_half_up(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Takes frames `start + i*stride` for `i < window`, slicing labels the same way.
pub fn window_sample(
    clip: &ClipVolume,
    labels: &LabelTrack,
    window: usize,
    stride: usize,
    start: usize,
) -> Result<(ClipVolume, LabelTrack)> {
    if window == 0 || stride == 0 {
        return Err(VolaugError::Param("window and stride must be >= 1".into()));
    }
    if labels.len() != clip.len() {
        return Err(VolaugError::ShapeMismatch(format!(
            "clip has {} frames but labels have {}",
            clip.len(),
            labels.len()
        )));
    }
    let needed = start + (window - 1) * stride + 1;
    if needed > clip.len() {
        return Err(VolaugError::ClipTooShortForWindow { n: clip.len(), needed });
    }
    let indices = window_indices(window, stride, start);
    Ok((clip.select_frames(&indices)?, labels.select_rows(&indices)))
}

pub fn window_indices(window: usize, stride: usize, start: usize) -> Vec<usize> {
    (0..window).map(|i| start + i * stride).collect()
}

/// Frame indices that bring a clip of length `len` to `target` frames:
/// a centre crop when longer, nearest-frame resampling when shorter.
pub fn fit_indices(len: usize, target: usize) -> Vec<usize> {
    if len >= target {
        let start = (len - target) / 2;
        (start..start + target).collect()
    } else if target == 1 {
        vec![0]
    } else {
        (0..target)
            .map(|i| div_round_half_up(i * (len - 1), target - 1))
            .collect()
    }
}

pub fn fit_length(clip: &ClipVolume, labels: &LabelTrack, target: usize) -> Result<(ClipVolume, LabelTrack)> {
    if target == 0 {
        return Err(VolaugError::Param("fit length must be >= 1".into()));
    }
    if labels.len() != clip.len() {
        return Err(VolaugError::ShapeMismatch(format!(
            "clip has {} frames but labels have {}",
            clip.len(),
            labels.len()
        )));
    }
    let idx = fit_indices(clip.len(), target);
    Ok((clip.select_frames(&idx)?, labels.select_rows(&idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudo_label::pseudo_label;
    use crate::volume::FrameData;

    fn numbered(n: usize) -> ClipVolume {
        let data = (0..n).map(|t| t as u8).collect();
        ClipVolume::new("c", n, 1, 1, 1, FrameData::U8(data)).unwrap()
    }

    fn ids(c: &ClipVolume) -> Vec<usize> {
        (0..c.len()).map(|t| c.frame::<u8>(t)[0] as usize).collect()
    }

    #[test]
    fn single_frame_window() {
        let (c, l) = window_sample(&numbered(10), &pseudo_label(10, 0, 1).unwrap(), 1, 7, 4).unwrap();
        assert_eq!(ids(&c), vec![4]);
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn identity_window() {
        let clip = numbered(16);
        let (c, _) = window_sample(&clip, &pseudo_label(16, 0, 1).unwrap(), 16, 1, 0).unwrap();
        assert_eq!(c, clip);
    }

    #[test]
    fn kinetics_style_window() {
        let (c, _) = window_sample(&numbered(120), &pseudo_label(120, 0, 1).unwrap(), 16, 5, 0).unwrap();
        assert_eq!(ids(&c), (0..=75).step_by(5).collect::<Vec<_>>());
    }

    #[test]
    fn window_overrun() {
        let err = window_sample(&numbered(75), &pseudo_label(75, 0, 1).unwrap(), 16, 5, 0).unwrap_err();
        assert!(matches!(err, VolaugError::ClipTooShortForWindow { n: 75, needed: 76 }));
    }

    #[test]
    fn fit_crop_and_stretch() {
        assert_eq!(fit_indices(10, 4), vec![3, 4, 5, 6]);
        assert_eq!(fit_indices(4, 4), vec![0, 1, 2, 3]);
        assert_eq!(fit_indices(3, 5), vec![0, 1, 1, 2, 2]);
        assert_eq!(fit_indices(2, 1), vec![0]);
    }
}
