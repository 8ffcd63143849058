//! Volume Freeze: repeat one frame to carve a motionless background segment
//! into a clip, keeping the clip length.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VolaugError};
use crate::record::{AugParams, AugRecord};
use crate::rng::SampleRng;
use crate::volume::{ClipVolume, LabelTrack};

/// Frame `r` is shown `m` times starting at position `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FreezeSegment {
    pub r: usize,
    pub m: usize,
}

impl FreezeSegment {
    pub fn new(r: usize, m: usize) -> Self {
        FreezeSegment { r, m }
    }

    fn validate(self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(VolaugError::ClipTooShortToFreeze(n));
        }
        if self.r > n - 2 {
            return Err(VolaugError::Param(format!(
                "freeze position r = {} outside [0, {}]",
                self.r,
                n - 2
            )));
        }
        if self.m < 2 || self.m > n - self.r {
            return Err(VolaugError::Param(format!(
                "freeze length m = {} outside [2, {}]",
                self.m,
                n - self.r
            )));
        }
        Ok(())
    }

    /// Source frame shown at output position `t`.
    #[inline]
    pub fn source_index(self, t: usize) -> usize {
        if t < self.r {
            t
        } else if t < self.r + self.m {
            self.r
        } else {
            t + 1 - self.m
        }
    }
}

fn apply(clip: &ClipVolume, labels: &LabelTrack, seg: FreezeSegment) -> Result<(ClipVolume, LabelTrack)> {
    let n = clip.len();
    if labels.len() != n {
        return Err(VolaugError::ShapeMismatch(format!(
            "clip has {n} frames but labels have {}",
            labels.len()
        )));
    }
    labels.check_soft()?;
    seg.validate(n)?;
    let indices: Vec<usize> = (0..n).map(|t| seg.source_index(t)).collect();
    let frames = clip.select_frames(&indices)?;

    let k = labels.num_classes();
    let mut weights = labels.select_rows(&indices).weights().to_vec();
    weights[seg.r * k..(seg.r + seg.m) * k].fill(0.0);
    Ok((frames, LabelTrack::from_flat_unchecked(k, weights)))
}

/// Freezes frame `r` for `m` positions. Frames pushed past the end are
/// dropped and the frozen positions get all-zero label rows.
pub fn freeze(
    clip: &ClipVolume,
    labels: &LabelTrack,
    r: usize,
    m: usize,
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    freeze_multi(clip, labels, &[FreezeSegment::new(r, m)])
}

/// Applies freezes one after another, each on the previous output.
pub fn freeze_multi(
    clip: &ClipVolume,
    labels: &LabelTrack,
    segments: &[FreezeSegment],
) -> Result<(ClipVolume, LabelTrack, AugRecord)> {
    if segments.is_empty() {
        return Err(VolaugError::Param("no freeze segments given".into()));
    }
    let (mut c, mut l) = apply(clip, labels, segments[0])?;
    for &seg in &segments[1..] {
        (c, l) = apply(&c, &l, seg)?;
    }
    let record = AugRecord::new(
        AugParams::Freeze {
            segments: segments.to_vec(),
        },
        vec![clip.id().to_string()],
    );
    Ok((c, l, record))
}

/// Draws `r` uniformly from `[0, n-2]`, then `m` uniformly from `[2, n-r]`.
pub fn sample_freeze_params(n: usize, rng: &mut SampleRng) -> Result<FreezeSegment> {
    if n < 3 {
        return Err(VolaugError::ClipTooShortToFreeze(n));
    }
    let r = rng.random_range(0..=n - 2);
    let m = rng.random_range(2..=n - r);
    Ok(FreezeSegment { r, m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudo_label::pseudo_label;
    use crate::rng::sample_rng;
    use crate::volume::FrameData;

    /// Clip whose frame `t` is filled with the value `t`.
    fn numbered(n: usize) -> ClipVolume {
        let data = (0..n).flat_map(|t| [t as u8; 2]).collect();
        ClipVolume::new("c", n, 1, 2, 1, FrameData::U8(data)).unwrap()
    }

    fn frame_ids(c: &ClipVolume) -> Vec<u8> {
        (0..c.len()).map(|t| c.frame::<u8>(t)[0]).collect()
    }

    /// Labels whose row `t` is one-hot at class `t`.
    fn distinct_labels(n: usize) -> LabelTrack {
        let rows = (0..n)
            .map(|t| (0..n).map(|k| if k == t { 1.0 } else { 0.0 }).collect())
            .collect();
        LabelTrack::new(n, rows).unwrap()
    }

    #[test]
    fn six_frames_r2_m3() {
        let (c, l, rec) = freeze(&numbered(6), &distinct_labels(6), 2, 3).unwrap();
        assert_eq!(frame_ids(&c), vec![0, 1, 2, 2, 2, 3]);
        let expected_rows = [Some(0), Some(1), None, None, None, Some(3)];
        for (t, want) in expected_rows.iter().enumerate() {
            match want {
                Some(k) => assert_eq!(l.get(t, *k), 1.0),
                None => assert_eq!(l.mass(t), 0.0),
            }
        }
        assert_eq!(
            rec.params,
            AugParams::Freeze {
                segments: vec![FreezeSegment::new(2, 3)]
            }
        );
    }

    #[test]
    fn whole_clip_frozen() {
        let (c, l, _) = freeze(&numbered(4), &pseudo_label(4, 0, 2).unwrap(), 0, 4).unwrap();
        assert_eq!(frame_ids(&c), vec![0, 0, 0, 0]);
        assert!((0..4).all(|t| l.mass(t) == 0.0));
    }

    #[test]
    fn sixteen_frames_two_zero_rows() {
        let (c, l, _) = freeze(&numbered(16), &pseudo_label(16, 1, 3).unwrap(), 7, 2).unwrap();
        assert_eq!(c.len(), 16);
        let zero: Vec<usize> = (0..16).filter(|&t| l.mass(t) == 0.0).collect();
        assert_eq!(zero, vec![7, 8]);
        // naive reference: prefix, repeated frame, shifted tail
        let mut want: Vec<u8> = (0..7).collect();
        want.extend([7, 7]);
        want.extend(8..15);
        assert_eq!(frame_ids(&c), want);
    }

    #[test]
    fn parameter_errors() {
        let c = numbered(5);
        let l = pseudo_label(5, 0, 1).unwrap();
        assert!(freeze(&c, &l, 4, 2).is_err());
        assert!(freeze(&c, &l, 1, 1).is_err());
        assert!(freeze(&c, &l, 1, 5).is_err());
        assert!(freeze(&c, &pseudo_label(4, 0, 1).unwrap(), 0, 2).is_err());
        assert!(freeze(&c, &l, 3, 2).is_ok());
    }

    #[test]
    fn multi_single_segment_matches_freeze() {
        let c = numbered(9);
        let l = pseudo_label(9, 0, 2).unwrap();
        let (a, la, _) = freeze(&c, &l, 3, 4).unwrap();
        let (b, lb, _) = freeze_multi(&c, &l, &[FreezeSegment::new(3, 4)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn multi_disjoint_segments() {
        let c = numbered(16);
        let l = pseudo_label(16, 0, 2).unwrap();
        let (_, out, _) = freeze_multi(&c, &l, &[FreezeSegment::new(2, 3), FreezeSegment::new(9, 4)]).unwrap();
        let zero = (0..16).filter(|&t| out.mass(t) == 0.0).count();
        assert_eq!(zero, 7);
    }

    #[test]
    fn multi_same_position_extends_run() {
        let c = numbered(10);
        let l = pseudo_label(10, 0, 2).unwrap();
        let (_, twice, _) = freeze_multi(&c, &l, &[FreezeSegment::new(4, 2), FreezeSegment::new(4, 2)]).unwrap();
        let (_, once, _) = freeze(&c, &l, 4, 3).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn sampler_domain_n3() {
        let mut rng = sample_rng(5);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            let s = sample_freeze_params(3, &mut rng).unwrap();
            seen.insert((s.r, s.m));
        }
        let want: std::collections::BTreeSet<_> = [(0, 2), (0, 3), (1, 2)].into_iter().collect();
        assert_eq!(seen, want);
        assert!(matches!(
            sample_freeze_params(2, &mut rng),
            Err(VolaugError::ClipTooShortToFreeze(2))
        ));
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = sample_freeze_params(16, &mut sample_rng(77)).unwrap();
        let b = sample_freeze_params(16, &mut sample_rng(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampler_r_marginal_is_uniform() {
        // 15 cells, 14 dof; 36.12 is the 0.999 quantile of chi-square(14).
        let n = 16;
        let draws = 100_000;
        let mut rng = sample_rng(2024);
        let mut counts = vec![0usize; n - 1];
        for _ in 0..draws {
            counts[sample_freeze_params(n, &mut rng).unwrap().r] += 1;
        }
        let expected = draws as f64 / (n - 1) as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 36.12, "chi2 = {chi2}");
    }
}
