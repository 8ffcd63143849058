//! Provenance records. Replaying a record on the same sources reproduces
//! the augmented output bit for bit.

use serde::{Deserialize, Serialize};

use crate::cutmix::{cutmix_view, cutmix_window};
use crate::error::{Result, VolaugError};
use crate::freeze::{freeze_multi, FreezeSegment};
use crate::mixup::{mixup, mixup_hard};
use crate::volume::{ClipVolume, LabelTrack, Scenario};
use crate::window::fit_length;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugKind {
    Freeze,
    Mixup,
    CutmixWindow,
    CutmixView,
    None,
}

impl AugKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AugKind::Freeze => "freeze",
            AugKind::Mixup => "mixup",
            AugKind::CutmixWindow => "cutmix-window",
            AugKind::CutmixView => "cutmix-view",
            AugKind::None => "none",
        }
    }
}

/// Sampled parameters, tagged by augmentation kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AugParams {
    Freeze {
        segments: Vec<FreezeSegment>,
    },
    Mixup {
        r: usize,
        scenario: Scenario,
        hard: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<usize>,
    },
    CutmixWindow {
        r: usize,
        scenario: Scenario,
        delta: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<usize>,
    },
    CutmixView {
        delta: usize,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugRecord {
    #[serde(flatten)]
    pub params: AugParams,
    pub sources: Vec<String>,
    pub seed: u64,
}

impl AugRecord {
    pub fn new(params: AugParams, sources: Vec<String>) -> Self {
        AugRecord {
            params,
            sources,
            seed: 0,
        }
    }

    pub fn none(source: &str, seed: u64) -> Self {
        AugRecord {
            params: AugParams::None,
            sources: vec![source.to_string()],
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> AugKind {
        match self.params {
            AugParams::Freeze { .. } => AugKind::Freeze,
            AugParams::Mixup { .. } => AugKind::Mixup,
            AugParams::CutmixWindow { .. } => AugKind::CutmixWindow,
            AugParams::CutmixView { .. } => AugKind::CutmixView,
            AugParams::None => AugKind::None,
        }
    }

    pub(crate) fn set_fit(&mut self, target: usize) {
        match &mut self.params {
            AugParams::Mixup { fit, .. } | AugParams::CutmixWindow { fit, .. } => *fit = Some(target),
            _ => {}
        }
    }

    /// Re-applies the recorded parameters. `inputs[0]` is the primary
    /// clip, `inputs[1]` the partner for two-clip augmentations.
    pub fn replay(&self, inputs: &[(&ClipVolume, &LabelTrack)]) -> Result<(ClipVolume, LabelTrack)> {
        let primary = inputs
            .first()
            .ok_or_else(|| VolaugError::Param("replay needs at least one source".into()))?;
        let partner = || {
            inputs
                .get(1)
                .ok_or_else(|| VolaugError::Param("replay needs a partner clip".into()))
        };
        let fitted = |(clip, labels, _): (ClipVolume, LabelTrack, AugRecord), fit: Option<usize>| match fit {
            Some(t) => fit_length(&clip, &labels, t),
            None => Ok((clip, labels)),
        };
        match &self.params {
            AugParams::Freeze { segments } => {
                let (c, l, _) = freeze_multi(primary.0, primary.1, segments)?;
                Ok((c, l))
            }
            AugParams::Mixup { r, hard, fit, .. } => {
                let (c2, l2) = partner()?;
                let out = if *hard {
                    mixup_hard(primary.0, primary.1, c2, l2, *r)?
                } else {
                    mixup(primary.0, primary.1, c2, l2, *r)?
                };
                fitted(out, *fit)
            }
            AugParams::CutmixWindow { r, delta, fit, .. } => {
                let (c2, l2) = partner()?;
                fitted(cutmix_window(primary.0, primary.1, c2, l2, *r, *delta)?, *fit)
            }
            AugParams::CutmixView { delta } => {
                let (c2, l2) = partner()?;
                let (c, l, _) = cutmix_view(primary.0, primary.1, c2, l2, *delta)?;
                Ok((c, l))
            }
            AugParams::None => Ok((primary.0.clone(), primary.1.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let rec = AugRecord::new(
            AugParams::Mixup {
                r: 3,
                scenario: Scenario::Sandwich,
                hard: false,
                fit: None,
            },
            vec!["a".into(), "b".into()],
        )
        .with_seed(17);
        let s = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"mixup","r":3,"scenario":2,"hard":false,"sources":["a","b"],"seed":17}"#
        );
        let back: AugRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.kind(), AugKind::Mixup);
    }
}
