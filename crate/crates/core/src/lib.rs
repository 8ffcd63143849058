//! Self-supervised temporal-detection pretraining data from single-action
//! clips.
//!
//! Video-level labels become frame-level pseudo labels, and three volume
//! augmentations introduce action segments and multi-action frames:
//!
//! * [`freeze`]: repeat a frame to carve out a background segment;
//! * [`mixup`]: blend two clips under a temporally seamless alpha mask;
//! * [`cutmix`]: composite two clips with a moving or fixed vertical split.
//!
//! [`policy`] combines them, [`eval`] scores per-frame predictions, and
//! [`pipeline`] drives deterministic batch generation over VVOL clip files.

pub mod cutmix;
pub mod error;
pub mod eval;
pub mod freeze;
pub mod mixup;
pub mod par;
pub mod pipeline;
pub mod policy;
pub mod pseudo_label;
pub mod record;
pub mod rng;
pub mod volume;
pub mod vvol;
pub mod window;

pub use cutmix::{cutmix_view, cutmix_window, sample_cutmix_params, spatial_mask, CutMixMode, CutMixParams};
pub use error::{Result, VolaugError};
pub use eval::{average_precision, map_charades_protocol, map_per_frame, split_statistics, EvalReport, SplitMaps};
pub use freeze::{freeze, freeze_multi, sample_freeze_params, FreezeSegment};
pub use mixup::{alpha_mask, alpha_mask_at_resolution, mixup, mixup_hard, sample_mixup_shift};
pub use pipeline::{run_pipeline, PipelineConfig, PolicySpec, RunLog};
pub use policy::{ensemble, joint_policy, AugProbs, PolicyConfig, PredictionTrack, Sample};
pub use pseudo_label::pseudo_label;
pub use record::{AugKind, AugParams, AugRecord};
pub use rng::{derive_seed, sample_rng, SampleRng};
pub use volume::{mask_area, truncate01, AlphaMask, ClipVolume, Dtype, FrameData, LabelTrack, Scenario, SpatialMask};
pub use window::window_sample;
