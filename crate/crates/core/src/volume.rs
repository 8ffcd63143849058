//! Clip and label containers plus the mask primitives shared by every
//! augmentation.
//!
//! Frame indices are 0-based throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolaugError};

/// Slack allowed on per-frame label mass when validating soft labels.
pub const MASS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::U8),
            1 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

/// Raw pixel storage, `t`-major then `h`, `w`, `c`.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl FrameData {
    pub fn dtype(&self) -> Dtype {
        match self {
            FrameData::U8(_) => Dtype::U8,
            FrameData::F32(_) => Dtype::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FrameData::U8(v) => v.len(),
            FrameData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A pixel type an augmentation can operate on.
///
/// Blending happens in `f32`. `u8` outputs are rounded half-to-even and
/// `f32` outputs are clamped to `[0, 1]`.
pub trait Pixel: Copy + PartialEq + Send + Sync + 'static {
    const ZERO: Self;

    fn to_f32(self) -> f32;

    fn from_f32(v: f32) -> Self;

    fn view(data: &FrameData) -> Option<&[Self]>;

    fn wrap(data: Vec<Self>) -> FrameData;

    /// `weight * x + (1 - weight) * y`, with equal operands passed through.
    #[inline]
    fn blend(weight: f32, x: Self, y: Self) -> Self {
        let v = Self::from_f32(weight * x.to_f32() + (1.0 - weight) * y.to_f32());
        if x == y {
            x
        } else {
            v
        }
    }
}

impl Pixel for u8 {
    const ZERO: Self = 0;

    #[inline]
    fn to_f32(self) -> f32 {
        self as f32
    }

    #[inline]
    fn from_f32(v: f32) -> Self {
        // Adding and subtracting 2^23 rounds half-to-even in the default
        // rounding mode; the same as `round_ties_even` on [0, 255].
        const SHIFT: f32 = 8_388_608.0;
        let c = v.clamp(0.0, 255.0);
        ((c + SHIFT) - SHIFT) as u8
    }

    fn view(data: &FrameData) -> Option<&[Self]> {
        match data {
            FrameData::U8(v) => Some(v),
            FrameData::F32(_) => None,
        }
    }

    fn wrap(data: Vec<Self>) -> FrameData {
        FrameData::U8(data)
    }
}

impl Pixel for f32 {
    const ZERO: Self = 0.0;

    #[inline]
    fn to_f32(self) -> f32 {
        self
    }

    #[inline]
    fn from_f32(v: f32) -> Self {
        v.clamp(0.0, 1.0)
    }

    fn view(data: &FrameData) -> Option<&[Self]> {
        match data {
            FrameData::F32(v) => Some(v),
            FrameData::U8(_) => None,
        }
    }

    fn wrap(data: Vec<Self>) -> FrameData {
        FrameData::F32(data)
    }
}

/// A `T×H×W×C` video clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipVolume {
    id: String,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    data: FrameData,
}

impl ClipVolume {
    /// Builds a clip and checks shape and value ranges.
    ///
    /// Single-frame clips are accepted so that window sampling with a
    /// window of one is representable; the augmentations reject them.
    pub fn new(
        id: impl Into<String>,
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: FrameData,
    ) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(VolaugError::InvalidClip(format!(
                "empty dimension in {frames}x{height}x{width}x{channels}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(VolaugError::InvalidClip(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = frames * height * width * channels;
        if data.len() != expected {
            return Err(VolaugError::InvalidClip(format!(
                "data length {} does not match shape ({expected})",
                data.len()
            )));
        }
        if let FrameData::F32(values) = &data {
            if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(VolaugError::InvalidClip(format!("f32 pixel {bad} outside [0, 1]")));
            }
        }
        Ok(ClipVolume {
            id: id.into(),
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub(crate) fn from_parts<P: Pixel>(
        id: impl Into<String>,
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<P>,
    ) -> Self {
        debug_assert_eq!(data.len(), frames * height * width * channels);
        ClipVolume {
            id: id.into(),
            frames,
            height,
            width,
            channels,
            data: P::wrap(data),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &FrameData {
        &self.data
    }

    /// Elements per frame, `H·W·C`.
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub(crate) fn pixels<P: Pixel>(&self) -> &[P] {
        P::view(&self.data).expect("pixel type dispatched from dtype")
    }

    pub(crate) fn frame<P: Pixel>(&self, t: usize) -> &[P] {
        let n = self.frame_len();
        &self.pixels::<P>()[t * n..(t + 1) * n]
    }

    /// True when both clips share `H`, `W`, `C` and dtype.
    pub fn same_geometry(&self, other: &ClipVolume) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
            && self.dtype() == other.dtype()
    }

    pub(crate) fn check_geometry(&self, other: &ClipVolume) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(VolaugError::Geometry(format!(
                "{}x{}x{} {:?} vs {}x{}x{} {:?}",
                self.height,
                self.width,
                self.channels,
                self.dtype(),
                other.height,
                other.width,
                other.channels,
                other.dtype()
            )))
        }
    }

    /// Gathers the given frames, in order, into a new clip with the same id.
    pub fn select_frames(&self, indices: &[usize]) -> Result<ClipVolume> {
        if indices.is_empty() {
            return Err(VolaugError::InvalidClip("no frames selected".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.frames) {
            return Err(VolaugError::Param(format!(
                "frame index {bad} out of range for {} frames",
                self.frames
            )));
        }
        Ok(match self.dtype() {
            Dtype::U8 => self.gather::<u8>(indices),
            Dtype::F32 => self.gather::<f32>(indices),
        })
    }

    fn gather<P: Pixel>(&self, indices: &[usize]) -> ClipVolume {
        let mut out = Vec::with_capacity(indices.len() * self.frame_len());
        for &i in indices {
            out.extend_from_slice(self.frame::<P>(i));
        }
        ClipVolume::from_parts(
            self.id.clone(),
            indices.len(),
            self.height,
            self.width,
            self.channels,
            out,
        )
    }
}

/// Per-frame labels, a `T×K` matrix with entries in `[0, 1]`.
///
/// Augmented tracks are soft labels whose rows sum to at most one; all-zero
/// rows mark background. Multi-label ground truth used for evaluation may
/// have several active classes per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    num_classes: usize,
    weights: Vec<f64>,
}

impl LabelTrack {
    pub fn new(num_classes: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if num_classes == 0 {
            return Err(VolaugError::InvalidLabels("num_classes must be >= 1".into()));
        }
        let mut weights = Vec::with_capacity(rows.len() * num_classes);
        for (t, row) in rows.into_iter().enumerate() {
            if row.len() != num_classes {
                return Err(VolaugError::InvalidLabels(format!(
                    "row {t} has {} entries, expected {num_classes}",
                    row.len()
                )));
            }
            weights.extend(row);
        }
        Self::from_flat(num_classes, weights)
    }

    pub fn from_flat(num_classes: usize, weights: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || !weights.len().is_multiple_of(num_classes) {
            return Err(VolaugError::InvalidLabels(format!(
                "{} weights do not form rows of {num_classes}",
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(VolaugError::InvalidLabels(format!("weight {bad} outside [0, 1]")));
        }
        Ok(LabelTrack { num_classes, weights })
    }

    /// Checks that every row is a soft label (mass at most one). Multi-label
    /// ground truth may exceed this; augmentation inputs may not.
    pub fn check_soft(&self) -> Result<()> {
        for t in 0..self.len() {
            let mass = self.mass(t);
            if mass > 1.0 + MASS_EPS {
                return Err(VolaugError::InvalidLabels(format!("row {t} has label mass {mass} > 1")));
            }
        }
        Ok(())
    }

    /// All-zero (background) track.
    pub fn zeros(frames: usize, num_classes: usize) -> Self {
        LabelTrack {
            num_classes,
            weights: vec![0.0; frames * num_classes],
        }
    }

    pub(crate) fn from_flat_unchecked(num_classes: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len() % num_classes, 0);
        LabelTrack { num_classes, weights }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.weights.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.weights[t * self.num_classes..(t + 1) * self.num_classes]
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.weights[t * self.num_classes + k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of the row at frame `t`.
    pub fn mass(&self, t: usize) -> f64 {
        self.row(t).iter().sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.num_classes)
    }

    pub fn select_rows(&self, indices: &[usize]) -> LabelTrack {
        let mut out = Vec::with_capacity(indices.len() * self.num_classes);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        LabelTrack::from_flat_unchecked(self.num_classes, out)
    }

    /// Appends a dedicated background class `K` that takes the frame's
    /// missing mass, so every row sums to one.
    pub fn with_background_channel(&self) -> LabelTrack {
        let k = self.num_classes;
        let mut out = Vec::with_capacity(self.len() * (k + 1));
        for row in self.rows() {
            out.extend_from_slice(row);
            let mass: f64 = row.iter().sum();
            out.push((1.0 - mass).clamp(0.0, 1.0));
        }
        LabelTrack::from_flat_unchecked(k + 1, out)
    }
}

#[derive(Serialize, Deserialize)]
struct LabelTrackJson {
    num_classes: usize,
    weights: Vec<Vec<f64>>,
}

impl Serialize for LabelTrack {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LabelTrackJson {
            num_classes: self.num_classes,
            weights: self.rows().map(<[f64]>::to_vec).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelTrack {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = LabelTrackJson::deserialize(d)?;
        LabelTrack::new(raw.num_classes, raw.weights).map_err(serde::de::Error::custom)
    }
}

/// Clamps a finite value into `[0, 1]`.
pub fn truncate01(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(VolaugError::NonFiniteMask);
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Which way the blend travels across the output clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Scenario {
    /// `n2 + r >= n1`: clip 1 hands over to clip 2.
    Handover,
    /// Clip 2 sits inside clip 1: clip 1, clip 2, clip 1.
    Sandwich,
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        match s {
            Scenario::Handover => 1,
            Scenario::Sandwich => 2,
        }
    }
}

impl TryFrom<u8> for Scenario {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Scenario::Handover),
            2 => Ok(Scenario::Sandwich),
            other => Err(format!("unknown scenario {other}")),
        }
    }
}

/// Per-frame blend weight of clip 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMask {
    pub values: Vec<f64>,
    pub scenario: Scenario,
    pub n1: usize,
    pub n2: usize,
    pub r: usize,
}

impl AlphaMask {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Vertical-split spatial mask. Every row is the same, so only one row is
/// stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMask {
    pub height: usize,
    pub width: usize,
    pub split_column: usize,
    pub delta: usize,
    pub row: Vec<f64>,
}

impl SpatialMask {
    pub fn value(&self, _i: usize, j: usize) -> f64 {
        self.row[j]
    }

    /// Mean over all `H·W` entries.
    pub fn area(&self) -> f64 {
        mask_area(self)
    }
}

/// Average of all mask elements.
pub fn mask_area(mask: &SpatialMask) -> f64 {
    if mask.width == 0 {
        return 0.0;
    }
    // Rows are identical, so the full mean equals the row mean.
    mask.row.iter().sum::<f64>() / mask.width as f64
}
