use serde::{Deserialize, Serialize};

use crate::error::{Result, VolaugError};
use crate::volume::LabelTrack;

/// One line of the source label manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub class: usize,
    /// Clip location; defaults to `<id>.vvol` next to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// Replicates a video-level class onto every frame as a one-hot row.
pub fn pseudo_label(clip_length: usize, class: usize, num_classes: usize) -> Result<LabelTrack> {
    if class >= num_classes {
        return Err(VolaugError::ClassOutOfRange { class, num_classes });
    }
    if clip_length == 0 {
        return Err(VolaugError::Param("clip length must be >= 1".into()));
    }
    let mut weights = vec![0.0; clip_length * num_classes];
    for row in weights.chunks_exact_mut(num_classes) {
        row[class] = 1.0;
    }
    Ok(LabelTrack::from_flat_unchecked(num_classes, weights))
}

/// Parses JSON-lines manifest text, skipping blank lines.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| VolaugError::Config(format!("manifest line {}: {e}", i + 1))))
        .collect()
}
