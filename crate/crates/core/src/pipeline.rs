//! Batch driver: reads a clip manifest, augments every batch and writes one
//! VVOL, label sidecar and provenance record per sample, plus a run log.
//!
//! Work is processed in waves of `workers + queue` batches. Batches within a
//! wave are augmented in parallel and written in manifest order by a single
//! writer, so at most one wave of clips is resident at a time. Every sample
//! draws from a seed derived from the global seed and its manifest index,
//! which makes the output independent of worker count and scheduling.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cutmix::CutMixMode;
use crate::error::{Result, VolaugError};
use crate::par;
use crate::policy::{joint_policy, AugProbs, AugmentedSample, PolicyConfig, Sample};
use crate::pseudo_label::{parse_manifest, pseudo_label, ManifestEntry};
use crate::record::AugRecord;
use crate::rng::{derive_seed, sample_rng};
use crate::vvol;
use crate::window::window_sample;

/// Mixed into the global seed for the per-batch augmentation draws so they
/// do not share a stream with per-sample seeds.
const BATCH_STREAM: u64 = 0x6261_7463_685f_7270;

pub const RUN_LOG: &str = "run_log.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingleAug {
    Freeze,
    Mixup,
    Cutmix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolicySpec {
    #[default]
    Joint,
    Single(SingleAug),
}

impl FromStr for PolicySpec {
    type Err = VolaugError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(PolicySpec::Joint),
            "single:vf" => Ok(PolicySpec::Single(SingleAug::Freeze)),
            "single:vm" => Ok(PolicySpec::Single(SingleAug::Mixup)),
            "single:vc" => Ok(PolicySpec::Single(SingleAug::Cutmix)),
            other => Err(VolaugError::Config(format!(
                "unknown policy {other:?} (expected joint or single:{{vf,vm,vc}})"
            ))),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicySpec::Joint => "joint",
            PolicySpec::Single(SingleAug::Freeze) => "single:vf",
            PolicySpec::Single(SingleAug::Mixup) => "single:vm",
            PolicySpec::Single(SingleAug::Cutmix) => "single:vc",
        })
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub policy: PolicySpec,
    /// Joint-policy probabilities for freeze, mixup, cutmix.
    pub probs: [f64; 3],
    /// Frames sampled from each source clip; `None` keeps the whole clip.
    pub window: Option<usize>,
    pub stride: usize,
    pub fit: Option<usize>,
    pub delta: Option<usize>,
    pub mode: CutMixMode,
    pub workers: usize,
    /// Batch size; mixup and cutmix partners come from the same batch.
    pub batch: usize,
    /// Extra batches held in flight beyond one per worker.
    pub queue: usize,
    pub num_classes: usize,
    pub hard: bool,
    pub freeze_segments: usize,
    /// Emit an explicit background class `K` instead of zero rows.
    pub background_channel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            policy: PolicySpec::Joint,
            probs: [0.5, 0.5, 0.5],
            window: Some(16),
            stride: 5,
            fit: None,
            delta: None,
            mode: CutMixMode::Window,
            workers: 1,
            batch: 8,
            queue: 2,
            num_classes: 400,
            hard: false,
            freeze_segments: 1,
            background_channel: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| VolaugError::Config(e.to_string()))
    }

    pub fn effective_probs(&self) -> AugProbs {
        match self.policy {
            PolicySpec::Joint => AugProbs::new(self.probs[0], self.probs[1], self.probs[2]),
            PolicySpec::Single(SingleAug::Freeze) => AugProbs::new(1.0, 0.0, 0.0),
            PolicySpec::Single(SingleAug::Mixup) => AugProbs::new(0.0, 1.0, 0.0),
            PolicySpec::Single(SingleAug::Cutmix) => AugProbs::new(0.0, 0.0, 1.0),
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            probs: self.effective_probs(),
            freeze_segments: self.freeze_segments,
            hard_mixup: self.hard,
            cutmix_mode: self.mode,
            delta: self.delta,
            fit: self.fit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = self.effective_probs();
        probs.validate()?;
        let positive = [
            ("workers", self.workers),
            ("batch", self.batch),
            ("stride", self.stride),
            ("num_classes", self.num_classes),
            ("freeze_segments", self.freeze_segments),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(VolaugError::Config(format!("{name} must be >= 1")));
            }
        }
        if matches!(self.window, Some(w) if w < 2) {
            return Err(VolaugError::Config("window must be >= 2 frames".into()));
        }
        if matches!(self.fit, Some(f) if f < 2) {
            return Err(VolaugError::Config("fit must be >= 2 frames".into()));
        }
        if self.delta == Some(0) {
            return Err(VolaugError::Config("delta must be >= 1".into()));
        }
        if self.mode == CutMixMode::View && probs.cutmix > 0.0 {
            let base = self
                .window
                .ok_or_else(|| VolaugError::Config("view mode needs equal clip lengths: set a window".into()))?;
            if probs.mixup > 0.0 && self.fit != Some(base) {
                return Err(VolaugError::Config(format!(
                    "view mode after mixup needs fit = window ({base}) to keep clip lengths equal"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON config. Worker and queue counts are
    /// left out since they cannot change the output.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        canonical.queue = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleLog {
    pub index: usize,
    pub id: String,
    pub kind: String,
    pub file: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipLog {
    pub index: usize,
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub config_hash: String,
    pub config: PipelineConfig,
    pub num_samples: usize,
    pub num_skipped: usize,
    pub samples: Vec<SampleLog>,
    pub skipped: Vec<SkipLog>,
    /// Most clips resident at once.
    pub peak_buffers: usize,
    /// Upper bound on `peak_buffers`: `(workers + queue) * batch`.
    pub buffer_limit: usize,
}

impl RunLog {
    pub fn exit_code(&self) -> i32 {
        if self.skipped.is_empty() {
            0
        } else {
            2
        }
    }
}

/// Provenance written next to every output sample.
#[derive(Debug, Serialize)]
struct SampleRecordJson<'a> {
    index: usize,
    source: &'a str,
    class: usize,
    seed: u64,
    steps: &'a [AugRecord],
    notes: &'a [String],
}

struct SampleOutput {
    log: SampleLog,
    stem: String,
    vvol: Vec<u8>,
    labels: Vec<u8>,
    record: Vec<u8>,
}

struct BatchOutput {
    samples: Vec<SampleOutput>,
    skipped: Vec<SkipLog>,
    resident: usize,
}

struct BufferGauge {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl BufferGauge {
    fn acquire(&self, n: usize) {
        let now = self.live.fetch_add(n, Ordering::SeqCst) + n;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn release(&self, n: usize) {
        self.live.fetch_sub(n, Ordering::SeqCst);
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn sample_seed(global: u64, index: usize) -> u64 {
    derive_seed(global, index as u64)
}

pub fn batch_seed(global: u64, batch_index: usize) -> u64 {
    derive_seed(global ^ BATCH_STREAM, batch_index as u64)
}

fn load_sample(entry: &ManifestEntry, base: &Path, cfg: &PipelineConfig) -> Result<Sample> {
    let path = match &entry.path {
        Some(p) => base.join(p),
        None => base.join(format!("{}.vvol", entry.id)),
    };
    let clip = vvol::read_file(&path)?.with_id(entry.id.clone());
    let labels = pseudo_label(clip.len(), entry.class, cfg.num_classes)?;
    match cfg.window {
        Some(w) => {
            let (c, l) = window_sample(&clip, &labels, w, cfg.stride, 0)?;
            Ok(Sample::new(c, l))
        }
        None => Ok(Sample::new(clip, labels)),
    }
}

fn encode_sample(
    index: usize,
    entry: &ManifestEntry,
    out: AugmentedSample,
    cfg: &PipelineConfig,
) -> Result<SampleOutput> {
    let labels = if cfg.background_channel {
        out.labels.with_background_channel()
    } else {
        out.labels.clone()
    };
    let kind = out.kind_label();
    let stem = format!("{}__{}__{:016x}", sanitize(&entry.id), kind, out.seed);
    let vvol = vvol::encode(&out.clip);
    let labels = serde_json::to_vec(&labels)?;
    let record = serde_json::to_vec(&SampleRecordJson {
        index,
        source: &out.source,
        class: entry.class,
        seed: out.seed,
        steps: &out.steps,
        notes: &out.notes,
    })?;
    let mut h = Sha256::new();
    h.update(&vvol);
    h.update(&labels);
    h.update(&record);
    Ok(SampleOutput {
        log: SampleLog {
            index,
            id: entry.id.clone(),
            kind,
            file: format!("{stem}.vvol"),
            digest: hex::encode(h.finalize()),
        },
        stem,
        vvol,
        labels,
        record,
    })
}

fn process_batch(
    batch_index: usize,
    first_index: usize,
    entries: &[ManifestEntry],
    base: &Path,
    cfg: &PipelineConfig,
    gauge: &BufferGauge,
) -> Result<BatchOutput> {
    let mut loaded = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();
    for (offset, entry) in entries.iter().enumerate() {
        let index = first_index + offset;
        match load_sample(entry, base, cfg) {
            Ok(s) => loaded.push((index, entry, s)),
            Err(e) => {
                log::error!("skipping sample {index} ({}): {e}", entry.id);
                skipped.push(SkipLog {
                    index,
                    id: entry.id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    let resident = loaded.len();
    gauge.acquire(resident);

    let seeds: Vec<u64> = loaded.iter().map(|(i, _, _)| sample_seed(cfg.seed, *i)).collect();
    let (meta, samples): (Vec<_>, Vec<_>) = loaded.into_iter().map(|(i, e, s)| ((i, e), s)).unzip();
    let mut batch_rng = sample_rng(batch_seed(cfg.seed, batch_index));
    let (_, augmented) = joint_policy(&samples, &cfg.policy_config(), &mut batch_rng, &seeds)?;
    drop(samples);

    let samples = meta
        .into_iter()
        .zip(augmented)
        .map(|((index, entry), out)| encode_sample(index, entry, out, cfg))
        .collect::<Result<_>>()?;
    Ok(BatchOutput {
        samples,
        skipped,
        resident,
    })
}

fn write_sample(out_dir: &Path, s: &SampleOutput) -> Result<()> {
    fs::write(out_dir.join(format!("{}.vvol", s.stem)), &s.vvol)?;
    fs::write(out_dir.join(format!("{}.labels.json", s.stem)), &s.labels)?;
    fs::write(out_dir.join(format!("{}.record.json", s.stem)), &s.record)?;
    Ok(())
}

/// Runs the pipeline over manifest entries whose clip paths resolve
/// against `base`.
pub fn run_entries(entries: &[ManifestEntry], base: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<RunLog> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let gauge = BufferGauge {
        live: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    };
    let batches: Vec<(usize, &[ManifestEntry])> = entries.chunks(cfg.batch).enumerate().collect();
    let wave = cfg.workers + cfg.queue;
    let mut samples = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();

    for chunk in batches.chunks(wave) {
        let results = par::with_workers(cfg.workers, || {
            par::map(chunk, |_, &(b, entries)| {
                process_batch(b, b * cfg.batch, entries, base, cfg, &gauge)
            })
        });
        for result in results {
            let batch = result?;
            for s in &batch.samples {
                write_sample(out_dir, s)?;
            }
            gauge.release(batch.resident);
            samples.extend(batch.samples.into_iter().map(|s| s.log));
            skipped.extend(batch.skipped);
        }
    }

    if entries.is_empty() {
        log::info!("manifest is empty; zero samples written");
    }
    let log = RunLog {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        num_samples: samples.len(),
        num_skipped: skipped.len(),
        samples,
        skipped,
        peak_buffers: gauge.peak.load(Ordering::SeqCst),
        buffer_limit: wave * cfg.batch,
    };
    fs::write(out_dir.join(RUN_LOG), serde_json::to_vec_pretty(&log)?)?;
    Ok(log)
}

/// Reads a JSON-lines manifest and runs the pipeline. Clip paths resolve
/// relative to the manifest's directory.
pub fn run_pipeline(manifest: impl AsRef<Path>, out_dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<RunLog> {
    let manifest = manifest.as_ref();
    let text = fs::read_to_string(manifest)?;
    let entries = parse_manifest(&text)?;
    let base: PathBuf = manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    run_entries(&entries, &base, out_dir.as_ref(), cfg)
}
