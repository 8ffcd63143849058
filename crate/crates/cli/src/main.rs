use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use volaug_core::cutmix::{cutmix_view, cutmix_window, default_delta, sample_cutmix_params, spatial_mask, CutMixMode};
use volaug_core::eval::{evaluate, EvalOptions, Protocol, DEFAULT_DILATION};
use volaug_core::freeze::{freeze_multi, sample_freeze_params};
use volaug_core::mixup::{alpha_mask, alpha_mask_at_resolution, mixup, mixup_hard, sample_mixup_shift};
use volaug_core::pipeline::{run_pipeline, PipelineConfig, PolicySpec};
use volaug_core::policy::{ensemble_with, AugProbs, Combiner, PredictionTrack};
use volaug_core::window::fit_length;
use volaug_core::{sample_rng, vvol, AugRecord, ClipVolume, LabelTrack};

#[derive(Parser)]
#[command(
    name = "volaug",
    version,
    about = "Volume augmentations for temporal detection pretraining"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Freeze random segments of one clip into background.
    Freeze(FreezeArgs),
    /// Blend two clips under a temporal alpha mask.
    Mixup(MixupArgs),
    /// Composite two clips with a vertical split.
    Cutmix(CutmixArgs),
    /// Print a mask as JSON.
    #[command(subcommand)]
    Mask(MaskCommand),
    /// Augment every clip of a manifest.
    Pipeline(PipelineArgs),
    /// Average prediction tracks.
    Ensemble(EnsembleArgs),
    /// Per-frame mAP of prediction tracks against truth tracks.
    Eval(EvalArgs),
    /// Print the header fields of a VVOL file.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct FreezeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    segments: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    labels_a: PathBuf,
    #[arg(long)]
    labels_b: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MixupArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    hard: bool,
    #[arg(long)]
    fit: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Window,
    View,
}

impl From<ModeArg> for CutMixMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Window => CutMixMode::Window,
            ModeArg::View => CutMixMode::View,
        }
    }
}

#[derive(Args)]
struct CutmixArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_enum, default_value = "window")]
    mode: ModeArg,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    fit: Option<usize>,
}

#[derive(Subcommand)]
enum MaskCommand {
    /// Temporal alpha mask.
    Mixup {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        out_res: Option<usize>,
    },
    /// One row of the spatial mask.
    Cutmix {
        #[arg(long)]
        w: usize,
        #[arg(long)]
        wt: usize,
        #[arg(long)]
        delta: usize,
        #[arg(long, default_value_t = 1)]
        h: usize,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PolicySpec>,
    #[arg(long)]
    probs: Option<AugProbs>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    fit: Option<usize>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    hard: bool,
    #[arg(long)]
    background_channel: bool,
}

#[derive(Args)]
struct EnsembleArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    geometric: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    PerFrame,
    Charades25,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "per-frame")]
    protocol: ProtocolArg,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DILATION)]
    dilation: usize,
    #[arg(long)]
    report: PathBuf,
}

fn load_pair(p: &PairArgs) -> Result<(ClipVolume, LabelTrack, ClipVolume, LabelTrack)> {
    let c1 = vvol::read_file(&p.a).with_context(|| format!("reading {}", p.a.display()))?;
    let c2 = vvol::read_file(&p.b).with_context(|| format!("reading {}", p.b.display()))?;
    let l1 = vvol::read_labels(&p.labels_a).with_context(|| format!("reading {}", p.labels_a.display()))?;
    let l2 = vvol::read_labels(&p.labels_b).with_context(|| format!("reading {}", p.labels_b.display()))?;
    Ok((c1, l1, c2, l2))
}

fn write_outputs(dir: &Path, clip: &ClipVolume, labels: &LabelTrack, record: &AugRecord) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}__{}__{:016x}", clip.id(), record.kind().as_str(), record.seed);
    let path = dir.join(format!("{stem}.vvol"));
    vvol::write_file(&path, clip)?;
    vvol::write_labels(dir.join(format!("{stem}.labels.json")), labels)?;
    fs::write(
        dir.join(format!("{stem}.record.json")),
        serde_json::to_vec_pretty(record)?,
    )?;
    println!("{}", path.display());
    Ok(path)
}

fn run_freeze(args: FreezeArgs) -> Result<()> {
    let clip = vvol::read_file(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let labels = vvol::read_labels(&args.labels)?;
    if args.segments == 0 {
        bail!("--segments must be >= 1");
    }
    let mut rng = sample_rng(args.seed);
    let segments = (0..args.segments)
        .map(|_| sample_freeze_params(clip.len(), &mut rng))
        .collect::<volaug_core::Result<Vec<_>>>()?;
    let (c, l, rec) = freeze_multi(&clip, &labels, &segments)?;
    write_outputs(&args.out_dir, &c, &l, &rec.with_seed(args.seed))?;
    Ok(())
}

fn run_mixup(args: MixupArgs) -> Result<()> {
    let (c1, l1, c2, l2) = load_pair(&args.pair)?;
    let mut rng = sample_rng(args.pair.seed);
    let r = sample_mixup_shift(c1.len(), c2.len(), &mut rng)?;
    let (mut c, mut l, mut rec) = if args.hard {
        mixup_hard(&c1, &l1, &c2, &l2, r)?
    } else {
        mixup(&c1, &l1, &c2, &l2, r)?
    };
    if let Some(t) = args.fit {
        (c, l) = fit_length(&c, &l, t)?;
        if let volaug_core::AugParams::Mixup { fit, .. } = &mut rec.params {
            *fit = Some(t);
        }
    }
    write_outputs(&args.pair.out_dir, &c, &l, &rec.with_seed(args.pair.seed))?;
    Ok(())
}

fn run_cutmix(args: CutmixArgs) -> Result<()> {
    let (c1, l1, c2, l2) = load_pair(&args.pair)?;
    let mut rng = sample_rng(args.pair.seed);
    let delta = args.delta.unwrap_or_else(|| default_delta(c1.width()));
    let params = sample_cutmix_params(c1.len(), c2.len(), args.mode.into(), delta, &mut rng)?;
    let (mut c, mut l, mut rec) = match params.mode {
        CutMixMode::Window => cutmix_window(&c1, &l1, &c2, &l2, params.r, delta)?,
        CutMixMode::View => cutmix_view(&c1, &l1, &c2, &l2, delta)?,
    };
    if let Some(t) = args.fit {
        match &mut rec.params {
            volaug_core::AugParams::CutmixWindow { fit, .. } => {
                (c, l) = fit_length(&c, &l, t)?;
                *fit = Some(t);
            }
            _ => bail!("--fit applies to the window mode only"),
        }
    }
    write_outputs(&args.pair.out_dir, &c, &l, &rec.with_seed(args.pair.seed))?;
    Ok(())
}

fn run_mask(cmd: MaskCommand) -> Result<()> {
    let json = match cmd {
        MaskCommand::Mixup { n1, n2, r, out_res } => {
            let mask = match out_res {
                Some(len) => alpha_mask_at_resolution(n1, n2, r, len)?,
                None => alpha_mask(n1, n2, r)?,
            };
            serde_json::to_value(&mask)?
        }
        MaskCommand::Cutmix { w, wt, delta, h } => {
            let mask = spatial_mask(h, w, wt, delta)?;
            let mut v = serde_json::to_value(&mask)?;
            v["area"] = serde_json::json!(mask.area());
            v
        }
    };
    println!("{}", serde_json::to_string(&json)?);
    Ok(())
}

fn run_pipeline_cmd(args: PipelineArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(p) => {
            PipelineConfig::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.policy {
        cfg.policy = v;
    }
    if let Some(p) = args.probs {
        cfg.probs = [p.freeze, p.mixup, p.cutmix];
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = args.window {
        cfg.window = Some(v);
    }
    if let Some(v) = args.stride {
        cfg.stride = v;
    }
    if let Some(v) = args.fit {
        cfg.fit = Some(v);
    }
    if let Some(v) = args.delta {
        cfg.delta = Some(v);
    }
    if let Some(v) = args.mode {
        cfg.mode = v.into();
    }
    if let Some(v) = args.batch {
        cfg.batch = v;
    }
    if let Some(v) = args.num_classes {
        cfg.num_classes = v;
    }
    cfg.hard |= args.hard;
    cfg.background_channel |= args.background_channel;

    let started = std::time::Instant::now();
    let log = run_pipeline(&args.manifest, &args.out, &cfg)?;
    let secs = started.elapsed().as_secs_f64();
    eprintln!(
        "{} samples, {} skipped in {:.2}s ({:.1} samples/s), peak {} resident clips",
        log.num_samples,
        log.num_skipped,
        secs,
        log.num_samples as f64 / secs.max(1e-9),
        log.peak_buffers
    );
    Ok(log.exit_code() as u8)
}

fn run_ensemble(args: EnsembleArgs) -> Result<()> {
    let tracks = args
        .inputs
        .iter()
        .map(|p| -> Result<PredictionTrack> {
            Ok(serde_json::from_slice(
                &fs::read(p).with_context(|| format!("reading {}", p.display()))?,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    let combiner = if args.geometric {
        Combiner::Geometric
    } else {
        Combiner::Mean
    };
    let out = ensemble_with(&tracks, combiner)?;
    fs::write(&args.out, serde_json::to_vec(&out)?)?;
    Ok(())
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
    let arr = match &v {
        serde_json::Value::Object(m) => m.get("weights").cloned().unwrap_or_default(),
        other => other.clone(),
    };
    serde_json::from_value(arr).context("weights must be a list of numbers")
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for truth_path in json_files(&args.truth)? {
        let name = truth_path.file_name().expect("listed file");
        let id = truth_path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let pred_path = args.preds.join(name);
        let truth: LabelTrack =
            serde_json::from_slice(&fs::read(&truth_path)?).with_context(|| format!("truth for video {id}"))?;
        let pred: PredictionTrack =
            serde_json::from_slice(&fs::read(&pred_path).with_context(|| format!("no predictions for video {id}"))?)
                .with_context(|| format!("predictions for video {id}"))?;
        if pred.len() != truth.len() || pred.num_classes() != truth.num_classes() {
            bail!(
                "video {id}: prediction {}x{} vs truth {}x{}",
                pred.len(),
                pred.num_classes(),
                truth.len(),
                truth.num_classes()
            );
        }
        preds.push(pred);
        truths.push(truth);
    }
    let opts = EvalOptions {
        protocol: match args.protocol {
            ProtocolArg::PerFrame => Protocol::PerFrame,
            ProtocolArg::Charades25 => Protocol::Charades25,
        },
        class_weights: args.weights.as_deref().map(read_weights).transpose()?,
        dilation: args.dilation,
    };
    let report = evaluate(&preds, &truths, &opts)?;
    fs::write(&args.report, serde_json::to_vec_pretty(&report)?)?;
    match report.map {
        Some(m) => println!("mAP {m:.2}% over {} videos", preds.len()),
        None => println!("mAP undefined: no positive frames"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Freeze(a) => run_freeze(a)?,
        Command::Mixup(a) => run_mixup(a)?,
        Command::Cutmix(a) => run_cutmix(a)?,
        Command::Mask(m) => run_mask(m)?,
        Command::Pipeline(a) => return run_pipeline_cmd(a),
        Command::Ensemble(a) => run_ensemble(a)?,
        Command::Eval(a) => run_eval(a)?,
        Command::Inspect { path } => {
            let header = vvol::read_header_file(&path).with_context(|| format!("reading {}", path.display()))?;
            println!("{}", serde_json::to_string_pretty(&header)?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
