//! The `kfuse` command line.
//!
//! Output layout under `--out`:
//!
//! | command      | files                                                          |
//! |--------------|----------------------------------------------------------------|
//! | `generalize` | `labels/v{k}/{shot}.jsonl` for k ≠ 5, `border_flags.jsonl`     |
//! | `infer`      | `{shot}.jsonl` (center-view coordinates)                       |
//! | `evaluate`   | `report.json` unless `--report` is given                       |
//! | `split`      | `folds.json`, `fold_{i}/train.txt`, `fold_{i}/val.txt`         |
//! | `synth`      | a complete dataset with `manifest.json` at the top             |

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use kfuse::eval::{self, FoldSpec, FrameSet};
use kfuse::fusion::{mv_infer, FusionMethod, FusionParams, MvConfig};
use kfuse::io::{self, DetectionFormat, DetectionTag, Strictness, ViewSource};
use kfuse::model::{validate_manifest, ClassTable, DatasetManifest, Detection, FrameEntry, ImageSize, ViewpointId};
use kfuse::synthgen::{self, DetectorNoise, SceneParams, SignMode};
use kfuse::warp::{forward_warp_set, BackwardMode, BorderAction, BorderMode, WarpPolicy};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input data or arguments; exit code 2.
    #[error("{0:#}")]
    Input(anyhow::Error),
    /// Anything else, e.g. unwritable output; exit code 1.
    #[error("{0:#}")]
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

trait Classify<T> {
    fn input(self) -> Result<T, CliError>;
    fn internal(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Input(e.into()))
    }

    fn internal(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Internal(e.into()))
    }
}

fn input_error(msg: impl std::fmt::Display) -> CliError {
    CliError::Input(anyhow!("{msg}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

/// Logs to stderr at `level`; a `KFUSE_LOG` filter string takes precedence.
pub fn init_logging(level: LogLevel) {
    let _ = env_logger::Builder::new()
        .filter_level(level.filter())
        .parse_env(env_logger::Env::new().filter("KFUSE_LOG"))
        .format_timestamp(None)
        .try_init();
}

#[derive(Debug, Parser)]
#[command(name = "kfuse", version, about = "Multi-view detection post-processing for kaleidoscopic images")]
pub struct Cli {
    /// Dataset manifest (paths inside are relative to its directory).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-frame work; output never depends on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Warp center-view labels into the eight other viewpoints.
    Generalize(GeneralizeArgs),
    /// Fuse per-view predictions into center-view detections.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Assign shots to cross-validation folds.
    Split(SplitArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Check a manifest and print its counts.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BorderArg {
    Drop,
    Clip,
}

impl From<BorderArg> for BorderMode {
    fn from(b: BorderArg) -> Self {
        match b {
            BorderArg::Drop => BorderMode::DropIfCenterOutside,
            BorderArg::Clip => BorderMode::ClipToFrame,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClampArgs {
    /// Clamp sampled displacements at zero (default).
    #[arg(long, conflicts_with = "no_clamp")]
    pub clamp: bool,
    /// Use signed displacements.
    #[arg(long)]
    pub no_clamp: bool,
}

impl ClampArgs {
    fn enabled(&self) -> bool {
        !self.no_clamp
    }
}

#[derive(Debug, Args)]
pub struct GeneralizeArgs {
    #[command(flatten)]
    pub clamp: ClampArgs,
    #[arg(long, value_enum, default_value_t = BorderArg::Clip)]
    pub border: BorderArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Wbf,
    Nmw,
    Nms,
}

impl From<MethodArg> for FusionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Wbf => FusionMethod::Wbf,
            MethodArg::Nmw => FusionMethod::Nmw,
            MethodArg::Nms => FusionMethod::Nms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackwardArg {
    Add,
    Fixed,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Wbf)]
    pub method: MethodArg,
    /// Clustering IoU threshold.
    #[arg(long, default_value_t = 0.55)]
    pub iou: f64,
    /// Drop fused detections scoring below this.
    #[arg(long)]
    pub conf: Option<f64>,
    /// Ignore input detections scoring below this before fusion.
    #[arg(long, default_value_t = 0.0)]
    pub skip: f64,
    #[arg(long, value_enum, default_value_t = BackwardArg::Add)]
    pub backward: BackwardArg,
    #[arg(long, default_value_t = 50)]
    pub max_iters: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[command(flatten)]
    pub clamp: ClampArgs,
    #[arg(long, value_enum, default_value_t = BorderArg::Drop)]
    pub border: BorderArg,
    /// IoU needed to snap a fused box onto a center-view detection.
    #[arg(long, default_value_t = 0.5)]
    pub match_iou: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory of per-frame prediction files (`{frame}.jsonl` or `.txt`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of per-frame ground-truth files.
    #[arg(long)]
    pub gt: PathBuf,
    /// Class table JSON, or a manifest whose class table to use.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Confidence cutoff for precision and recall.
    #[arg(long)]
    pub conf: Option<f64>,
    /// Where to write the JSON report (default: `<out>/report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Image size as `WxH`, needed for YOLO text files.
    #[arg(long, value_parser = parse_size)]
    pub image_size: Option<ImageSize>,
    /// Evaluate each fold of a `folds.json` separately and average.
    #[arg(long)]
    pub folds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 12)]
    pub components: usize,
    #[arg(long, default_value_t = 11)]
    pub num_classes: usize,
    #[arg(long, value_parser = parse_size, default_value = "640x416")]
    pub size: ImageSize,
    #[arg(long, default_value_t = 24.0)]
    pub min_box: f64,
    #[arg(long, default_value_t = 64.0)]
    pub max_box: f64,
    /// Largest component height; displacement is `gain * height`.
    #[arg(long, default_value_t = 4.0)]
    pub max_height: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gain: f64,
    /// Make every displacement non-negative.
    #[arg(long)]
    pub folded: bool,
    #[arg(long, default_value_t = 2.0)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.3)]
    pub miss: f64,
    #[arg(long, default_value_t = 1.0)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.05)]
    pub confusion: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Skip unknown manifest fields instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Check the manifest structure only, not the files it references.
    #[arg(long)]
    pub structure_only: bool,
}

fn parse_size(s: &str) -> Result<ImageSize, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width `{w}`"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height `{h}`"))?;
    if w == 0 || h == 0 {
        return Err("dimensions must be positive".into());
    }
    Ok(ImageSize::new(w, h))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs as usize);
    }
    let pool = pool.build().internal()?;
    pool.install(|| match &cli.command {
        Command::Generalize(args) => generalize(cli, args),
        Command::Infer(args) => infer(cli, args),
        Command::Evaluate(args) => evaluate(cli, args),
        Command::Split(args) => split(cli, args),
        Command::Synth(args) => synth(cli, args),
        Command::Validate(args) => validate(cli, args),
    })
}

fn require_out(cli: &Cli) -> Result<&Path, CliError> {
    cli.out.as_deref().ok_or_else(|| input_error("--out is required"))
}

fn load_manifest(cli: &Cli, strictness: Strictness) -> Result<(DatasetManifest, PathBuf), CliError> {
    let path = cli.manifest.as_deref().ok_or_else(|| input_error("--manifest is required"))?;
    let manifest = io::read_manifest(path, strictness).input()?;
    let root = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((manifest, root))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    io::write_file(path, text.as_bytes()).internal()
}

fn check_manifest(manifest: &DatasetManifest, root: &Path) -> Result<(), CliError> {
    validate_manifest(manifest, Some(root)).map(|_| ()).map_err(|errs| {
        for issue in &errs.issues {
            log::error!("{issue}");
        }
        CliError::Input(anyhow!(
            "manifest failed validation with {} issue(s): {}",
            errs.issues.len(),
            errs.issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
        ))
    })
}

#[derive(Serialize)]
struct FlagRecord<'a> {
    frame: &'a str,
    view: ViewpointId,
    index: usize,
    action: &'static str,
    class: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

struct GeneralizedFrame {
    shot_id: String,
    views: Vec<(ViewpointId, Vec<Detection>)>,
    flags: Vec<(ViewpointId, kfuse::warp::BorderFlag)>,
}

fn generalize_frame(root: &Path, entry: &FrameEntry, policy: &WarpPolicy) -> Result<GeneralizedFrame, CliError> {
    let center_rel = entry
        .labels
        .get(&ViewpointId::CENTER)
        .ok_or_else(|| input_error(format!("frame {}: no center-view labels", entry.shot_id)))?;
    let only_center = FrameEntry {
        labels: BTreeMap::from([(ViewpointId::CENTER, center_rel.clone())]),
        predictions: BTreeMap::new(),
        ..entry.clone()
    };
    let frame = io::load_frame(root, &only_center, ViewSource::Labels)
        .with_context(|| format!("frame {}", entry.shot_id))
        .input()?;
    let center = frame.view(ViewpointId::CENTER);
    let mut views = Vec::new();
    let mut flags = Vec::new();
    for view in ViewpointId::surrounding() {
        let field = frame.disparity(view).expect("frame validated");
        let warped = forward_warp_set(center, field, frame.image_size, policy);
        flags.extend(warped.flags.into_iter().map(|f| (view, f)));
        views.push((view, warped.boxes));
    }
    Ok(GeneralizedFrame {
        shot_id: entry.shot_id.clone(),
        views,
        flags,
    })
}

fn generalize(cli: &Cli, args: &GeneralizeArgs) -> Result<(), CliError> {
    let (manifest, root) = load_manifest(cli, Strictness::Strict)?;
    let out = require_out(cli)?;
    check_manifest(&manifest, &root)?;
    let policy = WarpPolicy {
        clamp_nonnegative: args.clamp.enabled(),
        border_mode: args.border.into(),
        ..WarpPolicy::labeling()
    };
    let frames: Vec<GeneralizedFrame> = manifest
        .frames
        .par_iter()
        .map(|entry| generalize_frame(&root, entry, &policy))
        .collect::<Result<_, _>>()?;

    let mut report = String::new();
    let mut files = 0;
    for f in &frames {
        for (view, dets) in &f.views {
            let tag = DetectionTag {
                frame: f.shot_id.clone(),
                view: *view,
            };
            let path = out.join(format!("labels/v{view}/{}.jsonl", f.shot_id));
            io::write_detections(&path, dets, DetectionFormat::JsonLines, None, &tag).internal()?;
            files += 1;
        }
        for (view, flag) in &f.flags {
            let b = flag.warped.bbox;
            let rec = FlagRecord {
                frame: &f.shot_id,
                view: *view,
                index: flag.index,
                action: match flag.action {
                    BorderAction::Dropped => "dropped",
                    BorderAction::Clipped => "clipped",
                    BorderAction::Kept => "kept",
                },
                class: flag.warped.class_id,
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
            };
            report.push_str(&serde_json::to_string(&rec).internal()?);
            report.push('\n');
        }
    }
    write_text(&out.join("border_flags.jsonl"), &report)?;
    let flagged: usize = frames.iter().map(|f| f.flags.len()).sum();
    println!(
        "generalized {} frame(s): {files} label file(s), {flagged} box(es) flagged for review",
        frames.len()
    );
    Ok(())
}

fn infer(cli: &Cli, args: &InferArgs) -> Result<(), CliError> {
    let (manifest, root) = load_manifest(cli, Strictness::Strict)?;
    let out = require_out(cli)?;
    let backward_mode = match args.backward {
        BackwardArg::Add => BackwardMode::DirectAdd,
        BackwardArg::Fixed => BackwardMode::FixedPoint {
            max_iters: args.max_iters,
            tol: args.tol,
        },
    };
    let config = MvConfig {
        method: args.method.into(),
        params: FusionParams {
            iou_threshold: args.iou,
            skip_score_threshold: args.skip,
            intermix_match_iou: args.match_iou,
            ..FusionParams::default()
        },
        policy: WarpPolicy {
            clamp_nonnegative: args.clamp.enabled(),
            border_mode: args.border.into(),
            backward_mode,
            ..WarpPolicy::inference()
        },
    };
    config.params.validate().input()?;
    config.policy.validate().input()?;
    if let Some(c) = args.conf {
        if !(0.0..=1.0).contains(&c) {
            return Err(input_error(format!("--conf {c} not in [0, 1]")));
        }
    }

    let results: Vec<(String, Vec<Detection>)> = manifest
        .frames
        .par_iter()
        .map(|entry| {
            if let Some(view) = ViewpointId::all().find(|v| !entry.predictions.contains_key(v)) {
                return Err(input_error(format!(
                    "frame {}: no predictions for viewpoint {view}",
                    entry.shot_id
                )));
            }
            let frame = io::load_frame(&root, entry, ViewSource::Predictions)
                .with_context(|| format!("frame {}", entry.shot_id))
                .input()?;
            let mut dets = mv_infer(&frame, &config)
                .with_context(|| format!("frame {}", entry.shot_id))
                .input()?;
            if let Some(c) = args.conf {
                dets.retain(|d| d.score.unwrap_or(0.0) >= c);
            }
            Ok((entry.shot_id.clone(), dets))
        })
        .collect::<Result<_, CliError>>()?;

    let mut total = 0;
    for (shot, dets) in &results {
        let tag = DetectionTag {
            frame: shot.clone(),
            view: ViewpointId::CENTER,
        };
        io::write_detections(&out.join(format!("{shot}.jsonl")), dets, DetectionFormat::JsonLines, None, &tag)
            .internal()?;
        total += dets.len();
    }
    println!("fused {} frame(s) into {total} detection(s)", results.len());
    Ok(())
}

fn read_class_table(path: &Path) -> Result<ClassTable, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| path.display().to_string())
        .input()?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| path.display().to_string())
        .input()?;
    let table = value.get("classes").cloned().unwrap_or(value);
    serde_json::from_value(table)
        .with_context(|| format!("{}: not a class table", path.display()))
        .input()
}

fn read_frame_dir(dir: &Path, image_size: Option<ImageSize>) -> Result<Vec<FrameSet>, CliError> {
    let entries = fs::read_dir(dir)
        .with_context(|| dir.display().to_string())
        .input()?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let path = entry.with_context(|| dir.display().to_string()).input()?.path();
        let Some(format) = DetectionFormat::from_path(&path) else {
            continue;
        };
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if files.insert(stem.to_string(), (path.clone(), format)).is_some() {
            return Err(input_error(format!("{}: frame {stem} appears twice", dir.display())));
        }
    }
    files
        .into_par_iter()
        .map(|(frame_id, (path, format))| {
            let dets = io::read_detections(&path, format, image_size).input()?;
            Ok(FrameSet::new(frame_id, dets))
        })
        .collect()
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<(), CliError> {
    let classes = match (&args.classes, &cli.manifest) {
        (Some(path), _) => read_class_table(path)?,
        (None, Some(_)) => load_manifest(cli, Strictness::Lenient)?.0.classes,
        (None, None) => return Err(input_error("--classes or --manifest is required")),
    };
    let preds = read_frame_dir(&args.pred, args.image_size)?;
    let gts = read_frame_dir(&args.gt, args.image_size)?;

    let report = match &args.folds {
        None => eval::evaluate(&preds, &gts, &classes, args.conf).input()?,
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| path.display().to_string())
                .input()?;
            let spec: FoldSpec = serde_json::from_str(&text)
                .with_context(|| path.display().to_string())
                .input()?;
            let known: BTreeSet<&str> = gts.iter().map(|g| g.frame_id.as_str()).collect();
            if let Some(missing) = spec.assignment.keys().find(|s| !known.contains(s.as_str())) {
                return Err(input_error(format!("fold file names frame {missing} with no ground truth")));
            }
            let mut reports = Vec::with_capacity(spec.k);
            for (i, fold) in spec.folds().iter().enumerate() {
                let ids: BTreeSet<&str> = fold.iter().map(String::as_str).collect();
                let pick = |sets: &[FrameSet]| -> Vec<FrameSet> {
                    sets.iter()
                        .filter(|s| ids.contains(s.frame_id.as_str()))
                        .cloned()
                        .collect()
                };
                let r = eval::evaluate(&pick(&preds), &pick(&gts), &classes, args.conf)
                    .with_context(|| format!("fold {i}"))
                    .input()?;
                println!(
                    "fold {i}: {} frame(s), mAP@0.5 {:.2}, mAP@0.5:0.95 {:.2}",
                    r.frames,
                    100.0 * r.map50,
                    100.0 * r.map50_95
                );
                reports.push(r);
            }
            eval::aggregate_folds(&reports).input()?
        }
    };
    print!("{}", report.to_table());
    if let Some(path) = report_path(cli, args) {
        write_text(&path, &report.to_json())?;
    }
    Ok(())
}

fn report_path(cli: &Cli, args: &EvaluateArgs) -> Option<PathBuf> {
    args.report.clone().or_else(|| cli.out.as_ref().map(|o| o.join("report.json")))
}

fn split(cli: &Cli, args: &SplitArgs) -> Result<(), CliError> {
    let (manifest, _) = load_manifest(cli, Strictness::Strict)?;
    let out = require_out(cli)?;
    let spec = eval::kfold_split(&manifest.shot_ids(), args.k, cli.seed).input()?;
    let mut json = serde_json::to_string_pretty(&spec).internal()?;
    json.push('\n');
    write_text(&out.join("folds.json"), &json)?;
    for i in 0..spec.k {
        let (train, val) = spec.train_val(i);
        let lines = |ids: &[String]| ids.iter().map(|s| format!("{s}\n")).collect::<String>();
        write_text(&out.join(format!("fold_{i}/train.txt")), &lines(&train))?;
        write_text(&out.join(format!("fold_{i}/val.txt")), &lines(&val))?;
    }
    let sizes: Vec<String> = spec.folds().iter().map(|f| f.len().to_string()).collect();
    println!("{} shot(s) in {} folds: [{}]", spec.assignment.len(), spec.k, sizes.join(", "));
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<(), CliError> {
    let out = require_out(cli)?;
    let params = SceneParams {
        image_size: args.size,
        n_components: args.components,
        num_classes: args.num_classes,
        size_range: (args.min_box, args.max_box),
        height_range: (0.0, args.max_height),
        disparity_gain: args.gain,
        sign_mode: if args.folded { SignMode::Folded } else { SignMode::Signed },
        seed: cli.seed,
    };
    let noise = DetectorNoise {
        jitter_sigma: args.jitter,
        miss_prob: args.miss,
        fp_rate: args.fp_rate,
        confusion_prob: args.confusion,
        fp_size_range: (args.min_box, args.max_box),
        ..DetectorNoise::default()
    };
    params.validate().input()?;
    noise.validate().input()?;
    let manifest = synthgen::generate_dataset(out, args.frames, &params, &noise).map_err(|e| match e {
        synthgen::SynthError::Io(_) => CliError::Internal(e.into()),
        _ => CliError::Input(e.into()),
    })?;
    println!(
        "wrote {} frame(s) to {}",
        manifest.frames.len(),
        out.join("manifest.json").display()
    );
    Ok(())
}

fn validate(cli: &Cli, args: &ValidateArgs) -> Result<(), CliError> {
    let strictness = if args.lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    let (manifest, root) = load_manifest(cli, strictness)?;
    let root = (!args.structure_only).then_some(root.as_path());
    match validate_manifest(&manifest, root) {
        Ok(stats) => {
            println!("frames: {}", stats.frames);
            println!("view images: {}", stats.view_images);
            println!("disparity maps: {}", stats.disparity_maps);
            println!("disparity channels: {}", stats.disparity_channels);
            Ok(())
        }
        Err(errs) => {
            for issue in &errs.issues {
                eprintln!("{issue}");
            }
            Err(input_error(format!("{} issue(s) found", errs.issues.len())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_parsing() {
        assert_eq!(parse_size("640x416").unwrap(), ImageSize::new(640, 416));
        assert!(parse_size("640").is_err());
        assert!(parse_size("0x5").is_err());
    }

    #[test]
    fn conflicting_clamp_flags_are_rejected() {
        let err = Cli::try_parse_from(["kfuse", "generalize", "--clamp", "--no-clamp"]).unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::ArgumentConflict);
        assert!(Cli::try_parse_from(["kfuse", "infer", "--jobs", "0"]).is_err());
    }

    #[test]
    fn missing_manifest_is_an_input_error() {
        let cli = Cli::try_parse_from(["kfuse", "validate"]).unwrap();
        assert_eq!(run(&cli).unwrap_err().exit_code(), 2);
        let cli = Cli::try_parse_from(["kfuse", "validate", "--manifest", "/nonexistent/manifest.json"]).unwrap();
        assert_eq!(run(&cli).unwrap_err().exit_code(), 2);
    }
}
