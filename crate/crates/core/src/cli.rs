//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O failure, 3 validation failure
//! (bad configuration, malformed or mismatched inputs).

use std::ffi::OsString;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::eval::{bench_scaling, mc_error, BenchOptions, BenchReport, EvalError, McReport};
use crate::fusion::{fuse_frame, Ablation, FusedCloud, FusionStats};
use crate::geometry::Vec3;
use crate::io::config::{ConfigError, RigConfig, RunParams};
use crate::io::depth::{DepthFormat, DepthIoError};
use crate::io::frames::{self, FrameSetError, GROUND_TRUTH_DIR};
use crate::io::ply::{read_ply, write_ply, PlyError, PlyMode};
use crate::synth::{render_depth, RigSpec, SceneSpec, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Validation(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FrameSetError> for CliError {
    fn from(e: FrameSetError) -> Self {
        match &e {
            FrameSetError::Io { .. }
            | FrameSetError::Depth {
                source: DepthIoError::Io { .. },
                ..
            } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PlyError> for CliError {
    fn from(e: PlyError) -> Self {
        match e {
            PlyError::Io { .. } => CliError::Io(e.to_string()),
            PlyError::Format(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fuseflow",
    version,
    about = "Frame-wise multi-camera depth fusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render an analytic scene into depth frames plus noiseless ground truth.
    Synth(SynthArgs),
    /// Fuse depth frames into one PLY cloud per frame.
    Fuse(FuseArgs),
    /// Multi-camera depth consistency error of a fused cloud.
    Eval(EvalArgs),
    /// Time fusion against camera count on a synthetic scene.
    Bench(BenchArgs),
    /// Run the full pipeline and each single-component ablation on one frame.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DepthFileFormat {
    Pgm,
    Raw,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    rig: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    frames: u64,
    #[arg(long, value_enum, default_value = "pgm")]
    format: DepthFileFormat,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Frames `a..b` (end exclusive) or a single index; default all.
    #[arg(long, value_parser = parse_range)]
    frame_range: Option<Range<u64>>,
    #[arg(long)]
    no_mf: bool,
    #[arg(long)]
    no_dc: bool,
    #[arg(long)]
    no_sa: bool,
    /// Write ASCII instead of binary little-endian PLY.
    #[arg(long)]
    ascii: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Frame to evaluate against when the cloud does not record one.
    #[arg(long)]
    frame: Option<u64>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    /// Camera counts; each uses the first N cameras of the config.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    cameras: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    frames: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Frame index; defaults to the first frame found.
    #[arg(long)]
    frame: Option<u64>,
}

fn parse_range(s: &str) -> Result<Range<u64>, String> {
    let num = |v: &str| {
        v.trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid frame index {v:?}"))
    };
    let r = match s.split_once("..") {
        Some((a, b)) => num(a)?..num(b)?,
        None => {
            let a = num(s)?;
            a..a + 1
        }
    };
    if r.is_empty() {
        return Err(format!("empty frame range {s:?}"));
    }
    Ok(r)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| io_err(p, e)),
        _ => Ok(()),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let scene: SceneSpec<f64> = read_json(&a.scene)?;
    scene.validate()?;
    let rig: RigSpec<f64> = read_json(&a.rig)?;
    let cameras = rig.build()?;
    let format = match a.format {
        DepthFileFormat::Pgm => DepthFormat::Pgm,
        DepthFileFormat::Raw => DepthFormat::Raw,
    };
    if a.frames == 0 {
        return Err(CliError::Validation("--frames must be >= 1".into()));
    }
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let gt_root = a.out.join(GROUND_TRUTH_DIR);
    for t in 0..a.frames {
        for cam in &cameras {
            let r = render_depth(&scene, cam, t);
            frames::store_frame(&a.out, t, &r.observed, format)?;
            frames::store_frame(&gt_root, t, &r.truth, format)?;
        }
    }
    let cfg = RigConfig::from_cameras(&cameras, RunParams::with_seed(scene.seed));
    let cfg_path = a.out.join("rig_config.json");
    fs::write(&cfg_path, cfg.to_json() + "\n").map_err(|e| io_err(&cfg_path, e))?;
    println!(
        "wrote {} frame(s) x {} camera(s) to {}",
        a.frames,
        cameras.len(),
        a.out.display()
    );
    Ok(())
}

fn output_path(out: &Path, frame: u64, single: bool) -> PathBuf {
    if single {
        return out.to_path_buf();
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cloud".into());
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ply".into());
    out.with_file_name(format!("{stem}_f{frame:04}.{ext}"))
}

fn run_frame(
    cfg: &RigConfig,
    root: &Path,
    frame: u64,
    ablation: Ablation,
) -> Result<FusedCloud<f64>, CliError> {
    let cameras = cfg.camera_models();
    let depth = frames::load_frame(root, frame, &cameras)?;
    fuse_frame(&cameras, &depth, &cfg.pipeline(), ablation, frame)
        .map_err(|e| CliError::Validation(format!("frame {frame}: {e}")))
}

fn fuse(a: FuseArgs) -> Result<(), CliError> {
    let cfg = RigConfig::load(&a.config)?;
    let mut ablation = cfg.params.ablation;
    ablation.measurement_confidence &= !a.no_mf;
    ablation.distance_consistency &= !a.no_dc;
    ablation.spatial_aggregation &= !a.no_sa;
    let available = frames::list_frames(&a.frames)?;
    let selected: Vec<u64> = match &a.frame_range {
        Some(r) => {
            let missing: Vec<String> = r
                .clone()
                .filter(|t| !available.contains(t))
                .map(|t| t.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(CliError::Validation(format!(
                    "frame(s) {} not found under {}",
                    missing.join(", "),
                    a.frames.display()
                )));
            }
            r.clone().collect()
        }
        None => available,
    };
    let mode = if a.ascii {
        PlyMode::Ascii
    } else {
        PlyMode::Binary
    };
    let hash = cfg.param_hash();
    create_parent(&a.out)?;
    let single = selected.len() == 1;
    for t in selected {
        let cloud = run_frame(&cfg, &a.frames, t, ablation)?;
        let path = output_path(&a.out, t, single);
        write_ply(&path, &cloud, &hash, mode)?;
        println!(
            "frame {t}: {} points -> {} [{}]",
            cloud.len(),
            path.display(),
            ablation.label()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    frame_index: u64,
    param_hash: String,
    #[serde(flatten)]
    mc: McReport,
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let cfg = RigConfig::load(&a.config)?;
    let ply = read_ply(&a.cloud)?;
    let hash = cfg.param_hash();
    if let Some(h) = &ply.param_hash {
        if *h != hash {
            return Err(CliError::Validation(format!(
                "{} was produced with parameter hash {h}, but {} hashes to {hash}",
                a.cloud.display(),
                a.config.display()
            )));
        }
    }
    let frame = ply.frame_index.or(a.frame).ok_or_else(|| {
        CliError::Validation(format!(
            "{} records no frame index; pass --frame",
            a.cloud.display()
        ))
    })?;
    let cameras = cfg.camera_models();
    let depth = frames::load_frame(&a.frames, frame, &cameras)?;
    let points: Vec<Vec3<f64>> = ply
        .vertices
        .iter()
        .map(|v| Vec3::new(v.position[0], v.position[1], v.position[2]).cast())
        .collect();
    let mc = mc_error(
        &points,
        &cameras,
        &depth,
        cfg.params.eval.sample_size,
        cfg.params.eval.seed,
    )?;
    println!(
        "frame {frame}: E_MC = {:.4} mm over {} points",
        mc.e_mc, mc.evaluated
    );
    write_json(
        &a.report,
        &EvalReport {
            frame_index: frame,
            param_hash: hash,
            mc,
        },
    )
}

#[derive(Serialize)]
struct BenchFile {
    param_hash: String,
    #[serde(flatten)]
    bench: BenchReport,
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let cfg = RigConfig::load(&a.config)?;
    let scene: SceneSpec<f64> = read_json(&a.scene)?;
    let cameras = cfg.camera_models();
    if let Some(n) = a.cameras.iter().find(|n| **n > cameras.len()) {
        return Err(CliError::Validation(format!(
            "--cameras asks for {n} cameras but the config defines {}",
            cameras.len()
        )));
    }
    let opts = BenchOptions {
        reps: a.reps,
        warmup: a.warmup,
        threads: a.threads,
    };
    let report = bench_scaling(
        &a.cameras,
        &scene,
        |n| Ok(cameras[..n].to_vec()),
        &cfg.pipeline(),
        cfg.params.ablation,
        opts,
    )?;
    for p in &report.points {
        println!(
            "{:>3} camera(s): {:>10.3} ms  {:>8.2} fps",
            p.cameras, p.mean_ms, p.fps
        );
    }
    if let Some(f) = &report.fit {
        println!(
            "fit: {:.3} + {:.3}·N ms, R² = {:.4}",
            f.intercept, f.slope, f.r_squared
        );
    }
    write_json(
        &a.report,
        &BenchFile {
            param_hash: cfg.param_hash(),
            bench: report,
        },
    )
}

#[derive(Serialize)]
struct AblationRun {
    label: String,
    ablation: Ablation,
    points: usize,
    stats: FusionStats,
    e_mc: Option<f64>,
    evaluated: usize,
    time_ms: f64,
}

#[derive(Serialize)]
struct AblationReport {
    frame_index: u64,
    param_hash: String,
    seed: u64,
    runs: Vec<AblationRun>,
}

fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let cfg = RigConfig::load(&a.config)?;
    let frame = match a.frame {
        Some(t) => t,
        None => frames::list_frames(&a.frames)?[0],
    };
    let cameras = cfg.camera_models();
    let depth = frames::load_frame(&a.frames, frame, &cameras)?;
    let params = cfg.pipeline();
    let mut runs = Vec::new();
    for ablation in [
        Ablation::NO_MF,
        Ablation::NO_DC,
        Ablation::NO_SA,
        Ablation::FULL,
    ] {
        let start = Instant::now();
        let cloud = fuse_frame(&cameras, &depth, &params, ablation, frame)
            .map_err(|e| CliError::Validation(format!("frame {frame}: {e}")))?;
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        let points: Vec<Vec3<f64>> = cloud.points.iter().map(|p| p.position).collect();
        let (e_mc, evaluated) = match mc_error(
            &points,
            &cameras,
            &depth,
            cfg.params.eval.sample_size,
            cfg.params.eval.seed,
        ) {
            Ok(r) => (Some(r.e_mc), r.evaluated),
            Err(EvalError::EmptyCloud) => (None, 0),
            Err(e) => return Err(e.into()),
        };
        println!(
            "{:>6}: {:>8} points  E_MC {:>9}  {:>9.2} ms",
            ablation.label(),
            points.len(),
            e_mc.map_or("n/a".to_string(), |v| format!("{v:.3}")),
            time_ms
        );
        runs.push(AblationRun {
            label: ablation.label(),
            ablation,
            points: points.len(),
            stats: cloud.stats,
            e_mc,
            evaluated,
            time_ms,
        });
    }
    write_json(
        &a.report,
        &AblationReport {
            frame_index: frame,
            param_hash: cfg.param_hash(),
            seed: cfg.params.eval.seed,
            runs,
        },
    )
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
