//! `ico3d` command implementations.

pub mod bench;
pub mod camera_path;
pub mod error;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ico3d_avatar::compose::{parse_rig, write_rig, PruneSpec};
use ico3d_avatar::toy::{toy_body, toy_boundary, toy_head_avatar, toy_rig, TOY_BODY_FRAMES};
use ico3d_avatar::{compose_avatar, Avatar, ComposeOptions};
use ico3d_core::bundle::audit_bundle;
use ico3d_core::{metrics, render_oracle, save_bundle, Bundle, CameraModel, Image, TileRenderer};
use ico3d_service::demo::{run_demo, DemoOptions};
use ico3d_service::protocol::FrameFormat;
use ico3d_service::server::{serve, AppState};
use ico3d_service::{Pipeline, PipelineConfig, Scene, SessionConfig};
use nalgebra::Vector3;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ico3d", version, about = "Gaussian-splat talking avatars: render, compose, bench, validate, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render frames of an avatar bundle to PNG, optionally scoring them against references.
    Render(RenderArgs),
    /// Merge a head bundle onto a body bundle through a rig file.
    Compose(ComposeArgs),
    /// Measure frame times for background / +body / +head configurations.
    Bench(BenchArgs),
    /// Audit a bundle (splat invariants, chunk integrity); exit 1 on problems.
    Validate(ValidateArgs),
    /// Serve the avatar to viewers over WebSocket.
    Serve(ServeArgs),
    /// Headless conversation turn: writes frames, reply audio and a frame log.
    Demo(DemoArgs),
    /// Write procedural head and body bundles plus a rig for trying things out.
    Toy(ToyArgs),
}

/// `WxH`, e.g. `512x512`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl FromStr for Resolution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let p = |v: &str| v.trim().parse::<usize>().ok().filter(|v| (1..=8192).contains(v)).ok_or_else(|| format!("bad dimension {v:?} in {s:?}"));
        Ok(Self { width: p(w)?, height: p(h)? })
    }
}

/// Half-open frame range `a..b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FromStr for FrameRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got {s:?}"))?;
        let p = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad frame index {v:?}"));
        let r = Self { start: p(a)?, end: p(b)? };
        if r.end <= r.start {
            return Err(format!("empty frame range {s:?}"));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WireFormat {
    Png,
    Rgb8,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Output directory for frame_NNNNN.png (and metrics.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Keyframed camera path CSV; without it the bundle's default view is used.
    #[arg(long)]
    pub camera_path: Option<PathBuf>,
    /// Frames to render, half-open; defaults to the whole body sequence or camera path.
    #[arg(long)]
    pub frames: Option<FrameRange>,
    /// Output size; rescales camera-path intrinsics when given.
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// Render threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Use the per-pixel reference renderer instead of the tiled one.
    #[arg(long)]
    pub oracle: bool,
    /// Directory of reference frame_NNNNN.png images to score against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Directory of frame_NNNNN.png masks (white = scored) for masked PSNR.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Comma-separated expression vector for the head (neutral by default).
    #[arg(long, value_delimiter = ',')]
    pub expression: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub body: PathBuf,
    #[arg(long)]
    pub rig: PathBuf,
    /// Prune config (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    pub prune: Option<PathBuf>,
    /// Keep every body splat.
    #[arg(long)]
    pub no_prune: bool,
    /// Neck boundary points, one `x y z` per line, for border injection.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Band width around the neck used for colour harmonization.
    #[arg(long)]
    pub harmonize: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Avatar bundle; a toy avatar built from --seed when omitted.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, default_value = "512x512")]
    pub resolution: Resolution,
    /// Worker counts to measure, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub workers: Vec<usize>,
    /// Measured seconds per row.
    #[arg(long, default_value_t = 3.0)]
    pub seconds: f64,
    /// Unmeasured warm-up seconds per row.
    #[arg(long, default_value_t = 2.0)]
    pub warmup: f64,
    #[arg(long, default_value_t = 3)]
    pub min_frames: usize,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ICO3D_BUNDLE")]
    pub bundle: PathBuf,
    #[arg(long, env = "ICO3D_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value = "256x256")]
    pub resolution: Resolution,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, value_enum, default_value_t = WireFormat::Png)]
    pub format: WireFormat,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the head at its first-frame pose.
    #[arg(long)]
    pub hold_head: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Composed avatar bundle; toy head and body are built and composed when omitted.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    #[arg(long, default_value = "Hello! Nice to meet you.")]
    pub text: String,
    #[arg(long, default_value = "128x128")]
    pub resolution: Resolution,
    #[arg(long, default_value_t = 30)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 400)]
    pub head_splats: usize,
    #[arg(long, default_value_t = 1500)]
    pub body_splats: usize,
    #[arg(long, default_value_t = TOY_BODY_FRAMES)]
    pub frames: usize,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Render(a) => cmd_render(&a).map(|_| ()),
        Command::Compose(a) => cmd_compose(&a).map(|s| println!("{s}")),
        Command::Bench(a) => cmd_bench(&a),
        Command::Validate(a) => cmd_validate(&a).map(|s| println!("{s}")),
        Command::Serve(a) => cmd_serve(&a),
        Command::Demo(a) => cmd_demo(&a).map(|s| println!("{s}")),
        Command::Toy(a) => cmd_toy(&a).map(|s| println!("{s}")),
    }
}

fn workers(n: usize) -> usize {
    if n == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        n
    }
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, data).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn load_avatar(path: &Path) -> CliResult<Avatar> {
    let bundle = Bundle::decode(&read(path)?).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Avatar::from_bundle(&bundle).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn save_avatar(path: &Path, avatar: &Avatar) -> CliResult<()> {
    save_bundle(path, &avatar.to_bundle()?).map_err(|e| CliError::io(path, e))
}

pub fn default_camera(avatar: &Avatar, res: Resolution) -> CameraModel {
    let v = avatar.view.unwrap_or_default();
    CameraModel::look_at(v.eye, v.target, Vector3::new(0.0, -1.0, 0.0), v.focal_scale * res.width as f64, res.width, res.height)
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:05}.png")
}

/// Renders the selected frames; returns the written paths.
pub fn cmd_render(a: &RenderArgs) -> CliResult<Vec<PathBuf>> {
    let avatar = load_avatar(&a.bundle)?;
    let cams: Vec<CameraModel> = match &a.camera_path {
        Some(p) => {
            let cams = camera_path::expand(&camera_path::parse_camera_path(&read_text(p)?)?)?;
            match a.resolution {
                Some(r) => cams.iter().map(|c| c.with_resolution(r.width, r.height)).collect(),
                None => cams,
            }
        }
        None => vec![default_camera(&avatar, a.resolution.unwrap_or(Resolution { width: 256, height: 256 })); avatar.frames()],
    };
    let range = a.frames.unwrap_or(FrameRange { start: 0, end: cams.len() });
    if range.end > cams.len() {
        return Err(CliError::Usage(format!("frames {}..{} outside the {} available", range.start, range.end, cams.len())));
    }
    create_dir(&a.out)?;
    let renderer = TileRenderer::new(workers(a.workers));
    let mut written = Vec::new();
    let mut report = csv::Writer::from_writer(Vec::new());
    if a.reference.is_some() {
        report.write_record(["frame", "psnr", "psnr_masked", "ssim", "l1"]).unwrap();
    }
    for i in range.start..range.end {
        let set = avatar.frame(i % avatar.frames(), a.expression.as_deref())?;
        let img = if a.oracle { render_oracle(&set, &cams[i], [0.0; 3]).rgb } else { renderer.render(&set, &cams[i], [0.0; 3]).rgb };
        let path = a.out.join(frame_name(i));
        img.write_png(&path)?;
        if let Some(dir) = &a.reference {
            let reference = Image::read_png(&dir.join(frame_name(i)))?;
            let mask = match &a.mask {
                Some(m) => {
                    let m = Image::read_png(&m.join(frame_name(i)))?;
                    let bin = m.data.chunks(m.channels).map(|p| if p[0] > 0.5 { 1.0 } else { 0.0 }).collect();
                    Some(Image::from_data(m.width, m.height, 1, bin)?)
                }
                None => None,
            };
            // score what was written, not the float render
            let m = metrics(&img.quantized(), &reference, mask.as_ref())?;
            let masked = m.psnr_masked.map_or(String::new(), |v| format!("{v:.4}"));
            report.write_record([i.to_string(), format!("{:.4}", m.psnr), masked, format!("{:.6}", m.ssim), format!("{:.6}", m.l1)]).unwrap();
        }
        written.push(path);
    }
    if a.reference.is_some() {
        write(&a.out.join("metrics.csv"), report.into_inner().unwrap())?;
    }
    eprintln!("rendered {} frames to {}", written.len(), a.out.display());
    Ok(written)
}

fn parse_points(text: &str) -> CliResult<Vec<Vector3<f64>>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let v: Vec<f64> = l.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).map(|s| s.parse().map_err(|_| CliError::Format(format!("boundary line {}: bad number {s:?}", i + 1)))).collect::<CliResult<_>>()?;
            if v.len() != 3 {
                return Err(CliError::Format(format!("boundary line {}: expected x y z", i + 1)));
            }
            Ok(Vector3::new(v[0], v[1], v[2]))
        })
        .collect()
}

/// Composes and writes the bundle; returns the stdout summary.
pub fn cmd_compose(a: &ComposeArgs) -> CliResult<String> {
    let head = load_avatar(&a.head)?;
    let body = load_avatar(&a.body)?;
    let rig = parse_rig(&read_text(&a.rig)?)?;
    let mut prune = match &a.prune {
        Some(p) => PruneSpec::parse(&read_text(p)?)?,
        None => PruneSpec::default(),
    };
    prune.disabled |= a.no_prune;
    let boundary = a.boundary.as_deref().map(|p| read_text(p).and_then(|t| parse_points(&t))).transpose()?;
    let opts = ComposeOptions { prune, boundary, harmonize_width: a.harmonize, seed: a.seed };
    let (avatar, report) = compose_avatar(&head, &body, &rig, &opts)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    save_avatar(&a.out, &avatar)?;
    let removed: usize = report.removed.iter().sum();
    Ok(format!(
        "head {} body {} pruned {} border {} total {} harmonized {}",
        report.head_splats,
        report.body_splats,
        removed,
        report.border_splats,
        report.head_splats + report.body_splats + report.border_splats,
        if report.harmonized.is_some() { "yes" } else { "no" }
    ))
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let (scene, avatar) = match &a.bundle {
        Some(p) => (p.file_stem().map_or("bundle".into(), |s| s.to_string_lossy().into_owned()), load_avatar(p)?),
        None => ("toy".to_string(), ico3d_avatar::toy::toy_avatar(a.seed, 400, 1500, 12)?.0),
    };
    if a.workers.is_empty() || !(a.seconds >= 0.0 && a.warmup >= 0.0) {
        return Err(CliError::Usage("need at least one worker count and non-negative durations".into()));
    }
    let ws: Vec<usize> = a.workers.iter().map(|w| workers(*w)).collect();
    let spec = bench::BenchSpec {
        scene: &scene,
        avatar: &avatar,
        camera: default_camera(&avatar, a.resolution),
        workers: &ws,
        warmup: Duration::from_secs_f64(a.warmup),
        seconds: Duration::from_secs_f64(a.seconds),
        min_frames: a.min_frames.max(1),
    };
    let csv = bench::to_csv(&bench::run_bench(&spec)?);
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Audits the bundle; `Err(Validation)` lists every problem found.
pub fn cmd_validate(a: &ValidateArgs) -> CliResult<String> {
    let bytes = read(&a.bundle)?;
    let violations = audit_bundle(&bytes).map_err(|e| CliError::Validation(e.to_string()))?;
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Validation(format!("{} problem(s):\n{}", list.len(), list.join("\n"))));
    }
    let bundle = Bundle::decode(&bytes).map_err(|e| CliError::Validation(e.to_string()))?;
    let avatar = Avatar::from_bundle(&bundle).map_err(|e| CliError::Validation(e.to_string()))?;
    for k in [0, avatar.frames() - 1] {
        let set = avatar.frame(k, None).map_err(|e| CliError::Validation(format!("frame {k}: {e}")))?;
        if let Some(v) = set.audit().first() {
            return Err(CliError::Validation(format!("frame {k}: {v}")));
        }
    }
    Ok(format!(
        "ok: {} splats, head {}, body frames {}, keyframe library {}",
        bundle.splats.len(),
        avatar.head.as_ref().map_or("none".into(), |h| format!("{} splats", h.splats.len())),
        avatar.frames(),
        if avatar.library.is_some() { "yes" } else { "no" }
    ))
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn cmd_serve(a: &ServeArgs) -> CliResult<()> {
    let mut scene = Scene::new(load_avatar(&a.bundle)?, workers(a.workers))?;
    scene.hold_head_pose = a.hold_head;
    let pipeline = Pipeline::from_config(&PipelineConfig::from_env()?)?;
    let mut cfg = SessionConfig {
        width: a.resolution.width,
        height: a.resolution.height,
        format: match a.format {
            WireFormat::Png => FrameFormat::Png,
            WireFormat::Rgb8 => FrameFormat::Rgb8,
        },
        ..Default::default()
    };
    cfg.animator.seed = a.seed;
    let state = AppState::new(scene, pipeline, cfg);
    runtime()?.block_on(async {
        let addr = format!("{}:{}", a.host, a.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        eprintln!("serving on ws://{addr}/ws");
        serve(listener, state).await.map_err(|e| CliError::Runtime(e.to_string()))
    })
}

/// Writes toy inputs into `dir`; returns (head, body, rig, boundary) paths.
pub fn write_toy(dir: &Path, seed: u64, head_splats: usize, body_splats: usize, frames: usize) -> CliResult<[PathBuf; 4]> {
    create_dir(dir)?;
    let paths = [dir.join("head.ico3d"), dir.join("body.ico3d"), dir.join("rig.txt"), dir.join("boundary.txt")];
    save_avatar(&paths[0], &toy_head_avatar(seed, head_splats)?)?;
    save_avatar(&paths[1], &toy_body(seed.wrapping_add(1), body_splats, frames)?)?;
    write(&paths[2], write_rig(&toy_rig(frames)))?;
    let ring: Vec<String> = toy_boundary(16).iter().map(|p| format!("{:?} {:?} {:?}", p.x, p.y, p.z)).collect();
    write(&paths[3], ring.join("\n") + "\n")?;
    Ok(paths)
}

pub fn cmd_toy(a: &ToyArgs) -> CliResult<String> {
    let p = write_toy(&a.out, a.seed, a.head_splats, a.body_splats, a.frames)?;
    Ok(format!("wrote {}, {}, {}, {}", p[0].display(), p[1].display(), p[2].display(), p[3].display()))
}

pub fn cmd_demo(a: &DemoArgs) -> CliResult<String> {
    create_dir(&a.out)?;
    let bundle = match &a.bundle {
        Some(b) => b.clone(),
        None => {
            let [head, body, rig, boundary] = write_toy(&a.out.join("inputs"), a.seed, 300, 900, 30)?;
            let out = a.out.join("avatar.ico3d");
            let c = ComposeArgs { head, body, rig, prune: None, no_prune: false, boundary: Some(boundary), harmonize: Some(0.06), out: out.clone(), seed: a.seed };
            eprintln!("composed toy avatar: {}", cmd_compose(&c)?);
            out
        }
    };
    let scene = Scene::new(load_avatar(&bundle)?, workers(a.workers))?;
    let mut opts = DemoOptions { text: a.text.clone(), width: a.resolution.width, height: a.resolution.height, min_frames: a.min_frames, ..Default::default() };
    opts.animator.seed = a.seed;
    let frames_dir = a.out.join("frames");
    let rep = runtime()?.block_on(run_demo(&scene, &Pipeline::mock(), &opts, &frames_dir))?;
    Ok(format!(
        "reply {:?}: {:.2} s audio, {} planned frames, {} written to {}, audio {}",
        rep.reply_text,
        rep.audio_seconds,
        rep.planned_frames,
        rep.frames_written,
        frames_dir.display(),
        rep.wav.display()
    ))
}

