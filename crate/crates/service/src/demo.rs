//! Headless turn: runs one pipeline turn against an avatar on a virtual
//! clock and writes every frame, the reply audio and a frame log to disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ico3d_core::CameraModel;

use crate::animator::{Animator, AnimatorConfig};
use crate::audio::FRAME_RATE;
use crate::error::Result;
use crate::pipeline::{Pipeline, TurnInput};
use crate::session::{handle_turn, Scene};

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub text: String,
    pub width: usize,
    pub height: usize,
    /// Frames written at least; idle frames pad short replies.
    pub min_frames: usize,
    pub animator: AnimatorConfig,
    pub camera: Option<CameraModel>,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self { text: "Hello there!".into(), width: 128, height: 128, min_frames: 30, animator: AnimatorConfig::default(), camera: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub reply_text: String,
    pub audio_seconds: f64,
    pub planned_frames: usize,
    pub frames_written: usize,
    pub body_frames: Vec<usize>,
    pub wav: PathBuf,
    pub frames: Vec<PathBuf>,
}

pub async fn run_demo(scene: &Scene, pipeline: &Pipeline, opts: &DemoOptions, out_dir: &Path) -> Result<DemoReport> {
    std::fs::create_dir_all(out_dir)?;
    let mut acfg = opts.animator;
    acfg.channels = scene.expression_channels();
    let turn = handle_turn(pipeline, &scene.library, &acfg, &[], 1, TurnInput::Text(opts.text.clone())).await?;
    let planned = turn.plan.len();
    let wav = out_dir.join("reply.wav");
    std::fs::write(&wav, turn.audio.to_wav())?;
    let mut animator = Animator::new(scene.library.clone(), acfg);
    animator.start(turn.plan, turn.features)?;
    let cam = opts.camera.unwrap_or_else(|| scene.default_camera(opts.width, opts.height));
    let total = planned.max(opts.min_frames);
    let mut log = String::from("index,time_s,body_frame,acting\n");
    let (mut frames, mut body_frames) = (Vec::with_capacity(total), Vec::with_capacity(total));
    for i in 0..total {
        let spec = animator.next_frame();
        let img = scene.render(&spec, &cam)?;
        let path = out_dir.join(format!("frame_{i:05}.png"));
        img.write_png(&path)?;
        writeln!(log, "{i},{:.6},{},{}", i as f64 / FRAME_RATE as f64, spec.body_frame, spec.acting as u8).unwrap();
        frames.push(path);
        body_frames.push(spec.body_frame);
    }
    std::fs::write(out_dir.join("frames.csv"), log)?;
    Ok(DemoReport {
        reply_text: turn.reply_text,
        audio_seconds: turn.audio.duration_s(),
        planned_frames: planned,
        frames_written: total,
        body_frames,
        wav,
        frames,
    })
}
