//! One viewer session: a control loop that runs turns and a frame loop that
//! owns the animation state and streams rendered frames at a fixed rate.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ico3d_avatar::anim::{AnimPlan, KeyframeLibrary, Segment};
use ico3d_avatar::head::EXPRESSION_CHANNELS;
use ico3d_avatar::compose::{merge, transform_set};
use ico3d_avatar::Avatar;
use ico3d_core::{CameraModel, GaussianSet, Image, TileRenderer};
use nalgebra::Vector3;
use tokio::sync::{mpsc, Mutex};
use tokio::time::Instant;

use crate::animator::{plan_for_turn, AnimState, Animator, AnimatorConfig, FrameSpec};
use crate::audio::{Audio, FRAME_RATE};
use crate::error::{Result, ServiceError};
use crate::pipeline::{Pipeline, TurnInput};
use crate::protocol::{camera_from_message, ControlMessage, FrameFormat, FrameMessage};
use crate::schedule::FrameSchedule;
use crate::stages::{ChatTurn, Role};

/// A loaded avatar plus everything needed to render it.
pub struct Scene {
    pub avatar: Avatar,
    pub library: KeyframeLibrary,
    pub renderer: TileRenderer,
    pub background: [f64; 3],
    /// Keep the head at its first-frame pose instead of following the body sequence.
    pub hold_head_pose: bool,
}

impl Scene {
    pub fn new(avatar: Avatar, workers: usize) -> Result<Self> {
        let library = match &avatar.library {
            Some(l) => l.clone(),
            None => fallback_library(avatar.frames())?,
        };
        if library.sequence_len > avatar.frames().max(2) {
            return Err(ServiceError::InvalidInput(format!(
                "keyframe library spans {} frames, the body sequence has {}",
                library.sequence_len,
                avatar.frames()
            )));
        }
        Ok(Self { avatar, library, renderer: TileRenderer::new(workers), background: [0.0; 3], hold_head_pose: false })
    }

    pub fn expression_channels(&self) -> usize {
        self.avatar.expression_channels().unwrap_or(EXPRESSION_CHANNELS)
    }

    /// Camera from the bundle's view hint, or a frontal default.
    pub fn default_camera(&self, width: usize, height: usize) -> CameraModel {
        let v = self.avatar.view.unwrap_or_default();
        CameraModel::look_at(v.eye, v.target, Vector3::new(0.0, -1.0, 0.0), v.focal_scale * width as f64, width, height)
    }

    pub fn splats(&self, spec: &FrameSpec) -> Result<GaussianSet> {
        let a = &self.avatar;
        let mut body = a.body_frame(spec.body_frame)?;
        if let Some(h) = &a.head {
            let mut e = spec.expression.clone();
            e.resize(h.model.config.channels, 0.0);
            let head = h.colored(&e)?;
            let pose = h.pose_at(if self.hold_head_pose { 0 } else { spec.body_frame });
            body = merge(&transform_set(&head, &pose), &body);
        }
        Ok(body)
    }

    pub fn render(&self, spec: &FrameSpec, cam: &CameraModel) -> Result<Image> {
        let set = self.splats(spec)?;
        Ok(self.renderer.render(&set, cam, self.background).rgb)
    }
}

/// Two-frame rest loop for avatars without a keyframe library.
fn fallback_library(frames: usize) -> Result<KeyframeLibrary> {
    let len = frames.max(2);
    Ok(KeyframeLibrary::new(len, (0, 1), vec![Segment { start: 0, end: len - 1, reversible: true }])?)
}

/// Everything a turn produced.
#[derive(Debug, Clone)]
pub struct TurnResult {
    pub user_text: String,
    pub reply_text: String,
    pub audio: Audio,
    pub features: Vec<Vec<f64>>,
    pub plan: AnimPlan,
}

/// Runs the pipeline and plans the matching body motion (one frame per
/// 1/30 s of reply audio).
pub async fn handle_turn(pipeline: &Pipeline, lib: &KeyframeLibrary, cfg: &AnimatorConfig, history: &[ChatTurn], turn: u64, input: TurnInput) -> Result<TurnResult> {
    let out = pipeline.run(history, input).await?;
    let plan = plan_for_turn(lib, cfg, turn, out.features.len())?;
    Ok(TurnResult { user_text: out.user_text, reply_text: out.reply_text, audio: out.audio, features: out.features, plan })
}

#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    pub width: usize,
    pub height: usize,
    pub format: FrameFormat,
    pub animator: AnimatorConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { width: 256, height: 256, format: FrameFormat::Png, animator: AnimatorConfig::default() }
    }
}

/// Messages from the viewer.
#[derive(Debug, Clone)]
pub enum Incoming {
    Text(String),
    /// WAV microphone input.
    Binary(Vec<u8>),
}

/// Messages to the viewer, in order.
#[derive(Debug, Clone, PartialEq)]
pub enum Outgoing {
    Text(String),
    Binary(Vec<u8>),
}

enum FrameCmd {
    Camera(CameraModel),
    Act(Box<TurnResult>),
}

/// Session bookkeeping visible outside the loops.
#[derive(Debug, Default)]
pub struct Session {
    pub id: u64,
    pub history: Mutex<Vec<ChatTurn>>,
    acting: AtomicBool,
    turn_in_flight: AtomicBool,
}

impl Session {
    pub fn new(id: u64) -> Arc<Self> {
        Arc::new(Self { id, ..Default::default() })
    }

    pub fn is_acting(&self) -> bool {
        self.acting.load(Ordering::SeqCst)
    }
}

async fn send_event(out: &mpsc::Sender<Outgoing>, kind: &str, detail: impl Into<String>) -> bool {
    out.send(Outgoing::Text(ControlMessage::event(kind, detail).to_json())).await.is_ok()
}

pub fn encode_frame(img: &Image, index: u64, format: FrameFormat) -> Result<Vec<u8>> {
    let payload = match format {
        FrameFormat::Rgb8 => img.to_rgb8(),
        FrameFormat::Png => img.encode_png()?,
    };
    Ok(FrameMessage { index, width: img.width as u32, height: img.height as u32, format, payload }.encode())
}

/// Runs a session until the viewer disconnects (incoming closes) or the
/// outgoing channel is dropped.
pub async fn run_session(
    session: Arc<Session>,
    scene: Arc<Scene>,
    pipeline: Arc<Pipeline>,
    cfg: SessionConfig,
    mut incoming: mpsc::Receiver<Incoming>,
    outgoing: mpsc::Sender<Outgoing>,
) {
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let camera = scene.default_camera(cfg.width, cfg.height);
    let mut acfg = cfg.animator;
    acfg.channels = scene.expression_channels();
    let ready = format!(r#"{{"session":{},"width":{},"height":{},"fps":{}}}"#, session.id, cfg.width, cfg.height, FRAME_RATE);
    if !send_event(&outgoing, "ready", ready).await || outgoing.send(Outgoing::Text(ControlMessage::camera(&camera).to_json())).await.is_err() {
        return;
    }
    let frames = tokio::spawn(frame_loop(session.clone(), scene.clone(), acfg, camera, cfg.format, cmd_rx, outgoing.clone()));
    let mut turn = 0u64;
    while let Some(msg) = incoming.recv().await {
        let input = match msg {
            Incoming::Binary(wav) => match Audio::from_wav(&wav) {
                Ok(a) => TurnInput::Audio(a),
                Err(e) => {
                    send_event(&outgoing, e.kind(), e.to_string()).await;
                    continue;
                }
            },
            Incoming::Text(t) => match ControlMessage::parse(&t) {
                Ok(ControlMessage::Chat { text }) => TurnInput::Text(text),
                Ok(ControlMessage::Camera { pose, intrinsics }) => {
                    match camera_from_message(&pose, &intrinsics) {
                        Ok(c) => {
                            let _ = cmd_tx.send(FrameCmd::Camera(c));
                        }
                        Err(e) => {
                            send_event(&outgoing, e.kind(), e.to_string()).await;
                        }
                    }
                    continue;
                }
                Ok(ControlMessage::Event { .. }) => {
                    send_event(&outgoing, "invalid-input", "viewers do not send events").await;
                    continue;
                }
                Err(e) => {
                    send_event(&outgoing, e.kind(), e.to_string()).await;
                    continue;
                }
            },
        };
        if session.is_acting() || session.turn_in_flight.swap(true, Ordering::SeqCst) {
            send_event(&outgoing, "busy", "a reply is still playing").await;
            continue;
        }
        turn += 1;
        let (s, sc, p, out, tx) = (session.clone(), scene.clone(), pipeline.clone(), outgoing.clone(), cmd_tx.clone());
        tokio::spawn(async move {
            let history = s.history.lock().await.clone();
            let r = handle_turn(&p, &sc.library, &acfg, &history, turn, input).await;
            match r {
                Ok(t) => {
                    let mut h = s.history.lock().await;
                    h.push(ChatTurn { role: Role::User, text: t.user_text.clone() });
                    h.push(ChatTurn { role: Role::Assistant, text: t.reply_text.clone() });
                    drop(h);
                    send_event(&out, "reply", t.reply_text.clone()).await;
                    let _ = tx.send(FrameCmd::Act(Box::new(t)));
                }
                Err(e) => {
                    tracing::warn!(session = s.id, "turn failed: {e}");
                    send_event(&out, e.kind(), e.to_string()).await;
                }
            }
            s.turn_in_flight.store(false, Ordering::SeqCst);
        });
    }
    frames.abort();
}

async fn frame_loop(
    session: Arc<Session>,
    scene: Arc<Scene>,
    acfg: AnimatorConfig,
    mut camera: CameraModel,
    format: FrameFormat,
    mut cmds: mpsc::UnboundedReceiver<FrameCmd>,
    out: mpsc::Sender<Outgoing>,
) {
    let mut animator = Animator::new(scene.library.clone(), acfg);
    let mut schedule = FrameSchedule::new(FRAME_RATE);
    let start = Instant::now();
    loop {
        tokio::time::sleep(schedule.wait(start.elapsed())).await;
        // commands apply to the next scheduled frame as a whole
        while let Ok(cmd) = cmds.try_recv() {
            match cmd {
                FrameCmd::Camera(c) => camera = c,
                FrameCmd::Act(t) => {
                    let wav = t.audio.to_wav();
                    match animator.start(t.plan, t.features) {
                        Ok(()) => {
                            let detail = format!(r#"{{"bytes":{},"frames":{}}}"#, wav.len(), t.audio.video_frames());
                            if !send_event(&out, "audio", detail).await || out.send(Outgoing::Binary(wav)).await.is_err() {
                                return;
                            }
                            if animator.is_acting() && !send_event(&out, "state", "acting").await {
                                return;
                            }
                        }
                        Err(e) => {
                            send_event(&out, e.kind(), e.to_string()).await;
                        }
                    }
                }
            }
        }
        let Some(due) = schedule.due(start.elapsed()) else { continue };
        let was_acting = animator.is_acting();
        animator.skip(due.skipped);
        let spec = animator.next_frame();
        session.acting.store(animator.is_acting(), Ordering::SeqCst);
        let ended = was_acting && matches!(animator.state(), AnimState::Idle);
        let sc = scene.clone();
        let cam = camera;
        let index = due.index;
        let rendered = tokio::task::spawn_blocking(move || sc.render(&spec, &cam).and_then(|img| encode_frame(&img, index, format))).await;
        match rendered {
            Ok(Ok(bytes)) => {
                if out.send(Outgoing::Binary(bytes)).await.is_err() || (ended && !send_event(&out, "state", "idle").await) {
                    return;
                }
            }
            Ok(Err(e)) => {
                send_event(&out, "render-error", e.to_string()).await;
                return;
            }
            Err(e) => {
                send_event(&out, "render-error", e.to_string()).await;
                return;
            }
        }
    }
}

/// Nominal wall-clock time of frame `index`.
pub fn frame_time(index: u64) -> Duration {
    FrameSchedule::new(FRAME_RATE).time_of(index)
}
