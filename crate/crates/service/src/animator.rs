//! Per-session animation state: idle ping-pong with blinks, or playback of
//! an action plan with its expression frames.

use ico3d_avatar::anim::{blink_envelope, plan_action, with_blinks, AnimPlan, BlinkConfig, IdleStream, KeyframeLibrary};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ServiceError};
use crate::stages::AUDIO_FEATURES;

/// What one output frame shows.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub body_frame: usize,
    /// Audio features followed by eye channels.
    pub expression: Vec<f64>,
    pub acting: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnimState {
    Idle,
    Acting { plan: AnimPlan, features: Vec<Vec<f64>>, cursor: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnimatorConfig {
    pub blink: BlinkConfig,
    pub blink_while_acting: bool,
    /// Expression length expected by the head model.
    pub channels: usize,
    pub seed: u64,
}

impl Default for AnimatorConfig {
    fn default() -> Self {
        Self { blink: BlinkConfig::default(), blink_while_acting: true, channels: AUDIO_FEATURES + 7, seed: 0 }
    }
}

/// Body plan of `frames` frames for turn number `turn`; deterministic in
/// (library, frames, seed, turn).
pub fn plan_for_turn(lib: &KeyframeLibrary, cfg: &AnimatorConfig, turn: u64, frames: usize) -> Result<AnimPlan> {
    let mut rng = ico3d_core::synth::rng(cfg.seed ^ 0x7475_726e_0000_0000 ^ turn);
    let plan = plan_action(lib, frames, &mut rng)?;
    Ok(if cfg.blink_while_acting { with_blinks(plan, rng, cfg.blink) } else { plan })
}

pub struct Animator {
    lib: KeyframeLibrary,
    cfg: AnimatorConfig,
    idle: IdleStream<ChaCha8Rng>,
    state: AnimState,
    turns: u64,
    /// Position inside the current acting blink.
    blink_pos: usize,
}

impl Animator {
    pub fn new(lib: KeyframeLibrary, cfg: AnimatorConfig) -> Self {
        let idle = IdleStream::new(&lib, ico3d_core::synth::rng(cfg.seed), cfg.blink);
        Self { lib, cfg, idle, state: AnimState::Idle, turns: 0, blink_pos: 0 }
    }

    pub fn state(&self) -> &AnimState {
        &self.state
    }

    pub fn is_acting(&self) -> bool {
        matches!(self.state, AnimState::Acting { .. })
    }

    pub fn library(&self) -> &KeyframeLibrary {
        &self.lib
    }

    /// Idle → Acting. Rejected while a plan is playing.
    pub fn start(&mut self, plan: AnimPlan, features: Vec<Vec<f64>>) -> Result<()> {
        if self.is_acting() {
            return Err(ServiceError::Busy);
        }
        if features.len() != plan.len() {
            return Err(ServiceError::InvalidInput(format!("{} expression frames for a {}-frame plan", features.len(), plan.len())));
        }
        self.turns += 1;
        if !plan.is_empty() {
            self.state = AnimState::Acting { plan, features, cursor: 0 };
            self.blink_pos = 0;
        }
        Ok(())
    }

    fn expression(&self, audio: &[f64], eye: f64) -> Vec<f64> {
        let mut e = vec![0.0; self.cfg.channels];
        for (d, s) in e.iter_mut().zip(audio) {
            *d = *s;
        }
        for d in e.iter_mut().skip(AUDIO_FEATURES) {
            *d = eye;
        }
        e
    }

    /// The next frame; Acting falls back to Idle (entering at rest_end)
    /// once the plan is exhausted.
    pub fn next_frame(&mut self) -> FrameSpec {
        let acting = match &mut self.state {
            AnimState::Idle => None,
            AnimState::Acting { plan, features, cursor } => {
                let k = *cursor;
                *cursor += 1;
                let blink = plan.blinks.get(k).copied().unwrap_or(false);
                let out = (plan.frames[k], features[k].clone(), blink, *cursor == plan.len());
                Some(out)
            }
        };
        match acting {
            Some((body_frame, feats, blink, done)) => {
                let eye = if blink {
                    let v = blink_envelope(self.blink_pos, self.cfg.blink.envelope_frames);
                    self.blink_pos = (self.blink_pos + 1) % self.cfg.blink.envelope_frames.max(1);
                    v
                } else {
                    self.blink_pos = 0;
                    0.0
                };
                if done {
                    let rng = ico3d_core::synth::rng(self.cfg.seed.wrapping_add(self.turns));
                    self.idle = IdleStream::from_rest_end(&self.lib, rng, self.cfg.blink);
                    // the plan already showed rest_end
                    self.idle.next();
                    self.state = AnimState::Idle;
                }
                FrameSpec { body_frame, expression: self.expression(&feats, eye), acting: true }
            }
            None => {
                let (body_frame, blink) = self.idle.next().expect("idle stream is unbounded");
                let eye = blink.map_or(0.0, |p| blink_envelope(p, self.cfg.blink.envelope_frames));
                FrameSpec { body_frame, expression: self.expression(&[], eye), acting: false }
            }
        }
    }

    /// Advances `n` frames without producing them (skipped late frames).
    pub fn skip(&mut self, n: u64) {
        for _ in 0..n {
            self.next_frame();
        }
    }
}
