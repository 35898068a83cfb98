use ico3d_core::metrics::metrics;
use ico3d_core::render::{oracle_backward, render_oracle};
use ico3d_core::{interpolate_pose, CameraModel, Error, Image, Result};
use rand::Rng;

use super::window::WindowModel;
use crate::invalid;
use crate::optim::{GroupState, Optimizer};

/// L1 between window `w` rendered at its first frame and `prev` rendered at
/// its last frame (the shared overlap frame), from the same camera.
pub fn consistency_loss(w: &WindowModel, prev: &WindowModel, camera: &CameraModel, background: [f64; 3]) -> Result<f64> {
    check_overlap(w, prev)?;
    let a = render_oracle(&w.deform(0.0)?, camera, background).rgb;
    let b = render_oracle(&prev.deform(1.0)?, camera, background).rgb;
    Ok(metrics(&a, &b, None)?.l1)
}

fn check_overlap(w: &WindowModel, prev: &WindowModel) -> Result<()> {
    if prev.frame_range.1 != w.frame_range.0 {
        return Err(invalid(format!(
            "windows {:?} and {:?} do not share an overlap frame",
            prev.frame_range, w.frame_range
        )));
    }
    Ok(())
}

/// A reconstruction target for the window being fine-tuned.
#[derive(Debug, Clone)]
pub struct ReconTarget {
    pub camera: CameraModel,
    /// Sequence frame (must lie in the window's range).
    pub frame: usize,
    pub image: Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Consistency,
    Reconstruction,
}

#[derive(Debug, Clone)]
pub struct FinetuneConfig {
    pub iters: usize,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub lr_mean: f64,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { iters: 500, lr_color: 0.01, lr_opacity: 0.01, lr_mean: 1e-4, background: [0.0; 3], seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Finetune {
    pub window: WindowModel,
    /// Kind and loss of each step, before that step's update.
    pub steps: Vec<(StepKind, f64)>,
}

impl Finetune {
    pub fn consistency_fraction(&self) -> f64 {
        let n = self.steps.iter().filter(|s| s.0 == StepKind::Consistency).count();
        n as f64 / self.steps.len().max(1) as f64
    }
}

/// Step `k` is a reconstruction step every fourth iteration, giving the 75/25 split.
pub fn step_kind(k: usize) -> StepKind {
    if k % 4 == 3 {
        StepKind::Reconstruction
    } else {
        StepKind::Consistency
    }
}

/// Fine-tunes the canonical colours, opacities and means of `w` against the
/// frozen `prev`: three of every four steps compare both windows' overlap
/// frame from a novel view interpolated between `cameras` (random convex
/// weights), the fourth is a reconstruction step against `targets`.
/// The deformation network is frozen, and the mean gradient is taken with
/// the deformation Jacobian approximated by the identity.
pub fn finetune_window(
    w: &WindowModel,
    prev: &WindowModel,
    cameras: &[CameraModel],
    targets: &[ReconTarget],
    cfg: &FinetuneConfig,
) -> Result<Finetune> {
    check_overlap(w, prev)?;
    if cameras.is_empty() || targets.is_empty() {
        return Err(invalid("fine-tuning needs at least one camera and one reconstruction target"));
    }
    if let Some(t) = targets.iter().find(|t| t.frame < w.frame_range.0 || t.frame > w.frame_range.1) {
        return Err(invalid(format!("target frame {} outside window {:?}", t.frame, w.frame_range)));
    }
    let poses: Vec<_> = cameras.iter().map(|c| c.world_to_camera).collect();
    let mut rng = ico3d_core::synth::rng(cfg.seed);
    let prev_overlap = prev.deform(1.0)?;
    let mut win = w.clone();
    let n = win.canonical.len();
    let mut st_color = GroupState::new(win.canonical.sh.len() * 3);
    let mut st_opacity = GroupState::new(n);
    let mut st_mean = GroupState::new(n * 3);
    let opt = Optimizer::default();
    let mut steps = Vec::with_capacity(cfg.iters);
    let mut target_cursor = 0;
    for k in 0..cfg.iters {
        let kind = step_kind(k);
        let (set, camera, target) = match kind {
            StepKind::Consistency => {
                let beta = random_weights(&mut rng, cameras.len());
                let pose = interpolate_pose(&poses, &beta)?;
                let mut cam = cameras[0].clone();
                cam.world_to_camera = pose;
                let target = render_oracle(&prev_overlap, &cam, cfg.background).rgb;
                (win.deform(0.0)?, cam, target)
            }
            StepKind::Reconstruction => {
                let t = &targets[target_cursor % targets.len()];
                target_cursor += 1;
                (win.deform(win.time_of(t.frame))?, t.camera.clone(), t.image.clone())
            }
        };
        let (loss, g) = oracle_backward(&set, &camera, cfg.background, &target)?;
        if !loss.is_finite() {
            return Err(Error::ModelCorrupt(format!("window fine-tuning diverged at step {k}")));
        }
        steps.push((kind, loss));

        let c = &mut win.canonical;
        let mut flat: Vec<f64> = c.sh.iter().flatten().copied().collect();
        let gflat: Vec<f64> = g.sh.iter().flatten().copied().collect();
        st_color.update(opt, &mut flat, &gflat, cfg.lr_color);
        for (dst, src) in c.sh.iter_mut().zip(flat.chunks_exact(3)) {
            dst.copy_from_slice(src);
        }
        st_opacity.update(opt, &mut c.opacities, &g.opacity, cfg.lr_opacity);
        c.opacities.iter_mut().for_each(|o| *o = o.clamp(1e-3, 1.0));
        let mut means: Vec<f64> = c.means.iter().flat_map(|m| m.iter().copied()).collect();
        let gm: Vec<f64> = g.mean.iter().flat_map(|m| m.iter().copied()).collect();
        st_mean.update(opt, &mut means, &gm, cfg.lr_mean);
        for (dst, src) in c.means.iter_mut().zip(means.chunks_exact(3)) {
            dst.copy_from_slice(src);
        }
    }
    Ok(Finetune { window: win, steps })
}

/// Uniformly distributed point on the probability simplex.
fn random_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
