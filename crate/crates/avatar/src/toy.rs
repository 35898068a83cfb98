//! Small procedural head and body assets for demos, tests and benchmarks.

use std::f64::consts::PI;

use ico3d_core::math::logit;
use ico3d_core::se3::Twist;
use ico3d_core::synth::{background_shell, rng};
use ico3d_core::{GaussianSet, Pose, Result, Splat, SplatLabel};
use nalgebra::Vector3;
use rand::Rng;

use crate::anim::{KeyframeLibrary, Segment};
use crate::avatar::{compose_avatar, Avatar, ComposeOptions, ComposeReport, HeadAsset, ViewHint};
use crate::body::{partition_windows, BodyModel, HexplaneConfig, MotionSignal, WindowConfig, WindowModel};
use crate::compose::{PruneSpec, RigAlignment};
use crate::head::{HeadConfig, HeadModel, AUDIO_CHANNELS, EXPRESSION_CHANNELS};

/// Head centre in the toy body world (+y is down).
pub const TOY_HEAD_CENTER: [f64; 3] = [0.0, -0.32, 0.0];
/// Height of the neck ring in the toy body world.
pub const TOY_NECK_Y: f64 = -0.19;
pub const TOY_BODY_FRAMES: usize = 90;

const SKIN: [f64; 3] = [0.85, 0.66, 0.55];
const HEAD_RADII: [f64; 3] = [0.085, 0.115, 0.1];

fn isotropic(mean: Vector3<f64>, sigma: f64, opacity: f64, rgb: [f64; 3], label: SplatLabel) -> Splat {
    let mut s = Splat::isotropic(mean, sigma, opacity, rgb);
    s.label = label;
    s
}

/// Ellipsoidal head of `n` splats in its own frame (origin at the head centre,
/// face towards −z) with a head model whose audio channels darken the mouth
/// and whose eye channels darken the eyes.
pub fn toy_head(seed: u64, n: usize) -> Result<(HeadModel, GaussianSet)> {
    let mut r = rng(seed);
    let mut set = GaussianSet::new(0);
    let golden = PI * (3.0 - 5f64.sqrt());
    for k in 0..n {
        // Fibonacci sphere, slightly shrunk inward for volume
        let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
        let rad = (1.0 - y * y).sqrt();
        let th = golden * k as f64;
        let d = Vector3::new(rad * th.cos(), y, rad * th.sin());
        let depth = r.random_range(0.9..1.0);
        let p = Vector3::new(d.x * HEAD_RADII[0], d.y * HEAD_RADII[1], d.z * HEAD_RADII[2]) * depth;
        set.push(isotropic(p, 0.012, 0.9, SKIN, SplatLabel::Head))?;
    }
    let cfg = HeadConfig { pe_levels: 4, ..HeadConfig::default() };
    let mut m = HeadModel::init(cfg, n, &mut r);
    let (h, d, f, b) = (cfg.hidden, cfg.input_dim(), cfg.latent, cfg.channels);
    for v in &mut m.w1 {
        *v *= 0.3;
    }
    for v in m.w_rgb.iter_mut().chain(&mut m.w_opacity) {
        *v *= 0.1;
    }
    // hidden unit 0 reads latent 0 only and darkens the colour
    m.w1[..d].fill(0.0);
    m.w1[0] = 1.0;
    for ch in 0..3 {
        m.w_rgb[ch * h] = -4.0;
        m.b_rgb[ch] = logit(SKIN[ch]);
    }
    m.w_opacity[0] = 0.0;
    m.b_opacity[0] = logit(0.9);
    for i in 0..n {
        m.bias[i * f] = 0.0;
        let p = set.means[i];
        let mouth = p.z < 0.0 && (p.y - 0.055).abs() < 0.018 && p.x.abs() < 0.035;
        let eye = p.z < 0.0 && (p.y + 0.02).abs() < 0.014 && (p.x.abs() - 0.035).abs() < 0.016;
        let channels = if mouth { 0..AUDIO_CHANNELS } else if eye { AUDIO_CHANNELS..EXPRESSION_CHANNELS.min(b) } else { 0..0 };
        let gain = 1.0 / channels.len().max(1) as f64;
        for c in channels {
            m.basis[(i * b + c) * f] = gain;
        }
    }
    Ok((m, set))
}

fn push_capsule(set: &mut GaussianSet, r: &mut impl Rng, a: Vector3<f64>, b: Vector3<f64>, radius: f64, count: usize, rgb: [f64; 3]) -> Result<()> {
    let axis = b - a;
    let u = axis.cross(&Vector3::z()).try_normalize(1e-9).unwrap_or_else(Vector3::x);
    let v = axis.normalize().cross(&u);
    for _ in 0..count {
        let t: f64 = r.random();
        let ang: f64 = r.random_range(0.0..2.0 * PI);
        let rr = radius * r.random_range(0.8..1.0);
        let p = a + axis * t + (u * ang.cos() + v * ang.sin()) * rr;
        let shade = r.random_range(0.9..1.1);
        set.push(isotropic(p, radius * 0.25, 0.9, rgb.map(|c| (c * shade).min(1.0)), SplatLabel::Body))?;
    }
    Ok(())
}

/// Canonical body of roughly `n` splats: skin-coloured neck, shirt torso and
/// arms, trousers legs, standing with the neck at [`TOY_NECK_Y`].
pub fn toy_body_splats(seed: u64, n: usize) -> Result<GaussianSet> {
    let mut r = rng(seed);
    let mut set = GaussianSet::new(0);
    let shirt = [0.2, 0.35, 0.7];
    let trousers = [0.25, 0.25, 0.3];
    let part = |f: f64| ((n as f64) * f).round() as usize;
    let v = Vector3::new;
    push_capsule(&mut set, &mut r, v(0.0, -0.24, 0.0), v(0.0, -0.12, 0.0), 0.045, part(0.05), SKIN)?;
    for x in [-0.09, -0.03, 0.03, 0.09] {
        push_capsule(&mut set, &mut r, v(x, -0.12, 0.0), v(x * 0.9, 0.35, 0.0), 0.06, part(0.11), shirt)?;
    }
    for s in [-1.0, 1.0] {
        push_capsule(&mut set, &mut r, v(0.17 * s, -0.1, 0.0), v(0.22 * s, 0.3, 0.02), 0.04, part(0.08), shirt)?;
        push_capsule(&mut set, &mut r, v(0.22 * s, 0.3, 0.02), v(0.24 * s, 0.4, 0.03), 0.03, part(0.02), SKIN)?;
        push_capsule(&mut set, &mut r, v(0.07 * s, 0.35, 0.0), v(0.08 * s, 1.1, 0.0), 0.06, part(0.16), trousers)?;
    }
    Ok(set)
}

fn body_motion(frames: usize) -> Result<MotionSignal> {
    // two bursts of motion separated by calmer stretches
    let v = (0..frames - 1).map(|t| 0.2 + (t as f64 * 2.0 * PI / frames as f64).sin().abs() * 2.0).collect();
    MotionSignal::mono(v)
}

/// Dynamic toy body: windowed deformation with small random motion, a
/// keyframe library, a background shell and a default view.
pub fn toy_body(seed: u64, n: usize, frames: usize) -> Result<Avatar> {
    if frames < 3 {
        return Err(crate::invalid(format!("toy body needs at least 3 frames, got {frames}")));
    }
    let canonical = toy_body_splats(seed, n)?;
    let plan = partition_windows(&body_motion(frames)?, 30.0, 60)?;
    let cfg = WindowConfig { hexplane: HexplaneConfig { feature_dim: 8, resolutions: vec![8, 16] }, hidden: vec![32], modes: 2 };
    let mut r = rng(seed ^ 0x5eed);
    let mut windows = Vec::new();
    for &range in &plan.ranges {
        let mut w = WindowModel::new(canonical.clone(), range, &cfg, &mut r)?;
        let last = w.mlp.layers.last_mut().expect("at least one layer");
        for v in &mut last.weights {
            *v = r.random_range(-0.05..0.05);
        }
        windows.push(w);
    }
    let body = BodyModel::new(plan, windows)?;
    let mut bg = background_shell(seed ^ 0xb6, 3000, 6.0);
    bg.set_label(SplatLabel::Background);
    let last = frames - 1;
    let rest_end = (last / 4).clamp(1, 8);
    let mid = (rest_end + last) / 2;
    let actions = vec![
        Segment { start: rest_end, end: mid, reversible: true },
        Segment { start: mid, end: last, reversible: false },
        Segment { start: rest_end, end: last, reversible: true },
    ];
    Ok(Avatar {
        head: None,
        static_body: body.frame(0)?,
        body: Some(body),
        background: bg,
        library: Some(KeyframeLibrary::new(frames, (0, rest_end), actions)?),
        view: Some(toy_view()),
    })
}

pub fn toy_view() -> ViewHint {
    ViewHint { eye: Vector3::new(0.0, -0.1, -1.6), target: Vector3::new(0.0, 0.05, 0.0), focal_scale: 1.2 }
}

/// Head asset bundle contents (no track) for the toy head.
pub fn toy_head_avatar(seed: u64, n: usize) -> Result<Avatar> {
    let (model, splats) = toy_head(seed, n)?;
    Ok(Avatar { head: Some(HeadAsset { model, splats, border: GaussianSet::new(0), track: Vec::new() }), ..Default::default() })
}

/// Head-to-world transform the toy rig resolves to at `frame`: the head
/// sits on the neck and nods gently.
pub fn toy_head_pose(frame: usize) -> Pose {
    let a = 0.08 * (frame as f64 * 2.0 * PI / 45.0).sin();
    let turn = Pose::exp(&Twist { omega: Vector3::new(a, 0.5 * a, 0.0), v: Vector3::zeros() });
    Pose::from_parts(&nalgebra::Matrix3::identity(), &Vector3::from(TOY_HEAD_CENTER)) * turn
}

/// A two-setup rig with non-trivial tracker origins whose composed
/// transform equals [`toy_head_pose`].
pub fn toy_rig(frames: usize) -> RigAlignment {
    let p = |w: [f64; 3], t: [f64; 3]| Pose::exp(&Twist { omega: Vector3::from(w), v: Vector3::from(t) });
    let c1 = p([0.1, -0.2, 0.05], [0.3, 0.1, 2.0]);
    let c2 = p([-0.05, 0.3, 0.1], [-0.2, 0.4, 1.5]);
    let h_ref1 = p([0.02, 0.1, -0.03], [0.01, -0.02, 0.5]);
    let h_ref2 = p([0.0, -0.1, 0.2], [0.1, 0.0, 0.7]);
    let inner = (h_ref2 * h_ref1.inverse() * c1).inverse();
    let h_i = (0..frames).map(|k| c2 * toy_head_pose(k) * inner).collect();
    RigAlignment { c_ref_w1: c1, c_ref_w2: c2, h_ref_w1: h_ref1, h_ref_w2: h_ref2, h_i_w2: h_i }
}

/// Toy head composed onto the toy body through the toy rig.
pub fn toy_avatar(seed: u64, head_splats: usize, body_splats: usize, frames: usize) -> Result<(Avatar, ComposeReport)> {
    let head = toy_head_avatar(seed, head_splats)?;
    let body = toy_body(seed.wrapping_add(1), body_splats, frames)?;
    let opts = ComposeOptions {
        prune: PruneSpec { border_count: (head_splats / 8).max(8), ..Default::default() },
        boundary: Some(toy_boundary(16)),
        harmonize_width: Some(0.06),
        seed: seed.wrapping_add(2),
    };
    compose_avatar(&head, &body, &toy_rig(frames), &opts)
}

/// Neck ring in the toy body world.
pub fn toy_boundary(points: usize) -> Vec<Vector3<f64>> {
    (0..=points)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / points as f64;
            Vector3::new(0.05 * a.cos(), TOY_NECK_Y, 0.05 * a.sin())
        })
        .collect()
}

