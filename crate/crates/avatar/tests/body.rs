use ico3d_avatar::body::{
    consistency_loss, finetune_window, partition_windows, tunable_layer, HexplaneConfig, MotionSignal, ReconTarget, StepKind, TunableLayer,
    WindowConfig, WindowModel, FinetuneConfig,
};
use ico3d_core::synth::rng;
use ico3d_core::{render_oracle, CameraModel, GaussianSet, Splat};
use nalgebra::Vector3;
use rand::Rng;

/// Boundaries found by re-summing each candidate window from scratch.
fn brute_force_plan(values: &[f64], cameras: usize, thresh: f64, cap: usize) -> Vec<(usize, usize)> {
    let transitions = values.len() / cameras;
    let mean = |t: usize| values[t * cameras..(t + 1) * cameras].iter().sum::<f64>() / cameras as f64;
    let mut out = Vec::new();
    let mut start = 0;
    while start < transitions {
        let mut end = None;
        for e in start + 1..=transitions {
            let mut acc = 0.0;
            for t in start..e {
                acc += mean(t);
            }
            if acc >= thresh || e - start + 1 >= cap {
                end = Some(e);
                break;
            }
        }
        match end {
            Some(e) => {
                out.push((start, e));
                start = e;
            }
            None => {
                out.push((start, transitions));
                break;
            }
        }
    }
    out
}

#[test]
fn partition_matches_brute_force_on_random_signals() {
    let mut r = rng(1);
    for case in 0..1000 {
        let cameras = r.random_range(1..4);
        let transitions = r.random_range(1..300);
        // integer-valued motion keeps every partial sum exact
        let values: Vec<f64> = (0..transitions * cameras).map(|_| r.random_range(0..20) as f64).collect();
        let thresh = r.random_range(1..200) as f64;
        let cap = r.random_range(2..80);
        let sig = MotionSignal::new(cameras, values.clone()).unwrap();
        let plan = partition_windows(&sig, thresh, cap).unwrap();
        assert_eq!(plan.ranges, brute_force_plan(&values, cameras, thresh, cap), "case {case}");
        assert_eq!(plan.ranges[0].0, 0);
        assert_eq!(plan.ranges.last().unwrap().1, transitions);
        for w in plan.ranges.windows(2) {
            assert_eq!(w[0].1, w[1].0, "consecutive windows share exactly one frame");
        }
        assert!(plan.ranges.iter().all(|(s, e)| e > s));
    }
}

fn small_set(seed: u64, n: usize) -> GaussianSet {
    let mut r = rng(seed);
    let splats = (0..n).map(|_| {
        let p = Vector3::from_fn(|_, _| r.random_range(-0.4..0.4));
        Splat::isotropic(p, r.random_range(0.06..0.12), r.random_range(0.5..0.9), [r.random(), r.random(), r.random()])
    });
    GaussianSet::from_splats(0, splats).unwrap()
}

fn light_config() -> WindowConfig {
    WindowConfig { hexplane: HexplaneConfig { feature_dim: 8, resolutions: vec![8, 16] }, hidden: vec![32, 32], modes: 3 }
}

#[test]
fn zero_initialized_output_is_identity() {
    let set = small_set(2, 50);
    let w = WindowModel::new(set.clone(), (0, 10), &light_config(), &mut rng(2)).unwrap();
    for t in [0.0, 0.3, 1.0] {
        assert_eq!(w.deform(t).unwrap(), set);
    }
}

#[test]
fn one_hot_mode_weights_reduce_to_plain_layer() {
    let mut r = rng(3);
    let mut layer = TunableLayer::init(12, 7, 4, &mut r);
    for b in &mut layer.biases {
        *b = r.random();
    }
    for m in 0..4 {
        let x: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut alpha = vec![0.0; 4];
        alpha[m] = 1.0;
        let got = tunable_layer(&x, &alpha, &layer, true).unwrap();
        for o in 0..7 {
            let mut z = layer.biases[m * 7 + o];
            for i in 0..12 {
                z += layer.weights[(m * 7 + o) * 12 + i] * x[i];
            }
            assert!((got[o] - z).abs() <= 1e-6);
        }
    }
}

/// Two 64×64 cameras looking at the origin from slightly different angles.
fn cameras() -> Vec<CameraModel> {
    let up = Vector3::new(0.0, -1.0, 0.0);
    [-0.4, 0.4]
        .iter()
        .map(|&x| CameraModel::look_at(Vector3::new(x, 0.0, -2.0), Vector3::zeros(), up, 64.0, 64, 64))
        .collect()
}

#[test]
fn finetuning_reduces_consistency_loss() {
    let base = small_set(4, 30);
    let cfg = light_config();
    let prev = WindowModel::new(base.clone(), (0, 10), &cfg, &mut rng(4)).unwrap();
    let mut perturbed = base.clone();
    let mut r = rng(5);
    for i in 0..perturbed.len() {
        let c = perturbed.base_color(i).map(|v| (v + r.random_range(-0.3..0.3)).clamp(0.0, 1.0));
        perturbed.set_flat_color(i, c);
    }
    let w = WindowModel::new(perturbed, (10, 20), &cfg, &mut rng(6)).unwrap();
    let cams = cameras();
    let targets: Vec<ReconTarget> = cams
        .iter()
        .map(|c| ReconTarget { camera: *c, frame: 10, image: render_oracle(&base, c, [0.0; 3]).rgb })
        .collect();
    let mid = {
        let mut c = cams[0];
        c.world_to_camera = ico3d_core::interpolate_pose(&[cams[0].world_to_camera, cams[1].world_to_camera], &[0.5, 0.5]).unwrap();
        c
    };
    let before = consistency_loss(&w, &prev, &mid, [0.0; 3]).unwrap();
    let ft = finetune_window(&w, &prev, &cams, &targets, &FinetuneConfig { iters: 500, ..Default::default() }).unwrap();
    let after = consistency_loss(&ft.window, &prev, &mid, [0.0; 3]).unwrap();
    assert!(after <= 0.5 * before, "consistency {before} -> {after}");
    let frac = ft.consistency_fraction();
    assert!((frac - 0.75).abs() <= 0.01, "{frac}");
    assert_eq!(ft.steps.iter().filter(|s| s.0 == StepKind::Reconstruction).count(), 125);
}

#[test]
fn finetuning_rejects_non_adjacent_windows() {
    let set = small_set(7, 5);
    let cfg = light_config();
    let a = WindowModel::new(set.clone(), (0, 10), &cfg, &mut rng(7)).unwrap();
    let b = WindowModel::new(set, (11, 20), &cfg, &mut rng(8)).unwrap();
    assert!(consistency_loss(&b, &a, &cameras()[0], [0.0; 3]).is_err());
}
