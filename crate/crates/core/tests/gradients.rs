use ico3d_core::image::Image;
use ico3d_core::render::{oracle_backward, render_oracle};
use ico3d_core::sh::SH_C0;
use ico3d_core::synth::{random_scene, rng, scene_camera};
use ico3d_core::{CameraModel, GaussianSet, Splat};
use nalgebra::Vector3;
use rand::Rng;

const BG: [f64; 3] = [0.1, 0.2, 0.3];

fn noise_target(seed: u64, w: usize, h: usize) -> Image {
    let mut r = rng(seed);
    Image::from_data(w, h, 3, (0..w * h * 3).map(|_| r.random::<f64>()).collect()).unwrap()
}

fn loss(set: &GaussianSet, cam: &CameraModel, target: &Image) -> f64 {
    oracle_backward(set, cam, BG, target).unwrap().0
}

fn central(set: &GaussianSet, cam: &CameraModel, target: &Image, h: f64, edit: impl Fn(&mut GaussianSet, f64)) -> f64 {
    let mut p = set.clone();
    edit(&mut p, h);
    let mut m = set.clone();
    edit(&mut m, -h);
    (loss(&p, cam, target) - loss(&m, cam, target)) / (2.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn single_splat_color_matches_finite_differences() {
    let cam = scene_camera(24, 24);
    let set = GaussianSet::from_splats(
        0,
        [Splat::isotropic(Vector3::new(0.05, -0.03, 2.0), 0.12, 0.8, [0.4, 0.6, 0.3])],
    )
    .unwrap();
    let target = noise_target(1, 24, 24);
    let (_, g) = oracle_backward(&set, &cam, BG, &target).unwrap();
    for ch in 0..3 {
        let fd = central(&set, &cam, &target, 1e-4, |s, d| s.sh[0][ch] += d);
        assert!(rel_err(g.sh[0][ch], fd) <= 1e-4, "channel {ch}: {} vs {fd}", g.sh[0][ch]);
        // colour gradient is the DC gradient scaled by the band-0 constant
        assert!(rel_err(g.color[0][ch] * SH_C0, g.sh[0][ch]) <= 1e-12);
    }
}

#[test]
fn twenty_splats_opacity_and_mean_match_finite_differences() {
    for seed in 0..3 {
        let set = random_scene(100 + seed, 20, 1);
        let cam = scene_camera(32, 32);
        let target = noise_target(200 + seed, 32, 32);
        let (_, g) = oracle_backward(&set, &cam, BG, &target).unwrap();
        let mut checked = 0;
        for i in 0..set.len() {
            if g.opacity[i].abs() > 1e-6 {
                let fd = central(&set, &cam, &target, 1e-6, |s, d| s.opacities[i] += d);
                assert!(rel_err(g.opacity[i], fd) <= 1e-3, "seed {seed} splat {i} opacity: {} vs {fd}", g.opacity[i]);
                checked += 1;
            }
            for a in 0..3 {
                if g.mean[i][a].abs() > 1e-6 {
                    let fd = central(&set, &cam, &target, 1e-6, |s, d| s.means[i][a] += d);
                    assert!(rel_err(g.mean[i][a], fd) <= 1e-3, "seed {seed} splat {i} mean[{a}]: {} vs {fd}", g.mean[i][a]);
                    checked += 1;
                }
            }
        }
        assert!(checked > 20, "too few active gradients ({checked})");
    }
}

#[test]
fn higher_order_sh_gradients_match_finite_differences() {
    let set = random_scene(7, 8, 3);
    let cam = scene_camera(24, 24);
    let target = noise_target(8, 24, 24);
    let (_, g) = oracle_backward(&set, &cam, BG, &target).unwrap();
    for k in [1, 5, 9, 15, 16 + 3, 16 * 3 + 12] {
        for ch in 0..3 {
            if g.sh[k][ch].abs() > 1e-6 {
                let fd = central(&set, &cam, &target, 1e-4, |s, d| s.sh[k][ch] += d);
                assert!(rel_err(g.sh[k][ch], fd) <= 1e-4, "coeff {k}/{ch}: {} vs {fd}", g.sh[k][ch]);
            }
        }
    }
}

#[test]
fn zero_residual_gives_zero_gradients() {
    for seed in 0..5 {
        let set = random_scene(seed, 20, 2);
        let cam = scene_camera(32, 32);
        let target = render_oracle(&set, &cam, BG).rgb;
        let (l, g) = oracle_backward(&set, &cam, BG, &target).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.max_abs() <= 1e-8);
    }
}
