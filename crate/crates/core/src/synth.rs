//! Seeded synthetic scenes for tests, benchmarks and demos.

use nalgebra::{Quaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::CameraModel;
use crate::gaussians::{GaussianSet, Splat, SplatLabel};
use crate::se3::Pose;
use crate::sh::coeffs_for_degree;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_quaternion(rng: &mut impl Rng) -> Quaternion<f64> {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return q / n;
        }
    }
}

/// Random splat with colour, scale and placement drawn from the given ranges.
pub fn random_splat(rng: &mut impl Rng, center: Vector3<f64>, extent: Vector3<f64>, scale: (f64, f64), sh_degree: usize) -> Splat {
    let mean = center + Vector3::from_fn(|i, _| rng.random_range(-extent[i]..=extent[i]));
    let mut sh: Vec<[f64; 3]> = vec![[0.0; 3]; coeffs_for_degree(sh_degree)];
    sh[0] = [0.0; 3].map(|_: f64| rng.random_range(-1.5..1.5));
    for c in sh.iter_mut().skip(1) {
        *c = [0.0; 3].map(|_: f64| rng.random_range(-0.2..0.2));
    }
    Splat {
        mean,
        rotation: random_unit_quaternion(rng),
        scale: Vector3::from_fn(|_, _| rng.random_range(scale.0..scale.1)),
        opacity: rng.random_range(0.05..1.0),
        sh,
        label: SplatLabel::Unlabeled,
    }
}

/// `n` random splats in front of [`scene_camera`].
pub fn random_scene(seed: u64, n: usize, sh_degree: usize) -> GaussianSet {
    let mut r = rng(seed);
    let splats = (0..n).map(|_| {
        random_splat(
            &mut r,
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(1.0, 1.0, 1.0),
            (0.02, 0.15),
            sh_degree,
        )
    });
    GaussianSet::from_splats(sh_degree, splats).expect("degree matches")
}

/// Camera at the origin looking down +z with a ~53° horizontal field of view.
pub fn scene_camera(width: usize, height: usize) -> CameraModel {
    CameraModel::centered(width as f64, width, height, Pose::identity())
}

/// Dense shell of splats standing in for a background environment.
pub fn background_shell(seed: u64, n: usize, radius: f64) -> GaussianSet {
    let mut r = rng(seed);
    let mut set = GaussianSet::new(0);
    for _ in 0..n {
        let d = loop {
            let v = Vector3::from_fn(|_, _| r.random_range(-1.0..1.0));
            let l = v.norm();
            if l > 0.05 && l <= 1.0 {
                break v / l;
            }
        };
        let mut s = random_splat(&mut r, d * radius, Vector3::repeat(radius * 0.02), (radius * 0.01, radius * 0.05), 0);
        s.opacity = r.random_range(0.5..1.0);
        s.label = SplatLabel::Background;
        set.push(s).expect("degree 0");
    }
    set
}
