//! Real spherical harmonics in the community splat ordering (degree ≤ 3).

use nalgebra::Vector3;

use crate::error::{invalid, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

pub const fn coeffs_for_degree(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn degree_for_coeffs(count: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|d| coeffs_for_degree(*d) == count)
}

/// Basis values for the first `(degree+1)²` functions at a unit direction.
pub fn basis(dir: &Vector3<f64>, degree: usize, out: &mut [f64]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[0] = SH_C0;
    if degree == 0 {
        return;
    }
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = SH_C2[0] * xy;
    out[5] = SH_C2[1] * yz;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * xz;
    out[8] = SH_C2[4] * (xx - yy);
    if degree == 2 {
        return;
    }
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * xy * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
}

/// Partial derivatives of each basis polynomial with respect to (x, y, z),
/// treating the direction components as free variables.
pub fn basis_gradient(dir: &Vector3<f64>, degree: usize, out: &mut [Vector3<f64>]) {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    out[0] = Vector3::zeros();
    if degree == 0 {
        return;
    }
    out[1] = Vector3::new(0.0, -SH_C1, 0.0);
    out[2] = Vector3::new(0.0, 0.0, SH_C1);
    out[3] = Vector3::new(-SH_C1, 0.0, 0.0);
    if degree == 1 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = SH_C2[0] * Vector3::new(y, x, 0.0);
    out[5] = SH_C2[1] * Vector3::new(0.0, z, y);
    out[6] = SH_C2[2] * Vector3::new(-2.0 * x, -2.0 * y, 4.0 * z);
    out[7] = SH_C2[3] * Vector3::new(z, 0.0, x);
    out[8] = SH_C2[4] * Vector3::new(2.0 * x, -2.0 * y, 0.0);
    if degree == 2 {
        return;
    }
    out[9] = SH_C3[0] * Vector3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    out[10] = SH_C3[1] * Vector3::new(y * z, x * z, x * y);
    out[11] = SH_C3[2] * Vector3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    out[12] = SH_C3[3] * Vector3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * Vector3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    out[14] = SH_C3[5] * Vector3::new(2.0 * x * z, -2.0 * y * z, xx - yy);
    out[15] = SH_C3[6] * Vector3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

/// Unclamped `0.5 + Σ basis·coeff` for coefficients laid out `[coeff][rgb]`.
pub fn eval_sh_unclamped(coeffs: &[[f64; 3]], dir: &Vector3<f64>, degree: usize) -> [f64; 3] {
    let n = coeffs_for_degree(degree);
    let mut b = [0.0; 16];
    basis(dir, degree, &mut b);
    let mut rgb = [0.5; 3];
    for (k, c) in coeffs.iter().take(n).enumerate() {
        for ch in 0..3 {
            rgb[ch] += b[k] * c[ch];
        }
    }
    rgb
}

/// View-dependent RGB in [0,1].
pub fn eval_sh(coeffs: &[[f64; 3]], view_dir: &Vector3<f64>, degree: usize) -> Result<[f64; 3]> {
    if degree > MAX_SH_DEGREE {
        return Err(invalid(format!("SH degree {degree} exceeds {MAX_SH_DEGREE}")));
    }
    if coeffs.len() != coeffs_for_degree(degree) {
        return Err(invalid(format!(
            "degree {degree} needs {} coefficients, got {}",
            coeffs_for_degree(degree),
            coeffs.len()
        )));
    }
    let rgb = eval_sh_unclamped(coeffs, view_dir, degree);
    Ok(rgb.map(|v| v.clamp(0.0, 1.0)))
}

/// Degree-0 coefficient that evaluates to `rgb`.
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - 0.5) / SH_C0
}

pub fn dc_to_rgb(dc: f64) -> f64 {
    0.5 + SH_C0 * dc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_coeffs(rng: &mut impl Rng, n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| [0.0; 3].map(|_: f64| rng.random_range(-0.3..0.3)))
            .collect()
    }

    #[test]
    fn zero_dc_is_half_grey() {
        let rgb = eval_sh(&[[0.0; 3]], &Vector3::new(0.3, 0.4, (0.75f64).sqrt()), 0).unwrap();
        assert_eq!(rgb, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn degree_zero_is_view_independent() {
        let c = [[0.4, -0.2, 1.0]];
        let a = eval_sh(&c, &Vector3::new(1.0, 0.0, 0.0), 0).unwrap();
        let b = eval_sh(&c, &Vector3::new(0.0, -0.6, 0.8), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degree_one_z_flip_matches_tabulated_y10() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_coeffs(&mut rng, 4);
        let up = eval_sh_unclamped(&c, &Vector3::new(0.0, 0.0, 1.0), 1);
        let down = eval_sh_unclamped(&c, &Vector3::new(0.0, 0.0, -1.0), 1);
        // real Y_1^0(θ=0) = sqrt(3 / 4π)
        let y10 = (3.0 / (4.0 * PI)).sqrt();
        for ch in 0..3 {
            let expected = 2.0 * y10 * c[2][ch];
            assert!((up[ch] - down[ch] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn coefficient_count_mismatch_rejected() {
        assert!(eval_sh(&[[0.0; 3]; 3], &Vector3::z(), 1).is_err());
        assert!(eval_sh(&[[0.0; 3]; 25], &Vector3::z(), 4).is_err());
    }

    #[test]
    fn lower_degree_reproduced_when_high_band_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 1..=3 {
            let mut c = random_coeffs(&mut rng, coeffs_for_degree(d));
            for k in coeffs_for_degree(d - 1)..coeffs_for_degree(d) {
                c[k] = [0.0; 3];
            }
            let dir = Vector3::new(0.2, -0.5, 0.7).normalize();
            let hi = eval_sh(&c, &dir, d).unwrap();
            let lo = eval_sh(&c[..coeffs_for_degree(d - 1)], &dir, d - 1).unwrap();
            assert_eq!(hi, lo);
        }
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        let dir = Vector3::new(0.3, -0.4, 0.5);
        let h = 1e-6;
        let mut g = [Vector3::zeros(); 16];
        basis_gradient(&dir, 3, &mut g);
        for axis in 0..3 {
            let mut p = dir;
            let mut m = dir;
            p[axis] += h;
            m[axis] -= h;
            let (mut bp, mut bm) = ([0.0; 16], [0.0; 16]);
            basis(&p, 3, &mut bp);
            basis(&m, 3, &mut bm);
            for k in 0..16 {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - g[k][axis]).abs() < 1e-8, "k={k} axis={axis}");
            }
        }
    }
}
