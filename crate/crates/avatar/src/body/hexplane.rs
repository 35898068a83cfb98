use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::Vector3;
use rand::Rng;

/// Coordinate pairs of the six planes over (x, y, z, t): xy, xz, yz, xt, yt, zt.
pub const PLANES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

static WARNED_CLAMP: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HexplaneConfig {
    pub feature_dim: usize,
    pub resolutions: Vec<usize>,
}

impl Default for HexplaneConfig {
    fn default() -> Self {
        Self { feature_dim: 16, resolutions: vec![32, 64] }
    }
}

impl HexplaneConfig {
    pub fn output_dim(&self) -> usize {
        self.feature_dim * self.resolutions.len()
    }

    fn grid_len(&self, res: usize) -> usize {
        6 * res * res * self.feature_dim
    }
}

/// Six 2D feature planes per resolution. Plane features are multiplied
/// across planes and concatenated across resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct Hexplane {
    pub config: HexplaneConfig,
    /// Per resolution, `[plane][v][u][feature]` with u along the pair's first axis.
    pub grids: Vec<Vec<f64>>,
}

impl Hexplane {
    pub fn filled(config: HexplaneConfig, value: f64) -> Self {
        let grids = config.resolutions.iter().map(|&r| vec![value; config.grid_len(r)]).collect();
        Self { config, grids }
    }

    /// Spatial planes uniform in [0.1, 0.5], time planes at 1 so that the
    /// encoding starts out static.
    pub fn init(config: HexplaneConfig, rng: &mut impl Rng) -> Self {
        let mut h = Self::filled(config, 1.0);
        let d = h.config.feature_dim;
        for (ri, &res) in h.config.resolutions.iter().enumerate() {
            let plane = res * res * d;
            for p in 0..3 {
                for v in &mut h.grids[ri][p * plane..(p + 1) * plane] {
                    *v = rng.random_range(0.1..0.5);
                }
            }
        }
        h
    }

    /// Feature vector at the normalized point `mu` ∈ [0,1]³ and time `t` ∈ [0,1].
    /// Coordinates outside the unit range are clamped.
    pub fn st_encode(&self, mu: &Vector3<f64>, t: f64) -> Vec<f64> {
        let mut q = [mu.x, mu.y, mu.z, t];
        if q.iter().any(|v| !(0.0..=1.0).contains(v)) {
            if !WARNED_CLAMP.swap(true, Ordering::Relaxed) {
                tracing::warn!(?q, "hexplane query outside the normalized bounds; clamping");
            }
            for v in &mut q {
                *v = if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) };
            }
        }
        let d = self.config.feature_dim;
        let mut out = Vec::with_capacity(self.config.output_dim());
        let mut sample = vec![0.0; d];
        for (ri, &res) in self.config.resolutions.iter().enumerate() {
            let mut prod = vec![1.0; d];
            for (p, &(a, b)) in PLANES.iter().enumerate() {
                self.bilinear(ri, res, p, q[a], q[b], &mut sample);
                for (x, s) in prod.iter_mut().zip(&sample) {
                    *x *= s;
                }
            }
            out.extend_from_slice(&prod);
        }
        out
    }

    fn bilinear(&self, ri: usize, res: usize, plane: usize, u: f64, v: f64, out: &mut [f64]) {
        let d = self.config.feature_dim;
        let cell = |c: f64| {
            let g = c * (res - 1) as f64;
            let i = (g.floor() as usize).min(res.saturating_sub(2));
            (i, g - i as f64)
        };
        let (u0, fu) = cell(u);
        let (v0, fv) = cell(v);
        let grid = &self.grids[ri][plane * res * res * d..(plane + 1) * res * res * d];
        let at = |vv: usize, uu: usize| &grid[(vv * res + uu) * d..(vv * res + uu + 1) * d];
        let (u1, v1) = ((u0 + 1).min(res - 1), (v0 + 1).min(res - 1));
        let w = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
        let corners = [at(v0, u0), at(v0, u1), at(v1, u0), at(v1, u1)];
        for k in 0..d {
            out[k] = (0..4).map(|c| w[c] * corners[c][k]).sum();
        }
    }

    /// Mutable feature vector at node (u, v) of a plane; used by tests and tools.
    pub fn node_mut(&mut self, resolution_index: usize, plane: usize, u: usize, v: usize) -> &mut [f64] {
        let res = self.config.resolutions[resolution_index];
        let d = self.config.feature_dim;
        let off = plane * res * res * d + (v * res + u) * d;
        &mut self.grids[resolution_index][off..off + d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HexplaneConfig {
        HexplaneConfig { feature_dim: 3, resolutions: vec![4, 7] }
    }

    fn random(seed: u64) -> Hexplane {
        let mut r = ico3d_core::synth::rng(seed);
        let mut h = Hexplane::filled(small(), 0.0);
        for g in &mut h.grids {
            for v in g.iter_mut() {
                *v = r.random_range(-1.0..1.0);
            }
        }
        h
    }

    #[test]
    fn ones_give_ones() {
        let h = Hexplane::filled(HexplaneConfig::default(), 1.0);
        let f = h.st_encode(&Vector3::new(0.3, 0.7, 0.1), 0.42);
        assert_eq!(f.len(), 32);
        assert!(f.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn nodes_are_exact() {
        let h = random(1);
        // res 4 nodes sit at multiples of 1/3, res 7 at multiples of 1/6, so 1/3 and 2/3 hit both
        let (x, y, z, t) = (1.0 / 3.0, 2.0 / 3.0, 0.0, 1.0);
        let f = h.st_encode(&Vector3::new(x, y, z), t);
        for (ri, &res) in h.config.resolutions.iter().enumerate() {
            let idx = |c: f64| (c * (res - 1) as f64).round() as usize;
            let q = [x, y, z, t];
            let mut expect = vec![1.0; 3];
            for (p, &(a, b)) in PLANES.iter().enumerate() {
                let off = p * res * res * 3 + (idx(q[b]) * res + idx(q[a])) * 3;
                for k in 0..3 {
                    expect[k] *= h.grids[ri][off + k];
                }
            }
            for k in 0..3 {
                assert!((f[ri * 3 + k] - expect[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cell_centre_matches_hand_interpolation() {
        let h = random(2);
        let res = 4;
        // centre of cell (1,1)..(2,2) in every plane at resolution 4
        let c = 1.5 / 3.0;
        let f = h.st_encode(&Vector3::new(c, c, c), c);
        let mut expect = [1.0; 3];
        for p in 0..6 {
            for k in 0..3 {
                let node = |u: usize, v: usize| h.grids[0][p * res * res * 3 + (v * res + u) * 3 + k];
                expect[k] *= 0.25 * (node(1, 1) + node(2, 1) + node(1, 2) + node(2, 2));
            }
        }
        for k in 0..3 {
            assert!((f[k] - expect[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn outside_bounds_clamped() {
        let h = random(3);
        assert_eq!(h.st_encode(&Vector3::new(-0.5, 1.5, 0.2), 2.0), h.st_encode(&Vector3::new(0.0, 1.0, 0.2), 1.0));
    }
}
