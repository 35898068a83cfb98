//! Gradients of an image loss through the reference renderer with respect to
//! splat colour, opacity and mean.

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use rayon::prelude::*;

use super::project::{self, ProjectedSplat, ProjectionTerms, MIN_TRANSMITTANCE};
use crate::camera::CameraModel;
use crate::error::{invalid, Result};
use crate::gaussians::GaussianSet;
use crate::image::Image;
use crate::sh;

/// Rows handled per reduction block; the block split is independent of the
/// worker count so results are identical across runs and pool sizes.
const ROWS_PER_BLOCK: usize = 8;

/// Per-splat gradients. Splats that were culled get zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// dL/d(evaluated RGB after clamping).
    pub color: Vec<[f64; 3]>,
    /// dL/d SH coefficients, laid out like [`GaussianSet::sh`].
    pub sh: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub mean: Vec<Vector3<f64>>,
}

impl Gradients {
    pub fn zeros(n: usize, coeffs: usize) -> Self {
        Self {
            color: vec![[0.0; 3]; n],
            sh: vec![[0.0; 3]; n * coeffs],
            opacity: vec![0.0; n],
            mean: vec![Vector3::zeros(); n],
        }
    }

    pub fn max_abs(&self) -> f64 {
        let c = self.color.iter().flatten().chain(self.sh.iter().flatten());
        let o = self.opacity.iter();
        let m = self.mean.iter().flat_map(|v| v.iter());
        c.chain(o).chain(m).map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Screen-space accumulators for one splat.
#[derive(Clone, Copy, Default)]
struct ScreenGrad {
    color: [f64; 3],
    opacity: f64,
    mean2d: Vector2<f64>,
    conic: [f64; 3],
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for ch in 0..3 {
            self.color[ch] += o.color[ch];
            self.conic[ch] += o.conic[ch];
        }
        self.opacity += o.opacity;
        self.mean2d += o.mean2d;
    }
}

/// L1 loss (mean absolute error over every pixel and channel) between the
/// reference render and `target`, with its gradients.
pub fn oracle_backward(set: &GaussianSet, cam: &CameraModel, background: [f64; 3], target: &Image) -> Result<(f64, Gradients)> {
    let frame = super::render_oracle(set, cam, background);
    if !frame.rgb.same_shape(target) {
        return Err(invalid(format!(
            "target is {}x{}x{}, render is {}x{}x3",
            target.width, target.height, target.channels, cam.width, cam.height
        )));
    }
    let n = target.data.len() as f64;
    let mut loss = 0.0;
    let mut dl = Image::new(cam.width, cam.height, 3);
    for ((r, t), g) in frame.rgb.data.iter().zip(&target.data).zip(dl.data.iter_mut()) {
        let d = r - t;
        loss += d.abs();
        // subgradient at an exact zero residual is taken as 0
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((loss / n, render_backward(set, cam, background, &dl)?))
}

/// Back-propagates a per-pixel colour gradient `dl_dpixel` through the
/// reference renderer.
pub fn render_backward(set: &GaussianSet, cam: &CameraModel, background: [f64; 3], dl_dpixel: &Image) -> Result<Gradients> {
    let (w, h) = (cam.width, cam.height);
    if dl_dpixel.width != w || dl_dpixel.height != h || dl_dpixel.channels != 3 {
        return Err(invalid("pixel gradient does not match the camera viewport"));
    }
    let mut projected: Vec<(ProjectedSplat, ProjectionTerms)> =
        (0..set.len()).filter_map(|i| project::project_one(set, cam, i)).collect();
    projected.sort_by(|a, b| project::depth_order(&a.0, &b.0));
    let splats: Vec<&ProjectedSplat> = projected.iter().map(|(s, _)| s).collect();
    let np = splats.len();

    let blocks: Vec<Vec<ScreenGrad>> = (0..h.div_ceil(ROWS_PER_BLOCK))
        .into_par_iter()
        .map(|block| {
            let mut acc = vec![ScreenGrad::default(); np];
            let mut hits: Vec<(usize, f64, f64)> = Vec::new();
            let y_end = ((block + 1) * ROWS_PER_BLOCK).min(h);
            for y in block * ROWS_PER_BLOCK..y_end {
                for x in 0..w {
                    let g = dl_dpixel.pixel(x, y);
                    if g.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    pixel_backward(x as f64, y as f64, &splats, &background, [g[0], g[1], g[2]], &mut hits, &mut acc);
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![ScreenGrad::default(); np];
    for b in &blocks {
        for (s, g) in screen.iter_mut().zip(b) {
            s.add(g);
        }
    }

    let coeffs = set.coeffs_per_splat();
    let mut grads = Gradients::zeros(set.len(), coeffs);
    let rot = cam.rotation();
    let mut basis = [0.0; 16];
    let mut dbasis = [Vector3::zeros(); 16];
    for ((s, terms), sg) in projected.iter().zip(&screen) {
        let i = s.index;
        grads.opacity[i] = sg.opacity;

        // colour: clamp passes gradient only inside [0, 1]
        let mut d_raw = [0.0; 3];
        for ch in 0..3 {
            grads.color[i][ch] = sg.color[ch];
            if (0.0..=1.0).contains(&terms.raw_rgb[ch]) {
                d_raw[ch] = sg.color[ch];
            }
        }
        let degree = set.sh_degree();
        sh::basis(&terms.view_dir, degree, &mut basis);
        for k in 0..coeffs {
            for ch in 0..3 {
                grads.sh[i * coeffs + k][ch] = d_raw[ch] * basis[k];
            }
        }
        let mut d_dir = Vector3::zeros();
        if degree > 0 {
            sh::basis_gradient(&terms.view_dir, degree, &mut dbasis);
            let c = set.sh_of(i);
            for k in 1..coeffs {
                let wsum = d_raw[0] * c[k][0] + d_raw[1] * c[k][1] + d_raw[2] * c[k][2];
                d_dir += dbasis[k] * wsum;
            }
        }
        let d = terms.view_dir;
        let d_mean_color = (d_dir - d * d.dot(&d_dir)) / terms.view_dist;

        // conic (a, b, c) → 2D covariance
        let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
        let g_q = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
        let g_cov = -(q * g_q * q);
        let g_j: Matrix2x3<f64> = 2.0 * g_cov * terms.j * terms.cov_cam;

        let (x, y, z) = (terms.t.x, terms.t.y, terms.t.z);
        let (fx, fy) = (cam.fx, cam.fy);
        let (z2, z3) = (z * z, z * z * z);
        let mut d_t = Vector3::zeros();
        d_t.x += g_j[(0, 2)] * (-fx / z2);
        d_t.y += g_j[(1, 2)] * (-fy / z2);
        d_t.z += g_j[(0, 0)] * (-fx / z2)
            + g_j[(0, 2)] * (2.0 * fx * x / z3)
            + g_j[(1, 1)] * (-fy / z2)
            + g_j[(1, 2)] * (2.0 * fy * y / z3);
        d_t.x += sg.mean2d.x * fx / z;
        d_t.z += sg.mean2d.x * (-fx * x / z2);
        d_t.y += sg.mean2d.y * fy / z;
        d_t.z += sg.mean2d.y * (-fy * y / z2);

        grads.mean[i] = rot.transpose() * d_t + d_mean_color;
    }
    Ok(grads)
}

#[allow(clippy::too_many_arguments)]
fn pixel_backward(
    px: f64,
    py: f64,
    splats: &[&ProjectedSplat],
    background: &[f64; 3],
    dl_dc: [f64; 3],
    hits: &mut Vec<(usize, f64, f64)>,
    acc: &mut [ScreenGrad],
) {
    // forward replay: (sorted slot, alpha, transmittance before)
    hits.clear();
    let mut t = 1.0;
    for (k, s) in splats.iter().enumerate() {
        let Some((alpha, _)) = s.alpha_at(px, py) else { continue };
        hits.push((k, alpha, t));
        t *= 1.0 - alpha;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    // back-to-front: `behind` is the colour seen through the current splat
    let mut behind = *background;
    for &(k, alpha, t_before) in hits.iter().rev() {
        let s = splats[k];
        let mut d_alpha = 0.0;
        for ch in 0..3 {
            d_alpha += dl_dc[ch] * t_before * (s.rgb[ch] - behind[ch]);
            acc[k].color[ch] += dl_dc[ch] * alpha * t_before;
        }
        let g = alpha / s.opacity;
        acc[k].opacity += d_alpha * g;
        let d_power = d_alpha * alpha;
        let dx = px - s.mean.x;
        let dy = py - s.mean.y;
        let [a, b, c] = s.conic;
        // ∂power/∂mean = Q·d
        acc[k].mean2d.x += d_power * (a * dx + b * dy);
        acc[k].mean2d.y += d_power * (b * dx + c * dy);
        acc[k].conic[0] += d_power * (-0.5 * dx * dx);
        acc[k].conic[1] += d_power * (-dx * dy);
        acc[k].conic[2] += d_power * (-0.5 * dy * dy);
        for ch in 0..3 {
            behind[ch] = s.rgb[ch] * alpha + (1.0 - alpha) * behind[ch];
        }
    }
}

