//! Image quality metrics: PSNR (optionally masked), SSIM and L1 on [0,1] images.

use crate::error::{invalid, Result};
use crate::image::Image;

/// Reported in place of +∞ for identical images.
pub const PSNR_CAP: f64 = 99.0;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub psnr: f64,
    pub psnr_masked: Option<f64>,
    pub ssim: f64,
    pub l1: f64,
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * mse.log10()).min(PSNR_CAP)
}

fn check_shapes(img: &Image, reference: &Image) -> Result<()> {
    if !img.same_shape(reference) {
        return Err(invalid(format!(
            "image {}x{}x{} vs reference {}x{}x{}",
            img.width, img.height, img.channels, reference.width, reference.height, reference.channels
        )));
    }
    if img.data.is_empty() {
        return Err(invalid("empty image"));
    }
    Ok(())
}

/// `mask` is a single-channel image of 0/1 values; only pixels with 1
/// contribute to `psnr_masked`.
pub fn metrics(img: &Image, reference: &Image, mask: Option<&Image>) -> Result<Metrics> {
    check_shapes(img, reference)?;
    let n = img.data.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    for (a, b) in img.data.iter().zip(&reference.data) {
        se += (a - b) * (a - b);
        ae += (a - b).abs();
    }
    let psnr_masked = match mask {
        None => None,
        Some(m) => Some(masked_psnr(img, reference, m)?),
    };
    Ok(Metrics { psnr: psnr_from_mse(se / n), psnr_masked, ssim: ssim(img, reference)?, l1: ae / n })
}

fn masked_psnr(img: &Image, reference: &Image, mask: &Image) -> Result<f64> {
    if mask.width != img.width || mask.height != img.height || mask.channels != 1 {
        return Err(invalid("mask must be single-channel with the image's dimensions"));
    }
    if mask.data.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("mask must be binary"));
    }
    let c = img.channels;
    let (mut se, mut count) = (0.0, 0usize);
    for (p, &m) in mask.data.iter().enumerate() {
        if m == 1.0 {
            for k in 0..c {
                let d = img.data[p * c + k] - reference.data[p * c + k];
                se += d * d;
            }
            count += c;
        }
    }
    if count == 0 {
        return Err(invalid("mask selects no pixels"));
    }
    Ok(psnr_from_mse(se / count as f64))
}

fn gaussian_window(n: usize) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..n).map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of one plane (w×h) with window `k`.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            horiz[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * horiz[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of `filter_valid`: scatters an (w−n+1)×(h−n+1) map back to w×h.
fn filter_adjoint(map: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = map[y * ow + x];
            for i in 0..n {
                horiz[(y + i) * ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = horiz[y * ow + x];
            for i in 0..n {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

/// Mean SSIM over channels and valid window positions. Images smaller than
/// the 11×11 window use a window of their smaller side.
pub fn ssim(img: &Image, reference: &Image) -> Result<f64> {
    ssim_impl(img, reference, false).map(|(s, _)| s)
}

/// SSIM together with its gradient with respect to `img`.
pub fn ssim_with_grad(img: &Image, reference: &Image) -> Result<(f64, Image)> {
    ssim_impl(img, reference, true).map(|(s, g)| (s, g.unwrap()))
}

fn ssim_impl(img: &Image, reference: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    check_shapes(img, reference)?;
    let (w, h, ch) = (img.width, img.height, img.channels);
    let k = gaussian_window(SSIM_WINDOW.min(w).min(h));
    let positions = ((w + 1 - k.len()) * (h + 1 - k.len())) as f64;
    let norm = 1.0 / (positions * ch as f64);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h, ch));
    for c in 0..ch {
        let x = plane(img, c);
        let y = plane(reference, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let sxx = filter_valid(&xx, w, h, &k);
        let syy = filter_valid(&yy, w, h, &k);
        let sxy = filter_valid(&xy, w, h, &k);
        let m = mx.len();
        let (mut k1, mut k2, mut k3) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for p in 0..m {
            let (ux, uy) = (mx[p], my[p]);
            let vx = sxx[p] - ux * ux;
            let vy = syy[p] - uy * uy;
            let cxy = sxy[p] - ux * uy;
            let a1 = 2.0 * ux * uy + SSIM_C1;
            let a2 = 2.0 * cxy + SSIM_C2;
            let b1 = ux * ux + uy * uy + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            // dS/dx_q = w_q·(k1 + k2·y_q + k3·x_q)
            k1[p] = norm * s * (2.0 * uy / a1 - 2.0 * ux / b1 - 2.0 * uy / a2 + 2.0 * ux / b2);
            k2[p] = norm * 2.0 * s / a2;
            k3[p] = -norm * 2.0 * s / b2;
        }
        if let Some(g) = grad.as_mut() {
            let g1 = filter_adjoint(&k1, w, h, &k);
            let g2 = filter_adjoint(&k2, w, h, &k);
            let g3 = filter_adjoint(&k3, w, h, &k);
            for q in 0..w * h {
                g.data[q * ch + c] = g1[q] + y[q] * g2[q] + x[q] * g3[q];
            }
        }
    }
    Ok((total * norm, grad))
}
