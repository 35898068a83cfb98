use ico3d_core::metrics::ssim_with_grad;
use ico3d_core::render::{render_backward, render_oracle};
use ico3d_core::{CameraModel, Error, GaussianSet, Image, Result};
use nalgebra::Vector3;

use super::model::{head_backward, head_backward_outputs, head_forward, HeadModel};
use super::apply_output;
use crate::invalid;
use crate::optim::{GroupState, Optimizer};

/// One supervision sample for [`fit_head`].
#[derive(Debug, Clone)]
pub enum HeadSample {
    /// Per-Gaussian targets (feature level).
    Features { e: Vec<f64>, rgb: Vec<[f64; 3]>, opacity: Vec<f64> },
    /// A target image under a camera (render level).
    Image { e: Vec<f64>, camera: CameraModel, image: Image },
}

#[derive(Debug, Clone, Copy)]
pub struct HeadFitConfig {
    pub iters: usize,
    pub lr_basis: f64,
    pub lr_bias: f64,
    pub lr_mlp: f64,
    pub optimizer: Optimizer,
    /// Image-loss weights: λ₁·L1 + λ_s·(1 − SSIM).
    pub lambda_l1: f64,
    pub lambda_ssim: f64,
    pub background: [f64; 3],
}

impl Default for HeadFitConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            lr_basis: 0.005,
            lr_bias: 0.0025,
            lr_mlp: 0.001,
            optimizer: Optimizer::default(),
            lambda_l1: 0.8,
            lambda_ssim: 0.2,
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeadFit {
    pub model: HeadModel,
    /// Mean dataset loss before each iteration's update.
    pub losses: Vec<f64>,
}

/// Full-batch fitting of `model` on `dataset`. `geometry` supplies the means
/// (and, for image samples, the splat shapes the head colours are painted on).
pub fn fit_head(model: &HeadModel, geometry: &GaussianSet, dataset: &[HeadSample], cfg: &HeadFitConfig) -> Result<HeadFit> {
    if dataset.is_empty() {
        return Err(invalid("empty head fitting dataset"));
    }
    if geometry.len() != model.count {
        return Err(invalid(format!("geometry has {} splats, model {}", geometry.len(), model.count)));
    }
    let mut model = model.clone();
    let mut states: Vec<GroupState> = model.groups().iter().map(|g| GroupState::new(g.len())).collect();
    let lrs = [cfg.lr_basis, cfg.lr_bias, cfg.lr_mlp, cfg.lr_mlp, cfg.lr_mlp, cfg.lr_mlp, cfg.lr_mlp, cfg.lr_mlp];
    let mut losses = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let (loss, grads) = dataset_gradient(&model, geometry, dataset, cfg)?;
        if !loss.is_finite() {
            return Err(Error::ModelCorrupt(format!("head fit diverged at iteration {it}: loss {loss}")));
        }
        losses.push(loss);
        for (((p, g), s), lr) in model.groups_mut().into_iter().zip(grads.groups()).zip(&mut states).zip(lrs) {
            s.update(cfg.optimizer, p, g, lr);
        }
    }
    Ok(HeadFit { model, losses })
}

/// Mean loss and gradient over the dataset.
pub fn dataset_gradient(model: &HeadModel, geometry: &GaussianSet, dataset: &[HeadSample], cfg: &HeadFitConfig) -> Result<(f64, HeadModel)> {
    let mut total = model.zeros_like();
    total.color_gain = [0.0; 3];
    let mut loss = 0.0;
    let w = 1.0 / dataset.len() as f64;
    for sample in dataset {
        let (l, g) = match sample {
            HeadSample::Features { e, rgb, opacity } => head_backward(model, e, &geometry.means, rgb, opacity)?,
            HeadSample::Image { e, camera, image } => image_gradient(model, geometry, e, camera, image, cfg)?,
        };
        loss += w * l;
        for (dst, src) in total.groups_mut().into_iter().zip(g.groups()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += w * b;
            }
        }
    }
    Ok((loss, total))
}

/// Render-level loss λ₁·L1 + λ_s·(1 − SSIM) through the reference renderer.
pub fn image_loss(model: &HeadModel, geometry: &GaussianSet, e: &[f64], camera: &CameraModel, target: &Image, cfg: &HeadFitConfig) -> Result<f64> {
    image_gradient_impl(model, geometry, e, camera, target, cfg, false).map(|(l, _)| l)
}

fn image_gradient(model: &HeadModel, geometry: &GaussianSet, e: &[f64], camera: &CameraModel, target: &Image, cfg: &HeadFitConfig) -> Result<(f64, HeadModel)> {
    image_gradient_impl(model, geometry, e, camera, target, cfg, true).map(|(l, g)| (l, g.unwrap()))
}

fn image_gradient_impl(
    model: &HeadModel,
    geometry: &GaussianSet,
    e: &[f64],
    camera: &CameraModel,
    target: &Image,
    cfg: &HeadFitConfig,
    want_grad: bool,
) -> Result<(f64, Option<HeadModel>)> {
    let out = head_forward(model, e, &geometry.means)?;
    let mut set = geometry.clone();
    apply_output(&mut set, &out);
    let frame = render_oracle(&set, camera, cfg.background);
    if !frame.rgb.same_shape(target) {
        return Err(invalid("target image does not match the camera viewport"));
    }
    let n = target.data.len() as f64;
    let (ssim, dssim) = ssim_with_grad(&frame.rgb, target)?;
    let mut l1 = 0.0;
    let mut dl = Image::new(camera.width, camera.height, 3);
    for (k, (r, t)) in frame.rgb.data.iter().zip(&target.data).enumerate() {
        let d = r - t;
        l1 += d.abs();
        let s = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
        dl.data[k] = cfg.lambda_l1 * s / n - cfg.lambda_ssim * dssim.data[k];
    }
    let loss = cfg.lambda_l1 * l1 / n + cfg.lambda_ssim * (1.0 - ssim);
    if !want_grad {
        return Ok((loss, None));
    }
    let g = render_backward(&set, camera, cfg.background, &dl)?;
    let means: Vec<Vector3<f64>> = geometry.means.clone();
    let grads = head_backward_outputs(model, e, &means, &g.color, &g.opacity)?;
    Ok((loss, Some(grads)))
}
