use std::f64::consts::PI;

use ico3d_core::codec::{check_finite, ByteReader, ByteWriter};
use ico3d_core::{BundleError, Error, Result};
use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;

use crate::invalid;

pub const AUDIO_CHANNELS: usize = 32;
pub const EYE_CHANNELS: usize = 7;
/// Blendshape channels B: 32 audio features followed by 7 eye parameters.
pub const EXPRESSION_CHANNELS: usize = AUDIO_CHANNELS + EYE_CHANNELS;
const LEAKY_SLOPE: f64 = 0.01;
/// Gaussians per parallel reduction block in the backward pass.
const BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadConfig {
    /// B, the expression dimension.
    pub channels: usize,
    /// f, the latent feature dimension.
    pub latent: usize,
    pub hidden: usize,
    /// Frequency count L of the positional encoding γ(μ).
    pub pe_levels: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { channels: EXPRESSION_CHANNELS, latent: 32, hidden: 64, pe_levels: 10 }
    }
}

impl HeadConfig {
    pub fn input_dim(&self) -> usize {
        self.latent + 6 * self.pe_levels
    }
}

/// Per-Gaussian feature bases plus the shared colour/opacity MLP.
///
/// The same struct holds gradients, with identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub config: HeadConfig,
    pub count: usize,
    /// F per Gaussian, `[gaussian][channel][latent]`.
    pub basis: Vec<f64>,
    /// f₀ per Gaussian, `[gaussian][latent]`.
    pub bias: Vec<f64>,
    /// `[hidden][input]`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `[3][hidden]`
    pub w_rgb: Vec<f64>,
    pub b_rgb: Vec<f64>,
    /// `[hidden]`
    pub w_opacity: Vec<f64>,
    pub b_opacity: Vec<f64>,
    /// Post-sigmoid affine colour correction (set by harmonization, not trained).
    pub color_gain: [f64; 3],
    pub color_bias: [f64; 3],
}

/// Parameter group names in [`HeadModel::groups`] order.
pub const GROUP_NAMES: [&str; 8] = ["basis", "bias", "w1", "b1", "w_rgb", "b_rgb", "w_opacity", "b_opacity"];

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub rgb: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
}

impl HeadModel {
    /// All-zero parameters with identity colour correction.
    pub fn zeros(config: HeadConfig, count: usize) -> Self {
        let (b, f, h, d) = (config.channels, config.latent, config.hidden, config.input_dim());
        Self {
            config,
            count,
            basis: vec![0.0; count * b * f],
            bias: vec![0.0; count * f],
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w_rgb: vec![0.0; 3 * h],
            b_rgb: vec![0.0; 3],
            w_opacity: vec![0.0; h],
            b_opacity: vec![0.0; 1],
            color_gain: [1.0; 3],
            color_bias: [0.0; 3],
        }
    }

    /// Zero basis F, small random f₀ and He-uniform MLP weights with zero biases.
    pub fn init(config: HeadConfig, count: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(config, count);
        for v in &mut m.bias {
            *v = rng.random_range(-0.1..0.1);
        }
        let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
        let l1 = he(config.input_dim());
        for v in &mut m.w1 {
            *v = rng.random_range(-l1..l1);
        }
        let l2 = he(config.hidden);
        for v in m.w_rgb.iter_mut().chain(&mut m.w_opacity) {
            *v = rng.random_range(-l2..l2);
        }
        m
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config, self.count)
    }

    pub fn groups(&self) -> [&[f64]; 8] {
        [&self.basis, &self.bias, &self.w1, &self.b1, &self.w_rgb, &self.b_rgb, &self.w_opacity, &self.b_opacity]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.basis,
            &mut self.bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w_rgb,
            &mut self.b_rgb,
            &mut self.w_opacity,
            &mut self.b_opacity,
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.groups().iter().flat_map(|g| g.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, g) in GROUP_NAMES.iter().zip(self.groups()) {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::ModelCorrupt(format!("non-finite head weight {name}[{i}]")));
            }
        }
        if self.color_gain.iter().chain(&self.color_bias).any(|v| !v.is_finite()) {
            return Err(Error::ModelCorrupt("non-finite colour correction".into()));
        }
        Ok(())
    }

    fn check_shapes(&self, e: &[f64], means: &[Vector3<f64>]) -> Result<()> {
        if e.len() != self.config.channels {
            return Err(invalid(format!("expression has {} channels, model expects {}", e.len(), self.config.channels)));
        }
        if means.len() != self.count {
            return Err(invalid(format!("{} means for a {}-Gaussian head model", means.len(), self.count)));
        }
        Ok(())
    }

    fn basis_of(&self, i: usize) -> &[f64] {
        let n = self.config.channels * self.config.latent;
        &self.basis[i * n..(i + 1) * n]
    }

    fn bias_of(&self, i: usize) -> &[f64] {
        let f = self.config.latent;
        &self.bias[i * f..(i + 1) * f]
    }
}

/// fᵢ = Fᵢᵀ e + f₀ᵢ for every Gaussian, flattened `[gaussian][latent]`.
pub fn blend_features(model: &HeadModel, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != model.config.channels {
        return Err(invalid(format!("expression has {} channels, model expects {}", e.len(), model.config.channels)));
    }
    let f = model.config.latent;
    let mut out = vec![0.0; model.count * f];
    out.par_chunks_mut(f).enumerate().for_each(|(i, row)| blend_one(model, e, i, row));
    Ok(out)
}

fn blend_one(model: &HeadModel, e: &[f64], i: usize, out: &mut [f64]) {
    let f = model.config.latent;
    let basis = model.basis_of(i);
    out.copy_from_slice(model.bias_of(i));
    for (k, &ek) in e.iter().enumerate() {
        if ek != 0.0 {
            for (o, b) in out.iter_mut().zip(&basis[k * f..(k + 1) * f]) {
                *o += ek * b;
            }
        }
    }
}

/// γ(μ): for each level l, `[sin(2ˡπμx), sin(2ˡπμy), sin(2ˡπμz), cos(…x), cos(…y), cos(…z)]`.
pub fn positional_encoding(mu: &Vector3<f64>, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * levels);
    for l in 0..levels {
        let w = (1u64 << l) as f64 * PI;
        out.extend(mu.iter().map(|v| (w * v).sin()));
        out.extend(mu.iter().map(|v| (w * v).cos()));
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one Gaussian kept for the backward pass.
struct Trace {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    rgb_sig: [f64; 3],
    rgb: [f64; 3],
    opacity: f64,
}

fn forward_one(model: &HeadModel, e: &[f64], mu: &Vector3<f64>, i: usize) -> Trace {
    let c = &model.config;
    let mut input = vec![0.0; c.latent];
    blend_one(model, e, i, &mut input);
    input.extend(positional_encoding(mu, c.pe_levels));
    let d = input.len();
    let mut pre = model.b1.clone();
    for (j, p) in pre.iter_mut().enumerate() {
        *p += model.w1[j * d..(j + 1) * d].iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
    }
    let hidden: Vec<f64> = pre.iter().map(|&p| if p > 0.0 { p } else { LEAKY_SLOPE * p }).collect();
    let h = c.hidden;
    let mut rgb_sig = [0.0; 3];
    let mut rgb = [0.0; 3];
    for ch in 0..3 {
        let z = model.b_rgb[ch] + model.w_rgb[ch * h..(ch + 1) * h].iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>();
        rgb_sig[ch] = sigmoid(z);
        rgb[ch] = (model.color_gain[ch] * rgb_sig[ch] + model.color_bias[ch]).clamp(0.0, 1.0);
    }
    let z = model.b_opacity[0] + model.w_opacity.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>();
    Trace { input, pre, hidden, rgb_sig, rgb, opacity: sigmoid(z) }
}

/// Per-Gaussian RGB and opacity for expression `e`.
pub fn head_forward(model: &HeadModel, e: &[f64], means: &[Vector3<f64>]) -> Result<HeadOutput> {
    model.check_shapes(e, means)?;
    model.check_finite()?;
    if e.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite expression value"));
    }
    let traces: Vec<([f64; 3], f64)> = (0..model.count)
        .into_par_iter()
        .map(|i| {
            let t = forward_one(model, e, &means[i], i);
            (t.rgb, t.opacity)
        })
        .collect();
    Ok(HeadOutput { rgb: traces.iter().map(|t| t.0).collect(), opacity: traces.iter().map(|t| t.1).collect() })
}

/// Back-propagates output gradients (dL/d rgb, dL/d opacity per Gaussian)
/// to every parameter.
pub fn head_backward_outputs(
    model: &HeadModel,
    e: &[f64],
    means: &[Vector3<f64>],
    d_rgb: &[[f64; 3]],
    d_opacity: &[f64],
) -> Result<HeadModel> {
    model.check_shapes(e, means)?;
    if d_rgb.len() != model.count || d_opacity.len() != model.count {
        return Err(invalid("output gradient count does not match the model"));
    }
    let c = model.config;
    let (bf, f, h, d) = (c.channels * c.latent, c.latent, c.hidden, c.input_dim());
    let mut grads = model.zeros_like();

    // Per-Gaussian groups are written in place; shared MLP groups are summed
    // per block and merged in block order for determinism.
    let partials: Vec<HeadModel> = grads
        .basis
        .par_chunks_mut(BLOCK * bf)
        .zip(grads.bias.par_chunks_mut(BLOCK * f))
        .enumerate()
        .map(|(blk, (g_basis, g_bias))| {
            let mut shared = HeadModel::zeros(c, 0);
            let first = blk * BLOCK;
            for local in 0..g_bias.len() / f {
                let i = first + local;
                let t = forward_one(model, e, &means[i], i);
                let mut d_hidden = vec![0.0; h];
                for ch in 0..3 {
                    let unclamped = model.color_gain[ch] * t.rgb_sig[ch] + model.color_bias[ch];
                    let pass = if (0.0..=1.0).contains(&unclamped) { model.color_gain[ch] } else { 0.0 };
                    let dz = d_rgb[i][ch] * pass * t.rgb_sig[ch] * (1.0 - t.rgb_sig[ch]);
                    shared.b_rgb[ch] += dz;
                    for j in 0..h {
                        shared.w_rgb[ch * h + j] += dz * t.hidden[j];
                        d_hidden[j] += dz * model.w_rgb[ch * h + j];
                    }
                }
                let dz = d_opacity[i] * t.opacity * (1.0 - t.opacity);
                shared.b_opacity[0] += dz;
                for j in 0..h {
                    shared.w_opacity[j] += dz * t.hidden[j];
                    d_hidden[j] += dz * model.w_opacity[j];
                }
                let mut d_input = vec![0.0; d];
                for j in 0..h {
                    let dp = d_hidden[j] * if t.pre[j] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                    if dp == 0.0 {
                        continue;
                    }
                    shared.b1[j] += dp;
                    let row = &model.w1[j * d..(j + 1) * d];
                    let grow = &mut shared.w1[j * d..(j + 1) * d];
                    for k in 0..d {
                        grow[k] += dp * t.input[k];
                        d_input[k] += dp * row[k];
                    }
                }
                let df = &d_input[..f];
                g_bias[local * f..(local + 1) * f].copy_from_slice(df);
                let gb = &mut g_basis[local * bf..(local + 1) * bf];
                for (k, &ek) in e.iter().enumerate() {
                    for j in 0..f {
                        gb[k * f + j] = ek * df[j];
                    }
                }
            }
            shared
        })
        .collect();
    for p in &partials {
        for (dst, src) in [
            (&mut grads.w1, &p.w1),
            (&mut grads.b1, &p.b1),
            (&mut grads.w_rgb, &p.w_rgb),
            (&mut grads.b_rgb, &p.b_rgb),
            (&mut grads.w_opacity, &p.w_opacity),
            (&mut grads.b_opacity, &p.b_opacity),
        ] {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
    grads.color_gain = [0.0; 3];
    Ok(grads)
}

/// Feature-level L1 loss (mean over Gaussians and the four outputs) against
/// per-Gaussian targets, with gradients for every parameter. The subgradient
/// at an exact zero residual is 0.
pub fn head_backward(
    model: &HeadModel,
    e: &[f64],
    means: &[Vector3<f64>],
    target_rgb: &[[f64; 3]],
    target_opacity: &[f64],
) -> Result<(f64, HeadModel)> {
    let out = head_forward(model, e, means)?;
    if target_rgb.len() != model.count || target_opacity.len() != model.count {
        return Err(invalid("target count does not match the model"));
    }
    let scale = 1.0 / (4 * model.count.max(1)) as f64;
    let sign = |d: f64| if d > 0.0 { scale } else if d < 0.0 { -scale } else { 0.0 };
    let mut loss = 0.0;
    let mut d_rgb = vec![[0.0; 3]; model.count];
    let mut d_op = vec![0.0; model.count];
    for i in 0..model.count {
        for ch in 0..3 {
            let r = out.rgb[i][ch] - target_rgb[i][ch];
            loss += r.abs();
            d_rgb[i][ch] = sign(r);
        }
        let r = out.opacity[i] - target_opacity[i];
        loss += r.abs();
        d_op[i] = sign(r);
    }
    let grads = head_backward_outputs(model, e, means, &d_rgb, &d_op)?;
    Ok((loss * scale, grads))
}

pub fn encode_model(model: &HeadModel) -> Vec<u8> {
    let mut w = ByteWriter::new();
    let c = model.config;
    for v in [c.channels, c.latent, c.hidden, c.pe_levels, model.count] {
        w.u64(v as u64);
    }
    for g in model.groups() {
        w.f64s(g);
    }
    w.f64s(&model.color_gain);
    w.f64s(&model.color_bias);
    w.finish()
}

pub fn decode_model(data: &[u8]) -> std::result::Result<HeadModel, BundleError> {
    let mut r = ByteReader::new(data, "HEAD");
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = usize::try_from(r.u64()?).unwrap_or(usize::MAX);
    }
    let malformed = |detail: String| BundleError::Malformed { chunk: "HEAD".into(), detail };
    if dims[..4].iter().any(|&d| d > 1 << 16) || dims[4] > 1 << 28 {
        return Err(malformed(format!("implausible dimensions {dims:?}")));
    }
    let config = HeadConfig { channels: dims[0], latent: dims[1], hidden: dims[2], pe_levels: dims[3] };
    let mut m = HeadModel::zeros(config, dims[4]);
    for (name, g) in GROUP_NAMES.iter().zip(m.groups_mut()) {
        let v = r.f64s()?;
        if v.len() != g.len() {
            return Err(malformed(format!("{name} has {} values, expected {}", v.len(), g.len())));
        }
        check_finite(name, &v)?;
        *g = v;
    }
    for (name, dst) in [("color_gain", &mut m.color_gain), ("color_bias", &mut m.color_bias)] {
        let v = r.f64s()?;
        check_finite(name, &v)?;
        *dst = v.try_into().map_err(|_| malformed(format!("{name} must have 3 values")))?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ico3d_core::synth::rng;

    fn small_config() -> HeadConfig {
        HeadConfig { channels: 6, latent: 4, hidden: 8, pe_levels: 2 }
    }

    fn random_model(seed: u64, config: HeadConfig, n: usize) -> HeadModel {
        let mut r = rng(seed);
        let mut m = HeadModel::init(config, n, &mut r);
        for v in &mut m.basis {
            *v = r.random_range(-0.5..0.5);
        }
        m
    }

    #[test]
    fn zero_expression_gives_bias() {
        let m = random_model(1, HeadConfig::default(), 7);
        let f = blend_features(&m, &vec![0.0; 39]).unwrap();
        assert_eq!(f, m.bias);
    }

    #[test]
    fn unit_expression_selects_basis_row() {
        let c = small_config();
        let m = random_model(2, c, 3);
        let mut e = vec![0.0; c.channels];
        e[4] = 1.0;
        let f = blend_features(&m, &e).unwrap();
        for i in 0..3 {
            for j in 0..c.latent {
                let row = m.basis[i * c.channels * c.latent + 4 * c.latent + j];
                assert_eq!(f[i * c.latent + j], row + m.bias[i * c.latent + j]);
            }
        }
    }

    #[test]
    fn blend_is_affine() {
        let c = HeadConfig::default();
        let m = random_model(3, c, 5);
        let mut r = rng(4);
        let e1: Vec<f64> = (0..39).map(|_| r.random_range(-1.0..1.0)).collect();
        let e2: Vec<f64> = (0..39).map(|_| r.random_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| a * x + b * y).collect();
        let f1 = blend_features(&m, &e1).unwrap();
        let f2 = blend_features(&m, &e2).unwrap();
        let fm = blend_features(&m, &mix).unwrap();
        for k in 0..fm.len() {
            let expect = a * f1[k] + b * f2[k] - (a + b - 1.0) * m.bias[k];
            assert!((fm[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_expression_size_rejected() {
        let m = random_model(1, HeadConfig::default(), 2);
        assert!(matches!(blend_features(&m, &[0.0; 38]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn positional_encoding_cases() {
        let z = positional_encoding(&Vector3::zeros(), 4);
        for l in 0..4 {
            assert_eq!(&z[6 * l..6 * l + 3], &[0.0; 3]);
            assert_eq!(&z[6 * l + 3..6 * l + 6], &[1.0; 3]);
        }
        assert!(positional_encoding(&Vector3::new(1.0, 2.0, 3.0), 0).is_empty());
        // hand evaluation at μ = (0.5, 0, 0): level 0 → sin(π/2)=1, cos(π/2)=0; level 1 → sin(π)=0, cos(π)=−1
        let g = positional_encoding(&Vector3::new(0.5, 0.0, 0.0), 2);
        let expect = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 1.0];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let m = HeadModel::zeros(HeadConfig::default(), 4);
        let out = head_forward(&m, &vec![0.3; 39], &vec![Vector3::new(0.1, 0.2, 0.3); 4]).unwrap();
        assert!(out.rgb.iter().flatten().chain(&out.opacity).all(|&v| v == 0.5));
    }

    #[test]
    fn nan_weight_is_model_corrupt() {
        let mut m = HeadModel::zeros(small_config(), 2);
        m.w1[3] = f64::NAN;
        let r = head_forward(&m, &[0.0; 6], &[Vector3::zeros(); 2]);
        assert!(matches!(r, Err(Error::ModelCorrupt(_))));
    }

    #[test]
    fn codec_roundtrip() {
        let mut m = random_model(9, small_config(), 5);
        m.color_gain = [1.1, 0.9, 1.0];
        let back = decode_model(&encode_model(&m)).unwrap();
        assert_eq!(back, m);
        let mut bytes = encode_model(&m);
        bytes.truncate(bytes.len() - 3);
        assert!(decode_model(&bytes).is_err());
    }
}
