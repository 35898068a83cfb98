use ico3d_core::bundle::{decode_splats, encode_splats};
use ico3d_core::codec::{check_finite, ByteReader, ByteWriter};
use ico3d_core::{BundleError, Error, GaussianSet, Result};
use nalgebra::{Quaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;

use super::hexplane::{Hexplane, HexplaneConfig};
use super::partition::WindowPlan;
use super::tunable::{softmax, TunableLayer, TunableMlp};
use crate::invalid;

/// Δμ (3) + Δr (4) + Δs (3).
pub const DEFORM_OUTPUTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    pub hexplane: HexplaneConfig,
    pub hidden: Vec<usize>,
    pub modes: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { hexplane: HexplaneConfig::default(), hidden: vec![64, 64], modes: 4 }
    }
}

/// One sliding window: canonical splats, a spatio-temporal encoder and a
/// tunable deformation MLP with per-Gaussian mode weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowModel {
    pub frame_range: (usize, usize),
    pub canonical: GaussianSet,
    /// Axis-aligned box mapping means to the encoder's unit cube.
    pub bounds: (Vector3<f64>, Vector3<f64>),
    pub encoder: Hexplane,
    pub mlp: TunableMlp,
    /// Unnormalized mode weights `[gaussian][mode]`; softmax gives α.
    pub alpha_logits: Vec<f64>,
}

impl WindowModel {
    pub fn new(canonical: GaussianSet, frame_range: (usize, usize), cfg: &WindowConfig, rng: &mut impl Rng) -> Result<Self> {
        if frame_range.1 <= frame_range.0 {
            return Err(invalid(format!("window range {frame_range:?} needs at least two frames")));
        }
        if cfg.modes == 0 {
            return Err(invalid("window needs at least one motion mode"));
        }
        let bounds = padded_bounds(&canonical);
        let encoder = Hexplane::init(cfg.hexplane.clone(), rng);
        let mlp = TunableMlp::init(cfg.hexplane.output_dim(), &cfg.hidden, DEFORM_OUTPUTS, cfg.modes, rng);
        let alpha_logits = vec![0.0; canonical.len() * cfg.modes];
        Ok(Self { frame_range, canonical, bounds, encoder, mlp, alpha_logits })
    }

    /// Keeps the Gaussians where `keep[i]` holds, with their mode weights.
    pub fn retain(&self, keep: &[bool]) -> WindowModel {
        let m = self.mlp.modes();
        let alpha_logits = (0..self.canonical.len())
            .filter(|&i| keep[i])
            .flat_map(|i| self.alpha_logits[i * m..(i + 1) * m].iter().copied())
            .collect();
        WindowModel { canonical: self.canonical.retain_mask(keep), alpha_logits, ..self.clone() }
    }

    /// Normalized time of `frame` within this window.
    pub fn time_of(&self, frame: usize) -> f64 {
        let (s, e) = self.frame_range;
        (frame as f64 - s as f64) / (e - s) as f64
    }

    pub fn alpha(&self, i: usize) -> Vec<f64> {
        let m = self.mlp.modes();
        softmax(&self.alpha_logits[i * m..(i + 1) * m])
    }

    pub fn normalize(&self, mu: &Vector3<f64>) -> Vector3<f64> {
        let (lo, hi) = &self.bounds;
        (mu - lo).component_div(&(hi - lo))
    }

    /// Raw MLP output [Δμ, Δr, Δs] for Gaussian `i` at time `t`.
    pub fn deltas(&self, i: usize, t: f64) -> Result<Vec<f64>> {
        let fv = self.encoder.st_encode(&self.normalize(&self.canonical.means[i]), t);
        self.mlp.forward(&fv, &self.alpha(i))
    }

    /// The window's Gaussians at normalized time `t`.
    pub fn deform(&self, t: f64) -> Result<GaussianSet> {
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("window time {t} outside [0,1]")));
        }
        let n = self.canonical.len();
        let deltas: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| self.deltas(i, t)).collect::<Result<_>>()?;
        let mut out = self.canonical.clone();
        for (i, d) in deltas.iter().enumerate() {
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::ModelCorrupt(format!("non-finite deformation for splat {i}")));
            }
            if d.iter().all(|v| *v == 0.0) {
                continue;
            }
            out.means[i] += Vector3::new(d[0], d[1], d[2]);
            let q = self.canonical.rotations[i];
            let q = Quaternion::new(q.w + d[3], q.i + d[4], q.j + d[5], q.k + d[6]);
            let n = q.norm();
            if !(n > 1e-12) {
                return Err(Error::ModelCorrupt(format!("deformed rotation of splat {i} collapsed to zero")));
            }
            out.rotations[i] = q / n;
            let s = self.canonical.scales[i];
            out.scales[i] = Vector3::new((s.x.ln() + d[7]).exp(), (s.y.ln() + d[8]).exp(), (s.z.ln() + d[9]).exp());
        }
        Ok(out)
    }
}

fn padded_bounds(set: &GaussianSet) -> (Vector3<f64>, Vector3<f64>) {
    if set.is_empty() {
        return (Vector3::zeros(), Vector3::repeat(1.0));
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for m in &set.means {
        lo = lo.inf(m);
        hi = hi.sup(m);
    }
    let pad = ((hi - lo) * 0.1).map(|v| v.max(1e-3));
    (lo - pad, hi + pad)
}

/// All windows of a body sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub plan: WindowPlan,
    pub windows: Vec<WindowModel>,
}

impl BodyModel {
    pub fn new(plan: WindowPlan, windows: Vec<WindowModel>) -> Result<Self> {
        plan.validate(plan.frames())?;
        if windows.len() != plan.ranges.len() || windows.iter().zip(&plan.ranges).any(|(w, r)| w.frame_range != *r) {
            return Err(invalid("windows do not match the plan"));
        }
        Ok(Self { plan, windows })
    }

    pub fn frames(&self) -> usize {
        self.plan.frames()
    }

    /// The body at sequence frame `k`. Overlap frames come from the later window.
    pub fn frame(&self, k: usize) -> Result<GaussianSet> {
        let w = self.plan.window_of(k).ok_or_else(|| invalid(format!("frame {k} outside the body sequence of {} frames", self.frames())))?;
        let win = &self.windows[w];
        win.deform(win.time_of(k))
    }
}

fn malformed(detail: impl Into<String>) -> BundleError {
    BundleError::Malformed { chunk: "BODY".into(), detail: detail.into() }
}

pub fn encode_body(body: &BodyModel) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.u64(body.windows.len() as u64);
    for win in &body.windows {
        w.u64(win.frame_range.0 as u64);
        w.u64(win.frame_range.1 as u64);
        w.bytes(&encode_splats(&win.canonical));
        w.f64s(win.bounds.0.as_slice());
        w.f64s(win.bounds.1.as_slice());
        let hc = &win.encoder.config;
        w.u64(hc.feature_dim as u64);
        w.u64(hc.resolutions.len() as u64);
        for (r, g) in hc.resolutions.iter().zip(&win.encoder.grids) {
            w.u64(*r as u64);
            w.f64s(g);
        }
        w.u64(win.mlp.layers.len() as u64);
        for l in &win.mlp.layers {
            for v in [l.in_dim, l.out_dim, l.modes] {
                w.u64(v as u64);
            }
            w.f64s(&l.weights);
            w.f64s(&l.biases);
        }
        w.f64s(&win.alpha_logits);
    }
    w.finish()
}

fn dim(r: &mut ByteReader, what: &str, max: usize) -> std::result::Result<usize, BundleError> {
    let v = r.u64()?;
    usize::try_from(v).ok().filter(|v| *v <= max).ok_or_else(|| malformed(format!("implausible {what} {v}")))
}

pub fn decode_body(data: &[u8]) -> std::result::Result<BodyModel, BundleError> {
    let mut r = ByteReader::new(data, "BODY");
    let count = dim(&mut r, "window count", 1 << 20)?;
    let mut windows = Vec::with_capacity(count.min(1024));
    for wi in 0..count {
        let frame_range = (dim(&mut r, "frame", 1 << 32)?, dim(&mut r, "frame", 1 << 32)?);
        let canonical = decode_splats(r.bytes()?)?;
        let lo = r.f64s()?;
        let hi = r.f64s()?;
        check_finite("bounds", &lo)?;
        check_finite("bounds", &hi)?;
        if lo.len() != 3 || hi.len() != 3 || lo.iter().zip(&hi).any(|(a, b)| b <= a) {
            return Err(malformed(format!("window {wi}: bad bounds")));
        }
        let feature_dim = dim(&mut r, "feature dim", 4096)?;
        let nres = dim(&mut r, "resolution count", 16)?;
        let mut resolutions = Vec::new();
        let mut grids = Vec::new();
        for _ in 0..nres {
            let res = dim(&mut r, "resolution", 1 << 12)?;
            if res < 2 {
                return Err(malformed(format!("window {wi}: resolution {res} below 2")));
            }
            let g = r.f64s()?;
            if g.len() != 6 * res * res * feature_dim {
                return Err(malformed(format!("window {wi}: grid of {} values for resolution {res}", g.len())));
            }
            check_finite("hexplane", &g)?;
            resolutions.push(res);
            grids.push(g);
        }
        let nlayers = dim(&mut r, "layer count", 64)?;
        if nlayers == 0 {
            return Err(malformed(format!("window {wi}: MLP without layers")));
        }
        let mut layers = Vec::new();
        for _ in 0..nlayers {
            let (i, o, m) = (dim(&mut r, "in", 1 << 16)?, dim(&mut r, "out", 1 << 16)?, dim(&mut r, "modes", 256)?);
            let weights = r.f64s()?;
            let biases = r.f64s()?;
            if weights.len() != m * o * i || biases.len() != m * o || m == 0 {
                return Err(malformed(format!("window {wi}: layer shape mismatch")));
            }
            check_finite("mlp", &weights)?;
            check_finite("mlp", &biases)?;
            layers.push(TunableLayer { in_dim: i, out_dim: o, modes: m, weights, biases });
        }
        let hexplane = HexplaneConfig { feature_dim, resolutions };
        let chain_ok = layers[0].in_dim == hexplane.output_dim()
            && layers.windows(2).all(|p| p[0].out_dim == p[1].in_dim && p[0].modes == p[1].modes)
            && layers.last().unwrap().out_dim == super::window::DEFORM_OUTPUTS;
        if !chain_ok {
            return Err(malformed(format!("window {wi}: inconsistent layer dimensions")));
        }
        let alpha_logits = r.f64s()?;
        check_finite("alpha", &alpha_logits)?;
        if alpha_logits.len() != canonical.len() * layers[0].modes {
            return Err(malformed(format!("window {wi}: {} mode weights", alpha_logits.len())));
        }
        windows.push(WindowModel {
            frame_range,
            canonical,
            bounds: (Vector3::from_column_slice(&lo), Vector3::from_column_slice(&hi)),
            encoder: Hexplane { config: hexplane, grids },
            mlp: TunableMlp { layers },
            alpha_logits,
        });
    }
    if !r.is_empty() {
        return Err(malformed("trailing bytes"));
    }
    let plan = WindowPlan { ranges: windows.iter().map(|w| w.frame_range).collect() };
    BodyModel::new(plan, windows).map_err(|e| malformed(e.to_string()))
}
