use ico3d_core::Result;
use rand::Rng;

use crate::invalid;

const LEAKY_SLOPE: f64 = 0.01;

/// A linear layer with M weight sets, blended per input by weights α.
#[derive(Debug, Clone, PartialEq)]
pub struct TunableLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub modes: usize,
    /// `[mode][out][in]`
    pub weights: Vec<f64>,
    /// `[mode][out]`
    pub biases: Vec<f64>,
}

impl TunableLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, modes: usize) -> Self {
        Self { in_dim, out_dim, modes, weights: vec![0.0; modes * out_dim * in_dim], biases: vec![0.0; modes * out_dim] }
    }

    /// He-uniform weights, zero biases.
    pub fn init(in_dim: usize, out_dim: usize, modes: usize, rng: &mut impl Rng) -> Self {
        let mut l = Self::zeros(in_dim, out_dim, modes);
        let lim = (6.0 / in_dim as f64).sqrt();
        for w in &mut l.weights {
            *w = rng.random_range(-lim..lim);
        }
        l
    }

    /// Pre-activation Σ_m α_m (W_m x + b_m).
    pub fn pre_activation(&self, x: &[f64], alpha: &[f64]) -> Vec<f64> {
        let (i, o) = (self.in_dim, self.out_dim);
        let mut y = vec![0.0; o];
        for (m, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let w = &self.weights[m * o * i..(m + 1) * o * i];
            let b = &self.biases[m * o..(m + 1) * o];
            for r in 0..o {
                let z: f64 = w[r * i..(r + 1) * i].iter().zip(x).map(|(w, x)| w * x).sum();
                y[r] += a * (z + b[r]);
            }
        }
        y
    }

    fn check(&self, x: &[f64], alpha: &[f64]) -> Result<()> {
        if x.len() != self.in_dim || alpha.len() != self.modes {
            return Err(invalid(format!(
                "tunable layer expects {} inputs and {} modes, got {} and {}",
                self.in_dim,
                self.modes,
                x.len(),
                alpha.len()
            )));
        }
        let s: f64 = alpha.iter().sum();
        if (s - 1.0).abs() > 1e-9 || alpha.iter().any(|a| *a < 0.0) {
            return Err(invalid(format!("mode weights must be non-negative and sum to 1 (sum {s})")));
        }
        Ok(())
    }
}

pub fn leaky_relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// y = ψ(Σ_m α_m (w_mᵀx + b_m)) with ψ = LeakyReLU, or the identity for a
/// final layer.
pub fn tunable_layer(x: &[f64], alpha: &[f64], layer: &TunableLayer, final_layer: bool) -> Result<Vec<f64>> {
    layer.check(x, alpha)?;
    let mut y = layer.pre_activation(x, alpha);
    if !final_layer {
        y.iter_mut().for_each(|v| *v = leaky_relu(*v));
    }
    Ok(y)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Stack of tunable layers; every layer but the last is followed by LeakyReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct TunableMlp {
    pub layers: Vec<TunableLayer>,
}

impl TunableMlp {
    /// Hidden layers He-initialized; the output layer starts at zero so the
    /// deformation is the identity.
    pub fn init(in_dim: usize, hidden: &[usize], out_dim: usize, modes: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::new();
        let mut d = in_dim;
        for &h in hidden {
            layers.push(TunableLayer::init(d, h, modes, rng));
            d = h;
        }
        layers.push(TunableLayer::zeros(d, out_dim, modes));
        Self { layers }
    }

    pub fn modes(&self) -> usize {
        self.layers[0].modes
    }

    pub fn forward(&self, x: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            h = tunable_layer(&h, alpha, l, k == last)?;
        }
        Ok(h)
    }
}
