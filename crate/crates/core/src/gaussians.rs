//! Structure-of-arrays container for splat primitives.

use nalgebra::{Matrix3, Quaternion, Vector3};

use crate::error::{invalid, Result};
use crate::math;
use crate::sh::{self, coeffs_for_degree, MAX_SH_DEGREE};

/// Where a splat came from once several models are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(u8)]
pub enum SplatLabel {
    #[default]
    Unlabeled = 0,
    Head = 1,
    Body = 2,
    Border = 3,
    Background = 4,
}

impl SplatLabel {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::Unlabeled,
            1 => Self::Head,
            2 => Self::Body,
            3 => Self::Border,
            4 => Self::Background,
            _ => return None,
        })
    }
}

/// One splat, used for building sets element by element.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat {
    pub mean: Vector3<f64>,
    pub rotation: Quaternion<f64>,
    pub scale: Vector3<f64>,
    pub opacity: f64,
    /// `(degree+1)²` RGB coefficients.
    pub sh: Vec<[f64; 3]>,
    pub label: SplatLabel,
}

impl Splat {
    /// Isotropic splat with a flat colour.
    pub fn isotropic(mean: Vector3<f64>, sigma: f64, opacity: f64, rgb: [f64; 3]) -> Self {
        Self {
            mean,
            rotation: Quaternion::identity(),
            scale: Vector3::repeat(sigma),
            opacity,
            sh: vec![rgb.map(sh::rgb_to_dc)],
            label: SplatLabel::Unlabeled,
        }
    }
}

/// A set of activated splat parameters: opacities in [0,1], positive scales,
/// unit (w,x,y,z) quaternions and `(k+1)²` SH coefficients per splat.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    pub means: Vec<Vector3<f64>>,
    pub rotations: Vec<Quaternion<f64>>,
    pub scales: Vec<Vector3<f64>>,
    pub opacities: Vec<f64>,
    /// Flattened `[splat][coeff][rgb]`.
    pub sh: Vec<[f64; 3]>,
    pub labels: Vec<SplatLabel>,
    sh_degree: usize,
}

/// A single invariant violation found by [`GaussianSet::audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub field: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "splat {}: {}: {}", self.index, self.field, self.detail)
    }
}

impl Default for GaussianSet {
    fn default() -> Self {
        GaussianSet::new(0)
    }
}

impl GaussianSet {
    pub fn new(sh_degree: usize) -> Self {
        assert!(sh_degree <= MAX_SH_DEGREE, "SH degree {sh_degree} unsupported");
        Self {
            means: Vec::new(),
            rotations: Vec::new(),
            scales: Vec::new(),
            opacities: Vec::new(),
            sh: Vec::new(),
            labels: Vec::new(),
            sh_degree,
        }
    }

    pub fn from_splats(sh_degree: usize, splats: impl IntoIterator<Item = Splat>) -> Result<Self> {
        let mut set = Self::new(sh_degree);
        for s in splats {
            set.push(s)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    pub fn coeffs_per_splat(&self) -> usize {
        coeffs_for_degree(self.sh_degree)
    }

    pub fn push(&mut self, s: Splat) -> Result<()> {
        let n = self.coeffs_per_splat();
        if s.sh.len() > n {
            return Err(invalid(format!(
                "splat has {} SH coefficients, set holds degree {}",
                s.sh.len(),
                self.sh_degree
            )));
        }
        self.means.push(s.mean);
        self.rotations.push(s.rotation);
        self.scales.push(s.scale);
        self.opacities.push(s.opacity);
        self.sh.extend_from_slice(&s.sh);
        self.sh.extend(std::iter::repeat_n([0.0; 3], n - s.sh.len()));
        self.labels.push(s.label);
        Ok(())
    }

    pub fn splat(&self, i: usize) -> Splat {
        Splat {
            mean: self.means[i],
            rotation: self.rotations[i],
            scale: self.scales[i],
            opacity: self.opacities[i],
            sh: self.sh_of(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn sh_of(&self, i: usize) -> &[[f64; 3]] {
        let n = self.coeffs_per_splat();
        &self.sh[i * n..(i + 1) * n]
    }

    pub fn sh_of_mut(&mut self, i: usize) -> &mut [[f64; 3]] {
        let n = self.coeffs_per_splat();
        &mut self.sh[i * n..(i + 1) * n]
    }

    /// View-independent colour carried by the degree-0 band (unclamped).
    pub fn base_color(&self, i: usize) -> [f64; 3] {
        self.sh_of(i)[0].map(sh::dc_to_rgb)
    }

    /// Sets a flat colour: DC from `rgb`, higher bands zeroed.
    pub fn set_flat_color(&mut self, i: usize, rgb: [f64; 3]) {
        let coeffs = self.sh_of_mut(i);
        coeffs.fill([0.0; 3]);
        coeffs[0] = rgb.map(sh::rgb_to_dc);
    }

    pub fn covariance(&self, i: usize) -> Result<Matrix3<f64>> {
        math::build_covariance(&self.rotations[i], &self.scales[i])
    }

    pub fn set_label(&mut self, label: SplatLabel) {
        self.labels.fill(label);
    }

    /// Zero-pads the SH bands up to `degree`. Lowering the degree is not allowed.
    pub fn raise_sh_degree(&mut self, degree: usize) {
        assert!(degree <= MAX_SH_DEGREE);
        if degree <= self.sh_degree {
            return;
        }
        let (old, new) = (self.coeffs_per_splat(), coeffs_for_degree(degree));
        let mut sh = Vec::with_capacity(self.len() * new);
        for i in 0..self.len() {
            sh.extend_from_slice(&self.sh[i * old..(i + 1) * old]);
            sh.extend(std::iter::repeat_n([0.0; 3], new - old));
        }
        self.sh = sh;
        self.sh_degree = degree;
    }

    /// Appends `other`, padding whichever side has the lower SH degree.
    pub fn append(&mut self, other: &GaussianSet) {
        let degree = self.sh_degree.max(other.sh_degree);
        self.raise_sh_degree(degree);
        let mut other = other.clone();
        other.raise_sh_degree(degree);
        self.means.extend_from_slice(&other.means);
        self.rotations.extend_from_slice(&other.rotations);
        self.scales.extend_from_slice(&other.scales);
        self.opacities.extend_from_slice(&other.opacities);
        self.sh.extend_from_slice(&other.sh);
        self.labels.extend_from_slice(&other.labels);
    }

    /// Keeps splats where `keep[i]` is true, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> GaussianSet {
        assert_eq!(keep.len(), self.len());
        let mut out = GaussianSet::new(self.sh_degree);
        let n = self.coeffs_per_splat();
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.means.push(self.means[i]);
            out.rotations.push(self.rotations[i]);
            out.scales.push(self.scales[i]);
            out.opacities.push(self.opacities[i]);
            out.sh.extend_from_slice(&self.sh[i * n..(i + 1) * n]);
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn renormalize_rotations(&mut self) {
        for q in &mut self.rotations {
            let n = q.norm();
            if n > 0.0 {
                *q /= n;
            }
        }
    }

    /// Checks every invariant and lists the violations.
    pub fn audit(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.len();
        let lens = [
            self.rotations.len(),
            self.scales.len(),
            self.opacities.len(),
            self.labels.len(),
        ];
        if lens.iter().any(|l| *l != n) || self.sh.len() != n * self.coeffs_per_splat() {
            out.push(Violation {
                index: 0,
                field: "layout",
                detail: "attribute arrays disagree on splat count".into(),
            });
            return out;
        }
        for i in 0..n {
            let m = &self.means[i];
            if !m.iter().all(|v| v.is_finite()) {
                out.push(Violation { index: i, field: "mean", detail: format!("{m:?}") });
            }
            let qn = self.rotations[i].norm();
            if !((qn - 1.0).abs() <= 1e-6) {
                out.push(Violation { index: i, field: "rotation", detail: format!("norm {qn}") });
            }
            let s = &self.scales[i];
            if !s.iter().all(|v| v.is_finite() && *v > 0.0) {
                out.push(Violation { index: i, field: "scale", detail: format!("{s:?}") });
            }
            let o = self.opacities[i];
            if !(0.0..=1.0).contains(&o) {
                out.push(Violation { index: i, field: "opacity", detail: format!("{o}") });
            }
            if !self.sh_of(i).iter().flatten().all(|v| v.is_finite()) {
                out.push(Violation { index: i, field: "sh", detail: "non-finite coefficient".into() });
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.audit().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(invalid(v.to_string())),
        }
    }

    /// Centroid and radius of the smallest origin-centred sphere about the centroid
    /// that contains every mean.
    pub fn bounding_sphere(&self) -> Option<(Vector3<f64>, f64)> {
        if self.is_empty() {
            return None;
        }
        let c = self.means.iter().sum::<Vector3<f64>>() / self.len() as f64;
        let r = self.means.iter().map(|m| (m - c).norm()).fold(0.0, f64::max);
        Some((c, r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_pads_lower_degree() {
        let mut a = GaussianSet::new(0);
        a.push(Splat::isotropic(Vector3::zeros(), 0.1, 0.5, [0.2, 0.3, 0.4])).unwrap();
        let mut b = GaussianSet::new(2);
        b.push(Splat::isotropic(Vector3::x(), 0.1, 0.5, [0.9, 0.1, 0.1])).unwrap();
        a.append(&b);
        assert_eq!(a.len(), 2);
        assert_eq!(a.sh_degree(), 2);
        assert_eq!(a.sh.len(), 18);
        assert!(a.sh_of(0)[1..].iter().all(|c| *c == [0.0; 3]));
        let rgb = a.base_color(0);
        assert!((rgb[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn audit_flags_bad_rotation() {
        let mut a = GaussianSet::new(0);
        for i in 0..3 {
            a.push(Splat::isotropic(Vector3::x() * i as f64, 0.1, 0.5, [0.5; 3])).unwrap();
        }
        a.rotations[1] = Quaternion::new(2.0, 0.0, 0.0, 0.0);
        let v = a.audit();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].index, 1);
        assert_eq!(v[0].field, "rotation");
    }
}
