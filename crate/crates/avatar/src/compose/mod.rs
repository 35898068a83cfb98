//! Head-body integration: cross-setup alignment, merging, pruning of body
//! splats under the head, border injection and colour harmonization.

mod align;

pub use align::{align_head_to_body, align_points, parse_rig, transform_set, write_rig, RigAlignment};

use ico3d_core::sh::{dc_to_rgb, rgb_to_dc};
use ico3d_core::{GaussianSet, Pose, Result, Splat, SplatLabel};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::invalid;

/// Concatenates head then body; the lower SH degree is zero-padded.
pub fn merge(head: &GaussianSet, body: &GaussianSet) -> GaussianSet {
    let mut out = head.clone();
    out.append(body);
    out
}

/// Plane in the head frame; the side the normal points to is the face side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JawPlane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    /// World-space sphere centre (metres).
    pub center: Vector3<f64>,
    pub radius: f64,
    pub jaw: Option<JawPlane>,
    pub border_count: usize,
    /// Iterations between prunes in joint fitting; pure composition prunes once.
    pub prune_period: usize,
}

/// Unresolved prune settings as read from a config file. Missing centre and
/// radius default to the head centroid and 0.9 × the head's bounding radius.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSpec {
    pub center: Option<Vector3<f64>>,
    pub radius: Option<f64>,
    pub radius_scale: f64,
    pub jaw: Option<JawPlane>,
    pub border_count: usize,
    pub prune_period: usize,
    /// Disables pruning entirely.
    pub disabled: bool,
}

impl Default for PruneSpec {
    fn default() -> Self {
        Self { center: None, radius: None, radius_scale: 0.9, jaw: None, border_count: 0, prune_period: 100, disabled: false }
    }
}

impl PruneSpec {
    /// Parses `key = value` lines: `sphere_center = x y z`, `sphere_radius`,
    /// `sphere_radius_scale`, `jaw_point = x y z`, `jaw_normal = x y z`,
    /// `border_count`, `prune_period`, `enabled = true|false`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = PruneSpec::default();
        let (mut jaw_point, mut jaw_normal) = (None, None);
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let ctx = |m: String| invalid(format!("prune config line {}: {m}", ln + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| ctx("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |s: &str| s.parse::<f64>().map_err(|_| ctx(format!("bad number {s:?}")));
            let vec3 = |s: &str| -> Result<Vector3<f64>> {
                let p: Vec<f64> = s.split_whitespace().map(num).collect::<Result<_>>()?;
                if p.len() != 3 {
                    return Err(ctx(format!("{k} needs three values")));
                }
                Ok(Vector3::new(p[0], p[1], p[2]))
            };
            match k {
                "sphere_center" => spec.center = Some(vec3(v)?),
                "sphere_radius" => spec.radius = Some(num(v)?),
                "sphere_radius_scale" => spec.radius_scale = num(v)?,
                "jaw_point" => jaw_point = Some(vec3(v)?),
                "jaw_normal" => jaw_normal = Some(vec3(v)?),
                "border_count" => spec.border_count = v.parse().map_err(|_| ctx(format!("bad count {v:?}")))?,
                "prune_period" => spec.prune_period = v.parse().map_err(|_| ctx(format!("bad period {v:?}")))?,
                "enabled" => spec.disabled = !v.parse::<bool>().map_err(|_| ctx(format!("bad flag {v:?}")))?,
                _ => return Err(ctx(format!("unknown key {k:?}"))),
            }
        }
        spec.jaw = match (jaw_point, jaw_normal) {
            (Some(point), Some(normal)) => Some(JawPlane { point, normal }),
            (None, None) => None,
            _ => return Err(invalid("jaw plane needs both jaw_point and jaw_normal")),
        };
        Ok(spec)
    }

    /// Fills defaults from the (world-space) head set.
    pub fn resolve(&self, head_world: &GaussianSet) -> Result<PruneConfig> {
        let sphere = head_world.bounding_sphere();
        let center = self.center.or(sphere.map(|s| s.0)).ok_or_else(|| invalid("no sphere centre and an empty head"))?;
        let radius = match (self.disabled, self.radius) {
            (true, _) => f64::MIN_POSITIVE,
            (false, Some(r)) => r,
            (false, None) => self.radius_scale * sphere.map_or(0.0, |s| s.1),
        };
        let cfg = PruneConfig {
            center,
            radius,
            jaw: if self.disabled { None } else { self.jaw },
            border_count: self.border_count,
            prune_period: self.prune_period,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.center.iter().all(|v| v.is_finite()) {
            return Err(invalid(format!("prune sphere radius {} must be positive", self.radius)));
        }
        if let Some(j) = &self.jaw {
            if (j.normal.norm() - 1.0).abs() > 1e-9 {
                return Err(invalid("jaw plane normal must be unit length"));
            }
        }
        Ok(())
    }

    /// True when a world-space point is removed by the sphere or jaw rule.
    pub fn removes(&self, p: &Vector3<f64>, world_to_head: &Pose) -> bool {
        if (p - self.center).norm() <= self.radius {
            return true;
        }
        match &self.jaw {
            Some(j) => (world_to_head.transform_point(p) - j.point).dot(&j.normal) > 0.0,
            None => false,
        }
    }
}

/// Removes body splats whose mean lies inside the sphere or on the face side
/// of the jaw plane (evaluated in the head frame given by `head_to_world`).
/// Returns the survivors in order and the removed indices.
pub fn prune_body(body: &GaussianSet, cfg: &PruneConfig, head_to_world: &Pose) -> Result<(GaussianSet, Vec<usize>)> {
    cfg.validate()?;
    let inv = head_to_world.inverse();
    let keep: Vec<bool> = body.means.iter().map(|m| !cfg.removes(m, &inv)).collect();
    let removed = keep.iter().enumerate().filter(|(_, k)| !**k).map(|(i, _)| i).collect();
    Ok((body.retain_mask(&keep), removed))
}

/// Jitter is drawn with σ = this × the local edge length and truncated at 3σ.
pub const BORDER_JITTER: f64 = 0.25;
pub const BORDER_OPACITY: f64 = 0.5;

/// `count` isotropic splats scattered around the boundary polyline, coloured
/// like the nearest head splat and labelled as border.
pub fn inject_border(boundary: &[Vector3<f64>], count: usize, rng: &mut impl Rng, head: &GaussianSet) -> Result<GaussianSet> {
    if boundary.is_empty() {
        return Err(invalid("empty boundary"));
    }
    let mut out = GaussianSet::new(0);
    for _ in 0..count {
        let (p, edge) = if boundary.len() == 1 {
            (boundary[0], 0.0)
        } else {
            let s = rng.random_range(0..boundary.len() - 1);
            let (a, b) = (boundary[s], boundary[s + 1]);
            let u: f64 = rng.random();
            (a + (b - a) * u, (b - a).norm())
        };
        let sigma = BORDER_JITTER * edge;
        let mut j = Vector3::from_fn(|_, _| StandardNormal.sample(rng)) * sigma;
        if j.norm() > 3.0 * sigma {
            j *= 3.0 * sigma / j.norm();
        }
        let mean = p + j;
        let rgb = nearest_color(head, &mean);
        let mut s = Splat::isotropic(mean, sigma.max(1e-3), BORDER_OPACITY, rgb);
        s.label = SplatLabel::Border;
        out.push(s)?;
    }
    Ok(out)
}

fn nearest_color(set: &GaussianSet, p: &Vector3<f64>) -> [f64; 3] {
    let best = (0..set.len()).min_by(|&a, &b| (set.means[a] - p).norm_squared().total_cmp(&(set.means[b] - p).norm_squared()));
    best.map_or([0.5; 3], |i| set.base_color(i))
}

/// Distance from `p` to the polyline through `pts`.
pub fn distance_to_polyline(p: &Vector3<f64>, pts: &[Vector3<f64>]) -> f64 {
    if pts.len() == 1 {
        return (p - pts[0]).norm();
    }
    pts.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let ab = b - a;
            let t = if ab.norm_squared() > 0.0 { ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
            (p - (a + ab * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Reads a boundary CSV of `x,y,z` rows (an optional header is skipped).
pub fn read_boundary_csv(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("boundary row {}: {e}", row + 1)))?;
        let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match vals {
            Ok(v) if v.len() == 3 && v.iter().all(|x| x.is_finite()) => out.push(Vector3::new(v[0], v[1], v[2])),
            Err(_) if row == 0 => continue,
            _ => return Err(invalid(format!("boundary row {}: expected three finite numbers", row + 1))),
        }
    }
    Ok(out)
}

/// Per-channel affine colour correction `rgb ↦ gain·rgb + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorTransform {
    pub gain: [f64; 3],
    pub bias: [f64; 3],
}

impl ColorTransform {
    pub fn identity() -> Self {
        Self { gain: [1.0; 3], bias: [0.0; 3] }
    }

    /// Applies to the base (band-0) colour of every splat.
    pub fn apply_to_set(&self, set: &mut GaussianSet) {
        for i in 0..set.len() {
            let dc = &mut set.sh_of_mut(i)[0];
            for ch in 0..3 {
                dc[ch] = rgb_to_dc(self.gain[ch] * dc_to_rgb(dc[ch]) + self.bias[ch]);
            }
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner_gain: [f64; 3], inner_bias: [f64; 3]) -> ([f64; 3], [f64; 3]) {
        let g = std::array::from_fn(|c| self.gain[c] * inner_gain[c]);
        let b = std::array::from_fn(|c| self.gain[c] * inner_bias[c] + self.bias[c]);
        (g, b)
    }
}

/// Splat indices whose means lie within `width` of the boundary polyline.
pub fn band_indices(set: &GaussianSet, boundary: &[Vector3<f64>], width: f64) -> Vec<usize> {
    (0..set.len()).filter(|&i| distance_to_polyline(&set.means[i], boundary) <= width).collect()
}

/// Moment matching of head band colours to body band colours: per channel,
/// gain = σ_body/σ_head (1 when the head band is flat) and bias chosen so the
/// corrected head band mean equals the body band mean.
pub fn harmonize_colors(head: &GaussianSet, body: &GaussianSet, boundary: &[Vector3<f64>], width: f64) -> Result<ColorTransform> {
    let hb = band_indices(head, boundary, width);
    let bb = band_indices(body, boundary, width);
    if hb.is_empty() || bb.is_empty() {
        return Err(invalid(format!("empty boundary band ({} head, {} body splats)", hb.len(), bb.len())));
    }
    let stats = |set: &GaussianSet, idx: &[usize], ch: usize| {
        let v: Vec<f64> = idx.iter().map(|&i| set.base_color(i)[ch]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        (mean, var.sqrt())
    };
    let mut t = ColorTransform::identity();
    for ch in 0..3 {
        let (mh, sh) = stats(head, &hb, ch);
        let (mb, sb) = stats(body, &bb, ch);
        t.gain[ch] = if sh > 1e-12 { sb / sh } else { 1.0 };
        t.bias[ch] = mb - t.gain[ch] * mh;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ico3d_core::synth::{random_scene, rng};

    #[test]
    fn merge_counts_and_order() {
        let mut h = random_scene(1, 25, 0);
        h.set_label(SplatLabel::Head);
        let mut b = random_scene(2, 100, 2);
        b.set_label(SplatLabel::Body);
        let m = merge(&h, &b);
        assert_eq!(m.len(), 125);
        assert_eq!(m.sh_degree(), 2);
        assert_eq!(m.labels[24], SplatLabel::Head);
        assert_eq!(m.labels[25], SplatLabel::Body);
        assert_eq!(merge(&GaussianSet::new(2), &b), b);
    }

    #[test]
    fn prune_sphere_and_jaw() {
        let cfg = PruneConfig {
            center: Vector3::new(0.0, 1.0, 0.0),
            radius: 0.2,
            jaw: Some(JawPlane { point: Vector3::new(0.0, -0.1, 0.0), normal: Vector3::y() }),
            border_count: 0,
            prune_period: 100,
        };
        let mut body = GaussianSet::new(0);
        for p in [Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.6, 0.2 + 1e-9 + 0.0), Vector3::new(0.0, 0.95, 0.3)] {
            body.push(Splat::isotropic(p, 0.01, 0.5, [0.5; 3])).unwrap();
        }
        // head frame origin at (0,1,0): the jaw plane sits at world y = 0.9
        let head = Pose::from_parts(&nalgebra::Matrix3::identity(), &Vector3::new(0.0, 1.0, 0.0));
        let (kept, removed) = prune_body(&body, &cfg, &head).unwrap();
        assert_eq!(removed, vec![0, 2]);
        assert_eq!(kept.len(), 1);
        let (again, none) = prune_body(&kept, &cfg, &head).unwrap();
        assert!(none.is_empty());
        assert_eq!(again, kept);
    }

    #[test]
    fn prune_spec_parse_and_resolve() {
        let spec = PruneSpec::parse("sphere_radius_scale = 0.5\njaw_point = 0 -0.05 0\njaw_normal = 0 1 0\nborder_count = 12\n").unwrap();
        assert_eq!(spec.border_count, 12);
        let head = random_scene(3, 30, 0);
        let cfg = spec.resolve(&head).unwrap();
        let (c, r) = head.bounding_sphere().unwrap();
        assert_eq!(cfg.center, c);
        assert!((cfg.radius - 0.5 * r).abs() < 1e-15);
        assert!(PruneSpec::parse("jaw_point = 0 0 0\n").is_err());
        assert!(PruneSpec::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn border_injection() {
        let ring: Vec<_> = (0..9).map(|k| {
            let a = k as f64 * 0.7;
            Vector3::new(0.1 * a.cos(), -0.12, 0.1 * a.sin())
        }).collect();
        let head = random_scene(4, 50, 0);
        assert_eq!(inject_border(&ring, 0, &mut rng(1), &head).unwrap().len(), 0);
        let a = inject_border(&ring, 200, &mut rng(5), &head).unwrap();
        let b = inject_border(&ring, 200, &mut rng(5), &head).unwrap();
        assert_eq!(a, b);
        let max_edge = ring.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        for i in 0..a.len() {
            assert!(distance_to_polyline(&a.means[i], &ring) <= 3.0 * BORDER_JITTER * max_edge + 1e-12);
            assert_eq!(a.labels[i], SplatLabel::Border);
            assert_eq!(a.opacities[i], BORDER_OPACITY);
        }
        assert!(inject_border(&[], 3, &mut rng(1), &head).is_err());
    }

    fn band_sets(offset: f64) -> (GaussianSet, GaussianSet, Vec<Vector3<f64>>) {
        let mut r = rng(9);
        let boundary = vec![Vector3::new(-1.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let (mut h, mut b) = (GaussianSet::new(0), GaussianSet::new(0));
        for _ in 0..40 {
            let p = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-0.05..0.05), 0.0);
            let c: [f64; 3] = std::array::from_fn(|_| r.random_range(0.2..0.6));
            b.push(Splat::isotropic(p, 0.01, 0.5, c)).unwrap();
            h.push(Splat::isotropic(p, 0.01, 0.5, c.map(|v| v + offset))).unwrap();
        }
        (h, b, boundary)
    }

    #[test]
    fn harmonize_offset_and_noop() {
        let (h, b, boundary) = band_sets(0.2);
        let t = harmonize_colors(&h, &b, &boundary, 0.1).unwrap();
        for ch in 0..3 {
            assert!((t.gain[ch] - 1.0).abs() < 1e-6);
            assert!((t.bias[ch] + 0.2).abs() < 1e-6);
        }
        let t = harmonize_colors(&b, &b, &boundary, 0.1).unwrap();
        assert!(t.gain.iter().all(|g| (g - 1.0).abs() < 1e-6) && t.bias.iter().all(|v| v.abs() < 1e-6));
        assert!(harmonize_colors(&h, &b, &boundary, -1.0).is_err());
    }
}
