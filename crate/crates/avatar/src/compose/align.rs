use std::collections::BTreeMap;

use ico3d_core::math::{quat_mul, quaternion_from_rotation};
use ico3d_core::{GaussianSet, Pose, Result};
use nalgebra::Vector3;

use crate::invalid;

/// Poses relating a head captured in setup 1 to a body captured in setup 2.
///
/// `c_ref_*` are the head tracker's world origins, `h_ref_*` the reference
/// (first-frame) head poses, `h_i_w2` the per-frame head poses in setup 2.
#[derive(Debug, Clone, PartialEq)]
pub struct RigAlignment {
    pub c_ref_w1: Pose,
    pub c_ref_w2: Pose,
    pub h_ref_w1: Pose,
    pub h_ref_w2: Pose,
    pub h_i_w2: Vec<Pose>,
}

impl RigAlignment {
    /// Every transform is the identity, for `frames` frames.
    pub fn identity(frames: usize) -> Self {
        let i = Pose::identity();
        Self { c_ref_w1: i, c_ref_w2: i, h_ref_w1: i, h_ref_w2: i, h_i_w2: vec![i; frames] }
    }

    pub fn frames(&self) -> usize {
        self.h_i_w2.len()
    }

    /// The five factors, in application order right-to-left:
    /// `[C_ref,w2⁻¹, H_i,w2, H_ref,w2, H_ref,w1⁻¹, C_ref,w1]`.
    pub fn factors(&self, frame: usize) -> Result<[Pose; 5]> {
        let h_i = self.h_i_w2.get(frame).ok_or_else(|| {
            invalid(format!("frame {frame} outside the rig's {} head poses", self.h_i_w2.len()))
        })?;
        Ok([self.c_ref_w2.inverse(), *h_i, self.h_ref_w2, self.h_ref_w1.inverse(), self.c_ref_w1])
    }

    /// Single rigid transform taking learned head geometry (setup 1) to the
    /// observed head in setup 2's world at `frame`.
    pub fn composed(&self, frame: usize) -> Result<Pose> {
        let [a, b, c, d, e] = self.factors(frame)?;
        Ok(a * b * c * d * e)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.c_ref_w1, &self.c_ref_w2, &self.h_ref_w1, &self.h_ref_w2].into_iter().chain(&self.h_i_w2) {
            p.validate()?;
        }
        Ok(())
    }
}

/// Parses a rig file: `key: 16 row-major floats` lines for `c_ref_w1`,
/// `c_ref_w2`, `h_ref_w1`, `h_ref_w2`, then one `frame <i>: 16 floats` line
/// per body frame (indices 0..n in any order). `#` starts a comment.
pub fn parse_rig(text: &str) -> Result<RigAlignment> {
    let mut refs: BTreeMap<String, Pose> = BTreeMap::new();
    let mut frames: BTreeMap<usize, Pose> = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let ctx = |msg: String| invalid(format!("rig line {}: {msg}", ln + 1));
        let (key, rest) = line.split_once(':').ok_or_else(|| ctx("expected `key: values`".into()))?;
        let vals: Vec<f64> = rest
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| ctx(format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        let pose = Pose::from_row_major(&vals).map_err(|e| ctx(e.to_string()))?;
        let key = key.trim();
        if let Some(idx) = key.strip_prefix("frame") {
            let i: usize = idx.trim().parse().map_err(|_| ctx(format!("bad frame index {idx:?}")))?;
            if frames.insert(i, pose).is_some() {
                return Err(ctx(format!("duplicate frame {i}")));
            }
        } else if ["c_ref_w1", "c_ref_w2", "h_ref_w1", "h_ref_w2"].contains(&key) {
            refs.insert(key.to_string(), pose);
        } else {
            return Err(ctx(format!("unknown key {key:?}")));
        }
    }
    let get = |k: &str| refs.get(k).copied().ok_or_else(|| invalid(format!("rig is missing {k}")));
    if frames.keys().enumerate().any(|(i, k)| i != *k) {
        return Err(invalid("rig frame indices must be 0..n without gaps"));
    }
    Ok(RigAlignment {
        c_ref_w1: get("c_ref_w1")?,
        c_ref_w2: get("c_ref_w2")?,
        h_ref_w1: get("h_ref_w1")?,
        h_ref_w2: get("h_ref_w2")?,
        h_i_w2: frames.into_values().collect(),
    })
}

pub fn write_rig(rig: &RigAlignment) -> String {
    let row = |p: &Pose| p.to_row_major().iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    for (k, p) in [("c_ref_w1", &rig.c_ref_w1), ("c_ref_w2", &rig.c_ref_w2), ("h_ref_w1", &rig.h_ref_w1), ("h_ref_w2", &rig.h_ref_w2)] {
        s += &format!("{k}: {}\n", row(p));
    }
    for (i, p) in rig.h_i_w2.iter().enumerate() {
        s += &format!("frame {i}: {}\n", row(p));
    }
    s
}

pub fn align_points(rig: &RigAlignment, points: &[Vector3<f64>], frame: usize) -> Result<Vec<Vector3<f64>>> {
    let m = rig.composed(frame)?;
    Ok(points.iter().map(|p| m.transform_point(p)).collect())
}

/// Applies the composed rigid transform of `frame` to a head set: means are
/// moved, rotations pre-multiplied, scales untouched.
pub fn align_head_to_body(rig: &RigAlignment, head: &GaussianSet, frame: usize) -> Result<GaussianSet> {
    Ok(transform_set(head, &rig.composed(frame)?))
}

/// Rigidly transforms every splat of `set` by `pose`.
pub fn transform_set(set: &GaussianSet, pose: &Pose) -> GaussianSet {
    let mut out = set.clone();
    let qr = quaternion_from_rotation(&pose.rotation());
    for i in 0..out.len() {
        out.means[i] = pose.transform_point(&set.means[i]);
        out.rotations[i] = quat_mul(&qr, &set.rotations[i]).normalize();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_text_roundtrip() {
        let mut rig = RigAlignment::identity(3);
        rig.c_ref_w2 = Pose::from_parts(&nalgebra::Matrix3::identity(), &Vector3::new(0.1, 0.2, -0.3));
        assert_eq!(parse_rig(&write_rig(&rig)).unwrap(), rig);
    }

    #[test]
    fn rig_errors_name_line() {
        let bad = "c_ref_w1: 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0\n";
        let err = parse_rig(bad).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let gap = write_rig(&RigAlignment::identity(3)).replace("frame 1:", "frame 5:");
        assert!(parse_rig(&gap).is_err());
    }

    #[test]
    fn frame_out_of_range() {
        assert!(RigAlignment::identity(2).composed(2).is_err());
    }
}
