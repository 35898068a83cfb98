//! Model bundle container: `ICO3DGSB` magic, a version word, then
//! little-endian tagged chunks.
//!
//! | chunk | payload |
//! |-------|---------|
//! | `SPLT` | splat table: named f64 columns in the community field layout |
//! | `HEAD` | head appearance model (opaque here, decoded by the avatar crate) |
//! | `BODY` | sliding-window body model (opaque here) |
//! | `META` | UTF-8 `key=value` lines |
//!
//! The splat table stores activated values (opacity in [0,1], linear scales)
//! so that save/load is bit-exact; the logit/log convention applies to the
//! community PLY import and export in [`crate::ply`].

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use crate::codec::{ByteReader, ByteWriter};
use crate::error::BundleError;
use crate::gaussians::{GaussianSet, SplatLabel, Violation};
use crate::sh::{coeffs_for_degree, MAX_SH_DEGREE};

pub const MAGIC: &[u8; 8] = b"ICO3DGSB";
pub const VERSION: u32 = 1;

pub const TAG_SPLT: [u8; 4] = *b"SPLT";
pub const TAG_HEAD: [u8; 4] = *b"HEAD";
pub const TAG_BODY: [u8; 4] = *b"BODY";
pub const TAG_META: [u8; 4] = *b"META";

/// Decoded bundle. Attachment chunks stay as raw payloads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub splats: GaussianSet,
    pub head: Option<Vec<u8>>,
    pub body: Option<Vec<u8>>,
    pub meta: BTreeMap<String, String>,
}

impl Bundle {
    pub fn from_splats(splats: GaussianSet) -> Self {
        Self { splats, ..Default::default() }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.buf.extend_from_slice(MAGIC);
        w.u32(VERSION);
        let mut chunks: Vec<([u8; 4], Vec<u8>)> = vec![(TAG_SPLT, encode_splats(&self.splats))];
        if let Some(h) = &self.head {
            chunks.push((TAG_HEAD, h.clone()));
        }
        if let Some(b) = &self.body {
            chunks.push((TAG_BODY, b.clone()));
        }
        chunks.push((TAG_META, encode_meta(&self.meta).into_bytes()));
        w.u32(chunks.len() as u32);
        for (tag, payload) in chunks {
            w.buf.extend_from_slice(&tag);
            w.u64(payload.len() as u64);
            w.buf.extend_from_slice(&payload);
        }
        w.finish()
    }

    pub fn decode(data: &[u8]) -> Result<Self, BundleError> {
        let mut splats = None;
        let mut out = Bundle::default();
        for (tag, payload) in split_chunks(data)? {
            match &tag {
                b"SPLT" => splats = Some(decode_splats(payload)?),
                b"HEAD" => out.head = Some(payload.to_vec()),
                b"BODY" => out.body = Some(payload.to_vec()),
                b"META" => out.meta = decode_meta(payload)?,
                _ => unreachable!("split_chunks rejects unknown tags"),
            }
        }
        out.splats = splats.ok_or_else(|| BundleError::MissingChunk("SPLT".into()))?;
        Ok(out)
    }
}

/// Checks magic, version and chunk framing; returns the chunks in file order.
pub fn split_chunks(data: &[u8]) -> Result<Vec<([u8; 4], &[u8])>, BundleError> {
    let mut r = ByteReader::new(data, "header");
    if r.take(8).map_err(|_| BundleError::BadMagic)? != MAGIC {
        return Err(BundleError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(BundleError::VersionMismatch { found: version, expected: VERSION });
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()?;
        let len = usize::try_from(len).map_err(|_| BundleError::Truncated("chunk length".into()))?;
        let payload = r.take(len)?;
        if ![TAG_SPLT, TAG_HEAD, TAG_BODY, TAG_META].contains(&tag) {
            return Err(BundleError::Malformed { chunk: String::from_utf8_lossy(&tag).into_owned(), detail: "unknown chunk tag".into() });
        }
        if out.iter().any(|(t, _)| *t == tag) {
            return Err(BundleError::Malformed { chunk: String::from_utf8_lossy(&tag).into_owned(), detail: "duplicate chunk".into() });
        }
        out.push((tag, payload));
    }
    if !r.is_empty() {
        return Err(BundleError::Malformed { chunk: "header".into(), detail: "trailing bytes".into() });
    }
    Ok(out)
}

/// Lenient pass over a bundle's splat table: framing errors abort, but every
/// per-splat problem (non-finite values, opacity outside [0,1], non-positive
/// scale, quaternion norm off by more than 1e-6, bad label) is listed.
pub fn audit_bundle(data: &[u8]) -> Result<Vec<Violation>, BundleError> {
    let chunks = split_chunks(data)?;
    let (_, payload) = chunks.iter().find(|(t, _)| *t == TAG_SPLT).ok_or_else(|| BundleError::MissingChunk("SPLT".into()))?;
    let mut r = ByteReader::new(payload, "SPLT");
    let count = r.u64()?;
    let degree = r.u8()? as usize;
    if degree > MAX_SH_DEGREE {
        return Err(malformed(format!("SH degree {degree}")));
    }
    let ncols = r.u32()? as usize;
    let expected = splat_columns(degree);
    if ncols != expected.len() {
        return Err(malformed(format!("{ncols} columns, expected {}", expected.len())));
    }
    for want in &expected {
        let got = r.str()?;
        if &got != want {
            return Err(malformed(format!("column {got:?}, expected {want:?}")));
        }
    }
    let count = usize::try_from(count).unwrap_or(usize::MAX);
    if count.saturating_mul(ncols * 8) != r.remaining() {
        return Err(BundleError::Truncated(format!("SPLT: {count} rows of {ncols} columns")));
    }
    let base = 6 + 3 * (coeffs_for_degree(degree) - 1);
    let mut out = Vec::new();
    let mut row = vec![0.0; ncols];
    for i in 0..count {
        for v in row.iter_mut() {
            *v = r.f64()?;
        }
        let mut flag = |field: &'static str, detail: String| out.push(Violation { index: i, field, detail });
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            flag("value", format!("non-finite {}", expected[c]));
            continue;
        }
        let o = row[base];
        if !(0.0..=1.0).contains(&o) {
            flag("opacity", format!("{o}"));
        }
        if row[base + 1..base + 4].iter().any(|s| *s <= 0.0) {
            flag("scale", format!("{:?}", &row[base + 1..base + 4]));
        }
        let qn = row[base + 4..base + 8].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((qn - 1.0).abs() <= 1e-6) {
            flag("rotation", format!("quaternion norm {qn}"));
        }
        let l = row[base + 8];
        if l.fract() != 0.0 || !(0.0..=255.0).contains(&l) || SplatLabel::from_u8(l as u8).is_none() {
            flag("label", format!("{l}"));
        }
    }
    Ok(out)
}

pub fn save_bundle(path: &Path, bundle: &Bundle) -> Result<(), BundleError> {
    std::fs::write(path, bundle.encode())?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<Bundle, BundleError> {
    Bundle::decode(&std::fs::read(path)?)
}

/// Column names of the splat table for a given SH degree.
pub fn splat_columns(sh_degree: usize) -> Vec<String> {
    let rest = coeffs_for_degree(sh_degree) - 1;
    let mut cols: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"].map(String::from).to_vec();
    cols.extend((0..3 * rest).map(|i| format!("f_rest_{i}")));
    cols.push("opacity_act".into());
    cols.extend((0..3).map(|i| format!("scale_act_{i}")));
    cols.extend((0..4).map(|i| format!("rot_{i}")));
    cols.push("label".into());
    cols
}

/// One splat as a row in [`splat_columns`] order. Higher-band coefficients
/// are channel-major, as in community splat files.
pub(crate) fn splat_row(set: &GaussianSet, i: usize, out: &mut Vec<f64>) {
    let m = set.means[i];
    out.extend_from_slice(&[m.x, m.y, m.z]);
    let sh = set.sh_of(i);
    out.extend_from_slice(&sh[0]);
    for ch in 0..3 {
        out.extend(sh[1..].iter().map(|c| c[ch]));
    }
    out.push(set.opacities[i]);
    out.extend(set.scales[i].iter());
    let q = set.rotations[i];
    out.extend_from_slice(&[q.w, q.i, q.j, q.k]);
    out.push(set.labels[i] as u8 as f64);
}

pub fn encode_splats(set: &GaussianSet) -> Vec<u8> {
    let mut w = ByteWriter::new();
    let cols = splat_columns(set.sh_degree());
    w.u64(set.len() as u64);
    w.u8(set.sh_degree() as u8);
    w.u32(cols.len() as u32);
    for c in &cols {
        w.str(c);
    }
    let mut row = Vec::with_capacity(cols.len());
    for i in 0..set.len() {
        row.clear();
        splat_row(set, i, &mut row);
        for v in &row {
            w.f64(*v);
        }
    }
    w.finish()
}

fn malformed(detail: impl Into<String>) -> BundleError {
    BundleError::Malformed { chunk: "SPLT".into(), detail: detail.into() }
}

pub fn decode_splats(payload: &[u8]) -> Result<GaussianSet, BundleError> {
    let mut r = ByteReader::new(payload, "SPLT");
    let count = r.u64()?;
    let degree = r.u8()? as usize;
    if degree > MAX_SH_DEGREE {
        return Err(malformed(format!("SH degree {degree}")));
    }
    let ncols = r.u32()? as usize;
    let expected = splat_columns(degree);
    if ncols != expected.len() {
        return Err(malformed(format!("{ncols} columns, expected {}", expected.len())));
    }
    for want in &expected {
        let got = r.str()?;
        if &got != want {
            return Err(malformed(format!("column {got:?}, expected {want:?}")));
        }
    }
    let count = usize::try_from(count).unwrap_or(usize::MAX);
    if count.saturating_mul(ncols * 8) != r.remaining() {
        return Err(BundleError::Truncated(format!(
            "SPLT: {count} rows of {ncols} columns need {} bytes, have {}",
            count.saturating_mul(ncols * 8),
            r.remaining()
        )));
    }
    let coeffs = coeffs_for_degree(degree);
    let mut set = GaussianSet::new(degree);
    let mut row = vec![0.0; ncols];
    for i in 0..count {
        for (c, v) in row.iter_mut().enumerate() {
            *v = r.f64()?;
            if !v.is_finite() {
                return Err(BundleError::NonFinite { field: expected[c].clone(), index: i });
            }
        }
        set.means.push(Vector3::new(row[0], row[1], row[2]));
        let mut sh = vec![[row[3], row[4], row[5]]];
        let rest = coeffs - 1;
        for k in 0..rest {
            sh.push([row[6 + k], row[6 + rest + k], row[6 + 2 * rest + k]]);
        }
        set.sh.extend_from_slice(&sh);
        let base = 6 + 3 * rest;
        let opacity = row[base];
        if !(0.0..=1.0).contains(&opacity) {
            return Err(malformed(format!("opacity {opacity} outside [0,1] at splat {i}")));
        }
        set.opacities.push(opacity);
        let scale = Vector3::new(row[base + 1], row[base + 2], row[base + 3]);
        if scale.iter().any(|s| *s <= 0.0) {
            return Err(malformed(format!("non-positive scale at splat {i}")));
        }
        set.scales.push(scale);
        set.rotations.push(normalize_loaded(
            Quaternion::new(row[base + 4], row[base + 5], row[base + 6], row[base + 7]),
            i,
        )?);
        let label = SplatLabel::from_u8(row[base + 8] as u8)
            .filter(|_| row[base + 8].fract() == 0.0)
            .ok_or_else(|| malformed(format!("bad label {} at splat {i}", row[base + 8])))?;
        set.labels.push(label);
    }
    Ok(set)
}

/// Renormalizes a loaded quaternion. Already-unit quaternions are left
/// untouched so that save/load stays bit-exact.
pub(crate) fn normalize_loaded(q: Quaternion<f64>, i: usize) -> Result<Quaternion<f64>, BundleError> {
    let n = q.norm();
    if !(n > 1e-12) {
        return Err(BundleError::Malformed { chunk: "SPLT".into(), detail: format!("zero quaternion at splat {i}") });
    }
    if (n - 1.0).abs() > 1e-12 {
        Ok(q / n)
    } else {
        Ok(q)
    }
}

pub fn encode_meta(meta: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    for (k, v) in meta {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

pub fn decode_meta(payload: &[u8]) -> Result<BTreeMap<String, String>, BundleError> {
    let text = std::str::from_utf8(payload)
        .map_err(|_| BundleError::Malformed { chunk: "META".into(), detail: "invalid UTF-8".into() })?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| BundleError::Malformed {
            chunk: "META".into(),
            detail: format!("line {} has no '='", n + 1),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
