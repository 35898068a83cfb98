//! Community splat PLY files (`x,y,z,f_dc_*,f_rest_*,opacity,scale_*,rot_*`),
//! where opacity is a logit and scales are natural logs.

use std::io::Write;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use crate::bundle::normalize_loaded;
use crate::error::BundleError;
use crate::gaussians::GaussianSet;
use crate::math::{logit, sigmoid};
use crate::sh::{coeffs_for_degree, degree_for_coeffs};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

fn malformed(detail: impl Into<String>) -> BundleError {
    BundleError::Malformed { chunk: "PLY".into(), detail: detail.into() }
}

/// Parses a community splat PLY (ASCII or binary little-endian) and applies
/// the sigmoid / exp activations.
pub fn import_ply(data: &[u8]) -> Result<GaussianSet, BundleError> {
    let header_end = find_header_end(data).ok_or_else(|| malformed("missing end_header"))?;
    let header = std::str::from_utf8(&data[..header_end]).map_err(|_| malformed("header is not UTF-8"))?;
    let body = &data[header_end..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(malformed("missing ply signature"));
    }
    let mut ascii = false;
    let mut count: Option<usize> = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut in_vertex = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", "binary_little_endian", _] => ascii = false,
            ["format", other, _] => return Err(malformed(format!("unsupported format {other}"))),
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| malformed("bad vertex count"))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => return Err(malformed("list properties on vertices")),
            ["property", ty, name] if in_vertex => {
                let t = Scalar::parse(ty).ok_or_else(|| malformed(format!("unknown type {ty}")))?;
                props.push((name.to_string(), t));
            }
            _ => {}
        }
    }
    let count = count.ok_or_else(|| malformed("no vertex element"))?;
    let col = |name: &str| props.iter().position(|(n, _)| n == name);
    let need = |name: &str| col(name).ok_or_else(|| malformed(format!("missing property {name}")));

    let rest_count = (0..).take_while(|i| col(&format!("f_rest_{i}")).is_some()).count();
    if rest_count % 3 != 0 {
        return Err(malformed(format!("{rest_count} f_rest values is not a multiple of 3")));
    }
    let degree = degree_for_coeffs(rest_count / 3 + 1).ok_or_else(|| malformed("unsupported SH band count"))?;
    let xyz = [need("x")?, need("y")?, need("z")?];
    let dc = [need("f_dc_0")?, need("f_dc_1")?, need("f_dc_2")?];
    let rest: Vec<usize> = (0..rest_count).map(|i| col(&format!("f_rest_{i}")).unwrap()).collect();
    let opacity = need("opacity")?;
    let scale = [need("scale_0")?, need("scale_1")?, need("scale_2")?];
    let rot = [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?];

    let rows = read_rows(body, &props, count, ascii)?;
    let coeffs = coeffs_for_degree(degree);
    let mut set = GaussianSet::new(degree);
    for (i, row) in rows.chunks(props.len()).enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(BundleError::NonFinite { field: props[c].0.clone(), index: i });
        }
        set.means.push(Vector3::new(row[xyz[0]], row[xyz[1]], row[xyz[2]]));
        set.sh.push([row[dc[0]], row[dc[1]], row[dc[2]]]);
        let per = coeffs - 1;
        for k in 0..per {
            set.sh.push([row[rest[k]], row[rest[per + k]], row[rest[2 * per + k]]]);
        }
        set.opacities.push(sigmoid(row[opacity]));
        set.scales.push(Vector3::new(row[scale[0]].exp(), row[scale[1]].exp(), row[scale[2]].exp()));
        let q = Quaternion::new(row[rot[0]], row[rot[1]], row[rot[2]], row[rot[3]]);
        set.rotations.push(normalize_loaded(q, i)?);
        set.labels.push(Default::default());
    }
    if let Some(v) = set.audit().into_iter().next() {
        return Err(malformed(v.to_string()));
    }
    Ok(set)
}

fn find_header_end(data: &[u8]) -> Option<usize> {
    let needle = b"end_header";
    let pos = data.windows(needle.len()).position(|w| w == needle)?;
    let mut end = pos + needle.len();
    if data.get(end) == Some(&b'\r') {
        end += 1;
    }
    if data.get(end) == Some(&b'\n') {
        end += 1;
    }
    Some(end)
}

fn read_rows(body: &[u8], props: &[(String, Scalar)], count: usize, ascii: bool) -> Result<Vec<f64>, BundleError> {
    let width = props.len();
    if ascii {
        let text = std::str::from_utf8(body).map_err(|_| malformed("ASCII body is not UTF-8"))?;
        let mut out = Vec::with_capacity(count * width);
        for tok in text.split_whitespace().take(count * width) {
            let v = match tok {
                "inf" | "+inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                t => t.parse().map_err(|_| malformed(format!("bad number {t:?}")))?,
            };
            out.push(v);
        }
        if out.len() != count * width {
            return Err(BundleError::Truncated(format!("PLY: {} of {} values", out.len(), count * width)));
        }
        return Ok(out);
    }
    let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
    if body.len() < stride.saturating_mul(count) {
        return Err(BundleError::Truncated(format!(
            "PLY: {count} vertices need {} bytes, have {}",
            stride * count,
            body.len()
        )));
    }
    let mut out = Vec::with_capacity(count * width);
    for rec in body.chunks_exact(stride).take(count) {
        let mut off = 0;
        for (_, t) in props {
            out.push(t.read_le(&rec[off..]));
            off += t.size();
        }
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<GaussianSet, BundleError> {
    import_ply(&std::fs::read(path)?)
}

/// Writes a binary little-endian float PLY in the community layout.
/// Opacities are clamped away from 0 and 1 so their logits stay finite.
pub fn export_ply(set: &GaussianSet) -> Vec<u8> {
    let rest = coeffs_for_degree(set.sh_degree()) - 1;
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"].map(String::from).to_vec();
    names.extend((0..3 * rest).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));

    let mut out = Vec::new();
    write!(out, "ply\nformat binary_little_endian 1.0\nelement vertex {}\n", set.len()).unwrap();
    for n in &names {
        writeln!(out, "property float {n}").unwrap();
    }
    out.extend_from_slice(b"end_header\n");
    for i in 0..set.len() {
        let m = set.means[i];
        let sh = set.sh_of(i);
        let mut row: Vec<f64> = vec![m.x, m.y, m.z];
        row.extend_from_slice(&sh[0]);
        for ch in 0..3 {
            row.extend(sh[1..].iter().map(|c| c[ch]));
        }
        row.push(logit(set.opacities[i].clamp(1e-7, 1.0 - 1e-7)));
        row.extend(set.scales[i].iter().map(|s| s.ln()));
        let q = set.rotations[i];
        row.extend_from_slice(&[q.w, q.i, q.j, q.k]);
        for v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}
