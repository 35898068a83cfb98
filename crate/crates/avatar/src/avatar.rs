//! Runtime avatar assembled from a bundle: per-frame head appearance from
//! expressions, rigidly placed on the animated body, plus static background.

use std::collections::BTreeMap;

use ico3d_core::bundle::Bundle;
use ico3d_core::codec::{ByteReader, ByteWriter};
use ico3d_core::{BundleError, GaussianSet, Pose, Result, SplatLabel};
use nalgebra::Vector3;

use crate::anim::{KeyframeLibrary, Segment};
use crate::body::{decode_body, encode_body, BodyModel};
use crate::compose::{harmonize_colors, inject_border, merge, transform_set, PruneSpec, RigAlignment};
use crate::head::{apply_output, decode_model, encode_model, head_forward, HeadModel};
use crate::invalid;

/// Head model with its canonical splats (head frame) and per-body-frame
/// head-to-world transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadAsset {
    pub model: HeadModel,
    pub splats: GaussianSet,
    /// Border splats attached to the head, in the head frame.
    pub border: GaussianSet,
    /// Head-to-world transform per body frame; empty means identity.
    pub track: Vec<Pose>,
}

impl HeadAsset {
    pub fn pose_at(&self, frame: usize) -> Pose {
        if self.track.is_empty() {
            Pose::identity()
        } else {
            self.track[frame.min(self.track.len() - 1)]
        }
    }

    /// Head plus border splats coloured for `e`, still in the head frame.
    pub fn colored(&self, e: &[f64]) -> Result<GaussianSet> {
        let out = head_forward(&self.model, e, &self.splats.means)?;
        let mut set = self.splats.clone();
        apply_output(&mut set, &out);
        set.append(&self.border);
        Ok(set)
    }
}

/// Default viewing setup stored with toy and composed bundles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewHint {
    pub eye: Vector3<f64>,
    pub target: Vector3<f64>,
    /// Focal length as a multiple of the image width.
    pub focal_scale: f64,
}

impl Default for ViewHint {
    fn default() -> Self {
        Self { eye: Vector3::new(0.0, 0.0, -3.0), target: Vector3::zeros(), focal_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Avatar {
    pub head: Option<HeadAsset>,
    pub body: Option<BodyModel>,
    /// Body splats used when there is no dynamic body model.
    pub static_body: GaussianSet,
    pub background: GaussianSet,
    pub library: Option<KeyframeLibrary>,
    pub view: Option<ViewHint>,
}

impl Avatar {
    /// Number of body-sequence frames (1 for a static scene).
    pub fn frames(&self) -> usize {
        self.body.as_ref().map_or(1, |b| b.frames())
    }

    pub fn expression_channels(&self) -> Option<usize> {
        self.head.as_ref().map(|h| h.model.config.channels)
    }

    /// Body (and background) only at sequence frame `k`.
    pub fn body_frame(&self, k: usize) -> Result<GaussianSet> {
        let mut set = match &self.body {
            Some(b) => b.frame(k)?,
            None => self.static_body.clone(),
        };
        set.append(&self.background);
        Ok(set)
    }

    /// Full scene at body frame `k` with head expression `e` (neutral when `None`).
    pub fn frame(&self, k: usize, e: Option<&[f64]>) -> Result<GaussianSet> {
        let body = self.body_frame(k)?;
        match &self.head {
            None => Ok(body),
            Some(h) => {
                let neutral = vec![0.0; h.model.config.channels];
                let head = h.colored(e.unwrap_or(&neutral))?;
                Ok(merge(&transform_set(&head, &h.pose_at(k)), &body))
            }
        }
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let mut out = Avatar::default();
        let s = &b.splats;
        let mut rest_from = 0;
        if let Some(bytes) = &b.head {
            let (model, track) = decode_head_chunk(bytes)?;
            if model.count > s.len() {
                return Err(BundleError::Malformed { chunk: "HEAD".into(), detail: "model larger than the splat table".into() }.into());
            }
            let mask: Vec<bool> = (0..s.len()).map(|i| i < model.count).collect();
            let border_mask: Vec<bool> = (0..s.len()).map(|i| i >= model.count && s.labels[i] == SplatLabel::Border).collect();
            out.head = Some(HeadAsset { splats: s.retain_mask(&mask), border: s.retain_mask(&border_mask), model, track });
            rest_from = out.head.as_ref().unwrap().model.count;
        }
        let tail = |pred: &dyn Fn(SplatLabel) -> bool| {
            let m: Vec<bool> = (0..s.len()).map(|i| i >= rest_from && pred(s.labels[i])).collect();
            s.retain_mask(&m)
        };
        out.background = tail(&|l| l == SplatLabel::Background);
        out.static_body = tail(&|l| matches!(l, SplatLabel::Body | SplatLabel::Unlabeled | SplatLabel::Head));
        if let Some(bytes) = &b.body {
            out.body = Some(decode_body(bytes)?);
        }
        out.library = library_from_meta(&b.meta)?;
        out.view = view_from_meta(&b.meta)?;
        Ok(out)
    }

    /// SPLT layout: canonical head, border, body at frame 0, background.
    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut splats = GaussianSet::new(0);
        let mut bundle = Bundle::default();
        if let Some(h) = &self.head {
            splats.append(&h.splats);
            let mut border = h.border.clone();
            border.set_label(SplatLabel::Border);
            splats.append(&border);
            bundle.head = Some(encode_head_chunk(&h.model, &h.track));
        }
        let mut body = match &self.body {
            Some(b) => b.frame(0)?,
            None => self.static_body.clone(),
        };
        for l in &mut body.labels {
            if *l != SplatLabel::Body && *l != SplatLabel::Unlabeled {
                *l = SplatLabel::Body;
            }
        }
        splats.append(&body);
        let mut bg = self.background.clone();
        bg.set_label(SplatLabel::Background);
        splats.append(&bg);
        bundle.splats = splats;
        bundle.body = self.body.as_ref().map(encode_body);
        if let Some(lib) = &self.library {
            library_to_meta(lib, &mut bundle.meta);
        }
        if let Some(v) = &self.view {
            view_to_meta(v, &mut bundle.meta);
        }
        Ok(bundle)
    }
}

pub fn encode_head_chunk(model: &HeadModel, track: &[Pose]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(&encode_model(model));
    w.u64(track.len() as u64);
    for p in track {
        for v in p.to_row_major() {
            w.f64(v);
        }
    }
    w.finish()
}

pub fn decode_head_chunk(data: &[u8]) -> std::result::Result<(HeadModel, Vec<Pose>), BundleError> {
    let mut r = ByteReader::new(data, "HEAD");
    let model = decode_model(r.bytes()?)?;
    let n = r.u64()?;
    if n.saturating_mul(128) > r.remaining() as u64 {
        return Err(BundleError::Truncated("HEAD: head track".into()));
    }
    let mut track = Vec::with_capacity(n as usize);
    for i in 0..n {
        let v: Vec<f64> = (0..16).map(|_| r.f64()).collect::<std::result::Result<_, _>>()?;
        let p = Pose::from_row_major(&v).map_err(|e| BundleError::Malformed { chunk: "HEAD".into(), detail: format!("track pose {i}: {e}") })?;
        track.push(p);
    }
    if !r.is_empty() {
        return Err(BundleError::Malformed { chunk: "HEAD".into(), detail: "trailing bytes".into() });
    }
    Ok((model, track))
}

/// Standalone head bundle: canonical head splats plus the HEAD chunk.
pub fn head_bundle(model: &HeadModel, splats: &GaussianSet) -> Result<Bundle> {
    if model.count != splats.len() {
        return Err(invalid("head model and splat count differ"));
    }
    let mut s = splats.clone();
    s.set_label(SplatLabel::Head);
    let mut b = Bundle::from_splats(s);
    b.head = Some(encode_head_chunk(model, &[]));
    Ok(b)
}

fn meta_err(key: &str, v: &str) -> ico3d_core::Error {
    BundleError::Malformed { chunk: "META".into(), detail: format!("{key} = {v:?}") }.into()
}

fn library_to_meta(lib: &KeyframeLibrary, meta: &mut BTreeMap<String, String>) {
    meta.insert("anim.sequence_len".into(), lib.sequence_len.to_string());
    meta.insert("anim.rest".into(), format!("{} {}", lib.rest_start, lib.rest_end));
    let acts: Vec<String> = lib.actions.iter().map(|a| format!("{}-{}{}", a.start, a.end, if a.reversible { "r" } else { "" })).collect();
    meta.insert("anim.actions".into(), acts.join(","));
}

fn library_from_meta(meta: &BTreeMap<String, String>) -> Result<Option<KeyframeLibrary>> {
    let (Some(len), Some(rest)) = (meta.get("anim.sequence_len"), meta.get("anim.rest")) else {
        return Ok(None);
    };
    let len: usize = len.parse().map_err(|_| meta_err("anim.sequence_len", len))?;
    let r: Vec<usize> = rest.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| meta_err("anim.rest", rest))?;
    if r.len() != 2 {
        return Err(meta_err("anim.rest", rest));
    }
    let mut actions = Vec::new();
    for a in meta.get("anim.actions").map(String::as_str).unwrap_or("").split(',').filter(|s| !s.is_empty()) {
        let (body, reversible) = match a.strip_suffix('r') {
            Some(b) => (b, true),
            None => (a, false),
        };
        let (s, e) = body.split_once('-').ok_or_else(|| meta_err("anim.actions", a))?;
        actions.push(Segment {
            start: s.parse().map_err(|_| meta_err("anim.actions", a))?,
            end: e.parse().map_err(|_| meta_err("anim.actions", a))?,
            reversible,
        });
    }
    KeyframeLibrary::new(len, (r[0], r[1]), actions).map(Some)
}

fn vec3_meta(meta: &BTreeMap<String, String>, key: &str) -> Result<Option<Vector3<f64>>> {
    let Some(v) = meta.get(key) else { return Ok(None) };
    let p: Vec<f64> = v.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| meta_err(key, v))?;
    if p.len() != 3 || p.iter().any(|x| !x.is_finite()) {
        return Err(meta_err(key, v));
    }
    Ok(Some(Vector3::new(p[0], p[1], p[2])))
}

fn view_to_meta(v: &ViewHint, meta: &mut BTreeMap<String, String>) {
    meta.insert("view.eye".into(), format!("{:?} {:?} {:?}", v.eye.x, v.eye.y, v.eye.z));
    meta.insert("view.target".into(), format!("{:?} {:?} {:?}", v.target.x, v.target.y, v.target.z));
    meta.insert("view.focal_scale".into(), format!("{:?}", v.focal_scale));
}

fn view_from_meta(meta: &BTreeMap<String, String>) -> Result<Option<ViewHint>> {
    let (Some(eye), Some(target)) = (vec3_meta(meta, "view.eye")?, vec3_meta(meta, "view.target")?) else {
        return Ok(None);
    };
    let focal_scale = match meta.get("view.focal_scale") {
        Some(v) => v.parse().ok().filter(|f: &f64| *f > 0.0).ok_or_else(|| meta_err("view.focal_scale", v))?,
        None => 1.0,
    };
    Ok(Some(ViewHint { eye, target, focal_scale }))
}

/// Options for [`compose_avatar`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComposeOptions {
    pub prune: PruneSpec,
    /// Neck boundary polyline in the body world (frame 0).
    pub boundary: Option<Vec<Vector3<f64>>>,
    /// Band half-width around the boundary for colour harmonization; `None` skips it.
    pub harmonize_width: Option<f64>,
    pub seed: u64,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        Self { prune: PruneSpec::default(), boundary: None, harmonize_width: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComposeReport {
    pub head_splats: usize,
    /// Body splats removed, per window (one entry for a static body).
    pub removed: Vec<usize>,
    pub body_splats: usize,
    pub border_splats: usize,
    pub harmonized: Option<([f64; 3], [f64; 3])>,
    pub warnings: Vec<String>,
}

/// Places a trained head on a body sequence: per-frame rig transforms,
/// pruning of body splats under the head, optional border splats along the
/// neck and optional colour harmonization of the head towards the body.
pub fn compose_avatar(head: &Avatar, body: &Avatar, rig: &RigAlignment, opts: &ComposeOptions) -> Result<(Avatar, ComposeReport)> {
    let h = head.head.as_ref().ok_or_else(|| invalid("head bundle has no head model"))?;
    if h.splats.is_empty() {
        return Err(invalid("head bundle has no head splats"));
    }
    rig.validate()?;
    let frames = body.frames();
    if rig.frames() < frames {
        return Err(invalid(format!("rig has {} head poses, body sequence has {frames} frames", rig.frames())));
    }
    let track: Vec<Pose> = (0..frames).map(|k| rig.composed(k)).collect::<Result<_>>()?;
    let mut report = ComposeReport { head_splats: h.splats.len(), ..Default::default() };

    let neutral = vec![0.0; h.model.config.channels];
    let mut head_local = h.splats.clone();
    apply_output(&mut head_local, &head_forward(&h.model, &neutral, &h.splats.means)?);
    let head_world0 = transform_set(&head_local, &track[0]);
    let cfg = opts.prune.resolve(&head_world0)?;
    // the sphere follows the head: store its centre in the head frame
    let center_head = track[0].inverse().transform_point(&cfg.center);
    let cfg_at = |frame: usize| {
        let mut c = cfg.clone();
        c.center = track[frame].transform_point(&center_head);
        c
    };

    let mut out = Avatar { background: body.background.clone(), library: body.library.clone(), view: body.view, ..Default::default() };
    match &body.body {
        Some(b) => {
            let mut windows = Vec::with_capacity(b.windows.len());
            for w in &b.windows {
                let start = w.frame_range.0;
                let c = cfg_at(start);
                let inv = track[start].inverse();
                let at_start = w.deform(0.0)?;
                let keep: Vec<bool> = at_start.means.iter().map(|m| !c.removes(m, &inv)).collect();
                report.removed.push(keep.iter().filter(|k| !**k).count());
                windows.push(w.retain(&keep));
            }
            report.body_splats = windows.iter().map(|w| w.canonical.len()).max().unwrap_or(0);
            out.body = Some(BodyModel::new(b.plan.clone(), windows)?);
        }
        None => {
            let (kept, removed) = crate::compose::prune_body(&body.static_body, &cfg_at(0), &track[0])?;
            report.removed.push(removed.len());
            report.body_splats = kept.len();
            out.static_body = kept;
        }
    }
    if report.body_splats == 0 {
        let msg = "pruning removed every body splat".to_string();
        tracing::warn!("{msg}");
        report.warnings.push(msg);
    }

    let mut model = h.model.clone();
    let mut border = GaussianSet::new(0);
    if let Some(boundary) = &opts.boundary {
        if let Some(width) = opts.harmonize_width {
            match harmonize_colors(&head_world0, &out.body_frame(0)?, boundary, width) {
                Ok(t) => {
                    let (g, b) = t.compose(model.color_gain, model.color_bias);
                    model.color_gain = g;
                    model.color_bias = b;
                    t.apply_to_set(&mut head_local);
                    report.harmonized = Some((t.gain, t.bias));
                }
                Err(e) => {
                    let msg = format!("colour harmonization skipped: {e}");
                    tracing::warn!("{msg}");
                    report.warnings.push(msg);
                }
            }
        }
        if cfg.border_count > 0 {
            let to_head = track[0].inverse();
            let local: Vec<Vector3<f64>> = boundary.iter().map(|p| to_head.transform_point(p)).collect();
            let mut rng = ico3d_core::synth::rng(opts.seed);
            border = inject_border(&local, cfg.border_count, &mut rng, &head_local)?;
            report.border_splats = border.len();
        }
    } else if cfg.border_count > 0 {
        let msg = "border splats requested without a boundary polyline".to_string();
        tracing::warn!("{msg}");
        report.warnings.push(msg);
    }
    let mut splats = h.splats.clone();
    splats.set_label(SplatLabel::Head);
    out.head = Some(HeadAsset { model, splats, border, track });
    Ok((out, report))
}
