//! Camera path files: CSV rows `frame,fx,fy,cx,cy,width,height` followed by
//! the 16 row-major entries of the world-to-camera pose. Rows are keyframes;
//! frames between two keyframes interpolate the pose on SE(3) and the
//! intrinsics linearly. An optional header row is skipped.

use ico3d_core::{interpolate_pose, CameraModel, Pose};

use crate::error::{CliError, CliResult};

pub const COLUMNS: usize = 23;

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub frame: usize,
    pub camera: CameraModel,
}

pub fn parse_camera_path(text: &str) -> CliResult<Vec<Keyframe>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut keys: Vec<Keyframe> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Format(format!("camera path: {e}")))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let fail = |m: String| CliError::Format(format!("camera path line {line}: {m}"));
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != COLUMNS {
            return Err(fail(format!("expected {COLUMNS} columns, got {}", rec.len())));
        }
        let v: Vec<f64> = rec.iter().map(|s| s.parse::<f64>().map_err(|_| fail(format!("bad number {s:?}")))).collect::<CliResult<_>>()?;
        let int = |x: f64, what: &str| {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
                Ok(x as usize)
            } else {
                Err(fail(format!("{what} must be a non-negative integer, got {x}")))
            }
        };
        let frame = int(v[0], "frame")?;
        let pose = Pose::from_row_major(&v[7..]).map_err(|e| fail(e.to_string()))?;
        let camera = CameraModel::new(v[1], v[2], v[3], v[4], int(v[5], "width")?, int(v[6], "height")?, pose).map_err(|e| fail(e.to_string()))?;
        if keys.last().is_some_and(|k| k.frame >= frame) {
            return Err(fail(format!("keyframe {frame} is not after the previous one")));
        }
        if keys.is_empty() && frame != 0 {
            return Err(fail("the first keyframe must be frame 0".into()));
        }
        keys.push(Keyframe { frame, camera });
    }
    if keys.is_empty() {
        return Err(CliError::Format("camera path has no keyframes".into()));
    }
    Ok(keys)
}

/// One camera per frame from 0 to the last keyframe.
pub fn expand(keys: &[Keyframe]) -> CliResult<Vec<CameraModel>> {
    let mut out = vec![keys[0].camera];
    for w in keys.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ca, cb) = (&a.camera, &b.camera);
        if (ca.width, ca.height) != (cb.width, cb.height) {
            return Err(CliError::Format(format!("keyframes {} and {} differ in resolution", a.frame, b.frame)));
        }
        let span = (b.frame - a.frame) as f64;
        for f in a.frame + 1..=b.frame {
            let t = (f - a.frame) as f64 / span;
            let lerp = |x: f64, y: f64| (1.0 - t) * x + t * y;
            let pose = if f == b.frame { cb.world_to_camera } else { interpolate_pose(&[ca.world_to_camera, cb.world_to_camera], &[1.0 - t, t])? };
            out.push(CameraModel::new(lerp(ca.fx, cb.fx), lerp(ca.fy, cb.fy), lerp(ca.cx, cb.cx), lerp(ca.cy, cb.cy), ca.width, ca.height, pose)?);
        }
    }
    Ok(out)
}

pub fn write_camera_path(cams: &[(usize, CameraModel)]) -> String {
    let names: Vec<String> = (0..16).map(|k| format!("m{}{}", k / 4, k % 4)).collect();
    let mut s = format!("frame,fx,fy,cx,cy,width,height,{}\n", names.join(","));
    for (f, c) in cams {
        let pose: Vec<String> = c.world_to_camera.to_row_major().iter().map(|v| format!("{v:?}")).collect();
        s += &format!("{f},{:?},{:?},{:?},{:?},{},{},{}\n", c.fx, c.fy, c.cx, c.cy, c.width, c.height, pose.join(","));
    }
    s
}
