use ico3d_core::{Image, Result};

use super::partition::MotionSignal;
use crate::invalid;

/// Mean squared difference between consecutive frames, per camera.
/// `frames[c][k]` is frame k seen by camera c.
pub fn motion_from_frames(frames: &[Vec<Image>]) -> Result<MotionSignal> {
    let cams = frames.len();
    if cams == 0 {
        return Err(invalid("no cameras"));
    }
    let n = frames[0].len();
    if frames.iter().any(|c| c.len() != n) {
        return Err(invalid("cameras have different frame counts"));
    }
    let shape = frames[0].first().ok_or_else(|| invalid("no frames"))?;
    if frames.iter().flatten().any(|f| !f.same_shape(shape)) {
        return Err(invalid("frames differ in size"));
    }
    let mut values = Vec::with_capacity(n.saturating_sub(1) * cams);
    for t in 0..n.saturating_sub(1) {
        for cam in frames {
            let (a, b) = (&cam[t], &cam[t + 1]);
            let se: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
            values.push(se / a.data.len() as f64);
        }
    }
    MotionSignal::new(cams, values)
}
