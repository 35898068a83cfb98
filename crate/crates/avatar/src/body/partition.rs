use ico3d_core::Result;

use crate::invalid;

/// Default maximum frames per window.
pub const DEFAULT_WINDOW_CAP: usize = 150;

/// Per-transition, per-camera motion magnitudes: `values[t * cameras + c]`
/// is the motion between frames t and t+1 seen by camera c.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSignal {
    pub cameras: usize,
    pub values: Vec<f64>,
}

impl MotionSignal {
    pub fn new(cameras: usize, values: Vec<f64>) -> Result<Self> {
        if cameras == 0 || values.len() % cameras != 0 {
            return Err(invalid(format!("{} motion values do not split over {cameras} cameras", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("motion value {v} must be finite and non-negative")));
        }
        Ok(Self { cameras, values })
    }

    /// Single-camera signal.
    pub fn mono(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn transitions(&self) -> usize {
        self.values.len() / self.cameras
    }

    pub fn frames(&self) -> usize {
        self.transitions() + 1
    }

    /// Camera-averaged motion of transition `t`.
    pub fn mean_at(&self, t: usize) -> f64 {
        let row = &self.values[t * self.cameras..(t + 1) * self.cameras];
        row.iter().sum::<f64>() / self.cameras as f64
    }
}

/// Inclusive frame ranges; consecutive ranges share exactly one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub ranges: Vec<(usize, usize)>,
}

impl WindowPlan {
    /// Index of the window that renders `frame`; overlap frames belong to the later window.
    pub fn window_of(&self, frame: usize) -> Option<usize> {
        self.ranges.iter().rposition(|&(s, e)| s <= frame && frame <= e)
    }

    pub fn frames(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.1 + 1)
    }

    /// Checks coverage of `0..frames`, 1-frame overlaps and length ≥ 2.
    pub fn validate(&self, frames: usize) -> Result<()> {
        let first = self.ranges.first().ok_or_else(|| invalid("empty window plan"))?;
        if first.0 != 0 || self.frames() != frames {
            return Err(invalid(format!("plan covers {}..{}, expected 0..{}", first.0, self.frames(), frames)));
        }
        for (i, &(s, e)) in self.ranges.iter().enumerate() {
            if e <= s {
                return Err(invalid(format!("window {i} [{s},{e}] shorter than 2 frames")));
            }
            if i > 0 && self.ranges[i - 1].1 != s {
                return Err(invalid(format!("window {i} does not overlap its predecessor by one frame")));
            }
        }
        Ok(())
    }
}

/// Accumulates the camera-averaged motion along the sequence and spawns a
/// window boundary at frame t+1 as soon as the accumulation since the last
/// boundary reaches `v_thresh`; a boundary is also forced when a window
/// would exceed `cap` frames. The final window absorbs the tail.
pub fn partition_windows(motion: &MotionSignal, v_thresh: f64, cap: usize) -> Result<WindowPlan> {
    if !(v_thresh > 0.0) {
        return Err(invalid(format!("motion threshold {v_thresh} must be positive")));
    }
    if cap < 2 {
        return Err(invalid(format!("window cap {cap} must be at least 2")));
    }
    let transitions = motion.transitions();
    if transitions == 0 {
        return Err(invalid("a window plan needs at least two frames"));
    }
    let mut ranges = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for t in 0..transitions {
        acc += motion.mean_at(t);
        let end = t + 1;
        if acc >= v_thresh || end - start + 1 >= cap {
            ranges.push((start, end));
            start = end;
            acc = 0.0;
        }
    }
    if start < transitions {
        ranges.push((start, transitions));
    }
    Ok(WindowPlan { ranges })
}
