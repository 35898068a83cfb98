//! Fixed-rate frame schedule: frame i is due at i/fps after the start.
//! A late caller skips straight to the newest due frame, so indices are
//! strictly increasing and never repeat.

use std::time::Duration;

#[derive(Debug, Clone)]
pub struct FrameSchedule {
    fps: u32,
    next: u64,
}

/// A frame to produce now, and how many earlier frames were dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Due {
    pub index: u64,
    pub skipped: u64,
}

impl FrameSchedule {
    pub fn new(fps: u32) -> Self {
        assert!(fps > 0);
        Self { fps, next: 0 }
    }

    pub fn period(&self) -> Duration {
        Duration::from_nanos(1_000_000_000 / self.fps as u64)
    }

    /// Nominal timestamp of frame `index`, rounded up to whole nanoseconds.
    pub fn time_of(&self, index: u64) -> Duration {
        Duration::from_nanos((index * 1_000_000_000).div_ceil(self.fps as u64))
    }

    /// Newest frame due at `elapsed`, if any is due that was not produced yet.
    pub fn due(&mut self, elapsed: Duration) -> Option<Due> {
        let latest = (elapsed.as_nanos() * self.fps as u128 / 1_000_000_000) as u64;
        if latest < self.next {
            return None;
        }
        let d = Due { index: latest, skipped: latest - self.next };
        self.next = latest + 1;
        Some(d)
    }

    /// Time until the next frame is due.
    pub fn wait(&self, elapsed: Duration) -> Duration {
        self.time_of(self.next).saturating_sub(elapsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_time_caller_gets_every_frame() {
        let mut s = FrameSchedule::new(30);
        let got: Vec<u64> = (0..60).filter_map(|i| s.due(s.time_of(i)).map(|d| d.index)).collect();
        assert_eq!(got, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn late_caller_skips_never_duplicates() {
        let mut s = FrameSchedule::new(30);
        assert_eq!(s.due(Duration::ZERO), Some(Due { index: 0, skipped: 0 }));
        assert_eq!(s.due(Duration::from_millis(10)), None);
        assert_eq!(s.due(Duration::from_millis(140)), Some(Due { index: 4, skipped: 3 }));
        assert_eq!(s.due(Duration::from_millis(140)), None);
        assert_eq!(s.wait(Duration::from_millis(140)), s.time_of(5) - Duration::from_millis(140));
    }
}
