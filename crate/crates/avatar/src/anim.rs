//! Procedural body animation over frames of the trained body sequence:
//! an idle ping-pong loop with random blinks, and action plans whose length
//! matches the speech audio and which end at the rest pose.

use ico3d_core::Result;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::invalid;

pub const ANIM_FPS: f64 = 30.0;

/// A contiguous run of body-sequence frames usable as a gesture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub reversible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyframeLibrary {
    pub sequence_len: usize,
    pub rest_start: usize,
    pub rest_end: usize,
    pub actions: Vec<Segment>,
}

impl KeyframeLibrary {
    pub fn new(sequence_len: usize, rest: (usize, usize), actions: Vec<Segment>) -> Result<Self> {
        let lib = Self { sequence_len, rest_start: rest.0, rest_end: rest.1, actions };
        lib.validate()?;
        Ok(lib)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rest_end <= self.rest_start || self.rest_end >= self.sequence_len {
            return Err(invalid(format!(
                "rest segment [{}, {}] must hold at least two frames inside a {}-frame sequence",
                self.rest_start, self.rest_end, self.sequence_len
            )));
        }
        for a in &self.actions {
            if a.end < a.start || a.end >= self.sequence_len {
                return Err(invalid(format!("action [{}, {}] outside the sequence", a.start, a.end)));
            }
        }
        Ok(())
    }

    /// Text form: `sequence_len N`, `rest A B`, and `action S E [reversible]`
    /// lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut len, mut rest, mut actions) = (None, None, Vec::new());
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let ctx = |m: &str| invalid(format!("keyframe library line {}: {m}", ln + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| ctx(&format!("bad frame index {s:?}")));
            match tok.as_slice() {
                ["sequence_len", n] => len = Some(num(n)?),
                ["rest", a, b] => rest = Some((num(a)?, num(b)?)),
                ["action", a, b] => actions.push(Segment { start: num(a)?, end: num(b)?, reversible: false }),
                ["action", a, b, "reversible"] => actions.push(Segment { start: num(a)?, end: num(b)?, reversible: true }),
                _ => return Err(ctx("unrecognized entry")),
            }
        }
        Self::new(
            len.ok_or_else(|| invalid("keyframe library needs sequence_len"))?,
            rest.ok_or_else(|| invalid("keyframe library needs rest"))?,
            actions,
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("sequence_len {}\nrest {} {}\n", self.sequence_len, self.rest_start, self.rest_end);
        for a in &self.actions {
            s += &format!("action {} {}{}\n", a.start, a.end, if a.reversible { " reversible" } else { "" });
        }
        s
    }
}

/// Body frame indices with a per-frame blink flag.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnimPlan {
    pub frames: Vec<usize>,
    pub blinks: Vec<bool>,
}

impl AnimPlan {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// True when every consecutive pair differs by exactly one frame.
    pub fn is_continuous(&self) -> bool {
        self.frames.windows(2).all(|w| w[0].abs_diff(w[1]) == 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlinkConfig {
    /// Mean blinks per second; 0 disables blinking.
    pub rate_hz: f64,
    pub envelope_frames: usize,
}

impl Default for BlinkConfig {
    fn default() -> Self {
        Self { rate_hz: 0.25, envelope_frames: 6 }
    }
}

/// Eye-closure weight over a blink envelope: a triangle peaking mid-blink.
pub fn blink_envelope(k: usize, frames: usize) -> f64 {
    if k >= frames || frames == 0 {
        return 0.0;
    }
    let mid = (frames as f64 - 1.0) / 2.0;
    1.0 - ((k as f64 - mid).abs() / (mid + 1.0))
}

/// Blink start scheduler with exponential inter-arrival times.
#[derive(Debug, Clone)]
pub struct BlinkTrack<R: Rng> {
    rng: R,
    cfg: BlinkConfig,
    next_start: f64,
    remaining: usize,
    frame: usize,
}

impl<R: Rng> BlinkTrack<R> {
    pub fn new(mut rng: R, cfg: BlinkConfig) -> Self {
        let next_start = Self::draw(&mut rng, &cfg);
        Self { rng, cfg, next_start, remaining: 0, frame: 0 }
    }

    fn draw(rng: &mut R, cfg: &BlinkConfig) -> f64 {
        if cfg.rate_hz > 0.0 {
            Exp::new(cfg.rate_hz / ANIM_FPS).map_or(f64::INFINITY, |d| d.sample(rng))
        } else {
            f64::INFINITY
        }
    }

    /// Whether the next frame lies inside a blink envelope, and its position in it.
    pub fn step(&mut self) -> Option<usize> {
        let f = self.frame as f64;
        self.frame += 1;
        if self.remaining == 0 && f >= self.next_start {
            self.remaining = self.cfg.envelope_frames;
            self.next_start = f + self.cfg.envelope_frames as f64 + Self::draw(&mut self.rng, &self.cfg);
        }
        if self.remaining > 0 {
            self.remaining -= 1;
            Some(self.cfg.envelope_frames - 1 - self.remaining)
        } else {
            None
        }
    }
}

/// Unbounded idle loop: ping-pong over the rest segment with blink overlay.
pub struct IdleStream<R: Rng> {
    start: usize,
    period: usize,
    k: usize,
    blinks: BlinkTrack<R>,
}

impl<R: Rng> IdleStream<R> {
    pub fn new(lib: &KeyframeLibrary, rng: R, blink: BlinkConfig) -> Self {
        Self { start: lib.rest_start, period: 2 * (lib.rest_end - lib.rest_start), k: 0, blinks: BlinkTrack::new(rng, blink) }
    }

    /// Same loop entered at `rest_end`, where action plans finish.
    pub fn from_rest_end(lib: &KeyframeLibrary, rng: R, blink: BlinkConfig) -> Self {
        let mut s = Self::new(lib, rng, blink);
        s.k = s.period / 2;
        s
    }
}

impl<R: Rng> Iterator for IdleStream<R> {
    /// (body frame, blink envelope position)
    type Item = (usize, Option<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let half = self.period / 2;
        let p = self.k % self.period;
        self.k += 1;
        let off = if p <= half { p } else { self.period - p };
        Some((self.start + off, self.blinks.step()))
    }
}

pub fn idle_stream<R: Rng>(lib: &KeyframeLibrary, rng: R, blink: BlinkConfig) -> IdleStream<R> {
    IdleStream::new(lib, rng, blink)
}

/// Finite idle plan of `frames` frames.
pub fn idle_plan<R: Rng>(lib: &KeyframeLibrary, rng: R, blink: BlinkConfig, frames: usize) -> AnimPlan {
    let (frames, blinks) = idle_stream(lib, rng, blink).take(frames).map(|(f, b)| (f, b.is_some())).unzip();
    AnimPlan { frames, blinks }
}

fn extend_to(plan: &mut Vec<usize>, target: usize) {
    let mut cur = *plan.last().expect("extend_to needs a start frame");
    while cur != target {
        cur = if cur < target { cur + 1 } else { cur - 1 };
        plan.push(cur);
    }
}

/// Plans exactly `duration` frames (no blinks) ending at `rest_end`.
///
/// Segments are chosen greedily at random among those that still fit
/// (including the walk back to `rest_end`); consecutive choices are joined by
/// frame-by-frame walks. Leftover frames are padded by ping-ponging between
/// `rest_end − 1` and `rest_end`; an odd leftover is absorbed by prefixing
/// one neighbour of the first frame.
pub fn plan_action(lib: &KeyframeLibrary, duration: usize, rng: &mut impl Rng) -> Result<AnimPlan> {
    lib.validate()?;
    if lib.actions.is_empty() {
        return Err(invalid("keyframe library has no action segments"));
    }
    if duration == 0 {
        return Ok(AnimPlan::default());
    }
    let re = lib.rest_end;
    let mut plan: Vec<usize> = Vec::with_capacity(duration);
    loop {
        let cur = plan.last().copied();
        let mut options = Vec::new();
        for a in &lib.actions {
            let mut dirs = vec![(a.start, a.end)];
            if a.reversible && a.start != a.end {
                dirs.push((a.end, a.start));
            }
            for (s, e) in dirs {
                let cost = match cur {
                    Some(c) => c.abs_diff(s) + s.abs_diff(e),
                    None => 1 + s.abs_diff(e),
                };
                if cost > 0 && plan.len() + cost + e.abs_diff(re) <= duration {
                    options.push((s, e));
                }
            }
        }
        if options.is_empty() {
            break;
        }
        let (s, e) = options[rng.random_range(0..options.len())];
        if plan.is_empty() {
            plan.push(s);
        } else {
            extend_to(&mut plan, s);
        }
        extend_to(&mut plan, e);
    }
    if plan.is_empty() {
        // nothing fits: pure padding that ends at the rest pose
        let below = re - 1;
        let frames = (0..duration).map(|k| if (duration - 1 - k) % 2 == 0 { re } else { below }).collect();
        return Ok(AnimPlan { frames, blinks: vec![false; duration] });
    }
    extend_to(&mut plan, re);
    let mut left = duration - plan.len();
    if left % 2 == 1 {
        let first = plan[0];
        let n = if first + 1 < lib.sequence_len { first + 1 } else { first - 1 };
        plan.insert(0, n);
        left -= 1;
    }
    for _ in 0..left / 2 {
        plan.push(re - 1);
        plan.push(re);
    }
    let n = plan.len();
    Ok(AnimPlan { frames: plan, blinks: vec![false; n] })
}

/// Overlays seeded blink flags on an existing plan.
pub fn with_blinks(mut plan: AnimPlan, rng: impl Rng, cfg: BlinkConfig) -> AnimPlan {
    let mut track = BlinkTrack::new(rng, cfg);
    plan.blinks = plan.frames.iter().map(|_| track.step().is_some()).collect();
    plan
}

/// Frames needed to cover `seconds` of audio at 30 fps.
pub fn frames_for_audio(seconds: f64) -> usize {
    (seconds * ANIM_FPS - 1e-9).ceil().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use ico3d_core::synth::rng;

    fn lib() -> KeyframeLibrary {
        KeyframeLibrary::new(
            120,
            (10, 20),
            vec![
                Segment { start: 30, end: 50, reversible: true },
                Segment { start: 60, end: 64, reversible: false },
                Segment { start: 20, end: 35, reversible: true },
            ],
        )
        .unwrap()
    }

    #[test]
    fn ping_pong() {
        let l = KeyframeLibrary::new(20, (10, 12), vec![]).unwrap();
        let p = idle_plan(&l, rng(0), BlinkConfig { rate_hz: 0.0, ..Default::default() }, 6);
        assert_eq!(p.frames, vec![10, 11, 12, 11, 10, 11]);
        assert!(p.blinks.iter().all(|b| !b));
        let tail: Vec<usize> = IdleStream::from_rest_end(&l, rng(0), BlinkConfig::default()).take(5).map(|f| f.0).collect();
        assert_eq!(tail, vec![12, 11, 10, 11, 12]);
    }

    #[test]
    fn blinks_are_seeded() {
        let l = lib();
        let a = idle_plan(&l, rng(4), BlinkConfig::default(), 300);
        let b = idle_plan(&l, rng(4), BlinkConfig::default(), 300);
        assert_eq!(a, b);
        let starts = a.blinks.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(a.blinks[0]);
        assert!(starts <= 10);
        assert!(a.frames.iter().all(|f| (10..=20).contains(f)));
    }

    #[test]
    fn single_segment_forced_choice() {
        let l = KeyframeLibrary::new(80, (0, 10), vec![Segment { start: 10, end: 40, reversible: true }]).unwrap();
        let p = plan_action(&l, 31, &mut rng(1)).unwrap();
        assert_eq!(p.frames, (10..=40).rev().collect::<Vec<_>>());
    }

    #[test]
    fn zero_duration_is_empty() {
        assert!(plan_action(&lib(), 0, &mut rng(1)).unwrap().is_empty());
    }

    #[test]
    fn plans_satisfy_invariants() {
        let l = lib();
        let mut r = rng(2);
        for d in 1..400 {
            let p = plan_action(&l, d, &mut r).unwrap();
            assert_eq!(p.len(), d);
            assert!(p.is_continuous(), "{d}: {:?}", p.frames);
            assert_eq!(*p.frames.last().unwrap(), l.rest_end);
        }
    }

    #[test]
    fn library_text_roundtrip() {
        let l = lib();
        assert_eq!(KeyframeLibrary::parse(&l.to_text()).unwrap(), l);
        assert!(KeyframeLibrary::parse("sequence_len 10\nrest 5 4\n").is_err());
        assert!(KeyframeLibrary::parse("sequence_len 10\nrest 1 4\naction 3 12\n").is_err());
    }

    #[test]
    fn audio_frames() {
        assert_eq!(frames_for_audio(1.0), 30);
        assert_eq!(frames_for_audio(0.12), 4);
        assert_eq!(frames_for_audio(0.0), 0);
    }
}
