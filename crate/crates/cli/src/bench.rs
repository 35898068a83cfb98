//! Viewer throughput: renders one scene configuration repeatedly after a
//! warm-up and reports mean / p99 frame time.

use std::time::{Duration, Instant};

use ico3d_avatar::Avatar;
use ico3d_core::{CameraModel, GaussianSet, TileRenderer};

use crate::error::CliResult;

/// Scene components per report row: background only, plus body, plus head.
pub const CONFIGS: [(&str, bool, bool, bool); 3] = [("bg", true, false, false), ("bg+body", true, true, false), ("bg+body+head", true, true, true)];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scene: String,
    pub background: bool,
    pub body: bool,
    pub head: bool,
    pub splats: usize,
    pub width: usize,
    pub height: usize,
    pub workers: usize,
    pub frames: usize,
    pub mean_ms: f64,
    pub p99_ms: f64,
}

impl BenchRow {
    pub fn fps(&self) -> f64 {
        if self.mean_ms > 0.0 {
            1000.0 / self.mean_ms
        } else {
            f64::INFINITY
        }
    }
}

/// Splats of one configuration at body frame 0 with a neutral expression.
pub fn config_splats(avatar: &Avatar, body: bool, head: bool) -> CliResult<GaussianSet> {
    Ok(match (body, head) {
        (false, false) => avatar.background.clone(),
        (true, false) => avatar.body_frame(0)?,
        (_, true) => avatar.frame(0, None)?,
    })
}

/// Frame times after `warmup`; measures for `seconds` but at least `min_frames` frames.
pub fn time_frames(renderer: &TileRenderer, set: &GaussianSet, cam: &CameraModel, warmup: Duration, seconds: Duration, min_frames: usize) -> Vec<f64> {
    let t0 = Instant::now();
    while t0.elapsed() < warmup {
        std::hint::black_box(renderer.render(set, cam, [0.0; 3]));
    }
    let mut times = Vec::new();
    let t1 = Instant::now();
    while times.len() < min_frames || t1.elapsed() < seconds {
        let t = Instant::now();
        std::hint::black_box(renderer.render(set, cam, [0.0; 3]));
        times.push(t.elapsed().as_secs_f64() * 1000.0);
    }
    times
}

pub fn summarize(mut times: Vec<f64>) -> (f64, f64) {
    let mean = times.iter().sum::<f64>() / times.len().max(1) as f64;
    times.sort_by(f64::total_cmp);
    let p99 = times.get(((times.len() as f64 * 0.99).ceil() as usize).saturating_sub(1)).copied().unwrap_or(0.0);
    (mean, p99)
}

pub struct BenchSpec<'a> {
    pub scene: &'a str,
    pub avatar: &'a Avatar,
    pub camera: CameraModel,
    pub workers: &'a [usize],
    pub warmup: Duration,
    pub seconds: Duration,
    pub min_frames: usize,
}

pub fn run_bench(spec: &BenchSpec) -> CliResult<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &w in spec.workers {
        let renderer = TileRenderer::new(w);
        for (_, bg, body, head) in CONFIGS {
            let set = config_splats(spec.avatar, body, head)?;
            let times = time_frames(&renderer, &set, &spec.camera, spec.warmup, spec.seconds, spec.min_frames);
            let frames = times.len();
            let (mean_ms, p99_ms) = summarize(times);
            rows.push(BenchRow {
                scene: spec.scene.to_string(),
                background: bg,
                body,
                head,
                splats: set.len(),
                width: spec.camera.width,
                height: spec.camera.height,
                workers: renderer.workers(),
                frames,
                mean_ms,
                p99_ms,
            });
        }
    }
    Ok(rows)
}

/// CSV with ✓ marking the components included in each row.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scene", "background", "body", "head", "splats", "resolution", "workers", "frames", "mean_ms", "p99_ms", "fps"]).unwrap();
    let mark = |b: bool| if b { "✓" } else { "" };
    for r in rows {
        w.write_record([
            r.scene.clone(),
            mark(r.background).into(),
            mark(r.body).into(),
            mark(r.head).into(),
            r.splats.to_string(),
            format!("{}x{}", r.width, r.height),
            r.workers.to_string(),
            r.frames.to_string(),
            format!("{:.3}", r.mean_ms),
            format!("{:.3}", r.p99_ms),
            format!("{:.2}", r.fps()),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
