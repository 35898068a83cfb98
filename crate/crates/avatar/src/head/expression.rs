use std::f64::consts::TAU;
use std::io::Read;

use ico3d_core::Result;
use rand::Rng;

use super::model::{AUDIO_CHANNELS, EXPRESSION_CHANNELS, EYE_CHANNELS};
use crate::invalid;

pub const EXPRESSION_FPS: f64 = 30.0;

/// Expression vectors sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionStream {
    pub fps: f64,
    pub frames: Vec<Vec<f64>>,
}

impl ExpressionStream {
    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn expression_header() -> Vec<String> {
    (0..AUDIO_CHANNELS)
        .map(|i| format!("a{i}"))
        .chain((0..EYE_CHANNELS).map(|i| format!("eye{i}")))
        .collect()
}

/// Reads a CSV with header `a0..a31,eye0..eye6`, one frame per row.
/// Errors name the 1-based data row.
pub fn read_expression_csv(reader: impl Read) -> Result<ExpressionStream> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| invalid(format!("expression header: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    if header != expression_header() {
        return Err(invalid("expression header must be a0..a31,eye0..eye6"));
    }
    let mut frames = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let row = row + 1;
        let rec = rec.map_err(|e| invalid(format!("expression row {row}: {e}")))?;
        if rec.len() != EXPRESSION_CHANNELS {
            return Err(invalid(format!("expression row {row}: {} values, expected {EXPRESSION_CHANNELS}", rec.len())));
        }
        let mut v = Vec::with_capacity(EXPRESSION_CHANNELS);
        for (col, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| invalid(format!("expression row {row}, column {col}: {field:?}")))?;
            if !x.is_finite() {
                return Err(invalid(format!("expression row {row}, column {col}: non-finite")));
            }
            if col >= AUDIO_CHANNELS && !(0.0..=1.0).contains(&x) {
                return Err(invalid(format!("expression row {row}, column {col}: eye parameter {x} outside [0,1]")));
            }
            v.push(x);
        }
        frames.push(v);
    }
    Ok(ExpressionStream { fps: EXPRESSION_FPS, frames })
}

pub fn expression_stream_csv(path: &std::path::Path) -> Result<ExpressionStream> {
    read_expression_csv(std::fs::File::open(path)?)
}

pub fn write_expression_csv(stream: &ExpressionStream, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| invalid(format!("expression csv: {e}"));
    w.write_record(expression_header()).map_err(io)?;
    for f in &stream.frames {
        w.write_record(f.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Seeded sinusoidal stand-in for an audio-driven expression source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatorConfig {
    pub seed: u64,
    /// Audio-channel amplitude; eye parameters swing in [0, amplitude] (clamped to 1).
    pub amplitude: f64,
    pub frames: usize,
}

pub fn expression_stream_oscillator(cfg: &OscillatorConfig) -> Result<ExpressionStream> {
    if !(cfg.amplitude >= 0.0 && cfg.amplitude.is_finite()) {
        return Err(invalid(format!("oscillator amplitude {} must be finite and non-negative", cfg.amplitude)));
    }
    let mut rng = ico3d_core::synth::rng(cfg.seed);
    let waves: Vec<(f64, f64)> = (0..EXPRESSION_CHANNELS)
        .map(|_| (rng.random_range(0.5..4.0), rng.random_range(0.0..TAU)))
        .collect();
    let frames = (0..cfg.frames)
        .map(|k| {
            let t = k as f64 / EXPRESSION_FPS;
            waves
                .iter()
                .enumerate()
                .map(|(c, &(hz, phase))| {
                    let s = (TAU * hz * t + phase).sin();
                    if c < AUDIO_CHANNELS {
                        cfg.amplitude * s
                    } else {
                        (cfg.amplitude * 0.5 * (1.0 + s)).min(1.0)
                    }
                })
                .collect()
        })
        .collect();
    Ok(ExpressionStream { fps: EXPRESSION_FPS, frames })
}
