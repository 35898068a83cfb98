//! Mono PCM16 audio and WAV conversion.

use std::io::Cursor;

use crate::error::{Result, ServiceError};

/// Sample rate of synthesized replies.
pub const TTS_SAMPLE_RATE: u32 = 24_000;

/// Video frames per second that audio is aligned to.
pub const FRAME_RATE: u32 = 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Audio {
    pub sample_rate: u32,
    pub samples: Vec<i16>,
}

impl Audio {
    pub fn silence(sample_rate: u32, len: usize) -> Self {
        Self { sample_rate, samples: vec![0; len] }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// ⌈duration × 30⌉ computed on integers, so exact multiples never round up.
    pub fn video_frames(&self) -> usize {
        let num = self.samples.len() as u64 * FRAME_RATE as u64;
        num.div_ceil(self.sample_rate as u64) as usize
    }

    pub fn to_wav(&self) -> Vec<u8> {
        let spec = hound::WavSpec { channels: 1, sample_rate: self.sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        let mut buf = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut buf, spec).expect("in-memory WAV writer");
            for s in &self.samples {
                w.write_sample(*s).expect("in-memory write");
            }
            w.finalize().expect("in-memory finalize");
        }
        buf.into_inner()
    }

    /// Reads PCM16 WAV; multi-channel input is averaged to mono.
    pub fn from_wav(bytes: &[u8]) -> Result<Self> {
        let bad = |e: hound::Error| ServiceError::InvalidInput(format!("WAV: {e}"));
        let r = hound::WavReader::new(Cursor::new(bytes)).map_err(bad)?;
        let spec = r.spec();
        if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
            return Err(ServiceError::InvalidInput(format!("WAV must be PCM16, got {} bits", spec.bits_per_sample)));
        }
        let raw: Vec<i16> = r.into_samples::<i16>().collect::<std::result::Result<_, _>>().map_err(bad)?;
        let ch = spec.channels.max(1) as usize;
        let samples = raw.chunks(ch).map(|c| (c.iter().map(|&s| s as i32).sum::<i32>() / c.len() as i32) as i16).collect();
        Ok(Self { sample_rate: spec.sample_rate, samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip() {
        let a = Audio { sample_rate: 24_000, samples: (0..1000).map(|i| (i * 37 % 2000 - 1000) as i16).collect() };
        assert_eq!(Audio::from_wav(&a.to_wav()).unwrap(), a);
    }

    #[test]
    fn frame_count_rounds_up() {
        assert_eq!(Audio::silence(24_000, 24_000).video_frames(), 30);
        assert_eq!(Audio::silence(24_000, 24_001).video_frames(), 31);
        assert_eq!(Audio::silence(24_000, 2880).video_frames(), 4);
        assert_eq!(Audio::silence(24_000, 0).video_frames(), 0);
    }
}
