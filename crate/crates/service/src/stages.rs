//! Pipeline stages (speech recognition, language model, speech synthesis,
//! audio-to-expression) behind traits, with deterministic mocks and minimal
//! HTTP clients.

use std::f64::consts::PI;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::audio::{Audio, FRAME_RATE, TTS_SAMPLE_RATE};
use crate::error::{Result, ServiceError};

/// Audio feature channels produced per video frame.
pub const AUDIO_FEATURES: usize = 32;

/// Mock speech length per character.
pub const MOCK_SAMPLES_PER_CHAR: usize = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
}

#[async_trait]
pub trait Asr: Send + Sync {
    async fn transcribe(&self, audio: &Audio) -> Result<String>;
}

#[async_trait]
pub trait Llm: Send + Sync {
    async fn reply(&self, history: &[ChatTurn], prompt: &str) -> Result<String>;
}

#[async_trait]
pub trait Tts: Send + Sync {
    async fn synthesize(&self, text: &str) -> Result<Audio>;
}

#[async_trait]
pub trait ExpressionAdapter: Send + Sync {
    /// One [`AUDIO_FEATURES`]-vector per 1/30 s of audio.
    async fn features(&self, audio: &Audio) -> Result<Vec<Vec<f64>>>;
}

/// Returns a fixed transcript whatever the audio.
#[derive(Debug, Clone)]
pub struct MockAsr {
    pub transcript: String,
}

impl Default for MockAsr {
    fn default() -> Self {
        Self { transcript: "hello".into() }
    }
}

#[async_trait]
impl Asr for MockAsr {
    async fn transcribe(&self, _audio: &Audio) -> Result<String> {
        Ok(self.transcript.clone())
    }
}

/// Echoes the prompt through a fixed template.
#[derive(Debug, Clone, Default)]
pub struct MockLlm;

pub fn mock_reply(prompt: &str) -> String {
    format!("You said: {}", prompt.trim())
}

#[async_trait]
impl Llm for MockLlm {
    async fn reply(&self, _history: &[ChatTurn], prompt: &str) -> Result<String> {
        Ok(mock_reply(prompt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockTtsMode {
    /// 0.06 s of audio per character.
    #[default]
    PerChar,
    /// Every reply is this many samples long.
    FixedClip(usize),
}

/// Sine-carrier speech stand-in at 24 kHz; loudness follows the characters
/// and whitespace is silent, so the expression envelope moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTts {
    pub mode: MockTtsMode,
}

pub fn mock_speech(text: &str, mode: MockTtsMode) -> Audio {
    let chars: Vec<char> = text.chars().collect();
    let len = match mode {
        MockTtsMode::PerChar => chars.len() * MOCK_SAMPLES_PER_CHAR,
        MockTtsMode::FixedClip(n) => n,
    };
    let per_char = if chars.is_empty() { len.max(1) } else { len.div_ceil(chars.len()).max(1) };
    let samples = (0..len)
        .map(|i| {
            let amp = match chars.get(i / per_char) {
                Some(c) if c.is_whitespace() => 0.0,
                Some(c) => 0.1 + 0.3 * ((*c as u32 % 7) as f64 / 6.0),
                None => 0.2,
            };
            let v = amp * (2.0 * PI * 220.0 * i as f64 / TTS_SAMPLE_RATE as f64).sin();
            (v * i16::MAX as f64).round() as i16
        })
        .collect();
    Audio { sample_rate: TTS_SAMPLE_RATE, samples }
}

#[async_trait]
impl Tts for MockTts {
    async fn synthesize(&self, text: &str) -> Result<Audio> {
        Ok(mock_speech(text, self.mode))
    }
}

/// RMS envelope per video frame spread over the feature channels with a
/// fixed profile; silence gives all-zero features.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockExpression;

pub fn envelope_features(audio: &Audio) -> Vec<Vec<f64>> {
    let frames = audio.video_frames();
    let rate = audio.sample_rate as u64;
    (0..frames as u64)
        .map(|f| {
            let a = (f * rate / FRAME_RATE as u64) as usize;
            let b = (((f + 1) * rate).div_ceil(FRAME_RATE as u64) as usize).min(audio.samples.len());
            let win = &audio.samples[a.min(b)..b];
            let ms = win.iter().map(|&s| (s as f64 / i16::MAX as f64).powi(2)).sum::<f64>() / win.len().max(1) as f64;
            let env = (2.0 * ms.sqrt()).min(1.0);
            (0..AUDIO_FEATURES).map(|k| env * (0.5 + 0.5 * (k as f64 * PI / (AUDIO_FEATURES - 1) as f64).cos())).collect()
        })
        .collect()
}

#[async_trait]
impl ExpressionAdapter for MockExpression {
    async fn features(&self, audio: &Audio) -> Result<Vec<Vec<f64>>> {
        Ok(envelope_features(audio))
    }
}

/// Remote stage: POSTs to `url` and reads the body back.
///
/// ASR: WAV in, UTF-8 text out. LLM: UTF-8 prompt in, text out. TTS: text
/// in, WAV out. Expression: WAV in, CSV of 32 floats per row out.
#[derive(Debug, Clone)]
pub struct HttpStage {
    pub name: &'static str,
    pub url: String,
    timeout: Duration,
    client: reqwest::Client,
}

impl HttpStage {
    pub fn new(name: &'static str, url: &str, timeout: Duration) -> Result<Self> {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(ServiceError::Config(format!("{name} endpoint {url:?} is not an http(s) URL")));
        }
        let client = reqwest::Client::builder().timeout(timeout).build().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Self { name, url: url.into(), timeout, client })
    }

    async fn post(&self, content_type: &str, body: Vec<u8>) -> Result<Vec<u8>> {
        let fail = |e: reqwest::Error| {
            if e.is_timeout() {
                ServiceError::Timeout { stage: self.name, ms: self.timeout.as_millis() as u64 }
            } else {
                ServiceError::Stage { stage: self.name, detail: e.to_string() }
            }
        };
        let resp = self.client.post(&self.url).header("content-type", content_type).body(body).send().await.map_err(fail)?;
        let resp = resp.error_for_status().map_err(fail)?;
        Ok(resp.bytes().await.map_err(fail)?.to_vec())
    }

    fn text(&self, bytes: Vec<u8>) -> Result<String> {
        String::from_utf8(bytes).map_err(|_| ServiceError::Stage { stage: self.name, detail: "reply is not UTF-8".into() })
    }
}

#[async_trait]
impl Asr for HttpStage {
    async fn transcribe(&self, audio: &Audio) -> Result<String> {
        let b = self.post("audio/wav", audio.to_wav()).await?;
        self.text(b)
    }
}

#[async_trait]
impl Llm for HttpStage {
    async fn reply(&self, _history: &[ChatTurn], prompt: &str) -> Result<String> {
        let b = self.post("text/plain; charset=utf-8", prompt.as_bytes().to_vec()).await?;
        self.text(b)
    }
}

#[async_trait]
impl Tts for HttpStage {
    async fn synthesize(&self, text: &str) -> Result<Audio> {
        let b = self.post("text/plain; charset=utf-8", text.as_bytes().to_vec()).await?;
        Audio::from_wav(&b).map_err(|e| ServiceError::Stage { stage: self.name, detail: e.to_string() })
    }
}

#[async_trait]
impl ExpressionAdapter for HttpStage {
    async fn features(&self, audio: &Audio) -> Result<Vec<Vec<f64>>> {
        let b = self.post("audio/wav", audio.to_wav()).await?;
        let text = self.text(b)?;
        parse_feature_csv(&text).map_err(|detail| ServiceError::Stage { stage: self.name, detail })
    }
}

pub fn parse_feature_csv(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let row: Vec<f64> = l.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| format!("row {}: {e}", i + 1))?;
            if row.len() != AUDIO_FEATURES || row.iter().any(|v| !v.is_finite()) {
                return Err(format!("row {}: expected {AUDIO_FEATURES} finite values", i + 1));
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tts_length_rule() {
        assert_eq!(mock_speech("ab", MockTtsMode::PerChar).duration_s(), 0.12);
        assert_eq!(mock_speech("hello", MockTtsMode::FixedClip(24_000)).video_frames(), 30);
        assert!(mock_speech("", MockTtsMode::PerChar).samples.is_empty());
    }

    #[test]
    fn silence_gives_zero_features() {
        let f = envelope_features(&Audio::silence(24_000, 2400));
        assert_eq!(f.len(), 3);
        assert!(f.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn features_follow_loudness() {
        let f = envelope_features(&mock_speech("a a", MockTtsMode::PerChar));
        assert!(f[0][0] > 0.05);
        // the middle character is a space: 1440 silent samples cover frame 2
        assert!(f[2][0] < 1e-12);
    }

    #[test]
    fn mock_llm_is_deterministic() {
        assert_eq!(mock_reply(" hi "), mock_reply("hi"));
        assert_eq!(mock_reply("hi"), "You said: hi");
    }

    #[test]
    fn feature_csv_errors_name_the_row() {
        let ok = vec!["0.5"; 32].join(",");
        assert_eq!(parse_feature_csv(&format!("{ok}\n{ok}\n")).unwrap().len(), 2);
        let e = parse_feature_csv(&format!("{ok}\n1,2\n")).unwrap_err();
        assert!(e.contains("row 2"), "{e}");
    }
}
