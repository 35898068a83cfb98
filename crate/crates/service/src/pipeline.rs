//! Turn processing: (ASR) → LLM → TTS → expression adapter, each stage under
//! a timeout.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use crate::audio::Audio;
use crate::error::{Result, ServiceError};
use crate::stages::{Asr, ChatTurn, ExpressionAdapter, HttpStage, Llm, MockAsr, MockExpression, MockLlm, MockTts, MockTtsMode, Tts, AUDIO_FEATURES};

/// Where each stage runs: `None` selects the deterministic mock.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub asr_url: Option<String>,
    pub llm_url: Option<String>,
    pub tts_url: Option<String>,
    pub expression_url: Option<String>,
    pub timeout: Duration,
    pub mock_transcript: String,
    pub mock_tts: MockTtsMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            asr_url: None,
            llm_url: None,
            tts_url: None,
            expression_url: None,
            timeout: Duration::from_secs(10),
            mock_transcript: "hello".into(),
            mock_tts: MockTtsMode::PerChar,
        }
    }
}

impl PipelineConfig {
    /// Reads `ICO3D_ASR_URL`, `ICO3D_LLM_URL`, `ICO3D_TTS_URL`,
    /// `ICO3D_EXPRESSION_URL`, `ICO3D_STAGE_TIMEOUT_MS` and
    /// `ICO3D_MOCK_TRANSCRIPT` through `get`.
    pub fn from_vars(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut c = Self::default();
        let url = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        c.asr_url = url("ICO3D_ASR_URL");
        c.llm_url = url("ICO3D_LLM_URL");
        c.tts_url = url("ICO3D_TTS_URL");
        c.expression_url = url("ICO3D_EXPRESSION_URL");
        if let Some(ms) = get("ICO3D_STAGE_TIMEOUT_MS") {
            let ms: u64 = ms.parse().map_err(|_| ServiceError::Config(format!("ICO3D_STAGE_TIMEOUT_MS={ms:?} is not an integer")))?;
            if ms == 0 {
                return Err(ServiceError::Config("ICO3D_STAGE_TIMEOUT_MS must be positive".into()));
            }
            c.timeout = Duration::from_millis(ms);
        }
        if let Some(t) = get("ICO3D_MOCK_TRANSCRIPT") {
            c.mock_transcript = t;
        }
        Ok(c)
    }

    pub fn from_env() -> Result<Self> {
        Self::from_vars(|k| std::env::var(k).ok())
    }
}

#[derive(Clone)]
pub struct Pipeline {
    pub asr: Arc<dyn Asr>,
    pub llm: Arc<dyn Llm>,
    pub tts: Arc<dyn Tts>,
    pub expression: Arc<dyn ExpressionAdapter>,
    pub timeout: Duration,
}

/// What the user sent.
#[derive(Debug, Clone)]
pub enum TurnInput {
    Text(String),
    Audio(Audio),
}

/// Stage outputs for one turn.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub user_text: String,
    pub reply_text: String,
    pub audio: Audio,
    /// Exactly `audio.video_frames()` feature vectors.
    pub features: Vec<Vec<f64>>,
}

impl Pipeline {
    pub fn mock() -> Self {
        Self::from_config(&PipelineConfig::default()).expect("mocks need no endpoints")
    }

    pub fn from_config(c: &PipelineConfig) -> Result<Self> {
        let t = c.timeout;
        Ok(Self {
            asr: match &c.asr_url {
                Some(u) => Arc::new(HttpStage::new("asr", u, t)?),
                None => Arc::new(MockAsr { transcript: c.mock_transcript.clone() }),
            },
            llm: match &c.llm_url {
                Some(u) => Arc::new(HttpStage::new("llm", u, t)?),
                None => Arc::new(MockLlm),
            },
            tts: match &c.tts_url {
                Some(u) => Arc::new(HttpStage::new("tts", u, t)?),
                None => Arc::new(MockTts { mode: c.mock_tts }),
            },
            expression: match &c.expression_url {
                Some(u) => Arc::new(HttpStage::new("expression", u, t)?),
                None => Arc::new(MockExpression),
            },
            timeout: t,
        })
    }

    async fn stage<T>(&self, name: &'static str, f: impl Future<Output = Result<T>>) -> Result<T> {
        match tokio::time::timeout(self.timeout, f).await {
            Ok(r) => r,
            Err(_) => Err(ServiceError::Timeout { stage: name, ms: self.timeout.as_millis() as u64 }),
        }
    }

    pub async fn run(&self, history: &[ChatTurn], input: TurnInput) -> Result<PipelineOutput> {
        let user_text = match input {
            TurnInput::Text(t) => t,
            TurnInput::Audio(a) => {
                if a.samples.is_empty() {
                    return Err(ServiceError::InvalidInput("empty audio".into()));
                }
                self.stage("asr", self.asr.transcribe(&a)).await?
            }
        };
        if user_text.trim().is_empty() {
            return Err(ServiceError::InvalidInput("empty message".into()));
        }
        let reply_text = self.stage("llm", self.llm.reply(history, &user_text)).await?;
        let audio = self.stage("tts", self.tts.synthesize(&reply_text)).await?;
        if audio.sample_rate == 0 {
            return Err(ServiceError::Stage { stage: "tts", detail: "zero sample rate".into() });
        }
        let mut features = self.stage("expression", self.expression.features(&audio)).await?;
        if let Some(bad) = features.iter().position(|f| f.len() != AUDIO_FEATURES) {
            return Err(ServiceError::Stage { stage: "expression", detail: format!("frame {bad} has {} features", features[bad].len()) });
        }
        // hold the last frame (or silence) when a remote adapter is short, trim when long
        let n = audio.video_frames();
        let last = features.last().cloned().unwrap_or_else(|| vec![0.0; AUDIO_FEATURES]);
        features.resize(n, last);
        Ok(PipelineOutput { user_text, reply_text, audio, features })
    }
}
