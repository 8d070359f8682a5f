//! Transcription gateway.
//!
//! Backends return text plus per-token log-probabilities. Utterance
//! confidence is always recomputed here as `exp(mean(logprob))`, whatever
//! the backend claims, and then banded for routing and prompting.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

// Some servers emit tiny positive log-probabilities from rounding.
const LOGPROB_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsrError {
    #[error("transcription backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed transcription backend response: {0}")]
    MalformedBackendResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

/// What a backend hands back before local scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendTranscript {
    pub text: String,
    pub tokens: Vec<TokenLogprob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    /// `exp(mean(token_logprobs))`, or 0 for an empty token sequence.
    pub confidence: f64,
    pub language_tag: String,
    pub backend_id: String,
    /// Backend round trip, seconds.
    pub latency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConfidenceBand {
    High,
    Low,
    VeryLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceThresholds {
    pub high: f64,
    pub very_low: f64,
}

impl Default for ConfidenceThresholds {
    fn default() -> Self {
        Self {
            high: 0.7,
            very_low: 0.4,
        }
    }
}

/// Utterance confidence from token log-probabilities.
pub fn utterance_confidence(logprobs: &[f64]) -> f64 {
    if logprobs.is_empty() {
        return 0.0;
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    mean.exp()
}

pub fn band(confidence: f64, thresholds: &ConfidenceThresholds) -> ConfidenceBand {
    if confidence >= thresholds.high {
        ConfidenceBand::High
    } else if confidence >= thresholds.very_low {
        ConfidenceBand::Low
    } else {
        ConfidenceBand::VeryLow
    }
}

#[async_trait]
pub trait TranscriptionBackend: Send + Sync {
    fn id(&self) -> &str;

    async fn transcribe(
        &self,
        audio: &AudioBuffer,
        language_hint: Option<&str>,
    ) -> Result<BackendTranscript, AsrError>;
}

/// Run a backend and score its output.
pub async fn transcribe(
    audio: &AudioBuffer,
    backend: &dyn TranscriptionBackend,
    language_hint: Option<&str>,
) -> Result<Transcript, AsrError> {
    let started = Instant::now();
    let raw = backend.transcribe(audio, language_hint).await?;
    let latency = started.elapsed().as_secs_f64();

    let mut logprobs = Vec::with_capacity(raw.tokens.len());
    for t in &raw.tokens {
        if !t.logprob.is_finite() || t.logprob > LOGPROB_EPSILON {
            return Err(AsrError::MalformedBackendResponse(format!(
                "token {:?} has log-probability {}",
                t.token, t.logprob
            )));
        }
        logprobs.push(t.logprob.min(0.0));
    }
    Ok(Transcript {
        text: raw.text,
        confidence: utterance_confidence(&logprobs),
        token_logprobs: logprobs,
        language_tag: raw
            .language
            .or_else(|| language_hint.map(str::to_owned))
            .unwrap_or_else(|| "und".to_owned()),
        backend_id: backend.id().to_owned(),
        latency,
    })
}

#[derive(Debug, Serialize)]
struct HttpTranscribeRequest<'a> {
    /// Base64-encoded 16-bit mono WAV.
    audio: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    language_hint: Option<&'a str>,
}

/// JSON-over-HTTP transcription backend.
///
/// `POST {url}` with `{"audio": <base64 wav>, "language_hint": ...}`,
/// expecting `{"text": ..., "tokens": [{"token": ..., "logprob": ...}]}`.
#[derive(Debug, Clone)]
pub struct HttpTranscriptionBackend {
    url: String,
    client: reqwest::Client,
}

impl HttpTranscriptionBackend {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, AsrError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AsrError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            client,
        })
    }
}

#[async_trait]
impl TranscriptionBackend for HttpTranscriptionBackend {
    fn id(&self) -> &str {
        &self.url
    }

    async fn transcribe(
        &self,
        audio: &AudioBuffer,
        language_hint: Option<&str>,
    ) -> Result<BackendTranscript, AsrError> {
        let body = HttpTranscribeRequest {
            audio: base64::engine::general_purpose::STANDARD.encode(audio.to_wav_bytes()),
            language_hint,
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .await
            .map_err(|e| AsrError::BackendUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(AsrError::BackendUnavailable(format!(
                "backend returned HTTP {}",
                resp.status()
            )));
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| AsrError::BackendUnavailable(e.to_string()))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| AsrError::MalformedBackendResponse(e.to_string()))
    }
}
