//! Deterministic fixture-backed backends for tests, demos and offline
//! batch runs.
//!
//! A fixture file maps an audio source id (the WAV file stem) to what the
//! transcription backend should return for it and what the LLM should reply
//! for that transcript:
//!
//! ```json
//! {
//!   "calls": {
//!     "pothole": {
//!       "transcript": {"text": "Pothole on Nelson Street",
//!                      "tokens": [{"token": "Pothole", "logprob": -0.05}]},
//!       "llm_reply": {"hazard_category": "infrastructure", "...": "..."}
//!     },
//!     "dropped": {"transcript": null}
//!   }
//! }
//! ```
//!
//! A `null` or missing transcript makes the ASR stub report the backend as
//! unavailable. `llm_reply` may be a JSON object or a raw string (useful
//! for malformed replies); an array gives one reply per attempt.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::asr::{AsrError, BackendTranscript, TokenLogprob, TranscriptionBackend};
use crate::audio::AudioBuffer;
use crate::content::{ContentError, LlmBackend, LlmRequest};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureSet {
    pub calls: BTreeMap<String, CallFixture>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallFixture {
    #[serde(default)]
    pub transcript: Option<BackendTranscript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_reply: Option<serde_json::Value>,
}

impl FixtureSet {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("fixtures serialise"),
        )
    }
}

/// Build a backend transcript whose tokens all carry the same log-probability,
/// so its confidence is exactly `confidence`.
pub fn transcript_with_confidence(text: &str, confidence: f64) -> BackendTranscript {
    let logprob = confidence.ln();
    BackendTranscript {
        text: text.to_owned(),
        tokens: text
            .split_whitespace()
            .map(|w| TokenLogprob {
                token: w.to_owned(),
                logprob,
            })
            .collect(),
        language: None,
    }
}

fn reply_texts(value: &serde_json::Value) -> Vec<String> {
    match value {
        serde_json::Value::String(s) => vec![s.clone()],
        serde_json::Value::Array(items) => items.iter().flat_map(reply_texts).collect(),
        other => vec![other.to_string()],
    }
}

/// Transcription stub keyed by the buffer's source id.
#[derive(Debug, Default)]
pub struct StubTranscriptionBackend {
    fixtures: HashMap<String, BackendTranscript>,
    delay: Duration,
    calls: AtomicUsize,
}

impl StubTranscriptionBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixtures(set: &FixtureSet) -> Self {
        let mut stub = Self::new();
        for (id, fixture) in &set.calls {
            if let Some(t) = &fixture.transcript {
                stub.fixtures.insert(id.clone(), t.clone());
            }
        }
        stub
    }

    pub fn with_transcript(mut self, source_id: &str, transcript: BackendTranscript) -> Self {
        self.fixtures.insert(source_id.to_owned(), transcript);
        self
    }

    /// Delay every response, simulating a slow model.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl TranscriptionBackend for StubTranscriptionBackend {
    fn id(&self) -> &str {
        "stub-asr"
    }

    async fn transcribe(
        &self,
        audio: &AudioBuffer,
        _hint: Option<&str>,
    ) -> Result<BackendTranscript, AsrError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        self.fixtures
            .get(audio.source_id())
            .cloned()
            .ok_or_else(|| {
                AsrError::BackendUnavailable(format!(
                    "no transcript fixture for {:?}",
                    audio.source_id()
                ))
            })
    }
}

/// LLM stub keyed by transcript text. Replies are given per attempt; the
/// last one repeats.
#[derive(Debug, Default)]
pub struct StubLlmBackend {
    replies: HashMap<String, Vec<String>>,
    calls: AtomicUsize,
}

impl StubLlmBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixtures(set: &FixtureSet) -> Self {
        let mut stub = Self::new();
        for fixture in set.calls.values() {
            if let (Some(t), Some(reply)) = (&fixture.transcript, &fixture.llm_reply) {
                stub.replies.insert(t.text.clone(), reply_texts(reply));
            }
        }
        stub
    }

    pub fn with_reply(mut self, transcript: &str, reply: impl Into<String>) -> Self {
        self.replies
            .insert(transcript.to_owned(), vec![reply.into()]);
        self
    }

    pub fn with_replies(mut self, transcript: &str, replies: Vec<String>) -> Self {
        self.replies.insert(transcript.to_owned(), replies);
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl LlmBackend for StubLlmBackend {
    fn id(&self) -> &str {
        "stub-llm"
    }

    async fn complete(&self, request: &LlmRequest) -> Result<String, ContentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let replies = self.replies.get(&request.transcript).ok_or_else(|| {
            ContentError::BackendUnavailable(format!(
                "no reply fixture for {:?}",
                request.transcript
            ))
        })?;
        Ok(replies
            .get(request.attempt)
            .or(replies.last())
            .cloned()
            .unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::utterance_confidence;

    #[test]
    fn confidence_helper_is_exact() {
        let t = transcript_with_confidence("help me please", 0.55);
        let lp: Vec<f64> = t.tokens.iter().map(|t| t.logprob).collect();
        assert!((utterance_confidence(&lp) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn fixture_file_round_trip() {
        let json = r#"{"calls": {
            "a": {"transcript": {"text": "x y", "tokens": [{"token": "x", "logprob": -0.1}]},
                  "llm_reply": ["not json", {"hazard_category": "other"}]},
            "b": {"transcript": null}
        }}"#;
        let set: FixtureSet = serde_json::from_str(json).unwrap();
        assert!(set.calls["b"].transcript.is_none());
        let llm = StubLlmBackend::from_fixtures(&set);
        assert_eq!(llm.replies["x y"].len(), 2);
        assert_eq!(llm.replies["x y"][0], "not json");
    }
}
