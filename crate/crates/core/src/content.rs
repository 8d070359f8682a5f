//! Content analysis: LLM classification of the transcript and the
//! deterministic content indicator score.
//!
//! The LLM only fills a fixed five-field classification (plus optional
//! entity lists). Turning that into points is plain arithmetic:
//!
//! ```text
//! S_c = min(100, hazard + threat + vulnerable + scale)
//! scale = min(20, 5 * persons_affected) + (10 if escalating)
//! ```

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asr::{ConfidenceBand, Transcript};

pub const PROMPT_VERSION: &str = "v1";
const FULL_TEMPLATE: &str = include_str!("../prompts/classify_full.v1.txt");
const UNCERTAIN_TEMPLATE: &str = include_str!("../prompts/classify_uncertain.v1.txt");
const REASK_TEMPLATE: &str = include_str!("../prompts/reask.v1.txt");

/// Total attempts per classification: the first ask plus one re-ask.
pub const MAX_ATTEMPTS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContentError {
    #[error("LLM backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("LLM reply violates the classification schema: {0}")]
    SchemaViolation(String),
    #[error("transcript confidence too low for classification")]
    ConfidenceTooLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardCategory {
    ViolentCrime,
    Medical,
    Fire,
    Flood,
    Traffic,
    Infrastructure,
    Other,
}

impl HazardCategory {
    pub const ALL: [HazardCategory; 7] = [
        HazardCategory::ViolentCrime,
        HazardCategory::Medical,
        HazardCategory::Fire,
        HazardCategory::Flood,
        HazardCategory::Traffic,
        HazardCategory::Infrastructure,
        HazardCategory::Other,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifeThreatLevel {
    None,
    Potential,
    Imminent,
}

impl LifeThreatLevel {
    pub const ALL: [LifeThreatLevel; 3] = [
        LifeThreatLevel::None,
        LifeThreatLevel::Potential,
        LifeThreatLevel::Imminent,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SituationStatus {
    Escalating,
    Stable,
    Resolved,
}

impl SituationStatus {
    pub const ALL: [SituationStatus; 3] = [
        SituationStatus::Escalating,
        SituationStatus::Stable,
        SituationStatus::Resolved,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmergencyClassification {
    pub hazard_category: HazardCategory,
    pub life_threat_level: LifeThreatLevel,
    pub vulnerable_population: bool,
    pub situation_status: SituationStatus,
    pub persons_affected: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntities {
    pub location: Vec<String>,
    pub mechanism: Vec<String>,
    pub clinical_indicators: Vec<String>,
    pub scale_notes: Vec<String>,
    /// Always set when the transcript was not high confidence.
    pub uncertainty_marked: bool,
    pub phonetic_alternatives: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardWeights {
    pub violent_crime: u32,
    pub medical: u32,
    pub fire: u32,
    pub flood: u32,
    pub traffic: u32,
    pub infrastructure: u32,
    pub other: u32,
}

impl Default for HazardWeights {
    fn default() -> Self {
        Self {
            violent_crime: 30,
            medical: 25,
            fire: 25,
            flood: 20,
            traffic: 15,
            infrastructure: 10,
            other: 5,
        }
    }
}

impl HazardWeights {
    pub fn get(&self, category: HazardCategory) -> u32 {
        match category {
            HazardCategory::ViolentCrime => self.violent_crime,
            HazardCategory::Medical => self.medical,
            HazardCategory::Fire => self.fire,
            HazardCategory::Flood => self.flood,
            HazardCategory::Traffic => self.traffic,
            HazardCategory::Infrastructure => self.infrastructure,
            HazardCategory::Other => self.other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContentWeights {
    pub hazard: HazardWeights,
    pub threat_imminent: u32,
    pub threat_potential: u32,
    pub vulnerable: u32,
    pub per_person: u32,
    pub persons_cap: u32,
    pub escalating: u32,
}

impl Default for ContentWeights {
    fn default() -> Self {
        Self {
            hazard: HazardWeights::default(),
            threat_imminent: 30,
            threat_potential: 15,
            vulnerable: 15,
            per_person: 5,
            persons_cap: 20,
            escalating: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContentParams {
    pub weights: ContentWeights,
    /// `S_c` at or above this is high content.
    pub high_threshold: u32,
}

impl Default for ContentParams {
    fn default() -> Self {
        Self {
            weights: ContentWeights::default(),
            high_threshold: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentScore {
    pub s_hazard: u32,
    pub s_threat: u32,
    pub s_vuln: u32,
    pub s_scale: u32,
    pub s_c: u32,
    pub high_content: bool,
}

pub fn score_content(c: &EmergencyClassification, params: &ContentParams) -> ContentScore {
    let w = &params.weights;
    let s_hazard = w.hazard.get(c.hazard_category);
    let s_threat = match c.life_threat_level {
        LifeThreatLevel::Imminent => w.threat_imminent,
        LifeThreatLevel::Potential => w.threat_potential,
        LifeThreatLevel::None => 0,
    };
    let s_vuln = if c.vulnerable_population {
        w.vulnerable
    } else {
        0
    };
    let persons = w
        .per_person
        .saturating_mul(c.persons_affected)
        .min(w.persons_cap);
    let s_scale = persons
        + if c.situation_status == SituationStatus::Escalating {
            w.escalating
        } else {
            0
        };
    let s_c = (s_hazard + s_threat + s_vuln + s_scale).min(100);
    ContentScore {
        s_hazard,
        s_threat,
        s_vuln,
        s_scale,
        s_c,
        high_content: s_c >= params.high_threshold,
    }
}

/// One request to an LLM backend.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub prompt: String,
    /// The transcript under classification, for backends keyed on it.
    pub transcript: String,
    /// Zero for the first ask, one for the re-ask.
    pub attempt: usize,
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Return the model's raw text reply.
    async fn complete(&self, request: &LlmRequest) -> Result<String, ContentError>;
}

/// Render the band-appropriate classification prompt.
pub fn render_prompt(transcript: &Transcript, band: ConfidenceBand) -> String {
    let template = match band {
        ConfidenceBand::High => FULL_TEMPLATE,
        _ => UNCERTAIN_TEMPLATE,
    };
    template
        .replace("{{confidence}}", &format!("{:.2}", transcript.confidence))
        .replace("{{transcript}}", &transcript.text)
}

fn render_reask(first_prompt: &str, error: &str) -> String {
    format!(
        "{first_prompt}\n{}",
        REASK_TEMPLATE.replace("{{error}}", error)
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LlmReply {
    hazard_category: HazardCategory,
    life_threat_level: LifeThreatLevel,
    vulnerable_population: bool,
    situation_status: SituationStatus,
    persons_affected: u32,
    #[serde(default)]
    entities: Option<EntitiesReply>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EntitiesReply {
    location: Vec<String>,
    mechanism: Vec<String>,
    clinical_indicators: Vec<String>,
    scale_notes: Vec<String>,
    phonetic_alternatives: Vec<String>,
    uncertain: bool,
}

/// Parse and validate a raw LLM reply. Tolerates a surrounding code fence
/// or prose around a single JSON object.
pub fn parse_reply(
    raw: &str,
    band: ConfidenceBand,
) -> Result<(EmergencyClassification, ExtractedEntities), ContentError> {
    let json = match (raw.find('{'), raw.rfind('}')) {
        (Some(a), Some(b)) if a < b => &raw[a..=b],
        _ => {
            return Err(ContentError::SchemaViolation(
                "no JSON object in reply".into(),
            ))
        }
    };
    let reply: LlmReply =
        serde_json::from_str(json).map_err(|e| ContentError::SchemaViolation(e.to_string()))?;
    let classification = EmergencyClassification {
        hazard_category: reply.hazard_category,
        life_threat_level: reply.life_threat_level,
        vulnerable_population: reply.vulnerable_population,
        situation_status: reply.situation_status,
        persons_affected: reply.persons_affected,
    };
    let e = reply.entities.unwrap_or_default();
    let entities = ExtractedEntities {
        location: e.location,
        mechanism: e.mechanism,
        clinical_indicators: e.clinical_indicators,
        scale_notes: e.scale_notes,
        uncertainty_marked: e.uncertain || band != ConfidenceBand::High,
        phonetic_alternatives: e.phonetic_alternatives,
    };
    Ok((classification, entities))
}

/// Classify a transcript, re-asking once if the reply is not valid.
pub async fn classify(
    transcript: &Transcript,
    band: ConfidenceBand,
    backend: &dyn LlmBackend,
) -> Result<(EmergencyClassification, ExtractedEntities), ContentError> {
    if band == ConfidenceBand::VeryLow {
        return Err(ContentError::ConfidenceTooLow);
    }
    let first = render_prompt(transcript, band);
    let mut prompt = first.clone();
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let request = LlmRequest {
            prompt: prompt.clone(),
            transcript: transcript.text.clone(),
            attempt,
        };
        let raw = backend.complete(&request).await?;
        match parse_reply(&raw, band) {
            Ok(out) => return Ok(out),
            Err(ContentError::SchemaViolation(msg)) => {
                tracing::debug!(attempt, error = %msg, "classification reply rejected");
                prompt = render_reask(&first, &msg);
                last_err = Some(msg);
            }
            Err(other) => return Err(other),
        }
    }
    Err(ContentError::SchemaViolation(last_err.unwrap_or_default()))
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    format: &'static str,
    stream: bool,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    response: String,
}

/// JSON-over-HTTP completion backend.
///
/// `POST {url}` with `{"model", "prompt", "format": "json", "stream": false}`
/// and reads the model text from `{"response": ...}`.
#[derive(Debug, Clone)]
pub struct HttpLlmBackend {
    url: String,
    model: String,
    client: reqwest::Client,
}

impl HttpLlmBackend {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        timeout: Duration,
    ) -> Result<Self, ContentError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ContentError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            model: model.into(),
            client,
        })
    }
}

#[async_trait]
impl LlmBackend for HttpLlmBackend {
    fn id(&self) -> &str {
        &self.url
    }

    async fn complete(&self, request: &LlmRequest) -> Result<String, ContentError> {
        let body = CompletionRequest {
            model: &self.model,
            prompt: &request.prompt,
            format: "json",
            stream: false,
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .await
            .map_err(|e| ContentError::BackendUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ContentError::BackendUnavailable(format!(
                "backend returned HTTP {}",
                resp.status()
            )));
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ContentError::BackendUnavailable(e.to_string()))?;
        let parsed: CompletionResponse = serde_json::from_slice(&bytes)
            .map_err(|e| ContentError::SchemaViolation(format!("completion envelope: {e}")))?;
        Ok(parsed.response)
    }
}
