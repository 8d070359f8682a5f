//! Per-call record, dispatcher triage decisions and the CAD export package.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asr::{ConfidenceBand, Transcript};
use crate::bioacoustics::{AcousticFeatures, DistressScore, SexCategory, SexEstimate};
use crate::content::{ContentScore, EmergencyClassification, ExtractedEntities};
use crate::queue::{CallId, MatrixCell, QueueAssignment, QueueLevel, SignalBands};

pub const CAD_SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("illegal status transition {from} -> {to}")]
    IllegalTransition { from: CallStatus, to: CallStatus },
    #[error("invalid triage decision: {0}")]
    InvalidTriage(String),
}

/// Lifecycle of a call. Transitions only move one step forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallStatus {
    Processing,
    Queued,
    Claimed,
    Triaged,
    Closed,
}

impl CallStatus {
    pub fn next(self) -> Option<CallStatus> {
        match self {
            CallStatus::Processing => Some(CallStatus::Queued),
            CallStatus::Queued => Some(CallStatus::Claimed),
            CallStatus::Claimed => Some(CallStatus::Triaged),
            CallStatus::Triaged => Some(CallStatus::Closed),
            CallStatus::Closed => None,
        }
    }

    pub fn parse(s: &str) -> Option<CallStatus> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase())).ok()
    }
}

impl fmt::Display for CallStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CallStatus::Processing => "PROCESSING",
            CallStatus::Queued => "QUEUED",
            CallStatus::Claimed => "CLAIMED",
            CallStatus::Triaged => "TRIAGED",
            CallStatus::Closed => "CLOSED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriageProtocol {
    Esi,
    Start,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StartColor {
    Red,
    Yellow,
    Green,
    Black,
}

/// The dispatcher's clinical triage outcome. Recorded, never computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub protocol: TriageProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esi_level: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_color: Option<StartColor>,
    pub dispatcher_id: String,
    #[serde(default = "Utc::now")]
    pub decided_at: DateTime<Utc>,
    #[serde(default)]
    pub notes: String,
}

impl TriageDecision {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.dispatcher_id.trim().is_empty() {
            return Err(RecordError::InvalidTriage(
                "dispatcher_id is required".into(),
            ));
        }
        match (self.protocol, self.esi_level, self.start_color) {
            (TriageProtocol::Esi, Some(level), None) if (1..=5).contains(&level) => Ok(()),
            (TriageProtocol::Esi, Some(level), None) => Err(RecordError::InvalidTriage(format!(
                "ESI level must be 1-5, got {level}"
            ))),
            (TriageProtocol::Esi, _, _) => Err(RecordError::InvalidTriage(
                "ESI decisions need esi_level and no start_color".into(),
            )),
            (TriageProtocol::Start, None, Some(_)) => Ok(()),
            (TriageProtocol::Start, _, _) => Err(RecordError::InvalidTriage(
                "START decisions need start_color and no esi_level".into(),
            )),
        }
    }
}

/// Seconds spent per stage. Absent stages did not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub ingest: Option<f64>,
    pub bioacoustics: Option<f64>,
    pub transcription: Option<f64>,
    pub classification: Option<f64>,
    /// From pipeline start until the queue assignment was made.
    pub time_to_queue: Option<f64>,
    pub total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call_id: CallId,
    pub received_at: DateTime<Utc>,
    pub source_id: String,
    /// Locator of the stored original WAV.
    pub audio_ref: String,
    pub audio_duration: f64,
    pub status: CallStatus,
    pub transcript: Option<Transcript>,
    pub confidence_band: Option<ConfidenceBand>,
    pub entities: Option<ExtractedEntities>,
    pub classification: Option<EmergencyClassification>,
    pub content_score: Option<ContentScore>,
    pub features: Option<AcousticFeatures>,
    pub sex_estimate: Option<SexEstimate>,
    pub distress: Option<DistressScore>,
    pub bands: Option<SignalBands>,
    pub assignment: Option<QueueAssignment>,
    pub queue_sequence: Option<u64>,
    pub claimed_by: Option<String>,
    pub claimed_at: Option<DateTime<Utc>>,
    pub triage: Option<TriageDecision>,
    pub timings: StageTimings,
    /// Why a dimension is absent, one entry per failed stage.
    pub stage_errors: Vec<String>,
}

impl CallRecord {
    pub fn new(
        call_id: CallId,
        received_at: DateTime<Utc>,
        source_id: impl Into<String>,
        audio_ref: impl Into<String>,
        audio_duration: f64,
    ) -> Self {
        Self {
            call_id,
            received_at,
            source_id: source_id.into(),
            audio_ref: audio_ref.into(),
            audio_duration,
            status: CallStatus::Processing,
            transcript: None,
            confidence_band: None,
            entities: None,
            classification: None,
            content_score: None,
            features: None,
            sex_estimate: None,
            distress: None,
            bands: None,
            assignment: None,
            queue_sequence: None,
            claimed_by: None,
            claimed_at: None,
            triage: None,
            timings: StageTimings::default(),
            stage_errors: Vec::new(),
        }
    }

    /// Move one step along the lifecycle, checking the invariants that
    /// depend on status.
    pub fn transition(&mut self, to: CallStatus) -> Result<(), RecordError> {
        let illegal = RecordError::IllegalTransition {
            from: self.status,
            to,
        };
        if self.status.next() != Some(to) {
            return Err(illegal);
        }
        if to >= CallStatus::Queued && self.assignment.is_none() {
            return Err(illegal);
        }
        if to >= CallStatus::Triaged && self.triage.is_none() {
            return Err(illegal);
        }
        self.status = to;
        Ok(())
    }

    pub fn summary(&self) -> CallSummary {
        CallSummary {
            call_id: self.call_id.clone(),
            received_at: self.received_at,
            status: self.status,
            level: self.assignment.as_ref().map(|a| a.level),
            confidence: self.transcript.as_ref().map(|t| t.confidence),
            content_score: self.content_score.map(|s| s.s_c),
            distress: self.distress.map(|d| d.composite),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSummary {
    pub call_id: CallId,
    pub received_at: DateTime<Utc>,
    pub status: CallStatus,
    pub level: Option<QueueLevel>,
    pub confidence: Option<f64>,
    pub content_score: Option<u32>,
    pub distress: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadQueuePriority {
    pub level: QueueLevel,
    pub label: String,
    pub early_exit: bool,
    pub matrix_cell: MatrixCell,
    pub reason_codes: Vec<String>,
    pub assigned_at: DateTime<Utc>,
    pub dispatcher_action: String,
    pub protocol_guidance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadTranscription {
    pub text: String,
    pub confidence: f64,
    pub band: Option<ConfidenceBand>,
    pub language_tag: String,
    pub audio_review_recommended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadDistress {
    pub composite: f64,
    pub high_distress: bool,
    pub pitch_elevation: f64,
    pub instability: f64,
    pub energy: f64,
    pub perturbation: f64,
    pub f0_mean_hz: Option<f64>,
    pub f0_cv: Option<f64>,
    pub energy_mean: Option<f64>,
    pub jitter: Option<f64>,
    pub jitter_above_pathology_threshold: Option<bool>,
    pub estimated_sex: Option<SexCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadAudio {
    pub locator: String,
    pub duration_secs: f64,
}

/// Structured hand-off document for computer-aided dispatch systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CadPackage {
    pub schema_version: String,
    pub call_id: CallId,
    pub received_at: DateTime<Utc>,
    pub status: CallStatus,
    pub queue_priority: Option<CadQueuePriority>,
    pub transcription: Option<CadTranscription>,
    pub extracted_entities: Option<ExtractedEntities>,
    pub classification: Option<EmergencyClassification>,
    pub content_score: Option<ContentScore>,
    pub distress_indicators: Option<CadDistress>,
    pub audio: CadAudio,
    pub triage: Option<TriageDecision>,
}

impl CadPackage {
    pub fn from_record(record: &CallRecord) -> Self {
        let queue_priority = record.assignment.as_ref().map(|a| CadQueuePriority {
            level: a.level,
            label: a.level.label().to_owned(),
            early_exit: a.early_exit,
            matrix_cell: a.matrix_cell,
            reason_codes: a.reason_codes.clone(),
            assigned_at: a.assigned_at,
            dispatcher_action: a.level.dispatcher_action().to_owned(),
            protocol_guidance: a.level.protocol_guidance().to_owned(),
        });
        let transcription = record.transcript.as_ref().map(|t| CadTranscription {
            text: t.text.clone(),
            confidence: t.confidence,
            band: record.confidence_band,
            language_tag: t.language_tag.clone(),
            audio_review_recommended: record.confidence_band != Some(ConfidenceBand::High),
        });
        let distress_indicators = record.distress.map(|d| {
            let f = record.features.as_ref();
            CadDistress {
                composite: d.composite,
                high_distress: d.high_distress,
                pitch_elevation: d.pitch_elevation,
                instability: d.instability,
                energy: d.energy,
                perturbation: d.perturbation,
                f0_mean_hz: f.map(|f| f.f0_mean),
                f0_cv: f.map(|f| f.f0_cv),
                energy_mean: f.map(|f| f.energy_mean),
                jitter: f.map(|f| f.jitter),
                jitter_above_pathology_threshold: f.map(|f| f.jitter_above_pathology_threshold()),
                estimated_sex: record.sex_estimate.map(|s| s.category),
            }
        });
        CadPackage {
            schema_version: CAD_SCHEMA_VERSION.to_owned(),
            call_id: record.call_id.clone(),
            received_at: record.received_at,
            status: record.status,
            queue_priority,
            transcription,
            extracted_entities: record.entities.clone(),
            classification: record.classification,
            content_score: record.content_score,
            distress_indicators,
            audio: CadAudio {
                locator: record.audio_ref.clone(),
                duration_secs: record.audio_duration,
            },
            triage: record.triage.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("CAD package serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::{assign_priority, SignalBands};
    use std::collections::BTreeSet;

    fn record() -> CallRecord {
        CallRecord::new("c1".into(), Utc::now(), "src", "audio/c1.wav", 3.0)
    }

    fn esi(level: u8) -> TriageDecision {
        TriageDecision {
            protocol: TriageProtocol::Esi,
            esi_level: Some(level),
            start_color: None,
            dispatcher_id: "d1".into(),
            decided_at: Utc::now(),
            notes: String::new(),
        }
    }

    #[test]
    fn lifecycle_only_moves_forward_one_step() {
        let mut r = record();
        assert!(r.transition(CallStatus::Claimed).is_err());
        // QUEUED requires an assignment.
        assert!(r.transition(CallStatus::Queued).is_err());
        r.assignment = Some(assign_priority(
            &SignalBands {
                confidence_high: true,
                content_high: false,
                concern_high: false,
                absent: BTreeSet::new(),
            },
            false,
        ));
        r.transition(CallStatus::Queued).unwrap();
        r.transition(CallStatus::Claimed).unwrap();
        assert!(r.transition(CallStatus::Triaged).is_err());
        r.triage = Some(esi(3));
        r.transition(CallStatus::Triaged).unwrap();
        r.transition(CallStatus::Closed).unwrap();
        assert!(r.transition(CallStatus::Closed).is_err());
        assert!(r.transition(CallStatus::Processing).is_err());
    }

    #[test]
    fn triage_validation() {
        assert!(esi(1).validate().is_ok());
        assert!(esi(5).validate().is_ok());
        assert!(esi(0).validate().is_err());
        assert!(esi(7).validate().is_err());
        let mut start = esi(1);
        start.protocol = TriageProtocol::Start;
        assert!(start.validate().is_err());
        start.esi_level = None;
        start.start_color = Some(StartColor::Red);
        assert!(start.validate().is_ok());
        let mut both = esi(2);
        both.start_color = Some(StartColor::Green);
        assert!(both.validate().is_err());
    }

    #[test]
    fn status_parse() {
        assert_eq!(CallStatus::parse("queued"), Some(CallStatus::Queued));
        assert_eq!(CallStatus::parse("bogus"), None);
    }

    #[test]
    fn cad_package_is_deterministic() {
        let r = record();
        let a = CadPackage::from_record(&r).to_json();
        let b = CadPackage::from_record(&r).to_json();
        assert_eq!(a, b);
        assert!(a.contains(CAD_SCHEMA_VERSION));
    }
}
