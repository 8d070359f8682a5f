//! Queue prioritisation.
//!
//! Three banded signals (confidence, content, concern) select one of eight
//! matrix cells, each mapped to a dispatcher-attention level. Extreme
//! distress bypasses the matrix and goes straight to `Q1_IMMEDIATE`.
//!
//! | Confidence | Content | Concern | Level          |
//! |------------|---------|---------|----------------|
//! | High       | Low     | Low     | `Q5_ROUTINE`   |
//! | High       | High    | Low     | `Q2_ELEVATED`  |
//! | High       | Low     | High    | `Q3_MONITOR`   |
//! | High       | High    | High    | `Q1_IMMEDIATE` |
//! | Low        | Low     | Low     | `Q5_REVIEW`    |
//! | Low        | High    | Low     | `Q2_ELEVATED`  |
//! | Low        | Low     | High    | `Q1_IMMEDIATE` |
//! | Low        | High    | High    | `Q1_IMMEDIATE` |
//!
//! Queue levels order dispatcher attention only. Clinical triage is
//! recorded separately, from the dispatcher.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CallId(pub String);

impl CallId {
    pub fn new_random() -> Self {
        CallId(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CallId {
    fn from(s: &str) -> Self {
        CallId(s.to_owned())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("call {0} is already queued")]
    DuplicateCall(CallId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueueLevel {
    #[serde(rename = "Q1_IMMEDIATE")]
    Q1Immediate,
    #[serde(rename = "Q2_ELEVATED")]
    Q2Elevated,
    #[serde(rename = "Q3_MONITOR")]
    Q3Monitor,
    #[serde(rename = "Q5_ROUTINE")]
    Q5Routine,
    #[serde(rename = "Q5_REVIEW")]
    Q5Review,
}

impl QueueLevel {
    pub const ALL: [QueueLevel; 5] = [
        QueueLevel::Q1Immediate,
        QueueLevel::Q2Elevated,
        QueueLevel::Q3Monitor,
        QueueLevel::Q5Routine,
        QueueLevel::Q5Review,
    ];

    /// Lower is more urgent. Both Q5 variants share a rank.
    pub fn rank(self) -> u8 {
        match self {
            QueueLevel::Q1Immediate => 1,
            QueueLevel::Q2Elevated => 2,
            QueueLevel::Q3Monitor => 3,
            QueueLevel::Q5Routine | QueueLevel::Q5Review => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QueueLevel::Q1Immediate => "Q1-IMMEDIATE",
            QueueLevel::Q2Elevated => "Q2-ELEVATED",
            QueueLevel::Q3Monitor => "Q3-MONITOR",
            QueueLevel::Q5Routine => "Q5-ROUTINE",
            QueueLevel::Q5Review => "Q5-REVIEW",
        }
    }

    pub fn dispatcher_action(self) -> &'static str {
        match self {
            QueueLevel::Q1Immediate => "Immediate audio review; assess caller state",
            QueueLevel::Q2Elevated => "Review extracted entities; listen if uncertain",
            QueueLevel::Q3Monitor => "Assess distress source; de-escalate if needed",
            QueueLevel::Q5Routine => "Process normally using extracted metadata",
            QueueLevel::Q5Review => "Check audio quality before processing",
        }
    }

    /// How clinical protocols typically apply after review. Display only.
    pub fn protocol_guidance(self) -> &'static str {
        match self {
            QueueLevel::Q1Immediate => {
                "Dispatcher determines ESI-1/2 or START-RED based on clinical assessment"
            }
            QueueLevel::Q2Elevated => {
                "Dispatcher applies ESI using structured data; may be ESI-2 through ESI-4"
            }
            QueueLevel::Q3Monitor => "Often ESI-4/5 after dispatcher determines no emergency",
            QueueLevel::Q5Routine | QueueLevel::Q5Review => {
                "Full ESI protocol application; typically ESI-3 through ESI-5"
            }
        }
    }
}

impl fmt::Display for QueueLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AbsentFlag {
    TranscriptAbsent,
    ContentAbsent,
    DistressAbsent,
}

impl AbsentFlag {
    pub fn reason(self) -> &'static str {
        match self {
            AbsentFlag::TranscriptAbsent => "transcript absent",
            AbsentFlag::ContentAbsent => "content absent",
            AbsentFlag::DistressAbsent => "distress absent",
        }
    }
}

/// Every threshold used for banding and early exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingThresholds {
    /// `C` at or above is high confidence.
    pub confidence_high: f64,
    /// `C` below skips content analysis.
    pub confidence_very_low: f64,
    /// `S_c` at or above is high content.
    pub content_high: u32,
    /// `D` strictly above is high concern.
    pub distress_high: f64,
    /// Early exit when `D` is above this and `C` below `early_exit_confidence`.
    pub early_exit_distress: f64,
    pub early_exit_confidence: f64,
    /// Early exit when `D` is above this, whatever the confidence.
    pub extreme_distress: f64,
}

impl Default for RoutingThresholds {
    fn default() -> Self {
        Self {
            confidence_high: 0.7,
            confidence_very_low: 0.4,
            content_high: 50,
            distress_high: 0.5,
            early_exit_distress: 0.8,
            early_exit_confidence: 0.4,
            extreme_distress: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixCell {
    pub confidence_high: bool,
    pub content_high: bool,
    pub concern_high: bool,
}

impl MatrixCell {
    pub const fn new(confidence_high: bool, content_high: bool, concern_high: bool) -> Self {
        Self {
            confidence_high,
            content_high,
            concern_high,
        }
    }

    pub fn all() -> impl Iterator<Item = MatrixCell> {
        (0..8u8).map(|i| MatrixCell::new(i & 4 == 0, i & 2 != 0, i & 1 != 0))
    }

    /// The matrix level for this cell and its annotation.
    pub fn level(self) -> (QueueLevel, &'static str) {
        use QueueLevel::*;
        match (self.confidence_high, self.content_high, self.concern_high) {
            (true, false, false) => (Q5Routine, "routine"),
            (true, true, false) => (Q2Elevated, "composed reporter"),
            (true, false, true) => (Q3Monitor, "anxiety vs emergency"),
            (true, true, true) => (Q1Immediate, "all signals aligned"),
            (false, false, false) => (Q5Review, "possible technical issue"),
            (false, true, false) => (Q2Elevated, "fragments suggest urgency"),
            (false, false, true) => (Q1Immediate, "possible dialect shift"),
            (false, true, true) => (Q1Immediate, "all indicators elevated"),
        }
    }
}

/// Banded signals for one call. Absent dimensions band low and are flagged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalBands {
    pub confidence_high: bool,
    pub content_high: bool,
    pub concern_high: bool,
    pub absent: BTreeSet<AbsentFlag>,
}

impl SignalBands {
    pub fn from_signals(
        confidence: Option<f64>,
        content: Option<u32>,
        distress: Option<f64>,
        t: &RoutingThresholds,
    ) -> Self {
        let mut absent = BTreeSet::new();
        if confidence.is_none() {
            absent.insert(AbsentFlag::TranscriptAbsent);
        }
        if content.is_none() {
            absent.insert(AbsentFlag::ContentAbsent);
        }
        if distress.is_none() {
            absent.insert(AbsentFlag::DistressAbsent);
        }
        Self {
            confidence_high: confidence.is_some_and(|c| c >= t.confidence_high),
            content_high: content.is_some_and(|s| s >= t.content_high),
            concern_high: distress.is_some_and(|d| d > t.distress_high),
            absent,
        }
    }

    pub fn cell(&self) -> MatrixCell {
        MatrixCell::new(self.confidence_high, self.content_high, self.concern_high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueAssignment {
    pub level: QueueLevel,
    pub matrix_cell: MatrixCell,
    pub early_exit: bool,
    pub reason_codes: Vec<String>,
    pub assigned_at: DateTime<Utc>,
}

/// Early-exit rule. Absent distress never fires; absent confidence counts
/// as zero.
pub fn check_early_exit(
    distress: Option<f64>,
    confidence: Option<f64>,
    t: &RoutingThresholds,
) -> bool {
    let Some(d) = distress else {
        return false;
    };
    let c = confidence.unwrap_or(0.0);
    (d > t.early_exit_distress && c < t.early_exit_confidence) || d > t.extreme_distress
}

pub fn assign_priority(bands: &SignalBands, early_exit: bool) -> QueueAssignment {
    assign_priority_at(bands, early_exit, Utc::now())
}

pub fn assign_priority_at(
    bands: &SignalBands,
    early_exit: bool,
    at: DateTime<Utc>,
) -> QueueAssignment {
    let cell = bands.cell();
    let (matrix_level, annotation) = cell.level();
    let mut reason_codes = Vec::new();
    let level = if early_exit {
        reason_codes.push("early exit".to_owned());
        QueueLevel::Q1Immediate
    } else {
        matrix_level
    };
    reason_codes.push(annotation.to_owned());
    if !bands.confidence_high {
        reason_codes.push("audio review recommended".to_owned());
    }
    reason_codes.extend(bands.absent.iter().map(|f| f.reason().to_owned()));
    QueueAssignment {
        level,
        matrix_cell: cell,
        early_exit,
        reason_codes,
        assigned_at: at,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    rank: u8,
    assigned_at: DateTime<Utc>,
    sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub call_id: CallId,
    pub assignment: QueueAssignment,
    /// Insertion order, the final tie-break after level and time.
    pub sequence: u64,
}

/// Calls waiting for a dispatcher, most urgent first, FIFO within a rank.
#[derive(Debug, Default, Clone)]
pub struct DispatchQueue {
    entries: BTreeMap<QueueKey, QueueEntry>,
    index: HashMap<CallId, QueueKey>,
    next_sequence: u64,
}

impl DispatchQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, call_id: &CallId) -> bool {
        self.index.contains_key(call_id)
    }

    /// Queue a call. Returns the entry's sequence number.
    pub fn enqueue(
        &mut self,
        call_id: CallId,
        assignment: QueueAssignment,
    ) -> Result<u64, QueueError> {
        if self.index.contains_key(&call_id) {
            return Err(QueueError::DuplicateCall(call_id));
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        let key = QueueKey {
            rank: assignment.level.rank(),
            assigned_at: assignment.assigned_at,
            sequence,
        };
        self.index.insert(call_id.clone(), key);
        self.entries.insert(
            key,
            QueueEntry {
                call_id,
                assignment,
                sequence,
            },
        );
        Ok(sequence)
    }

    /// Remove and return the most urgent entry.
    pub fn claim_next(&mut self) -> Option<QueueEntry> {
        let (_, entry) = self.entries.pop_first()?;
        self.index.remove(&entry.call_id);
        Some(entry)
    }

    /// Remove a specific call, wherever it sits.
    pub fn take(&mut self, call_id: &CallId) -> Option<QueueEntry> {
        let key = self.index.remove(call_id)?;
        self.entries.remove(&key)
    }

    pub fn peek(&self) -> Option<&QueueEntry> {
        self.entries.values().next()
    }

    /// Entries in dispatch order.
    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.values()
    }

    pub fn snapshot(&self) -> Vec<QueueEntry> {
        self.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn bands(c: bool, s: bool, d: bool) -> SignalBands {
        SignalBands {
            confidence_high: c,
            content_high: s,
            concern_high: d,
            absent: BTreeSet::new(),
        }
    }

    fn at(secs: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
    }

    #[test]
    fn worked_cells() {
        let a = assign_priority(&bands(true, true, false), false);
        assert_eq!(a.level, QueueLevel::Q2Elevated);
        assert_eq!(a.reason_codes[0], "composed reporter");
        let a = assign_priority(&bands(false, false, true), false);
        assert_eq!(a.level, QueueLevel::Q1Immediate);
        assert_eq!(a.reason_codes[0], "possible dialect shift");
        let a = assign_priority(&bands(false, false, false), false);
        assert_eq!(a.level, QueueLevel::Q5Review);
        assert_eq!(a.reason_codes[0], "possible technical issue");
    }

    #[test]
    fn early_exit_rules() {
        let t = RoutingThresholds::default();
        assert!(check_early_exit(Some(0.85), Some(0.30), &t));
        assert!(check_early_exit(Some(0.92), Some(0.95), &t));
        assert!(!check_early_exit(Some(0.85), Some(0.60), &t));
        assert!(!check_early_exit(None, None, &t));
        assert!(check_early_exit(Some(0.85), None, &t));
        assert!(!check_early_exit(Some(0.8), Some(0.1), &t));
        assert!(!check_early_exit(Some(0.9), Some(0.9), &t));
    }

    #[test]
    fn early_exit_overrides_cell() {
        let a = assign_priority(&bands(true, false, false), true);
        assert_eq!(a.level, QueueLevel::Q1Immediate);
        assert!(a.early_exit);
        assert_eq!(a.matrix_cell, MatrixCell::new(true, false, false));
    }

    #[test]
    fn boundary_banding() {
        let t = RoutingThresholds::default();
        let b = SignalBands::from_signals(Some(0.7), Some(50), Some(0.5), &t);
        assert!(b.confidence_high && b.content_high && !b.concern_high);
        let b = SignalBands::from_signals(None, None, None, &t);
        assert_eq!(b.cell(), MatrixCell::new(false, false, false));
        assert_eq!(b.absent.len(), 3);
    }

    #[test]
    fn level_serde_names() {
        assert_eq!(
            serde_json::to_string(&QueueLevel::Q1Immediate).unwrap(),
            "\"Q1_IMMEDIATE\""
        );
        assert_eq!(
            serde_json::to_string(&QueueLevel::Q5Review).unwrap(),
            "\"Q5_REVIEW\""
        );
    }

    #[test]
    fn ordering_and_fifo() {
        let mut q = DispatchQueue::new();
        q.enqueue(
            "routine".into(),
            assign_priority_at(&bands(true, false, false), false, at(0)),
        )
        .unwrap();
        q.enqueue(
            "urgent".into(),
            assign_priority_at(&bands(true, true, true), false, at(5)),
        )
        .unwrap();
        assert_eq!(q.claim_next().unwrap().call_id, CallId::from("urgent"));

        q.enqueue(
            "u1".into(),
            assign_priority_at(&bands(true, true, true), false, at(10)),
        )
        .unwrap();
        q.enqueue(
            "u2".into(),
            assign_priority_at(&bands(true, true, true), false, at(11)),
        )
        .unwrap();
        assert_eq!(q.claim_next().unwrap().call_id, CallId::from("u1"));
        assert_eq!(q.claim_next().unwrap().call_id, CallId::from("u2"));
        assert_eq!(q.claim_next().unwrap().call_id, CallId::from("routine"));
        assert!(q.claim_next().is_none());
    }

    #[test]
    fn review_and_routine_share_rank() {
        let mut q = DispatchQueue::new();
        q.enqueue(
            "review".into(),
            assign_priority_at(&bands(false, false, false), false, at(0)),
        )
        .unwrap();
        q.enqueue(
            "routine".into(),
            assign_priority_at(&bands(true, false, false), false, at(1)),
        )
        .unwrap();
        assert_eq!(q.claim_next().unwrap().call_id, CallId::from("review"));
    }

    #[test]
    fn duplicate_and_take() {
        let mut q = DispatchQueue::new();
        let a = assign_priority_at(&bands(true, false, false), false, at(0));
        q.enqueue("a".into(), a.clone()).unwrap();
        assert_eq!(
            q.enqueue("a".into(), a.clone()),
            Err(QueueError::DuplicateCall("a".into()))
        );
        assert!(q.take(&"a".into()).is_some());
        assert!(q.take(&"a".into()).is_none());
        assert!(q.is_empty());
        q.enqueue("a".into(), a).unwrap();
        assert_eq!(q.len(), 1);
    }
}
