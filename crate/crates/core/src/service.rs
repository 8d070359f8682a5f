//! The long-running call service behind the dispatcher API.
//!
//! Holds every call record and the dispatch queue in memory, mirrors each
//! change to the [`CallStore`] before it becomes visible, and publishes a
//! [`QueueEvent`] per change. Calls are processed on a bounded worker pool.
//! On start-up the queue is rebuilt from stored `QUEUED` records, in their
//! original order, and calls caught mid-processing are run again from their
//! stored audio.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{broadcast, Notify, Semaphore};
use tokio::task::JoinHandle;

use crate::asr::TranscriptionBackend;
use crate::audio::{self, AudioBuffer, AudioError};
use crate::config::Config;
use crate::content::LlmBackend;
use crate::pipeline::Pipeline;
use crate::queue::{assign_priority, CallId, DispatchQueue, QueueLevel, SignalBands};
use crate::record::{CadPackage, CallRecord, CallStatus, CallSummary, RecordError, TriageDecision};
use crate::store::{CallStore, StoreError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("call {0} not found")]
    NotFound(CallId),
    #[error("{0}")]
    Conflict(String),
    #[error("invalid audio: {0}")]
    InvalidAudio(#[from] AudioError),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

impl From<RecordError> for ServiceError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::IllegalTransition { .. } => ServiceError::Conflict(e.to_string()),
            RecordError::InvalidTriage(_) => ServiceError::InvalidRequest(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueEventType {
    CallReceived,
    Queued,
    TranscriptUpdated,
    Claimed,
    Triaged,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEvent {
    pub event_type: QueueEventType,
    pub call_id: CallId,
    pub level: Option<QueueLevel>,
    pub timestamp: DateTime<Utc>,
}

/// One row of the live queue as dispatchers see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub position: usize,
    pub call_id: CallId,
    pub level: QueueLevel,
    pub label: String,
    pub sla_hint: Option<String>,
    pub early_exit: bool,
    pub reason_codes: Vec<String>,
    pub assigned_at: DateTime<Utc>,
    pub received_at: DateTime<Utc>,
    pub sequence: u64,
    pub confidence: Option<f64>,
    pub content_score: Option<u32>,
    pub distress: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub requeued: usize,
    pub reprocessed: usize,
    pub corrupt: Vec<String>,
}

#[derive(Default)]
struct State {
    records: HashMap<CallId, CallRecord>,
    queue: DispatchQueue,
}

struct Inner {
    config: Arc<Config>,
    pipeline: Pipeline,
    store: CallStore,
    state: Mutex<State>,
    events: broadcast::Sender<QueueEvent>,
    workers: Semaphore,
    in_flight: AtomicUsize,
    idle: Notify,
}

#[derive(Clone)]
pub struct CallService {
    inner: Arc<Inner>,
}

impl CallService {
    /// Open the store, rebuild state from it and resume interrupted calls.
    /// Must be called inside a Tokio runtime.
    pub fn start(
        config: Config,
        asr: Arc<dyn TranscriptionBackend>,
        llm: Arc<dyn LlmBackend>,
    ) -> Result<(Self, RecoveryReport), ServiceError> {
        let store = CallStore::open(&config.service.storage_path)?;
        let config = Arc::new(config);
        let (events, _) = broadcast::channel(1024);
        let service = CallService {
            inner: Arc::new(Inner {
                pipeline: Pipeline::new(Arc::clone(&config), asr, llm),
                workers: Semaphore::new(config.service.worker_pool_size),
                config,
                store,
                state: Mutex::new(State::default()),
                events,
                in_flight: AtomicUsize::new(0),
                idle: Notify::new(),
            }),
        };
        let report = service.recover()?;
        Ok((service, report))
    }

    fn recover(&self) -> Result<RecoveryReport, ServiceError> {
        let loaded = self.inner.store.load_all()?;
        let mut report = RecoveryReport {
            corrupt: loaded.corrupt.iter().map(|e| e.to_string()).collect(),
            ..Default::default()
        };
        for e in &loaded.corrupt {
            tracing::warn!(error = %e, "skipping unreadable call record");
        }

        let mut queued: Vec<&CallRecord> = loaded
            .records
            .iter()
            .filter(|r| r.status == CallStatus::Queued)
            .collect();
        queued.sort_by_key(|r| {
            (
                r.assignment.as_ref().map(|a| a.assigned_at),
                r.queue_sequence,
            )
        });

        let mut reprocess = Vec::new();
        {
            let mut state = self.lock();
            for r in &queued {
                let mut r = (*r).clone();
                let assignment = r
                    .assignment
                    .clone()
                    .expect("queued records carry an assignment");
                r.queue_sequence = Some(
                    state
                        .queue
                        .enqueue(r.call_id.clone(), assignment)
                        .expect("unique ids"),
                );
                state.records.insert(r.call_id.clone(), r);
                report.requeued += 1;
            }
            for r in loaded.records {
                if state.records.contains_key(&r.call_id) {
                    continue;
                }
                if r.status == CallStatus::Processing {
                    reprocess.push(r.call_id.clone());
                }
                state.records.insert(r.call_id.clone(), r);
            }
        }
        for id in reprocess {
            report.reprocessed += 1;
            let record = self.lock().records[&id].clone();
            match self
                .inner
                .store
                .audio(&id)
                .map_err(ServiceError::from)
                .and_then(|bytes| Ok(audio::load_audio_bytes(&bytes, &record.source_id)?))
            {
                Ok(buf) => {
                    self.spawn_processing(record, buf);
                }
                Err(e) => self.route_without_audio(record, &e.to_string()),
            }
        }
        Ok(report)
    }

    pub fn config(&self) -> &Config {
        &self.inner.config
    }

    pub fn subscribe(&self) -> broadcast::Receiver<QueueEvent> {
        self.inner.events.subscribe()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.inner.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn emit(&self, event_type: QueueEventType, call_id: &CallId, level: Option<QueueLevel>) {
        let _ = self.inner.events.send(QueueEvent {
            event_type,
            call_id: call_id.clone(),
            level,
            timestamp: Utc::now(),
        });
    }

    /// Accept a WAV upload. Returns once the call is stored; processing
    /// continues in the background.
    pub fn submit_call(&self, wav: &[u8], source_id: Option<&str>) -> Result<CallId, ServiceError> {
        self.submit_inner(wav, source_id).map(|(id, _)| id)
    }

    /// Accept a WAV upload and wait until processing is finished.
    pub async fn submit_call_and_wait(
        &self,
        wav: &[u8],
        source_id: Option<&str>,
    ) -> Result<CallRecord, ServiceError> {
        let (id, handle) = self.submit_inner(wav, source_id)?;
        let _ = handle.await;
        self.get_call(&id)
    }

    fn submit_inner(
        &self,
        wav: &[u8],
        source_id: Option<&str>,
    ) -> Result<(CallId, JoinHandle<()>), ServiceError> {
        let received_at = Utc::now();
        let call_id = CallId::new_random();
        let source = source_id
            .map(str::to_owned)
            .unwrap_or_else(|| call_id.to_string());
        let buf = audio::load_audio_bytes(wav, &source)?;
        self.inner.store.put_audio(&call_id, wav)?;
        let record = CallRecord::new(
            call_id.clone(),
            received_at,
            source,
            CallStore::audio_ref(&call_id),
            buf.duration(),
        );
        self.inner.store.persist(&record)?;
        self.lock().records.insert(call_id.clone(), record.clone());
        self.emit(QueueEventType::CallReceived, &call_id, None);
        Ok((call_id, self.spawn_processing(record, buf)))
    }

    fn spawn_processing(&self, record: CallRecord, audio: AudioBuffer) -> JoinHandle<()> {
        self.inner.in_flight.fetch_add(1, Ordering::SeqCst);
        let svc = self.clone();
        tokio::spawn(async move {
            let permit = svc.inner.workers.acquire().await.expect("worker pool open");
            let id = record.call_id.clone();
            let routed = svc.clone();
            let done = svc
                .inner
                .pipeline
                .process_call(record, Arc::new(audio), move |r| {
                    routed.commit_routed(r.clone())
                })
                .await;
            drop(permit);
            svc.commit_backfill(&id, done);
            if svc.inner.in_flight.fetch_sub(1, Ordering::SeqCst) == 1 {
                svc.inner.idle.notify_waiters();
            }
        })
    }

    /// Records whose audio cannot be read are still routed, with every
    /// signal absent, so a dispatcher sees them.
    fn route_without_audio(&self, mut record: CallRecord, reason: &str) {
        let t = self.inner.config.thresholds;
        let bands = SignalBands::from_signals(None, None, None, &t);
        record.assignment = Some(assign_priority(&bands, false));
        record.bands = Some(bands);
        record.stage_errors.push(format!("audio: {reason}"));
        record.status = CallStatus::Queued;
        self.commit_routed(record);
    }

    fn commit_routed(&self, mut record: CallRecord) {
        let id = record.call_id.clone();
        let level = record.assignment.as_ref().map(|a| a.level);
        {
            let mut state = self.lock();
            let assignment = record
                .assignment
                .clone()
                .expect("routed record has assignment");
            match state.queue.enqueue(id.clone(), assignment) {
                Ok(seq) => record.queue_sequence = Some(seq),
                Err(e) => tracing::error!(error = %e, "call routed twice"),
            }
            // The call is live even if the write fails; losing it from the
            // queue would be worse than a stale file.
            if let Err(e) = self.inner.store.persist(&record) {
                tracing::error!(call = %id, error = %e, "failed to persist routed call");
                record.stage_errors.push(format!("storage: {e}"));
            }
            state.records.insert(id.clone(), record);
        }
        self.emit(QueueEventType::Queued, &id, level);
    }

    /// Merge pipeline output that arrived after routing. Only fields the
    /// pipeline owns are copied, since a dispatcher may already hold the call.
    fn commit_backfill(&self, id: &CallId, done: CallRecord) {
        let (changed, level) = {
            let mut state = self.lock();
            let Some(current) = state.records.get(id) else {
                return;
            };
            let mut next = current.clone();
            let changed = next.transcript.is_none() && done.transcript.is_some();
            next.transcript = done.transcript;
            next.confidence_band = done.confidence_band;
            next.timings = done.timings;
            next.stage_errors = done.stage_errors;
            if next == *current {
                return;
            }
            if let Err(e) = self.inner.store.persist(&next) {
                tracing::error!(call = %id, error = %e, "failed to persist call update");
            }
            let level = next.assignment.as_ref().map(|a| a.level);
            state.records.insert(id.clone(), next);
            (changed, level)
        };
        if changed {
            self.emit(QueueEventType::TranscriptUpdated, id, level);
        }
    }

    /// Wait until no call is being processed.
    pub async fn wait_idle(&self) {
        loop {
            let notified = self.inner.idle.notified();
            if self.inner.in_flight.load(Ordering::SeqCst) == 0 {
                return;
            }
            notified.await;
        }
    }

    pub fn get_queue(&self) -> Vec<QueueItem> {
        let state = self.lock();
        let hints = &self.inner.config.sla_hints;
        state
            .queue
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let r = &state.records[&e.call_id];
                let s = r.summary();
                QueueItem {
                    position: i + 1,
                    call_id: e.call_id.clone(),
                    level: e.assignment.level,
                    label: e.assignment.level.label().to_owned(),
                    sla_hint: hints.for_level(e.assignment.level).map(str::to_owned),
                    early_exit: e.assignment.early_exit,
                    reason_codes: e.assignment.reason_codes.clone(),
                    assigned_at: e.assignment.assigned_at,
                    received_at: r.received_at,
                    sequence: e.sequence,
                    confidence: s.confidence,
                    content_score: s.content_score,
                    distress: s.distress,
                }
            })
            .collect()
    }

    pub fn get_call(&self, id: &CallId) -> Result<CallRecord, ServiceError> {
        self.lock()
            .records
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.clone()))
    }

    pub fn list_calls(&self, status: Option<CallStatus>) -> Vec<CallSummary> {
        let state = self.lock();
        let mut out: Vec<CallSummary> = state
            .records
            .values()
            .filter(|r| status.is_none_or(|s| r.status == s))
            .map(CallRecord::summary)
            .collect();
        out.sort_by(|a, b| (a.received_at, &a.call_id).cmp(&(b.received_at, &b.call_id)));
        out
    }

    /// Apply `f` to a copy of the record, persist it, then make it visible.
    fn update<F>(&self, state: &mut State, id: &CallId, f: F) -> Result<CallRecord, ServiceError>
    where
        F: FnOnce(&mut CallRecord) -> Result<(), ServiceError>,
    {
        let current = state
            .records
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(id.clone()))?;
        let mut next = current.clone();
        f(&mut next)?;
        self.inner.store.persist(&next)?;
        state.records.insert(id.clone(), next.clone());
        Ok(next)
    }

    fn claim_locked(
        &self,
        state: &mut State,
        id: &CallId,
        dispatcher_id: &str,
    ) -> Result<CallRecord, ServiceError> {
        let record = self.update(state, id, |r| {
            if r.status != CallStatus::Queued {
                return Err(ServiceError::Conflict(match &r.claimed_by {
                    Some(by) => format!("call {id} already claimed by {by}"),
                    None => format!("call {id} is {} and cannot be claimed", r.status),
                }));
            }
            r.transition(CallStatus::Claimed)?;
            r.claimed_by = Some(dispatcher_id.to_owned());
            r.claimed_at = Some(Utc::now());
            Ok(())
        })?;
        state.queue.take(id);
        Ok(record)
    }

    pub fn claim(&self, id: &CallId, dispatcher_id: &str) -> Result<CallRecord, ServiceError> {
        let record = self.claim_locked(&mut self.lock(), id, dispatcher_id)?;
        self.emit(
            QueueEventType::Claimed,
            id,
            record.assignment.as_ref().map(|a| a.level),
        );
        Ok(record)
    }

    /// Claim whichever call is at the head of the queue.
    pub fn claim_next(&self, dispatcher_id: &str) -> Result<Option<CallRecord>, ServiceError> {
        let record = {
            let mut state = self.lock();
            let Some(id) = state.queue.peek().map(|e| e.call_id.clone()) else {
                return Ok(None);
            };
            self.claim_locked(&mut state, &id, dispatcher_id)?
        };
        self.emit(
            QueueEventType::Claimed,
            &record.call_id,
            record.assignment.as_ref().map(|a| a.level),
        );
        Ok(Some(record))
    }

    /// Record the dispatcher's triage decision. Only the dispatcher holding
    /// the call may do this.
    pub fn submit_triage(
        &self,
        id: &CallId,
        decision: TriageDecision,
    ) -> Result<CallRecord, ServiceError> {
        decision.validate()?;
        let record = self.update(&mut self.lock(), id, |r| {
            if r.status != CallStatus::Claimed {
                return Err(ServiceError::Conflict(format!(
                    "call {id} is {}, triage needs a claimed call",
                    r.status
                )));
            }
            if r.claimed_by.as_deref() != Some(decision.dispatcher_id.as_str()) {
                return Err(ServiceError::Conflict(format!(
                    "call {id} is held by {}",
                    r.claimed_by.as_deref().unwrap_or("nobody")
                )));
            }
            r.triage = Some(decision);
            r.transition(CallStatus::Triaged)?;
            Ok(())
        })?;
        self.emit(
            QueueEventType::Triaged,
            id,
            record.assignment.as_ref().map(|a| a.level),
        );
        Ok(record)
    }

    pub fn close(&self, id: &CallId) -> Result<CallRecord, ServiceError> {
        let record = self.update(&mut self.lock(), id, |r| {
            Ok(r.transition(CallStatus::Closed)?)
        })?;
        self.emit(
            QueueEventType::Closed,
            id,
            record.assignment.as_ref().map(|a| a.level),
        );
        Ok(record)
    }

    /// The original uploaded bytes.
    pub fn audio(&self, id: &CallId) -> Result<Vec<u8>, ServiceError> {
        if !self.lock().records.contains_key(id) {
            return Err(ServiceError::NotFound(id.clone()));
        }
        Ok(self.inner.store.audio(id)?)
    }

    pub fn export_cad(&self, id: &CallId) -> Result<CadPackage, ServiceError> {
        let record = self.get_call(id)?;
        if record.status == CallStatus::Processing {
            return Err(ServiceError::Conflict(format!(
                "call {id} is still processing"
            )));
        }
        Ok(CadPackage::from_record(&record))
    }
}
