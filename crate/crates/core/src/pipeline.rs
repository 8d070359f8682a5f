//! Per-call processing.
//!
//! Transcription and bio-acoustic analysis start together. Once distress is
//! known the early-exit rules are checked: extreme distress routes at once,
//! without waiting for transcription; high distress waits only for the
//! confidence value. Early-exit calls skip content analysis entirely.
//! Everything else goes through classification (unless confidence is very
//! low) and the priority matrix. A failed stage leaves its dimension absent
//! and the call is still routed.

use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use tokio::task::JoinHandle;

use crate::asr::{self, AsrError, ConfidenceBand, Transcript, TranscriptionBackend};
use crate::audio::AudioBuffer;
use crate::bioacoustics::{self, BioacousticAnalysis, BioacousticError};
use crate::config::Config;
use crate::content::{self, ContentError, LlmBackend};
use crate::queue::{assign_priority, check_early_exit, CallId, SignalBands};
use crate::record::{CallRecord, CallStatus};

type AsrHandle = JoinHandle<(Result<Transcript, AsrError>, f64)>;

/// Shared backends and configuration for the pipeline.
#[derive(Clone)]
pub struct Pipeline {
    config: Arc<Config>,
    asr: Arc<dyn TranscriptionBackend>,
    llm: Arc<dyn LlmBackend>,
}

impl Pipeline {
    pub fn new(
        config: Arc<Config>,
        asr: Arc<dyn TranscriptionBackend>,
        llm: Arc<dyn LlmBackend>,
    ) -> Self {
        Self { config, asr, llm }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Process a call that has no stored record yet.
    pub async fn process(&self, audio: AudioBuffer) -> CallRecord {
        let record = CallRecord::new(
            CallId::new_random(),
            Utc::now(),
            audio.source_id().to_owned(),
            String::new(),
            audio.duration(),
        );
        self.process_call(record, Arc::new(audio), |_| {}).await
    }

    /// Run the pipeline for a `PROCESSING` record.
    ///
    /// `on_routed` fires as soon as the queue assignment is made, with the
    /// record in `QUEUED`. On the extreme-distress path that happens before
    /// transcription finishes; the transcript is then filled in before this
    /// function returns, leaving the assignment untouched.
    pub async fn process_call<F>(
        &self,
        mut record: CallRecord,
        audio: Arc<AudioBuffer>,
        on_routed: F,
    ) -> CallRecord
    where
        F: FnOnce(&CallRecord),
    {
        let started = Instant::now();
        let cfg = &self.config;
        let thresholds = cfg.thresholds;

        let asr_task: AsrHandle = {
            let asr = Arc::clone(&self.asr);
            let audio = Arc::clone(&audio);
            let hint = cfg.backends.language_hint.clone();
            tokio::spawn(async move {
                let t0 = Instant::now();
                let out = asr::transcribe(&audio, asr.as_ref(), hint.as_deref()).await;
                (out, t0.elapsed().as_secs_f64())
            })
        };
        let bio_task = {
            let audio = Arc::clone(&audio);
            let voicing = cfg.voicing;
            let params = cfg.distress_params();
            tokio::task::spawn_blocking(move || {
                let t0 = Instant::now();
                let out = bioacoustics::analyze(&audio, &voicing, &params);
                (out, t0.elapsed().as_secs_f64())
            })
        };

        let distress = match bio_task.await {
            Ok((bio, secs)) => {
                record.timings.bioacoustics = Some(secs);
                self.apply_bioacoustics(&mut record, bio)
            }
            Err(e) => {
                record
                    .stage_errors
                    .push(format!("bioacoustics: task failed: {e}"));
                None
            }
        };

        let mut pending_asr = Some(asr_task);
        let early_exit = match distress {
            Some(d) if d > thresholds.extreme_distress => true,
            Some(d) if d > thresholds.early_exit_distress => {
                let t = pending_asr.take().expect("asr task pending");
                self.apply_transcript(&mut record, t.await);
                let c = record.transcript.as_ref().map(|t| t.confidence);
                check_early_exit(Some(d), c, &thresholds)
            }
            _ => false,
        };

        if !early_exit {
            if let Some(t) = pending_asr.take() {
                self.apply_transcript(&mut record, t.await);
            }
            self.apply_content(&mut record).await;
        } else {
            record
                .stage_errors
                .push("content: skipped by early exit".to_owned());
        }

        let confidence = if pending_asr.is_some() {
            None
        } else {
            record.transcript.as_ref().map(|t| t.confidence)
        };
        let bands = SignalBands::from_signals(
            confidence,
            record.content_score.map(|s| s.s_c),
            distress,
            &thresholds,
        );
        let mut assignment = assign_priority(&bands, early_exit);
        if pending_asr.is_some() {
            assignment
                .reason_codes
                .push("transcript pending".to_owned());
        }
        record.assignment = Some(assignment);
        record.bands = Some(bands);
        record.timings.time_to_queue = Some(started.elapsed().as_secs_f64());
        record
            .transition(CallStatus::Queued)
            .expect("processing record with assignment can be queued");
        on_routed(&record);

        if let Some(t) = pending_asr.take() {
            self.apply_transcript(&mut record, t.await);
        }
        record.timings.total = Some(started.elapsed().as_secs_f64());
        record
    }

    fn apply_bioacoustics(
        &self,
        record: &mut CallRecord,
        result: Result<BioacousticAnalysis, BioacousticError>,
    ) -> Option<f64> {
        match result {
            Ok(a) => {
                record.features = Some(a.features);
                record.sex_estimate = Some(a.sex);
                record.distress = Some(a.distress);
                Some(a.distress.composite)
            }
            Err(e) => {
                record.stage_errors.push(format!("bioacoustics: {e}"));
                None
            }
        }
    }

    fn apply_transcript(
        &self,
        record: &mut CallRecord,
        joined: Result<(Result<Transcript, AsrError>, f64), tokio::task::JoinError>,
    ) {
        let (result, secs) = match joined {
            Ok(v) => v,
            Err(e) => (Err(AsrError::BackendUnavailable(e.to_string())), 0.0),
        };
        record.timings.transcription = Some(secs);
        match result {
            Ok(t) => {
                record.confidence_band = Some(asr::band(
                    t.confidence,
                    &self.config.confidence_thresholds(),
                ));
                record.transcript = Some(t);
            }
            Err(e) => {
                record.confidence_band = None;
                record.stage_errors.push(format!("transcription: {e}"));
            }
        }
    }

    async fn apply_content(&self, record: &mut CallRecord) {
        let (Some(transcript), Some(band)) = (&record.transcript, record.confidence_band) else {
            record
                .stage_errors
                .push("content: no transcript".to_owned());
            return;
        };
        if band == ConfidenceBand::VeryLow {
            record
                .stage_errors
                .push("content: skipped, very low transcription confidence".to_owned());
            return;
        }
        let t0 = Instant::now();
        let result = content::classify(transcript, band, self.llm.as_ref()).await;
        record.timings.classification = Some(t0.elapsed().as_secs_f64());
        match result {
            Ok((classification, entities)) => {
                record.content_score = Some(content::score_content(
                    &classification,
                    &self.config.content_params(),
                ));
                record.classification = Some(classification);
                record.entities = Some(entities);
            }
            Err(e @ (ContentError::BackendUnavailable(_) | ContentError::SchemaViolation(_))) => {
                record.stage_errors.push(format!("content: {e}"));
            }
            Err(ContentError::ConfidenceTooLow) => unreachable!("very low band handled above"),
        }
    }
}
