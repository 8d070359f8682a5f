//! Offline scoring of a directory of recordings.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::asr::{ConfidenceBand, TranscriptionBackend};
use crate::audio;
use crate::config::Config;
use crate::content::LlmBackend;
use crate::pipeline::Pipeline;
use crate::queue::{CallId, QueueLevel};
use crate::record::{CallRecord, StageTimings};

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Files processed at once. Defaults to the configured worker pool size.
    pub concurrency: Option<usize>,
    /// Fix the report timestamp and leave out wall-clock timings, so that
    /// two runs over the same inputs give identical output.
    pub report_time: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistressComponents {
    pub p: f64,
    pub v: f64,
    pub e: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub file: String,
    pub level: Option<QueueLevel>,
    pub early_exit: bool,
    pub confidence: Option<f64>,
    pub band: Option<ConfidenceBand>,
    pub content_score: Option<u32>,
    pub distress: Option<f64>,
    pub components: Option<DistressComponents>,
    pub reasons: Vec<String>,
    pub stage_errors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
    /// Set when the file could not be processed at all.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    #[serde(rename = "Q1_IMMEDIATE")]
    pub q1: usize,
    #[serde(rename = "Q2_ELEVATED")]
    pub q2: usize,
    #[serde(rename = "Q3_MONITOR")]
    pub q3: usize,
    #[serde(rename = "Q5_ROUTINE")]
    pub q5_routine: usize,
    #[serde(rename = "Q5_REVIEW")]
    pub q5_review: usize,
}

impl LevelCounts {
    pub fn add(&mut self, level: QueueLevel) {
        *self.get_mut(level) += 1;
    }

    fn get_mut(&mut self, level: QueueLevel) -> &mut usize {
        match level {
            QueueLevel::Q1Immediate => &mut self.q1,
            QueueLevel::Q2Elevated => &mut self.q2,
            QueueLevel::Q3Monitor => &mut self.q3,
            QueueLevel::Q5Routine => &mut self.q5_routine,
            QueueLevel::Q5Review => &mut self.q5_review,
        }
    }

    pub fn get(&self, level: QueueLevel) -> usize {
        match level {
            QueueLevel::Q1Immediate => self.q1,
            QueueLevel::Q2Elevated => self.q2,
            QueueLevel::Q3Monitor => self.q3,
            QueueLevel::Q5Routine => self.q5_routine,
            QueueLevel::Q5Review => self.q5_review,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanLatencies {
    pub bioacoustics: Option<f64>,
    pub transcription: Option<f64>,
    pub classification: Option<f64>,
    pub time_to_queue: Option<f64>,
    pub total: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub files: usize,
    pub errors: usize,
    pub early_exits: usize,
    pub levels: LevelCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_latency_secs: Option<MeanLatencies>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub generated_at: DateTime<Utc>,
    pub directory: String,
    pub asr_backend: String,
    pub llm_backend: String,
    pub rows: Vec<BatchRow>,
    pub summary: BatchSummary,
}

/// WAV files directly inside `dir`, sorted by name.
pub fn wav_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub async fn batch_process(
    dir: &Path,
    config: Arc<Config>,
    asr: Arc<dyn TranscriptionBackend>,
    llm: Arc<dyn LlmBackend>,
    options: &BatchOptions,
) -> std::io::Result<BatchReport> {
    let files = wav_files(dir)?;
    let concurrency = options
        .concurrency
        .unwrap_or(config.service.worker_pool_size)
        .max(1);
    let deterministic = options.report_time.is_some();
    let received_at = options.report_time.unwrap_or_else(Utc::now);
    let (asr_id, llm_id) = (asr.id().to_owned(), llm.id().to_owned());
    let pipeline = Pipeline::new(config, asr, llm);

    let mut rows: Vec<BatchRow> = stream::iter(files)
        .map(|path| {
            let pipeline = pipeline.clone();
            async move { score_file(&pipeline, &path, received_at, deterministic).await }
        })
        .buffer_unordered(concurrency)
        .collect()
        .await;
    rows.sort_by(|a, b| a.file.cmp(&b.file));

    let summary = summarise(&rows, !deterministic);
    Ok(BatchReport {
        generated_at: options.report_time.unwrap_or_else(Utc::now),
        directory: dir.display().to_string(),
        asr_backend: asr_id,
        llm_backend: llm_id,
        rows,
        summary,
    })
}

async fn score_file(
    pipeline: &Pipeline,
    path: &Path,
    received_at: DateTime<Utc>,
    deterministic: bool,
) -> BatchRow {
    let file = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let t0 = Instant::now();
    let buf = match audio::load_audio_file(path) {
        Ok(b) => b,
        Err(e) => return error_row(file, e.to_string()),
    };
    let ingest = t0.elapsed().as_secs_f64();
    let id = CallId(buf.source_id().to_owned());
    let record = CallRecord::new(
        id,
        received_at,
        buf.source_id(),
        path.display().to_string(),
        buf.duration(),
    );
    let mut record = pipeline.process_call(record, Arc::new(buf), |_| {}).await;
    record.timings.ingest = Some(ingest);
    row_from_record(file, &record, !deterministic)
}

fn error_row(file: String, error: String) -> BatchRow {
    BatchRow {
        file,
        level: None,
        early_exit: false,
        confidence: None,
        band: None,
        content_score: None,
        distress: None,
        components: None,
        reasons: Vec::new(),
        stage_errors: Vec::new(),
        timings: None,
        error: Some(error),
    }
}

pub fn row_from_record(file: String, record: &CallRecord, with_timings: bool) -> BatchRow {
    let assignment = record.assignment.as_ref();
    BatchRow {
        file,
        level: assignment.map(|a| a.level),
        early_exit: assignment.is_some_and(|a| a.early_exit),
        confidence: record.transcript.as_ref().map(|t| t.confidence),
        band: record.confidence_band,
        content_score: record.content_score.map(|s| s.s_c),
        distress: record.distress.map(|d| d.composite),
        components: record.distress.map(|d| DistressComponents {
            p: d.pitch_elevation,
            v: d.instability,
            e: d.energy,
            j: d.perturbation,
        }),
        reasons: assignment
            .map(|a| a.reason_codes.clone())
            .unwrap_or_default(),
        stage_errors: record.stage_errors.clone(),
        timings: with_timings.then(|| record.timings.clone()),
        error: None,
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarise(rows: &[BatchRow], with_timings: bool) -> BatchSummary {
    let mut s = BatchSummary {
        files: rows.len(),
        ..Default::default()
    };
    for r in rows {
        match r.level {
            Some(level) => s.levels.add(level),
            None => s.errors += 1,
        }
        s.early_exits += usize::from(r.early_exit);
    }
    if with_timings {
        let t = || rows.iter().filter_map(|r| r.timings.as_ref());
        s.mean_latency_secs = Some(MeanLatencies {
            bioacoustics: mean(t().map(|t| t.bioacoustics)),
            transcription: mean(t().map(|t| t.transcription)),
            classification: mean(t().map(|t| t.classification)),
            time_to_queue: mean(t().map(|t| t.time_to_queue)),
            total: mean(t().map(|t| t.total)),
        });
    }
    s
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    /// Aligned plain-text table with a summary footer.
    pub fn to_table(&self) -> String {
        let header = [
            "file", "level", "C", "band", "S_c", "D", "P", "V", "E", "J", "notes",
        ];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let c = r.components.as_ref();
            let notes = match &r.error {
                Some(e) => format!("error: {e}"),
                None => r.reasons.join("; "),
            };
            lines.push(vec![
                r.file.clone(),
                r.level
                    .map(|l| l.label().to_owned())
                    .unwrap_or_else(|| "-".into()),
                opt(r.confidence.map(|v| format!("{v:.3}"))),
                opt(r.band.map(|b| format!("{b:?}"))),
                opt(r.content_score),
                opt(r.distress.map(|v| format!("{v:.3}"))),
                opt(c.map(|c| format!("{:.2}", c.p))),
                opt(c.map(|c| format!("{:.2}", c.v))),
                opt(c.map(|c| format!("{:.2}", c.e))),
                opt(c.map(|c| format!("{:.2}", c.j))),
                notes,
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                lines
                    .iter()
                    .map(|l| l[i].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    if i == l.len() - 1 {
                        cell.clone()
                    } else {
                        format!("{cell:<w$}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        let s = &self.summary;
        out.push('\n');
        out.push_str(&format!(
            "files: {}  errors: {}  early exits: {}\n",
            s.files, s.errors, s.early_exits
        ));
        for level in QueueLevel::ALL {
            out.push_str(&format!("{:<14} {}\n", level.label(), s.levels.get(level)));
        }
        if let Some(m) = &s.mean_latency_secs {
            out.push_str(&format!(
                "mean seconds: bio {}  asr {}  llm {}  to-queue {}  total {}\n",
                opt(m.bioacoustics.map(|v| format!("{v:.3}"))),
                opt(m.transcription.map(|v| format!("{v:.3}"))),
                opt(m.classification.map(|v| format!("{v:.3}"))),
                opt(m.time_to_queue.map(|v| format!("{v:.3}"))),
                opt(m.total.map(|v| format!("{v:.3}"))),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::{StubLlmBackend, StubTranscriptionBackend};

    #[tokio::test]
    async fn empty_directory_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let report = batch_process(
            dir.path(),
            Arc::new(Config::default()),
            Arc::new(StubTranscriptionBackend::new()),
            Arc::new(StubLlmBackend::new()),
            &BatchOptions::default(),
        )
        .await
        .unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.summary.files, 0);
        assert!(report.to_table().contains("Q1-IMMEDIATE"));
    }

    #[tokio::test]
    async fn corrupt_file_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.wav"), b"not a wav").unwrap();
        let good =
            crate::synth::synthesize(&crate::synth::presets::calm(2.0, 1)).into_buffer("good");
        std::fs::write(dir.path().join("good.wav"), good.to_wav_bytes()).unwrap();
        let report = batch_process(
            dir.path(),
            Arc::new(Config::default()),
            Arc::new(StubTranscriptionBackend::new()),
            Arc::new(StubLlmBackend::new()),
            &BatchOptions::default(),
        )
        .await
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[0].error.is_some());
        assert!(report.rows[1].error.is_none());
        assert!(report.rows[1].level.is_some());
        assert_eq!(report.summary.errors, 1);
    }
}
