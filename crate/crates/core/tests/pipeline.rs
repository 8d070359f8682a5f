mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use calltriage::asr::ConfidenceBand;
use calltriage::config::Config;
use calltriage::pipeline::Pipeline;
use calltriage::queue::{AbsentFlag, CallId, QueueLevel};
use calltriage::record::{CallRecord, CallStatus};
use calltriage::stub::{transcript_with_confidence, StubLlmBackend, StubTranscriptionBackend};
use calltriage::synth::{synthesize, white_noise};
use chrono::Utc;
use common::{house_fire, pothole, Voice};

fn pipeline(asr: StubTranscriptionBackend, llm: Arc<StubLlmBackend>) -> Pipeline {
    Pipeline::new(Arc::new(Config::default()), Arc::new(asr), llm)
}

fn voice(v: Voice) -> calltriage::audio::AudioBuffer {
    synthesize(&v.spec(3.0, 9)).into_buffer("call")
}

fn absent(r: &CallRecord) -> Vec<AbsentFlag> {
    r.bands.as_ref().unwrap().absent.iter().copied().collect()
}

#[tokio::test]
async fn asr_outage_still_routes() {
    let llm = Arc::new(StubLlmBackend::new());
    let r = pipeline(StubTranscriptionBackend::new(), llm.clone())
        .process(voice(Voice::Distressed))
        .await;
    assert_eq!(r.status, CallStatus::Queued);
    assert!(r.transcript.is_none());
    assert_eq!(
        absent(&r),
        vec![AbsentFlag::TranscriptAbsent, AbsentFlag::ContentAbsent]
    );
    // low confidence + high concern
    assert_eq!(
        r.assignment.as_ref().unwrap().level,
        QueueLevel::Q1Immediate
    );
    assert!(r
        .stage_errors
        .iter()
        .any(|e| e.starts_with("transcription:")));
    assert_eq!(llm.call_count(), 0);
}

#[tokio::test]
async fn reask_recovers_a_bad_reply() {
    let text = "Pothole on Nelson Street";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("call", transcript_with_confidence(text, 0.9));
    let llm = Arc::new(StubLlmBackend::new().with_replies(
        text,
        vec!["Sure! The category is fire.".into(), pothole().to_string()],
    ));
    let r = pipeline(asr, llm.clone()).process(voice(Voice::Calm)).await;
    assert_eq!(llm.call_count(), 2);
    assert_eq!(r.content_score.unwrap().s_c, 10);
    assert_eq!(r.assignment.unwrap().level, QueueLevel::Q5Routine);
}

#[tokio::test]
async fn persistent_schema_violation_leaves_content_absent() {
    let text = "help";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("call", transcript_with_confidence(text, 0.9));
    let llm = Arc::new(StubLlmBackend::new().with_reply(text, r#"{"hazard_category": "volcano"}"#));
    let r = pipeline(asr, llm.clone()).process(voice(Voice::Calm)).await;
    assert_eq!(llm.call_count(), 2, "one ask and exactly one re-ask");
    assert!(r.content_score.is_none());
    assert_eq!(absent(&r), vec![AbsentFlag::ContentAbsent]);
    assert!(r.stage_errors.iter().any(|e| e.contains("schema")));
}

#[tokio::test]
async fn very_low_confidence_skips_the_llm() {
    let text = "mumble";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("call", transcript_with_confidence(text, 0.2));
    let llm = Arc::new(StubLlmBackend::new().with_reply(text, house_fire().to_string()));
    let r = pipeline(asr, llm.clone()).process(voice(Voice::Calm)).await;
    assert_eq!(llm.call_count(), 0);
    assert_eq!(r.confidence_band, Some(ConfidenceBand::VeryLow));
    assert_eq!(r.assignment.unwrap().level, QueueLevel::Q5Review);
}

#[tokio::test]
async fn low_confidence_marks_entities_uncertain() {
    let text = "Pickney dem trap inna di fire";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("call", transcript_with_confidence(text, 0.55));
    let llm =
        Arc::new(StubLlmBackend::new().with_reply(text, common::children_trapped().to_string()));
    let r = pipeline(asr, llm).process(voice(Voice::Calm)).await;
    assert_eq!(r.confidence_band, Some(ConfidenceBand::Low));
    assert!(r.entities.unwrap().uncertainty_marked);
    assert_eq!(r.content_score.unwrap().s_c, 80);
    let a = r.assignment.unwrap();
    assert_eq!(a.level, QueueLevel::Q2Elevated);
    assert!(a
        .reason_codes
        .iter()
        .any(|c| c == "audio review recommended"));
}

#[tokio::test]
async fn unvoiced_audio_leaves_distress_absent() {
    let text = "Pothole on Nelson Street";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("noise", transcript_with_confidence(text, 0.9));
    let llm = Arc::new(StubLlmBackend::new().with_reply(text, pothole().to_string()));
    let r = pipeline(asr, llm)
        .process(white_noise(2.0, 0.05, 3).with_source_id("noise"))
        .await;
    assert!(r.distress.is_none());
    assert_eq!(absent(&r), vec![AbsentFlag::DistressAbsent]);
    assert_eq!(r.assignment.unwrap().level, QueueLevel::Q5Routine);
}

#[tokio::test]
async fn extreme_distress_routes_before_transcription_finishes() {
    let text = "aaah";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("call", transcript_with_confidence(text, 0.9))
        .with_delay(Duration::from_millis(400));
    let llm = Arc::new(StubLlmBackend::new());
    let p = pipeline(asr, llm.clone());
    let routed: Arc<Mutex<Option<CallRecord>>> = Arc::default();
    let slot = routed.clone();
    let record = CallRecord::new(CallId::from("x"), Utc::now(), "call", "", 3.0);
    let done = p
        .process_call(record, Arc::new(voice(Voice::Extreme)), move |r| {
            *slot.lock().unwrap() = Some(r.clone());
        })
        .await;

    let at_routing = routed.lock().unwrap().clone().unwrap();
    assert!(
        at_routing.transcript.is_none(),
        "routed without waiting for the transcript"
    );
    assert!(at_routing.timings.time_to_queue.unwrap() < 0.4);
    let a = at_routing.assignment.clone().unwrap();
    assert!(a.early_exit);
    assert!(a.reason_codes.iter().any(|c| c == "transcript pending"));

    assert_eq!(
        done.assignment, at_routing.assignment,
        "backfill keeps the assignment"
    );
    assert_eq!(done.transcript.unwrap().text, text);
    assert_eq!(llm.call_count(), 0);
}
