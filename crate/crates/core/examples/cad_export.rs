//! Build the CAD hand-off document for a triaged call.

use std::sync::Arc;

use calltriage::config::Config;
use calltriage::pipeline::Pipeline;
use calltriage::record::{CadPackage, CallStatus, TriageDecision, TriageProtocol};
use calltriage::stub::{transcript_with_confidence, StubLlmBackend, StubTranscriptionBackend};
use calltriage::synth::{presets, synthesize};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "A car hit a cyclist, he is not moving";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("road", transcript_with_confidence(text, 0.81));
    let llm = StubLlmBackend::new().with_reply(
        text,
        r#"{"hazard_category": "medical", "life_threat_level": "imminent",
            "vulnerable_population": false, "situation_status": "stable", "persons_affected": 1,
            "entities": {"location": ["Half Way Tree Road"], "clinical_indicators": ["unresponsive"]}}"#,
    );
    let pipeline = Pipeline::new(Arc::new(Config::default()), Arc::new(asr), Arc::new(llm));
    let mut record = pipeline
        .process(synthesize(&presets::distressed(3.0, 8)).into_buffer("road"))
        .await;

    record.transition(CallStatus::Claimed)?;
    record.triage = Some(TriageDecision {
        protocol: TriageProtocol::Esi,
        esi_level: Some(1),
        start_color: None,
        dispatcher_id: "d-4".into(),
        decided_at: chrono::Utc::now(),
        notes: "ambulance and police".into(),
    });
    record.transition(CallStatus::Triaged)?;

    println!("{}", CadPackage::from_record(&record).to_json());
    Ok(())
}
