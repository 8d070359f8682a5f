//! Run the full pipeline on one synthetic call with scripted backends.

use std::sync::Arc;

use calltriage::config::Config;
use calltriage::pipeline::Pipeline;
use calltriage::stub::{transcript_with_confidence, StubLlmBackend, StubTranscriptionBackend};
use calltriage::synth::{presets, synthesize};

#[tokio::main]
async fn main() {
    let text = "My house is on fire and my children are upstairs";
    let reply = r#"{"hazard_category": "fire", "life_threat_level": "imminent",
        "vulnerable_population": true, "situation_status": "escalating", "persons_affected": 3}"#;
    let asr = StubTranscriptionBackend::new()
        .with_transcript("caller", transcript_with_confidence(text, 0.88));
    let llm = StubLlmBackend::new().with_reply(text, reply);
    let pipeline = Pipeline::new(Arc::new(Config::default()), Arc::new(asr), Arc::new(llm));

    let audio = synthesize(&presets::distressed(4.0, 3)).into_buffer("caller");
    let record = pipeline.process(audio).await;
    println!(
        "{}",
        serde_json::to_string_pretty(&record).expect("record serialises")
    );
}
