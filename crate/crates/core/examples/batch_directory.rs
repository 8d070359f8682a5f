//! Process a directory of call recordings and print the summary table.
//!
//! With no argument a small synthetic corpus is written to a temp dir.
//! `cargo run --example batch_directory [dir]`

use std::sync::Arc;

use calltriage::batch::{batch_process, BatchOptions};
use calltriage::config::Config;
use calltriage::stub::{
    transcript_with_confidence, CallFixture, FixtureSet, StubLlmBackend, StubTranscriptionBackend,
};
use calltriage::synth::{presets, synthesize};
use serde_json::json;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = match std::env::args().nth(1) {
        Some(d) => d.into(),
        None => {
            write_corpus(tmp.path())?;
            tmp.path().to_owned()
        }
    };
    let fixtures = FixtureSet::load(dir.join("fixtures.json")).unwrap_or_default();
    let report = batch_process(
        &dir,
        Arc::new(Config::default()),
        Arc::new(StubTranscriptionBackend::from_fixtures(&fixtures)),
        Arc::new(StubLlmBackend::from_fixtures(&fixtures)),
        &BatchOptions::default(),
    )
    .await?;
    println!("{}", report.to_table());
    Ok(())
}

fn write_corpus(dir: &std::path::Path) -> std::io::Result<()> {
    let calls = [
        (
            "streetlight",
            presets::calm(3.0, 1),
            "The streetlight outside is broken",
            0.93,
            "infrastructure",
            "none",
        ),
        (
            "kitchen_fire",
            presets::distressed(3.0, 2),
            "Fire in the kitchen, my mother is inside",
            0.86,
            "fire",
            "imminent",
        ),
        (
            "crash",
            presets::extreme(3.0, 3),
            "Crash crash help",
            0.35,
            "traffic",
            "potential",
        ),
    ];
    let mut set = FixtureSet::default();
    for (name, spec, text, c, hazard, threat) in calls {
        std::fs::write(
            dir.join(format!("{name}.wav")),
            synthesize(&spec).into_buffer(name).to_wav_bytes(),
        )?;
        set.calls.insert(
            name.to_owned(),
            CallFixture {
                transcript: Some(transcript_with_confidence(text, c)),
                llm_reply: Some(json!({
                    "hazard_category": hazard, "life_threat_level": threat,
                    "vulnerable_population": false, "situation_status": "stable", "persons_affected": 1
                })),
            },
        );
    }
    set.save(dir.join("fixtures.json"))
}
