//! Start the dispatcher HTTP API on an ephemeral port, upload a call and
//! walk it through claim, triage and close as a console would.

use std::sync::Arc;

use calltriage::api;
use calltriage::config::Config;
use calltriage::service::CallService;
use calltriage::stub::{transcript_with_confidence, StubLlmBackend, StubTranscriptionBackend};
use calltriage::synth::{presets, synthesize};
use serde_json::{json, Value};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let storage = tempfile_dir()?;
    let mut config = Config::default();
    config.service.storage_path = storage.clone();

    let text = "There's smoke coming from the flat next door";
    let asr = StubTranscriptionBackend::new()
        .with_transcript("flat", transcript_with_confidence(text, 0.85));
    let llm = StubLlmBackend::new().with_reply(
        text,
        r#"{"hazard_category": "fire", "life_threat_level": "potential",
            "vulnerable_population": false, "situation_status": "escalating", "persons_affected": 1}"#,
    );
    let (service, _) = CallService::start(config, Arc::new(asr), Arc::new(llm))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let router = api::router(service.clone());
    tokio::spawn(async move { axum::serve(listener, router).await });
    println!("serving on {base}");

    let http = reqwest::Client::new();
    let wav = synthesize(&presets::calm(3.0, 2))
        .into_buffer("flat")
        .to_wav_bytes();
    let sub: Value = http
        .post(format!("{base}/calls?source=flat"))
        .body(wav)
        .send()
        .await?
        .json()
        .await?;
    let id = sub["call_id"].as_str().unwrap_or_default().to_owned();
    println!("submitted {id}");
    service.wait_idle().await;

    let queue: Value = http
        .get(format!("{base}/queue"))
        .send()
        .await?
        .json()
        .await?;
    println!("queue: {}", serde_json::to_string_pretty(&queue)?);

    let who = json!({"dispatcher_id": "d-17"});
    http.post(format!("{base}/calls/{id}/claim"))
        .json(&who)
        .send()
        .await?;
    let triage = json!({"protocol": "ESI", "esi_level": 2, "dispatcher_id": "d-17", "notes": "engine dispatched"});
    http.post(format!("{base}/calls/{id}/triage"))
        .json(&triage)
        .send()
        .await?;
    let closed: Value = http
        .post(format!("{base}/calls/{id}/close"))
        .send()
        .await?
        .json()
        .await?;
    println!("final status: {}", closed["status"]);

    std::fs::remove_dir_all(storage)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("calltriage-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
