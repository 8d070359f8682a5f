//! Dispatcher API over real HTTP.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use calltriage::api;
use calltriage::config::Config;
use calltriage::service::CallService;
use calltriage::stub::{FixtureSet, StubLlmBackend, StubTranscriptionBackend};
use common::{cell_cases, fixture_for, wav, Voice};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

struct Harness {
    base: String,
    client: Client,
    svc: CallService,
    _dir: tempfile::TempDir,
}

async fn start(token: Option<&str>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let mut set = FixtureSet::default();
    for c in cell_cases() {
        set.calls.insert(
            c.name.to_owned(),
            fixture_for(c.text, c.confidence, Some(c.reply)),
        );
    }
    let mut config = Config::default();
    config.service.storage_path = dir.path().to_owned();
    config.service.api_token = token.map(str::to_owned);
    let (svc, _) = CallService::start(
        config,
        Arc::new(StubTranscriptionBackend::from_fixtures(&set)),
        Arc::new(StubLlmBackend::from_fixtures(&set)),
    )
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let router = api::router(svc.clone());
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    Harness {
        base: format!("http://{addr}"),
        client: Client::new(),
        svc,
        _dir: dir,
    }
}

impl Harness {
    async fn upload(&self, name: &str, voice: Voice) -> String {
        let r = self
            .client
            .post(format!("{}/calls?source={name}", self.base))
            .body(wav(voice, 2.0, 1))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), StatusCode::ACCEPTED);
        let body: Value = r.json().await.unwrap();
        assert_eq!(body["status"], "PROCESSING");
        body["call_id"].as_str().unwrap().to_owned()
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }
}

fn esi(dispatcher: &str, level: u8) -> Value {
    json!({"protocol": "ESI", "esi_level": level, "dispatcher_id": dispatcher, "notes": "units sent"})
}

#[tokio::test]
async fn full_call_lifecycle() {
    let h = start(None).await;
    let id = h.upload("c4_aligned", Voice::Distressed).await;
    h.svc.wait_idle().await;

    let (s, call) = h.get(&format!("/calls/{id}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(call["status"], "QUEUED");
    assert_eq!(call["assignment"]["level"], "Q1_IMMEDIATE");

    let (_, queue) = h.get("/queue").await;
    assert_eq!(queue[0]["call_id"], id.as_str());
    assert_eq!(queue[0]["label"], "Q1-IMMEDIATE");
    assert_eq!(queue[0]["sla_hint"], "within seconds");

    let (s, claimed) = h
        .post(
            &format!("/calls/{id}/claim"),
            json!({"dispatcher_id": "alice"}),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(claimed["status"], "CLAIMED");
    let (s, err) = h
        .post(
            &format!("/calls/{id}/claim"),
            json!({"dispatcher_id": "bob"}),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "conflict");
    assert!(err["message"].as_str().unwrap().contains("alice"));
    assert_eq!(h.get("/queue").await.1, json!([]));

    let (s, _) = h.post(&format!("/calls/{id}/triage"), esi("bob", 2)).await;
    assert_eq!(
        s,
        StatusCode::CONFLICT,
        "only the claiming dispatcher may triage"
    );
    let (s, err) = h
        .post(&format!("/calls/{id}/triage"), esi("alice", 9))
        .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "invalid_request");
    let (s, triaged) = h
        .post(&format!("/calls/{id}/triage"), esi("alice", 2))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(triaged["status"], "TRIAGED");

    let (s, cad) = h.get(&format!("/calls/{id}/cad")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(cad["schema_version"], "1.0.0");
    assert_eq!(cad["queue_priority"]["level"], "Q1_IMMEDIATE");
    assert_eq!(cad["triage"]["esi_level"], 2);
    assert_eq!(cad["audio"]["locator"], format!("audio/{id}.wav"));

    let (s, closed) = h.post(&format!("/calls/{id}/close"), json!({})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(closed["status"], "CLOSED");
    let (s, _) = h.post(&format!("/calls/{id}/close"), json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let audio = h
        .client
        .get(format!("{}/calls/{id}/audio", h.base))
        .send()
        .await
        .unwrap();
    assert_eq!(audio.headers()["content-type"], "audio/wav");
    assert_eq!(
        audio.bytes().await.unwrap().to_vec(),
        wav(Voice::Distressed, 2.0, 1)
    );

    let (_, closed_list) = h.get("/calls?status=closed").await;
    assert_eq!(closed_list.as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn queue_orders_by_level_then_time() {
    let h = start(None).await;
    let routine = h.upload("c1_routine", Voice::Calm).await;
    h.svc.wait_idle().await;
    let urgent = h.upload("c4_aligned", Voice::Distressed).await;
    h.svc.wait_idle().await;
    let monitor = h.upload("c3_anxious_minor", Voice::Distressed).await;
    h.svc.wait_idle().await;

    let (_, q) = h.get("/queue").await;
    let ids: Vec<&str> = q
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["call_id"].as_str().unwrap())
        .collect();
    assert_eq!(
        ids,
        vec![urgent.as_str(), monitor.as_str(), routine.as_str()]
    );
    let positions: Vec<u64> = q
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["position"].as_u64().unwrap())
        .collect();
    assert_eq!(positions, vec![1, 2, 3]);

    let (s, head) = h
        .post("/queue/claim-next", json!({"dispatcher_id": "carol"}))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(head["call_id"], urgent.as_str());
    h.post("/queue/claim-next", json!({"dispatcher_id": "carol"}))
        .await;
    h.post("/queue/claim-next", json!({"dispatcher_id": "carol"}))
        .await;
    let r = h
        .client
        .post(format!("{}/queue/claim-next", h.base))
        .json(&json!({"dispatcher_id": "carol"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
}

#[tokio::test]
async fn errors_have_codes() {
    let h = start(None).await;
    let (s, e) = h.get("/calls/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["error"], "not_found");
    let (s, _) = h.get("/calls/nope/cad").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = h.get("/calls?status=bogus").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let r = h
        .client
        .post(format!("{}/calls", h.base))
        .body("definitely not a wav")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json::<Value>().await.unwrap()["error"], "invalid_audio");

    let short = calltriage::synth::tone(200.0, 0.2, 0.3).to_wav_bytes();
    let r = h
        .client
        .post(format!("{}/calls", h.base))
        .body(short)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn config_endpoint_exposes_display_metadata() {
    let h = start(Some("secret")).await;
    let (s, _) = h.get("/config").await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let cfg: Value = h
        .client
        .get(format!("{}/config", h.base))
        .bearer_auth("secret")
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(cfg["thresholds"]["confidence_high"], 0.7);
    assert_eq!(cfg["content_weights"]["hazard"]["fire"], 25);
    let levels = cfg["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 5);
    assert_eq!(levels[0]["label"], "Q1-IMMEDIATE");
    assert!(levels.iter().all(|l| l["dispatcher_action"]
        .as_str()
        .is_some_and(|s| !s.is_empty())));
    assert!(!cfg.to_string().contains("secret"), "token must not leak");
    // health stays open
    assert_eq!(h.get("/health").await.0, StatusCode::OK);
}

#[tokio::test]
async fn events_stream_reports_queue_changes() {
    let h = start(None).await;
    let mut resp = h
        .client
        .get(format!("{}/events", h.base))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "text/event-stream");

    let id = h.upload("c2_composed_reporter", Voice::Calm).await;
    h.svc.wait_idle().await;
    h.post(
        &format!("/calls/{id}/claim"),
        json!({"dispatcher_id": "dan"}),
    )
    .await;

    let mut text = String::new();
    let deadline = Instant::now() + Duration::from_secs(5);
    while !text.contains("event: claimed") {
        let left = deadline.saturating_duration_since(Instant::now());
        let chunk = tokio::time::timeout(left, resp.chunk())
            .await
            .expect("events within deadline")
            .unwrap()
            .expect("stream open");
        text.push_str(&String::from_utf8_lossy(&chunk));
    }
    let received = text.find("event: call_received").unwrap();
    let queued = text.find("event: queued").unwrap();
    let claimed = text.find("event: claimed").unwrap();
    assert!(received < queued && queued < claimed);
    let data_line = text
        .lines()
        .find(|l| l.starts_with("data:") && l.contains("\"queued\""))
        .unwrap();
    let ev: Value = serde_json::from_str(data_line.trim_start_matches("data:").trim()).unwrap();
    assert_eq!(ev["call_id"], id.as_str());
    assert_eq!(ev["level"], "Q2_ELEVATED");
}
