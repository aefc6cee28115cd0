//! Decisions made through the service and replayed from its log with the
//! command line produce the same bank.

use std::path::Path;
use std::process::Command;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use replybank_cli::pipeline::{self, PipelineConfig};
use replybank_cli::{stages, synth};
use replybank_core::classifier::Checkpoint;
use replybank_core::responsebank::ResponseBank;
use replybank_service::{router, AppState, ServiceData, ServiceOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn build(dir: &Path) -> std::path::PathBuf {
    let (convs, _) = synth::generate(5, 200, 11).unwrap();
    let corpus = dir.join("corpus.jsonl");
    stages::write_atomic(&corpus, |w| synth::write_corpus(w, &convs)).unwrap();
    let work = dir.join("work");
    pipeline::run(&corpus, &PipelineConfig::default(), &work).unwrap();
    work
}

#[tokio::test(flavor = "multi_thread")]
async fn three_decisions_match_command_line_replay() {
    let dir = tempfile::tempdir().unwrap();
    let work = build(dir.path());
    let logs = dir.path().join("logs");
    std::fs::create_dir_all(&logs).unwrap();
    let data = ServiceData {
        bank: ResponseBank::load(&work.join("bank.json")).unwrap(),
        model: Some(Checkpoint::load(&work.join("model.ckpt")).unwrap()),
        records: stages::load_responses(&work.join("responses.tsv")).unwrap(),
        clusters: stages::load_clusters(&work.join("clusters.json")).unwrap(),
        doctor_turns: None,
    };
    let options = ServiceOptions {
        decision_log_dir: Some(logs.clone()),
        ..ServiceOptions::default()
    };
    let app = router(AppState::new(data, options).unwrap());

    let (status, created) = send(&app, Method::POST, "/v1/sessions", Some(json!({"startFrom": "empty"}))).await;
    assert_eq!(status, StatusCode::OK, "{created}");
    let id = created["sessionId"].as_str().unwrap().to_string();
    let actions = [
        json!({"type": "createNew", "name": "first"}),
        json!({"type": "assignTo", "classId": 0}),
        json!({"type": "skip"}),
    ];
    for action in actions {
        let (_, next) = send(&app, Method::GET, &format!("/v1/sessions/{id}/next"), None).await;
        let body = json!({
            "cursor": next["cursor"],
            "clusterId": next["cluster"]["clusterId"],
            "action": action,
            "annotator": "labeler",
        });
        let (status, v) = send(&app, Method::POST, &format!("/v1/sessions/{id}/decisions"), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{v}");
    }
    let (_, served) = send(&app, Method::GET, &format!("/v1/sessions/{id}/bank"), None).await;
    let served: ResponseBank = serde_json::from_value(served).unwrap();
    assert_eq!(served.len(), 1);
    assert_eq!(served.classes[0].source_clusters.len(), 2);

    let out = dir.path().join("replayed.json");
    let o = Command::new(env!("CARGO_BIN_EXE_replybank"))
        .args(["bank", "replay", "--clusters"])
        .arg(work.join("clusters.json"))
        .arg("--start")
        .arg(logs.join(format!("session-{id}.start.json")))
        .arg("--decisions")
        .arg(logs.join(format!("session-{id}.jsonl")))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let replayed = ResponseBank::load(&out).unwrap();
    assert_eq!(replayed, served);
    assert_eq!(replayed.to_json().unwrap(), served.to_json().unwrap());
}
