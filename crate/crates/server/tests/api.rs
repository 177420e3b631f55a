use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dualproj_genomics::{generate_synthetic_dataset, write_dataset, GenomicDataset, SyntheticConfig};
use dualproj_server::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &Path) -> Router {
    router(
        AppState::open(ServerConfig {
            data_dir: dir.to_path_buf(),
            max_pool: 500,
        })
        .unwrap(),
    )
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn small_dataset(dir: &Path) -> std::path::PathBuf {
    let d = generate_synthetic_dataset(&SyntheticConfig {
        n_hybrids: 60,
        n_genes: 120,
        n_regulatory: 10,
        n_paternal: Some(10),
        n_maternal: Some(10),
        ..Default::default()
    })
    .unwrap();
    write_dataset(&GenomicDataset::from(d), dir).unwrap()
}

fn session_request(dataset_id: &str) -> Value {
    json!({
        "dataset_id": dataset_id,
        "rows": { "hidden_dim": 16, "epochs": 20 },
        "cols": { "hidden_dim": 16, "epochs": 20 },
        "predictor": { "epochs": 40, "pca_dims": 20 }
    })
}

async fn wait_for(app: &Router, job: &str) -> Value {
    for _ in 0..600 {
        let (status, v) = call(app, "GET", &format!("/jobs/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        match v["status"].as_str().unwrap() {
            "done" | "failed" => return v,
            _ => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    panic!("job {job} did not finish");
}

async fn trained_session(app: &Router, files: &Path) -> (String, String) {
    let manifest = small_dataset(files);
    let (status, ds) = call(app, "POST", "/datasets", Some(json!({ "path": manifest }))).await;
    assert_eq!(status, StatusCode::OK, "{ds}");
    let dataset_id = ds["id"].as_str().unwrap().to_string();
    let (status, created) = call(app, "POST", "/sessions", Some(session_request(&dataset_id))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_for(app, created["job_id"].as_str().unwrap()).await;
    assert_eq!(job["status"], "done", "{job}");
    (dataset_id, created["session_id"].as_str().unwrap().to_string())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn dataset_upload_is_idempotent_and_validated() {
    let data = tempfile::tempdir().unwrap();
    let files = tempfile::tempdir().unwrap();
    let app = app(data.path());
    let manifest = small_dataset(files.path());
    let (s1, a) = call(&app, "POST", "/datasets", Some(json!({ "path": manifest }))).await;
    let (s2, b) = call(&app, "POST", "/datasets", Some(json!({ "path": manifest }))).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(a["n_hybrids"], 60);
    assert_eq!(a["n_genes"], 120);

    let (status, got) = call(&app, "GET", &format!("/datasets/{}", a["id"].as_str().unwrap()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, a);

    // the same files inline, with one bad call
    let read = |f: &str| std::fs::read_to_string(files.path().join(f)).unwrap();
    let mut lines: Vec<String> = read("genotypes.csv").lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
    cells[4] = "7".into();
    lines[2] = cells.join(",");
    let manifest: Value = serde_json::from_str(&read("manifest.json")).unwrap();
    let body = json!({
        "manifest": manifest,
        "contents": {
            "genotypes": lines.join("\n"),
            "traits": read("traits.csv"),
            "parents": read("parents.csv"),
            "pedigree": read("pedigree.csv"),
        }
    });
    let (status, err) = call(&app, "POST", "/datasets", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let msg = err["error"].as_str().unwrap();
    assert!(msg.contains("row 2, column 5"), "{msg}");

    let (status, _) = call(&app, "GET", "/datasets/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_lifecycle_survives_restart() {
    let data = tempfile::tempdir().unwrap();
    let files = tempfile::tempdir().unwrap();
    let app = app(data.path());
    let (_, sid) = trained_session(&app, files.path()).await;

    let (status, rows) = call(&app, "GET", &format!("/sessions/{sid}/embedding?side=rows"), None).await;
    assert_eq!(status, StatusCode::OK);
    let points = rows["points"].as_array().unwrap();
    assert_eq!(points.len(), 60);
    assert!(points[0]["traits"].is_object());
    let (_, cols) = call(&app, "GET", &format!("/sessions/{sid}/embedding?side=cols"), None).await;
    assert_eq!(cols["points"].as_array().unwrap().len(), 120);
    assert!(cols["points"][0]["chromosome"].is_number());

    let (status, session) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let t = session["training"]["rows"]["T"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&t));
    assert_eq!(session["training"]["rows"]["k"], 29);

    let edit = json!({
        "event_id": "e1",
        "side": "rows",
        "indices": [0, 1, 2],
        "kind": { "type": "move", "delta": [1.0, -0.5] }
    });
    let (status, first) = call(&app, "POST", &format!("/sessions/{sid}/modify"), Some(edit.clone())).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    assert_eq!(first["duplicate"], false);
    assert!(first["elapsed_ms"].as_f64().unwrap() >= 0.0);
    let (_, again) = call(&app, "POST", &format!("/sessions/{sid}/modify"), Some(edit)).await;
    assert_eq!(again["duplicate"], true);
    assert_eq!(again["genes"], first["genes"]);

    let empty = json!({
        "event_id": "e2",
        "side": "cols",
        "indices": [],
        "kind": { "type": "move", "delta": [1.0, 0.0] }
    });
    let (status, _) = call(&app, "POST", &format!("/sessions/{sid}/modify"), Some(empty)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let out_of_range = json!({
        "event_id": "e3",
        "side": "cols",
        "indices": [120],
        "kind": { "type": "scale", "factor": 2.0 }
    });
    let (status, _) = call(&app, "POST", &format!("/sessions/{sid}/modify"), Some(out_of_range)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, session) = call(&app, "GET", &format!("/sessions/{sid}"), None).await;
    assert_eq!(session["history"].as_array().unwrap().len(), 1);

    let (status, rec) = call(&app, "POST", &format!("/sessions/{sid}/recommend"), Some(json!({ "K": 3 }))).await;
    assert_eq!(status, StatusCode::OK, "{rec}");
    let selected = rec["selected"].as_array().unwrap().len();
    assert!(rec["pool_size"].as_u64().unwrap() <= 500);
    let (_, rows) = call(&app, "GET", &format!("/sessions/{sid}/embedding"), None).await;
    assert_eq!(rows["recommended"].as_array().map_or(0, Vec::len), selected);

    let before_rows = rows;
    let (_, before_cols) = call(&app, "GET", &format!("/sessions/{sid}/embedding?side=cols"), None).await;
    drop(app);
    let restarted = tokio::task::spawn_blocking({
        let dir = data.path().to_path_buf();
        move || crate::app(&dir)
    })
    .await
    .unwrap();
    let (_, after_rows) = call(&restarted, "GET", &format!("/sessions/{sid}/embedding"), None).await;
    let (_, after_cols) = call(&restarted, "GET", &format!("/sessions/{sid}/embedding?side=cols"), None).await;
    assert_eq!(after_rows, before_rows);
    assert_eq!(after_cols, before_cols);

    let (status, reset) = call(&restarted, "POST", &format!("/sessions/{sid}/reset"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, session) = call(&restarted, "GET", &format!("/sessions/{sid}"), None).await;
    assert!(session["history"].as_array().unwrap().is_empty());
    assert_ne!(reset["hybrids"], first["hybrids"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn conflicts_and_missing_resources() {
    let data = tempfile::tempdir().unwrap();
    let files = tempfile::tempdir().unwrap();
    let app = app(data.path());
    let (dataset_id, sid) = trained_session(&app, files.path()).await;

    // identical training request while the first is running
    let (s1, created) = call(&app, "POST", "/sessions", Some(session_request(&dataset_id))).await;
    let (s2, _) = call(&app, "POST", "/sessions", Some(session_request(&dataset_id))).await;
    assert_eq!((s1, s2), (StatusCode::ACCEPTED, StatusCode::CONFLICT));
    wait_for(&app, created["job_id"].as_str().unwrap()).await;

    let edit = |id: &str| {
        json!({
            "event_id": id,
            "side": "cols",
            "indices": (0..60).collect::<Vec<_>>(),
            "kind": { "type": "move", "delta": [0.5, 0.5] }
        })
    };
    let uri = format!("/sessions/{sid}/modify");
    let (a, b) = tokio::join!(
        call(&app, "POST", &uri, Some(edit("a"))),
        call(&app, "POST", &uri, Some(edit("b")))
    );
    let mut statuses = [a.0, b.0];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);

    let (status, bp) = call(&app, "GET", &format!("/sessions/{sid}/gene/0/boxplot?trait=yield"), None).await;
    assert_eq!(status, StatusCode::OK, "{bp}");
    assert_eq!(bp["groups"].as_array().unwrap().len(), 3);
    let gene = bp["gene"].as_str().unwrap().to_string();
    let (status, by_name) = call(&app, "GET", &format!("/sessions/{sid}/gene/{gene}/boxplot?trait=yield"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(by_name, bp);
    let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/gene/99:1/boxplot"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/gene/0/boxplot?trait=height"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/sessions/missing/embedding", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/jobs/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", &format!("/sessions/{sid}/recommend"), Some(json!({ "K": 0 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}
