use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

use gsn_engine::caseio::{parse_native, serialize_interchange};
use gsn_service::{http::router, Service};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/fixtures/{name}.gsn.json"))
}

fn service(path: &Path) -> Arc<Service> {
    let text = std::fs::read_to_string(path).unwrap();
    Arc::new(Service::new(parse_native(&text).unwrap().case))
}

fn cli(args: &[&str]) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gsn")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8(out.stdout).unwrap())
}

async fn call(svc: &Arc<Service>, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body.to_string()))
        .unwrap();
    let res = router(svc.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn cli_matches_http() {
    let llm = fixture("llm");
    let file = llm.to_str().unwrap();
    let cases: Vec<(Vec<&str>, &str, &str, String)> = vec![
        (vec!["validate", file], "POST", "/validate", String::new()),
        (vec!["infer", file], "POST", "/infer", "{}".into()),
        (
            vec!["infer", file, "--explain", "G-top:inDoubt"],
            "POST",
            "/infer",
            json!({ "explain": "G-top:inDoubt" }).to_string(),
        ),
        (vec!["query", file, "--cq", "AE-01"], "POST", "/queries/AE-01", "{}".into()),
        (
            vec!["query", file, "--cq", "AE-05", "--param", "now=2025-05-13T00:00:00Z"],
            "POST",
            "/queries/AE-05",
            json!({ "now": "2025-05-13T00:00:00Z" }).to_string(),
        ),
        (
            vec!["select", file, "kind:Solution & flag:inDoubt"],
            "POST",
            "/selector",
            "kind:Solution & flag:inDoubt".into(),
        ),
        (vec!["export", file], "GET", "/case/export?format=json", String::new()),
        (vec!["export", file, "--format", "ttl"], "GET", "/case/export?format=ttl", String::new()),
    ];
    for (args, method, uri, body) in cases {
        let (ok, out) = cli(&args);
        let (status, http) = call(&service(&llm), method, uri, &body).await;
        assert!(ok, "{args:?}: {out}");
        assert_eq!(status, StatusCode::OK, "{uri}");
        assert_eq!(out, http, "{args:?}");
    }
}

#[tokio::test]
async fn failing_query_matches_too() {
    let llm = fixture("llm");
    let (ok, out) = cli(&["query", llm.to_str().unwrap(), "--cq", "ZZ-99"]);
    let (status, http) = call(&service(&llm), "POST", "/queries/ZZ-99", "{}").await;
    assert!(!ok);
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(out, http);
}

#[tokio::test]
async fn import_matches_http_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let car = fixture("car");
    let doc = parse_native(&std::fs::read_to_string(&car).unwrap()).unwrap();
    let ttl = dir.path().join("car.ttl");
    std::fs::write(&ttl, serialize_interchange(&doc)).unwrap();

    let (ok, out) = cli(&["import", ttl.to_str().unwrap()]);
    assert!(ok);
    let svc = Arc::new(Service::new(gsn_engine::model::Case::new("x", "x")));
    let (status, _) = call(&svc, "POST", "/case/import?format=ttl", &std::fs::read_to_string(&ttl).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let (_, http) = call(&svc, "GET", "/case/export?format=json", "").await;
    assert_eq!(out, http);
    assert_eq!(out, std::fs::read_to_string(&car).unwrap());
}

#[tokio::test]
async fn tick_matches_http() {
    let dir = tempfile::tempdir().unwrap();
    let hooks = dir.path().join("hooks.gsn.json");
    let leaf = r#"kind:Goal & statement~"Perturbation Robustness" & !((kind:Goal | kind:Strategy)/supportedBy<-)"#;
    let hook = json!([{
        "id": "DE-03",
        "trigger": { "type": "on_tick", "period_days": 30, "selector": leaf, "anchor": "2024-11-14T00:00:00Z" },
        "action": { "type": "attach_artefact", "target": leaf, "artefact": "Benchmark rerun for {target}" }
    }]);
    std::fs::write(&hooks, hook.to_string()).unwrap();
    let case = dir.path().join("llm.gsn.json");
    std::fs::copy(fixture("llm"), &case).unwrap();

    let args = [
        "tick",
        case.to_str().unwrap(),
        "--now",
        "2024-12-15T00:00:00Z",
        "--hooks",
        hooks.to_str().unwrap(),
    ];
    let (ok, out) = cli(&args);
    assert!(ok, "{out}");
    let svc = Arc::new(
        Service::new(parse_native(&std::fs::read_to_string(&case).unwrap()).unwrap().case)
            .with_hook_file(hooks.clone())
            .unwrap(),
    );
    let (_, http) = call(&svc, "POST", "/tick", r#"{"now":"2024-12-15T00:00:00Z"}"#).await;
    assert_eq!(out, http);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["hooks"][0]["targets"], json!(["G-benchmark"]));

    let mut write = args.to_vec();
    write.push("--write");
    assert!(cli(&write).0);
    let saved = std::fs::read_to_string(&case).unwrap();
    assert!(saved.contains("ART-DE-03-20241215-G-benchmark"));
}

#[tokio::test]
async fn http_workflow() {
    let svc = service(&fixture("car"));
    let (s, body) = call(&svc, "POST", "/infer", "").await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert!(v["flags"]["G-roof"].get("defeated").is_none());

    let (s, body) = call(&svc, "POST", "/scenarios/SCN-overload", r#"{"active":true}"#).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let (_, body) = call(&svc, "POST", "/infer", "").await;
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["flags"]["G-roof"]["defeated"], true);
    assert_eq!(v["flags"]["G-car"]["inDoubt"], true);

    let (_, body) = call(&svc, "GET", "/overlays", "").await;
    let v: Value = serde_json::from_str(&body).unwrap();
    let names: Vec<&str> = v["overlays"].as_array().unwrap().iter().map(|o| o["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"defeated-closure"), "{names:?}");

    let el = json!({ "id": "G-roof", "kind": "Goal", "statement": "again" }).to_string();
    assert_eq!(call(&svc, "POST", "/elements", &el).await.0, StatusCode::CONFLICT);
    let edge = json!({ "subject": "G-car", "predicate": "inContextOf", "object": "C-limit" }).to_string();
    let (s, body) = call(&svc, "POST", "/edges?expected_version=1", &edge).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["id"], "R-G-car-inContextOf-C-limit");
    assert_eq!(call(&svc, "POST", "/edges?expected_version=1", &edge).await.0, StatusCode::CONFLICT);

    assert_eq!(call(&svc, "DELETE", "/elements/C-limit", "").await.0, StatusCode::OK);
    assert_eq!(call(&svc, "DELETE", "/elements/C-limit", "").await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&svc, "PUT", "/case", "").await.0, StatusCode::METHOD_NOT_ALLOWED);

    let (s, body) = call(&svc, "POST", "/whatif/invalidate", r#"{"target":"kind:Solution"}"#).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let (_, body) = call(&svc, "GET", "/case", "").await;
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["version"], 3);
}

#[tokio::test]
async fn templates_and_commit_hooks() {
    let svc = service(&fixture("llm"));
    let hook = json!({
        "id": "DE-04",
        "trigger": { "type": "on_commit", "selector": "kind:Artefact & statement~\"adversarialSample\"" },
        "action": {
            "type": "create_defeater",
            "target": "kind:Goal & statement~\"Attack Resistance\"",
            "statement": "Adversarial sample {trigger} defeats {target}"
        }
    });
    assert_eq!(call(&svc, "POST", "/hooks", &hook.to_string()).await.0, StatusCode::OK);
    let delta = json!({
        "add_containers": [{ "id": "adversarialSample-17", "kind": "Artefact", "name": "adversarialSample-17" }],
        "add_members": [["LLM", "adversarialSample-17"]]
    });
    let (s, body) = call(&svc, "POST", "/delta", &delta.to_string()).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["version"], 2);
    assert_eq!(v["hooks"][0]["created"][0], "DEF-adversarialSample-17-G-attack-resistance");

    let (s, body) = call(
        &svc,
        "POST",
        "/templates/TPL-attack/instantiate",
        r#"{"bindings":{"attack prompt":"DAN 7.0"}}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["created"].as_array().unwrap().len(), 6);
    let (s, _) = call(&svc, "POST", "/templates/TPL-attack/instantiate", "{}").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
