mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{app, call, get_json, post_json, snapshot_dir};
use serde_json::Value;
use tower::ServiceExt;
use ucrs_core::detect::mcd;

fn items(slate: &Value) -> Vec<String> {
    slate["items"].as_array().unwrap().iter().map(|i| i["item"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn recommendations_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(&snapshot_dir(tmp.path()));

    let (s, v) = get_json(&app, "/users/u0/recommendations").await;
    assert_eq!(s, StatusCode::OK);
    let scores: Vec<f64> = v["items"].as_array().unwrap().iter().map(|i| i["score"].as_f64().unwrap()).collect();
    assert_eq!(scores.len(), 10);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(!v["items"][0]["categories"].as_array().unwrap().is_empty());
    assert_eq!(v["provenance"]["source"], "baseline");

    let (s, v) = get_json(&app, "/users/u0/recommendations?k=0").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["items"].as_array().unwrap().is_empty());

    let (s, v) = get_json(&app, "/users/u0/recommendations?k=150").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["items"].as_array().unwrap().len(), 150);

    let (s, v) = get_json(&app, "/users/nobody/recommendations").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_user");

    let (s, v) = get_json(&app, "/users/u0/recommendations?k=-1").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "bad_request");

    let (s, v) = get_json(&app, "/no/such/route").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
}

#[tokio::test]
async fn precomputed_prefix_matches_full_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(&snapshot_dir(tmp.path()));
    let snap = state.current();
    let (_, deep) = get_json(&app, "/users/u3/recommendations?k=120").await;
    let u = snap.user_index("u3").unwrap();
    let (fresh, _) = snap.rank_baseline(u, 120);
    let fresh: Vec<String> = fresh.iter().map(|r| snap.dataset.items.raw(r.item).to_string()).collect();
    assert_eq!(items(&deep), fresh);
    let (_, top) = get_json(&app, "/users/u3/recommendations?k=10").await;
    assert_eq!(items(&top), fresh[..10].to_vec());
}

#[tokio::test]
async fn controls_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(&snapshot_dir(tmp.path()));
    let snap = state.current();

    // item commands with every coefficient off leave the slate untouched
    for body in [
        r#"{"type":"item_fine","target":"cat1","alpha":0,"beta":0}"#,
        r#"{"type":"item_coarse","alpha":0,"beta":0}"#,
    ] {
        let (s, v) = post_json(&app, "/users/u0/controls", body).await;
        assert_eq!(s, StatusCode::OK, "{body}: {v}");
        assert_eq!(items(&v["adjusted"]), items(&v["baseline"]), "{body}");
        assert!(v["delta"]["entering"].as_array().unwrap().is_empty());
        assert!(v["delta"]["leaving"].as_array().unwrap().is_empty());
    }

    // full β fills the slate with the target when enough target items exist
    let (s, v) = post_json(&app, "/users/u0/controls", r#"{"type":"item_fine","target":"cat4","beta":1}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["delta"]["after"]["tcd"].as_f64().unwrap(), 1.0);
    assert!(v["delta"]["before"]["tcd"].as_f64().unwrap() <= 1.0);
    assert_eq!(v["adjusted"]["provenance"]["targets"], serde_json::json!(["cat4"]));
    assert_eq!(v["adjusted"]["provenance"]["beta"].as_f64().unwrap(), 1.0);
    let n_enter = v["delta"]["entering"].as_array().unwrap().len();
    assert_eq!(n_enter, v["delta"]["leaving"].as_array().unwrap().len());

    // mcd before matches the detect module on the baseline slate
    let u = snap.user_index("u0").unwrap();
    let base: Vec<u32> = items(&v["baseline"]).iter().map(|i| snap.dataset.items.get(i).unwrap()).collect();
    let h = &snap.dataset.histories().train[u as usize];
    let want = mcd(&base, h, &snap.dataset, 10).unwrap();
    assert_eq!(v["delta"]["before"]["mcd"].as_f64().unwrap(), want);

    // a user edit at α = 0 still changes the profile the model scores
    let (s, v) = post_json(&app, "/users/u0/controls", r#"{"type":"user_fine","target":"gender=M","alpha":0}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_ne!(items(&v["adjusted"]), items(&v["baseline"]));

    // u0 is F in the synthetic data
    let (s, v) = post_json(&app, "/users/u0/controls", r#"{"type":"user_fine","target":"gender=F","alpha":0.3}"#).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "precondition_failed");

    let (s, v) = post_json(&app, "/users/u0/controls", r#"{"type":"item_coarse","use_prediction":true,"k_targets":2,"beta":0.1}"#).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["adjusted"]["provenance"]["predicted_targets"], true);
    assert_eq!(v["adjusted"]["provenance"]["targets"].as_array().unwrap().len(), 2);

    for bad in ["not json", r#"{"type":"teleport"}"#, r#"{"type":"item_fine","target":"cat1","beta":2}"#, r#"{"type":"item_fine","bogus":1}"#] {
        let (s, v) = post_json(&app, "/users/u0/controls", bad).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
        assert_eq!(v["code"], "invalid_command", "{bad}");
    }

    let (s, v) = post_json(&app, "/users/ghost/controls", r#"{"type":"item_coarse"}"#).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_user");
}

#[tokio::test]
async fn bubble_report_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(&snapshot_dir(tmp.path()));
    let snap = state.current();
    let (s, v) = get_json(&app, "/users/u5/bubble-report").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["severity_rule"], ucrs_core::detect::SEVERITY_RULE);
    let sev = v["severity"].as_u64().unwrap();
    assert!((1..=5).contains(&sev));
    assert_eq!(v["group"], "gender=M");
    let windows = v["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 2);
    for w in windows {
        let iso = w["iso_index"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&iso));
    }
    for key in ["history_distribution", "recommendation_distribution"] {
        let total: f64 = v[key].as_array().unwrap().iter().map(|c| c["share"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{key} {total}");
        assert_eq!(v[key].as_array().unwrap().len(), snap.dataset.n_categories());
    }
    // recommendation MCD equals the offline value on the baseline slate
    let u = snap.user_index("u5").unwrap();
    let (slate, _) = snap.baseline(u, 10);
    let slate: Vec<u32> = slate.iter().map(|r| r.item).collect();
    let h = &snap.dataset.histories().train[u as usize];
    assert_eq!(windows[1]["mcd"].as_f64().unwrap(), mcd(&slate, h, &snap.dataset, 10).unwrap());

    let (s, _) = get_json(&app, "/users/ghost/bubble-report").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn catalog_and_history() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(&snapshot_dir(tmp.path()));
    let snap = state.current();

    let (_, cats) = get_json(&app, "/catalog/categories").await;
    let names: Vec<&str> = cats.as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, snap.dataset.category_names.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, c) in cats.as_array().unwrap().iter().enumerate() {
        assert_eq!(c["index"].as_u64().unwrap() as usize, i);
    }

    let (_, feats) = get_json(&app, "/catalog/user-features").await;
    let groups = feats.as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0]["name"], "gender");
    assert!(groups[0]["features"].as_array().unwrap().iter().any(|f| f == "gender=F"));

    let (s, h) = get_json(&app, "/users/u1/history").await;
    assert_eq!(s, StatusCode::OK);
    let entries = h["items"].as_array().unwrap();
    let u = snap.user_index("u1").unwrap();
    assert_eq!(entries.len(), snap.dataset.histories().train[u as usize].len());
    let ts: Vec<u64> = entries.iter().map(|e| e["timestamp"].as_u64().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    assert!(entries.iter().all(|e| !e["categories"].as_array().unwrap().is_empty()));

    let (s, v) = get_json(&app, "/users/ghost/history").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_user");
}

#[tokio::test]
async fn repeated_requests_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(&snapshot_dir(tmp.path()));
    let requests = [
        ("GET", "/users/u2/recommendations?k=20", None),
        ("GET", "/users/u2/bubble-report", None),
        ("GET", "/users/u2/history", None),
        ("GET", "/catalog/categories", None),
        ("GET", "/catalog/user-features", None),
        ("GET", "/healthz", None),
        ("POST", "/users/u2/controls", Some(r#"{"type":"item_coarse","beta":0.05,"alpha":0.2}"#)),
        ("POST", "/users/u2/controls", Some(r#"{"type":"user_coarse","target":"gender=F","alpha":0.4}"#)),
    ];
    for (m, uri, body) in requests {
        let a = call(&app, m, uri, body).await;
        let b = call(&app, m, uri, body).await;
        assert_eq!(a.0, b.0, "{uri}");
        assert_eq!(a.1, b.1, "{uri}");
    }
}

#[tokio::test]
async fn health_and_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(&snapshot_dir(tmp.path()));
    let (_, h) = get_json(&app, "/healthz").await;
    assert_eq!(h["status"], "ok");
    let version = h["version"].as_str().unwrap().to_string();
    assert_eq!(version.len(), 16);
    let before = state.current();

    let (s, r) = post_json(&app, "/admin/reload", "").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["version"], version.as_str());
    assert!(!std::sync::Arc::ptr_eq(&before, &state.current()));

    let (s, _) = call(&app, "GET", "/admin/reload", None).await;
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
}

#[tokio::test]
async fn cors_header_follows_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, state) = app(&snapshot_dir(tmp.path()));
    let with = ucrs_service::router(state.clone(), &["http://localhost:5173".into()]).unwrap();
    let req = || {
        Request::builder()
            .uri("/healthz")
            .header("origin", "http://localhost:5173")
            .body(Body::empty())
            .unwrap()
    };
    let resp = with.oneshot(req()).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    let without = ucrs_service::router(state, &[]).unwrap();
    let resp = without.oneshot(req()).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}
