#![allow(dead_code)]

use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;
use ucrs_core::control::{train_category_predictor, PredictorConfig};
use ucrs_core::data::synthetic::{generate, SyntheticConfig};
use ucrs_core::data::{prepare, save_dataset, DatasetManifest, PrepareConfig};
use ucrs_core::model::{train, FeatureLayout, ModelKind, TrainConfig};
use ucrs_service::{router, AppState, ServingSnapshot, SnapshotSource, MODEL_FILE, PREDICTOR_FILE};

/// Synthetic snapshot directory with a briefly trained FM and predictor.
pub fn snapshot_dir(root: &Path) -> PathBuf {
    let (log, users, items) = generate(&SyntheticConfig::default());
    let (d, _) = prepare(log, &users, &items, &PrepareConfig::default()).unwrap();
    let dir = root.join("snap");
    save_dataset(&d, &dir, &DatasetManifest::describe(&d)).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        dim: 8,
        batch_size: 256,
        ..TrainConfig::default()
    };
    let (model, _) = train(&d, &cfg, ModelKind::Fm, FeatureLayout::for_dataset(&d)).unwrap();
    model.save(dir.join(MODEL_FILE), Some(cfg.seed)).unwrap();
    let (pred, _) = train_category_predictor(
        &d,
        &PredictorConfig {
            epochs: 20,
            ..PredictorConfig::default()
        },
    )
    .unwrap();
    pred.save(dir.join(PREDICTOR_FILE), None).unwrap();
    dir
}

pub fn app(dir: &Path) -> (Router, AppState) {
    let snap = ServingSnapshot::load(SnapshotSource::dir(dir), None).unwrap();
    snap.warm();
    let state = AppState::new(snap);
    (router(state.clone(), &[]).unwrap(), state)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, serde_json::Value) {
    let (s, b) = call(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

pub async fn post_json(app: &Router, uri: &str, body: &str) -> (StatusCode, serde_json::Value) {
    let (s, b) = call(app, "POST", uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap())
}
