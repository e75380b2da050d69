//! In-process contract tests for the HTTP service.

mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use tower::ServiceExt;

use trivec_cli::service::{
    router, AnchorSeedMode, HealthResponse, RecommendResponse, ServiceConfig, ServiceState,
};

fn config_for(artifacts: &common::Artifacts) -> ServiceConfig {
    ServiceConfig {
        model_path: artifacts.model_path.clone(),
        index_path: artifacts.index_path.clone(),
        ..ServiceConfig::default()
    }
}

fn post_json(body: &str) -> Request<Body> {
    Request::builder()
        .method("POST")
        .uri("/v1/recommendations")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

async fn body_bytes(response: axum::response::Response) -> Vec<u8> {
    axum::body::to_bytes(response.into_body(), usize::MAX)
        .await
        .unwrap()
        .to_vec()
}

#[test]
fn startup_fails_fast_on_missing_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        model_path: dir.path().join("absent.t2vm"),
        index_path: dir.path().join("absent.t2vi"),
        ..ServiceConfig::default()
    };
    let err = ServiceState::load(&config).err().expect("load must fail").to_string();
    assert!(err.contains("absent.t2vm"), "error should name the path: {err}");
}

#[test]
fn startup_fails_fast_on_missing_index() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 20, 4, 4, 1);
    let config = ServiceConfig {
        model_path: artifacts.model_path,
        index_path: dir.path().join("nope.t2vi"),
        ..ServiceConfig::default()
    };
    let err = ServiceState::load(&config).err().expect("load must fail").to_string();
    assert!(err.contains("nope.t2vi"), "error should name the path: {err}");
}

#[test]
fn startup_rejects_mismatched_index() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 20, 4, 4, 2);
    // Overwrite the index with one from a different catalog size.
    let other_dir = tempfile::tempdir().unwrap();
    let other = common::write_artifacts(other_dir.path(), 9, 4, 4, 3);
    std::fs::copy(&other.index_path, &artifacts.index_path).unwrap();
    let err = ServiceState::load(&config_for(&artifacts)).err().expect("load must fail").to_string();
    assert!(err.contains("does not match"), "{err}");
}

#[tokio::test]
async fn health_reports_model_metadata_from_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 30, 5, 6, 4);
    let state = Arc::new(ServiceState::load(&config_for(&artifacts)).unwrap());
    let app = router(state, Duration::from_secs(1));

    let response = app
        .oneshot(Request::get("/v1/health").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let health: HealthResponse = serde_json::from_slice(&body_bytes(response).await).unwrap();
    assert_eq!(health.status, "ready");
    assert_eq!(health.items, 30);
    assert_eq!(health.users, 5);
    assert_eq!(health.backend, "exact");

    // Cross-check dim against the raw model file header: magic(4),
    // version u32, m u64, n u64, then d u32 at offset 24.
    let bytes = std::fs::read(&artifacts.model_path).unwrap();
    let d = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    assert_eq!(health.dim, d as usize);
}

#[tokio::test]
async fn recommend_returns_k_items_outside_the_basket() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 40, 6, 8, 5);
    let state = Arc::new(ServiceState::load(&config_for(&artifacts)).unwrap());
    let app = router(state, Duration::from_secs(1));

    let request = r#"{"user_id":"u2","basket":["i1","i5","i9"],"k":7}"#;
    let response = app.oneshot(post_json(request)).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let body: RecommendResponse = serde_json::from_slice(&body_bytes(response).await).unwrap();
    assert_eq!(body.items.len(), 7);
    assert!(!body.flags.fallback);
    assert!(body.flags.unknown_items.is_empty());
    for item in &body.items {
        assert!(!["i1", "i5", "i9"].contains(&item.item_id.as_str()));
        assert!(item.item_id.starts_with('i'));
    }
    assert!(body.latency_ms >= 0.0);
}

#[tokio::test]
async fn unknown_basket_falls_back_and_echoes_unknowns() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 25, 4, 4, 6);
    let state = Arc::new(ServiceState::load(&config_for(&artifacts)).unwrap());
    let app = router(state, Duration::from_secs(1));

    let request = r#"{"basket":["mystery-1","mystery-2"],"k":3}"#;
    let response = app.oneshot(post_json(request)).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let body: RecommendResponse = serde_json::from_slice(&body_bytes(response).await).unwrap();
    assert!(body.flags.fallback);
    assert_eq!(body.flags.unknown_items, vec!["mystery-1", "mystery-2"]);
    assert_eq!(body.items.len(), 3);
}

#[tokio::test]
async fn unknown_user_is_served_anonymously() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 25, 4, 4, 7);
    let state = Arc::new(ServiceState::load(&config_for(&artifacts)).unwrap());
    let app = router(state.clone(), Duration::from_secs(1));

    let with_unknown = r#"{"user_id":"nobody","basket":["i3"],"k":4}"#;
    let anonymous = r#"{"basket":["i3"],"k":4}"#;
    let r1 = app.clone().oneshot(post_json(with_unknown)).await.unwrap();
    let r2 = app.oneshot(post_json(anonymous)).await.unwrap();
    let b1: RecommendResponse = serde_json::from_slice(&body_bytes(r1).await).unwrap();
    let b2: RecommendResponse = serde_json::from_slice(&body_bytes(r2).await).unwrap();
    let ids = |b: &RecommendResponse| b.items.iter().map(|i| i.item_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&b1), ids(&b2));
}

#[tokio::test]
async fn malformed_body_is_a_client_error() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 10, 2, 4, 8);
    let state = Arc::new(ServiceState::load(&config_for(&artifacts)).unwrap());
    let app = router(state, Duration::from_secs(1));

    for bad in [
        "not json at all",
        r#"{"basket": 7}"#,
        r#"{"no_basket_field": []}"#,
    ] {
        let response = app.clone().oneshot(post_json(bad)).await.unwrap();
        assert!(
            response.status().is_client_error(),
            "body {bad:?} gave {}",
            response.status()
        );
    }
}

#[tokio::test]
async fn out_of_range_k_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 10, 2, 4, 9);
    let state = Arc::new(ServiceState::load(&config_for(&artifacts)).unwrap());
    let app = router(state, Duration::from_secs(1));

    for k in ["0", "501"] {
        let body = format!(r#"{{"basket":["i1"],"k":{k}}}"#);
        let response = app.clone().oneshot(post_json(&body)).await.unwrap();
        assert_eq!(response.status(), StatusCode::BAD_REQUEST, "k={k}");
    }
}

#[tokio::test]
async fn fixed_seed_mode_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = common::write_artifacts(dir.path(), 60, 5, 8, 10);
    let mut config = config_for(&artifacts);
    config.anchor_seed = AnchorSeedMode::Fixed(7);
    let state = Arc::new(ServiceState::load(&config).unwrap());
    let app = router(state, Duration::from_secs(1));

    // A large basket so anchor sampling actually randomizes.
    let items: Vec<String> = (0..14).map(|i| format!("\"i{i}\"")).collect();
    let request = format!(r#"{{"user_id":"u1","basket":[{}],"k":8}}"#, items.join(","));

    let mut bodies = Vec::new();
    for _ in 0..2 {
        let response = app.clone().oneshot(post_json(&request)).await.unwrap();
        assert_eq!(response.status(), StatusCode::OK);
        let mut v: serde_json::Value = serde_json::from_slice(&body_bytes(response).await).unwrap();
        // latency_ms is a measurement; everything else must replay.
        v.as_object_mut().unwrap().remove("latency_ms");
        bodies.push(serde_json::to_vec(&v).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}
