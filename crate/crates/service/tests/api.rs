use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use attnclust_core::grabcut::{grabcut_segment, Mask, Rect, Stroke, StrokeKind};
use attnclust_core::synthetic::two_color_image;
use attnclust_service::{router, router_with_store, ServiceConfig, SessionStore};

async fn send(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn send_json(app: &Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = send(app, method, uri, body.to_string().into_bytes()).await;
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

async fn create(app: &Router, image: Vec<u8>) -> String {
    let (status, bytes) = send(app, "POST", "/sessions", image).await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    v["id"].as_str().unwrap().to_string()
}

fn bbox_json(r: Rect) -> Value {
    json!({"x": r.x, "y": r.y, "w": r.w, "h": r.h})
}

fn app() -> Router {
    router(&ServiceConfig::default())
}

#[tokio::test]
async fn create_and_describe() {
    let app = app();
    let scene = two_color_image(0);
    let id = create(&app, scene.image.to_ppm()).await;
    let (status, v) = send_json(&app, "GET", &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((v["width"].as_u64(), v["height"].as_u64()), (Some(64), Some(64)));
    assert_eq!(v["revision"], 0);
    assert_eq!(v["has_mask"], false);

    let other = create(&app, scene.image.to_ppm()).await;
    assert_ne!(id, other);

    let (status, bytes) = send(&app, "POST", "/sessions", vec![]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(err["error"], "bad_request");
    assert!(err["detail"].as_str().unwrap().contains("empty"));
}

#[tokio::test]
async fn unknown_session_is_404() {
    let app = app();
    for (m, uri) in [
        ("GET", "/sessions/nope"),
        ("GET", "/sessions/nope/mask"),
        ("DELETE", "/sessions/nope"),
    ] {
        let (status, v) = send_json(&app, m, uri, Value::Null).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{m} {uri}");
        assert_eq!(v["error"], "not_found");
    }
    let (status, _) = send_json(&app, "POST", "/sessions/nope/bbox", json!({"x":1,"y":1,"w":2,"h":2})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bbox_validation_and_revisions() {
    let app = app();
    let scene = two_color_image(1);
    let id = create(&app, scene.image.to_ppm()).await;
    let uri = format!("/sessions/{id}/bbox");

    let (status, v) = send_json(&app, "POST", &uri, bbox_json(Rect::new(0, 0, 64, 64))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["detail"].as_str().unwrap().contains("background"));
    let (status, _) = send_json(&app, "POST", &uri, bbox_json(Rect::new(60, 60, 10, 10))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, "POST", &uri, b"{not json".to_vec()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = send_json(&app, "POST", &uri, bbox_json(scene.bbox)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["revision"], 1);
}

#[tokio::test]
async fn ordering_conflicts() {
    let app = app();
    let id = create(&app, two_color_image(2).image.to_ppm()).await;
    let (status, v) = send_json(&app, "POST", &format!("/sessions/{id}/strokes"), json!({"strokes": []})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");
    let (status, _) = send_json(&app, "POST", &format!("/sessions/{id}/iterate"), json!({"rounds": 1})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = send_json(&app, "GET", &format!("/sessions/{id}/mask"), Value::Null).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn strokes_iterate_and_mask() {
    let app = app();
    let scene = two_color_image(3);
    let id = create(&app, scene.image.to_ppm()).await;
    send_json(&app, "POST", &format!("/sessions/{id}/bbox"), bbox_json(scene.bbox)).await;

    let strokes_uri = format!("/sessions/{id}/strokes");
    let (status, v) = send_json(&app, "POST", &strokes_uri, json!({"strokes": []})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["revision"], 2);
    let (status, _) = send_json(
        &app,
        "POST",
        &strokes_uri,
        json!({"strokes": [{"kind": "fg", "points": [[0, 0], [64, 0]]}]}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let iter_uri = format!("/sessions/{id}/iterate");
    let (status, v) = send_json(&app, "POST", &iter_uri, json!({"rounds": 0})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["revision"], 3);
    assert_eq!(v["rounds_run"], 0);

    let (status, v) = send_json(&app, "POST", &iter_uri, json!({"rounds": 5})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["revision"], 4);
    assert_eq!(v["foreground"].as_u64().unwrap() as usize, scene.truth.foreground_count());

    let (status, pgm) = send(&app, "GET", &format!("/sessions/{id}/mask"), vec![]).await;
    assert_eq!(status, StatusCode::OK);
    let mask = Mask::from_pgm(&pgm).unwrap();
    assert_eq!(mask, scene.truth);
    let header_len = b"P5\n64 64\n255\n".len();
    assert!(pgm[header_len..].iter().all(|&b| b == 0 || b == 255));

    // more rounds never raise the energy
    send_json(&app, "POST", &iter_uri, json!({"rounds": 3})).await;
    let (_, v) = send_json(&app, "GET", &format!("/sessions/{id}"), Value::Null).await;
    let energy: Vec<f64> = serde_json::from_value(v["energy_history"].clone()).unwrap();
    assert!(!energy.is_empty());
    assert!(energy.windows(2).all(|w| w[1] <= w[0]), "{energy:?}");
}

#[tokio::test]
async fn background_strokes_hold_and_mask_matches_library() {
    let app = app();
    for seed in 0..3 {
        let scene = two_color_image(seed);
        let id = create(&app, scene.image.to_ppm()).await;
        let (_, summary) = send_json(&app, "GET", &format!("/sessions/{id}"), Value::Null).await;
        let session_seed = summary["seed"].as_u64().unwrap();
        let b = scene.bbox;
        let stroke = Stroke {
            kind: StrokeKind::Bg,
            points: vec![
                [(b.x + 2) as i64, (b.y + 2) as i64],
                [(b.x + b.w - 3) as i64, (b.y + b.h - 3) as i64],
            ],
        };
        send_json(&app, "POST", &format!("/sessions/{id}/bbox"), bbox_json(b)).await;
        let (status, _) = send_json(
            &app,
            "POST",
            &format!("/sessions/{id}/strokes"),
            json!({ "strokes": [stroke] }),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        send_json(&app, "POST", &format!("/sessions/{id}/iterate"), json!({"rounds": 5})).await;
        let (_, pgm) = send(&app, "GET", &format!("/sessions/{id}/mask"), vec![]).await;

        let expected = grabcut_segment(&scene.image, b, std::slice::from_ref(&stroke), 5, session_seed).unwrap();
        assert_eq!(pgm, expected.to_pgm(), "seed {seed}");
        let mask = Mask::from_pgm(&pgm).unwrap();
        for (x, y) in stroke.rasterize() {
            assert!(!mask.get(x as usize, y as usize));
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_are_serialized() {
    let app = app();
    let scene = two_color_image(5);
    let id = create(&app, scene.image.to_ppm()).await;
    send_json(&app, "POST", &format!("/sessions/{id}/bbox"), bbox_json(scene.bbox)).await;

    let mut handles = Vec::new();
    for i in 0..16 {
        let app = app.clone();
        let id = id.clone();
        handles.push(tokio::spawn(async move {
            let (uri, body) = if i % 2 == 0 {
                (format!("/sessions/{id}/iterate"), json!({"rounds": 1}))
            } else {
                (format!("/sessions/{id}/strokes"), json!({"strokes": []}))
            };
            let (status, v) = send_json(&app, "POST", &uri, body).await;
            assert_eq!(status, StatusCode::OK);
            v["revision"].as_u64().unwrap()
        }));
    }
    let mut seen = BTreeSet::new();
    for h in handles {
        assert!(seen.insert(h.await.unwrap()), "revision repeated");
    }
    assert_eq!(seen, (2..=17).collect());
    let (_, v) = send_json(&app, "GET", &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(v["revision"], 17);
}

#[tokio::test]
async fn delete_and_expiry() {
    let store = Arc::new(SessionStore::new(Duration::from_millis(50)));
    let app = router_with_store(&ServiceConfig::default(), Arc::clone(&store));
    let id = create(&app, two_color_image(6).image.to_ppm()).await;
    assert_eq!(store.len(), 1);
    let (status, _) = send(&app, "DELETE", &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let id = create(&app, two_color_image(6).image.to_ppm()).await;
    tokio::time::sleep(Duration::from_millis(120)).await;
    let (status, _) = send(&app, "GET", &format!("/sessions/{id}"), vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(store.is_empty());
}

#[tokio::test]
async fn serves_static_ui_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    std::fs::write(dir.join("index.html"), "<html>annotate</html>").unwrap();
    std::fs::write(dir.join("app.js"), "console.log(1)").unwrap();
    let app = router(&ServiceConfig {
        ui_dir: Some(dir.clone()),
        ..ServiceConfig::default()
    });
    let (status, body) = send(&app, "GET", "/", vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>annotate</html>");
    let (status, body) = send(&app, "GET", "/app.js", vec![]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"console.log(1)");
    let (status, _) = send(&app, "GET", "/missing.css", vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    // API routes still take precedence
    let (status, _) = send(&app, "GET", "/sessions/x", vec![]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
