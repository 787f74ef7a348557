use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine as _;
use http_body_util::BodyExt;
use scanlab_collect::{router, AppState, CollectConfig, ImagePool};
use scanlab_core::dataset::load_observations;
use scanlab_core::Stimulus;
use serde_json::{json, Value};
use tower::ServiceExt;

fn stimuli(n: usize, w: usize, h: usize) -> Vec<Stimulus> {
    (0..n)
        .map(|i| {
            let gray: Vec<f64> = (0..w * h).map(|p| ((p * 31 + i * 7) % 101) as f64 / 100.0).collect();
            Stimulus::from_gray(format!("img{i:02}.png"), w, h, &gray).unwrap()
        })
        .collect()
}

struct Harness {
    app: axum::Router,
    log: std::path::PathBuf,
    _dir: tempfile::TempDir,
}

fn harness(n: usize, configure: impl FnOnce(&mut CollectConfig)) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("obs.jsonl");
    let mut config = CollectConfig::new(dir.path(), &log);
    config.pixels_per_degree = 4.0;
    config.blur_sigma = 3.0;
    configure(&mut config);
    let pool = ImagePool::new(stimuli(n, 24, 18), config.blur_sigma).unwrap();
    Harness {
        app: router(AppState::new(pool, &config).unwrap()),
        log,
        _dir: dir,
    }
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &axum::Router) -> (String, usize) {
    let (st, v) = call(app, "POST", "/session", None).await;
    assert_eq!(st, StatusCode::OK);
    (v["session_id"].as_str().unwrap().to_string(), v["total_images"].as_u64().unwrap() as usize)
}

#[tokio::test]
async fn session_sizes_and_ids() {
    for (pool, expect) in [(50, 50), (20, 20), (60, 50)] {
        let h = harness(pool, |_| {});
        let (a, total) = new_session(&h.app).await;
        assert_eq!(total, expect);
        let (b, _) = new_session(&h.app).await;
        assert_ne!(a, b);
    }
    let h = harness(0, |_| {});
    let (st, v) = call(&h.app, "POST", "/session", None).await;
    assert_eq!(st, StatusCode::SERVICE_UNAVAILABLE);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn image_and_clicks() {
    let h = harness(3, |_| {});
    let (id, _) = new_session(&h.app).await;
    let (st, _) = call(&h.app, "GET", "/session/nope/image", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let (st, img) = call(&h.app, "GET", &format!("/session/{id}/image"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(img["clicks_used"], 0);
    assert_eq!((img["width"].as_u64(), img["height"].as_u64()), (Some(24), Some(18)));
    let blurred = base64::engine::general_purpose::STANDARD.decode(img["blurred_png"].as_str().unwrap()).unwrap();
    let decoded = image::load_from_memory(&blurred).unwrap().to_rgb8();
    let clean = stimuli(3, 24, 18).into_iter().find(|s| s.image_id == img["image_id"].as_str().unwrap()).unwrap();
    assert_ne!(decoded, clean.to_rgb8());

    let click = |x: f64, y: f64| json!({ "x": x, "y": y });
    let (st, _) = call(&h.app, "POST", &format!("/session/{id}/click"), Some(click(24.0, 3.0))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, first) = call(&h.app, "POST", &format!("/session/{id}/click"), Some(click(10.0, 9.0))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(first["clicks_remaining"], 9);
    let patch_bytes = base64::engine::general_purpose::STANDARD.decode(first["patch_png"].as_str().unwrap()).unwrap();
    let patch = image::load_from_memory(&patch_bytes).unwrap().to_rgba8();
    let (ox, oy) = (first["patch_origin"][0].as_u64().unwrap() as u32, first["patch_origin"][1].as_u64().unwrap() as u32);
    let centre = patch.get_pixel(10 - ox, 9 - oy);
    assert_eq!(centre[3], 255);
    assert_eq!(&centre.0[..3], &clean.to_rgb8().get_pixel(10, 9).0);

    for _ in 0..2 {
        call(&h.app, "POST", &format!("/session/{id}/click"), Some(click(3.0, 4.0))).await;
    }
    let (_, img) = call(&h.app, "GET", &format!("/session/{id}/image"), None).await;
    assert_eq!(img["clicks_used"], 3);
    let mut last = Value::Null;
    for _ in 3..10 {
        let (st, v) = call(&h.app, "POST", &format!("/session/{id}/click"), Some(click(5.0, 5.0))).await;
        assert_eq!(st, StatusCode::OK);
        last = v;
    }
    assert_eq!(last["clicks_remaining"], 0);
    let (st, _) = call(&h.app, "POST", &format!("/session/{id}/click"), Some(click(5.0, 5.0))).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn submissions_persist_and_advance() {
    let h = harness(50, |_| {});
    let (id, total) = new_session(&h.app).await;
    assert_eq!(total, 50);
    let (st, _) = call(&h.app, "POST", &format!("/session/{id}/caption"), Some(json!({ "text": "  " }))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, img) = call(&h.app, "GET", &format!("/session/{id}/image"), None).await;
    let first_id = img["image_id"].as_str().unwrap().to_string();
    for i in 0..5 {
        call(&h.app, "POST", &format!("/session/{id}/click"), Some(json!({ "x": i as f64, "y": 2.0 }))).await;
    }
    let (st, v) = call(&h.app, "POST", &format!("/session/{id}/caption"), Some(json!({ "text": "a grey pattern", "image_id": first_id }))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["next"], true);
    // Resubmitting the same image is a double submit.
    let (st, _) = call(&h.app, "POST", &format!("/session/{id}/caption"), Some(json!({ "text": "again", "image_id": first_id }))).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (st, v) = call(&h.app, "POST", &format!("/session/{id}/skip"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["next"], true);
    let mut next = Value::Null;
    for _ in 2..50 {
        let (st, v) = call(&h.app, "POST", &format!("/session/{id}/skip"), Some(json!({}))).await;
        assert_eq!(st, StatusCode::OK);
        next = v["next"].clone();
    }
    assert_eq!(next, false);
    let (st, _) = call(&h.app, "GET", &format!("/session/{id}/image"), None).await;
    assert_eq!(st, StatusCode::GONE);
    let (st, _) = call(&h.app, "POST", &format!("/session/{id}/click"), Some(json!({ "x": 1.0, "y": 1.0 }))).await;
    assert_eq!(st, StatusCode::GONE);
    let (st, _) = call(&h.app, "POST", &format!("/session/{id}/skip"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (obs, errors) = load_observations(&h.log).unwrap();
    assert!(errors.is_empty());
    assert_eq!(obs.len(), 50);
    assert_eq!(obs[0].image_id, first_id);
    assert_eq!(obs[0].clicks.len(), 5);
    assert_eq!(obs[0].caption, "a grey pattern");
    assert!(!obs[0].skipped);
    assert!(obs[1].skipped && obs[1].clicks.is_empty());
    let t: Vec<f64> = obs[0].clicks.iter().map(|c| c.t_ms.unwrap()).collect();
    assert!(t.windows(2).all(|w| w[0] <= w[1]));
    let mut ids: Vec<&str> = obs.iter().map(|o| o.image_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 50);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let h = harness(2, |c| c.session_expiry = Duration::from_millis(20));
    let (id, _) = new_session(&h.app).await;
    let (st, _) = call(&h.app, "GET", &format!("/session/{id}/image"), None).await;
    assert_eq!(st, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(60)).await;
    let (st, _) = call(&h.app, "GET", &format!("/session/{id}/image"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}
