use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hetpbo::service::{router, AppState, EventStore};
use hetpbo_core::benchmarks::{sample_anchors, BenchmarkSpec};
use hetpbo_core::engine::{Engine, EngineConfig};
use hetpbo_core::kde::{default_bandwidth_bounds, loo_bandwidth, AnchorModel};
use hetpbo_core::math::sampling::{halton, stream};
use hetpbo_core::math::BoxDomain;
use hetpbo_core::preference::DuelRecord;

fn app(dir: &std::path::Path) -> Router {
    router(AppState::open(EventStore::open(dir).unwrap()).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call_text(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

async fn call_text(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn create(app: &Router, lower: &[f64], upper: &[f64]) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(json!({"lower": lower, "upper": upper, "noise_scale": 0.1}))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn point(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

/// Session on [0, 1] with evenly spread anchors, already frozen.
async fn active_session(app: &Router) -> String {
    let id = create(app, &[0.0], &[1.0]).await;
    let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 + 0.5) / 12.0]).collect();
    let (s, _) = call(app, "POST", &format!("/sessions/{id}/anchors"), Some(json!({"points": pts}))).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(app, "POST", &format!("/sessions/{id}/freeze"), None).await;
    assert_eq!(s, StatusCode::OK);
    id
}

async fn duel(app: &Router, id: &str) -> (Vec<f64>, Vec<f64>, Value) {
    let (s, v) = call(app, "GET", &format!("/sessions/{id}/duel"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    (point(&v["challenger"]), point(&v["reference"]), v)
}

async fn answer(app: &Router, id: &str, challenger_won: bool) {
    let winner = if challenger_won { "challenger" } else { "reference" };
    let (s, v) = call(app, "POST", &format!("/sessions/{id}/preference"), Some(json!({"winner": winner}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
}

#[tokio::test]
async fn create_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let a = create(&app, &[0.0, -1.0], &[1.0, 1.0]).await;
    let b = create(&app, &[0.0, -1.0], &[1.0, 1.0]).await;
    assert_ne!(a, b);
    let (s, v) = call(&app, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "collecting_anchors");
    assert_eq!(v["n_anchors"], 0);

    let (s, v) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");

    for bad in [
        json!({"lower": [1.0], "upper": [0.0], "noise_scale": 0.1}),
        json!({"lower": [0.0], "upper": [1.0], "noise_scale": -1.0}),
        json!({"lower": [0.0, 0.0], "upper": [1.0], "noise_scale": 0.1}),
    ] {
        let (s, v) = call(&app, "POST", "/sessions", Some(bad)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
    }
}

#[tokio::test]
async fn anchors_and_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, &[0.0], &[2.0]).await;
    let uri = format!("/sessions/{id}/anchors");

    let (s, v) = call(&app, "POST", &uri, Some(json!({"points": [[0.0], [1.0]]}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["n"], 2);
    let domain = BoxDomain::new(vec![0.0], vec![2.0]).unwrap();
    let expected = loo_bandwidth(&[vec![0.0], vec![1.0]], default_bandwidth_bounds(&domain)).unwrap().bandwidth;
    assert_eq!(v["bandwidth"].as_f64().unwrap(), expected);

    // duplicates are legal anchors
    let (s, v) = call(&app, "POST", &uri, Some(json!({"points": [[1.0]]}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["n"], 3);

    let (s, v) = call(&app, "POST", &uri, Some(json!({"points": []}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["n"], 3);

    let (s, v) = call(&app, "POST", &uri, Some(json!({"points": [[0.5], [2.5], [1.0], [-0.1]]}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "out_of_domain");
    assert_eq!(v["offenders"], json!([1, 3]));
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["n_anchors"], 3);

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/duel"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");

    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/freeze"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = call(&app, "POST", &uri, Some(json!({"points": [[0.3]]}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/freeze"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn freeze_needs_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, &[0.0], &[1.0]).await;
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/freeze"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    // a single anchor is enough
    call(&app, "POST", &format!("/sessions/{id}/anchors"), Some(json!({"points": [[0.4]]}))).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/freeze"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["status"], "active");
}

#[tokio::test]
async fn duel_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = active_session(&app).await;

    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/preference"), Some(json!({"winner": "challenger"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    for k in 0..3u64 {
        let (c, r, v) = duel(&app, &id).await;
        assert_eq!(v["cold_start"], true);
        assert_eq!(c, halton(2 * k + 1, 1));
        assert_eq!(r, halton(2 * k + 2, 1));
        // a second request while one is pending is refused
        let (s, _) = call(&app, "GET", &format!("/sessions/{id}/duel"), None).await;
        assert_eq!(s, StatusCode::CONFLICT);
        let (s, v) = call(&app, "POST", &format!("/sessions/{id}/preference"), Some(json!({"winner": "left"}))).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
        answer(&app, &id, k % 2 == 0).await;
        let (s, _) = call(&app, "POST", &format!("/sessions/{id}/preference"), Some(json!({"winner": "challenger"}))).await;
        assert_eq!(s, StatusCode::CONFLICT);
    }
    let (c, r, v) = duel(&app, &id).await;
    assert_eq!(v["cold_start"], false);
    // the reference is the winner of the previous duel
    assert_eq!(r, halton(5, 1));
    assert!(c[0] >= 0.0 && c[0] <= 1.0);
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["n_duels"], 3);
    assert!(v["pending"].is_object());
}

#[tokio::test]
async fn summary_grid() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = active_session(&app).await;

    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/summary?grid=5"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r["mean"].as_f64().unwrap() == 0.0));
    assert!(v["incumbent"].is_null());

    for k in 0..4 {
        if k < 3 {
            duel(&app, &id).await;
            answer(&app, &id, true).await;
        }
    }
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}/summary?grid=5"), None).await;
    assert_eq!(s, StatusCode::OK);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    let anchors: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 + 0.5) / 12.0]).collect();
    let h = loo_bandwidth(&anchors, default_bandwidth_bounds(&BoxDomain::new(vec![0.0], vec![1.0]).unwrap()))
        .unwrap()
        .bandwidth;
    let model = AnchorModel::new(anchors, h, 0.1).unwrap();
    for (i, row) in rows.iter().enumerate() {
        for key in ["mean", "sd", "sigma2_hat", "acquisition"] {
            assert!(row[key].as_f64().unwrap().is_finite(), "{key}");
        }
        let x = point(&row["x"]);
        assert_eq!(x, halton(i as u64 + 1, 1));
        let s2 = row["sigma2_hat"].as_f64().unwrap();
        assert!((s2 - model.noise_variance(&x)).abs() <= 1e-12 * s2.max(1e-300), "{s2}");
    }
    assert!(v["incumbent"].is_object());

    for grid in ["0", "100001", "abc"] {
        let (s, _) = call(&app, "GET", &format!("/sessions/{id}/summary?grid={grid}"), None).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{grid}");
    }
}

#[tokio::test]
async fn restart_replays_state() {
    let dir = tempfile::tempdir().unwrap();
    let (id, view, trace, summary) = {
        let app = app(dir.path());
        let id = active_session(&app).await;
        for k in 0..5 {
            duel(&app, &id).await;
            answer(&app, &id, k != 1).await;
        }
        duel(&app, &id).await;
        let view = call(&app, "GET", &format!("/sessions/{id}"), None).await.1;
        let trace = call_text(&app, "GET", &format!("/sessions/{id}/trace"), None).await.1;
        let summary = call(&app, "GET", &format!("/sessions/{id}/summary?grid=7"), None).await.1;
        (id, view, trace, summary)
    };
    let app = app(dir.path());
    assert_eq!(call(&app, "GET", &format!("/sessions/{id}"), None).await.1, view);
    assert_eq!(call_text(&app, "GET", &format!("/sessions/{id}/trace"), None).await.1, trace);
    assert_eq!(call(&app, "GET", &format!("/sessions/{id}/summary?grid=7"), None).await.1, summary);

    // answering the pending duel and continuing works after the restart
    answer(&app, &id, true).await;
    let (_, _, v) = duel(&app, &id).await;
    assert_eq!(v["cold_start"], false);
}

#[tokio::test]
async fn torn_log_tail_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        let id = active_session(&app).await;
        duel(&app, &id).await;
        id
    };
    let log = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().contains(&id))
        .unwrap();
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"event\":\"duel_ans");
    std::fs::write(&log, text).unwrap();
    let app = app(dir.path());
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["pending"].is_object());
    assert_eq!(v["n_duels"], 0);
}

#[tokio::test]
async fn matches_direct_engine() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = active_session(&app).await;
    let spec = BenchmarkSpec::sine1d();
    let mut duels = Vec::new();
    let mut last_winner = Vec::new();
    for _ in 0..6 {
        let (c, r, _) = duel(&app, &id).await;
        let won = spec.latent(&c) >= spec.latent(&r);
        answer(&app, &id, won).await;
        let (w, l) = if won { (c, r) } else { (r, c) };
        last_winner = w.clone();
        duels.push(DuelRecord::new(w, l).unwrap());
    }
    let (c, r, v) = duel(&app, &id).await;

    let anchors: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 + 0.5) / 12.0]).collect();
    let domain = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
    let mut engine = Engine::new(domain, anchors, 0.1, EngineConfig::default(), 0).unwrap();
    for d in duels {
        engine.add_duel(d).unwrap();
    }
    let round = engine.step(Some(&last_winner), 6).unwrap();
    assert_eq!(r, last_winner);
    assert_eq!(c, round.proposal.challenger);
    assert_eq!(v["lengthscale"].as_f64().unwrap(), round.lengthscale);
}

#[tokio::test]
async fn consistent_human_moves_incumbent() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = active_session(&app).await;
    // the human always prefers the point closer to 0.8
    for _ in 0..10 {
        let (c, r, _) = duel(&app, &id).await;
        answer(&app, &id, (c[0] - 0.8).abs() <= (r[0] - 0.8).abs()).await;
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}/summary?grid=3"), None).await;
    let x = v["incumbent"]["x"][0].as_f64().unwrap();
    assert!((x - 0.8).abs() < 0.15, "incumbent {x}");
}

#[tokio::test]
async fn scripted_sessions_find_sine_optimum() {
    let spec = BenchmarkSpec::sine1d();
    let mut hits = 0;
    for seed in 0..10u64 {
        let dir = tempfile::tempdir().unwrap();
        let app = app(dir.path());
        let (_, v) = call(
            &app,
            "POST",
            "/sessions",
            Some(json!({"lower": [0.0], "upper": [1.0], "noise_scale": spec.noise_scale(), "seed": seed})),
        )
        .await;
        let id = v["id"].as_str().unwrap().to_string();
        let anchors = sample_anchors(&spec, 30, &mut stream(seed, 1)).unwrap();
        call(&app, "POST", &format!("/sessions/{id}/anchors"), Some(json!({"points": anchors}))).await;
        call(&app, "POST", &format!("/sessions/{id}/freeze"), None).await;
        for _ in 0..15 {
            let (c, r, _) = duel(&app, &id).await;
            answer(&app, &id, spec.latent(&c) >= spec.latent(&r)).await;
        }
        let (_, v) = call(&app, "GET", &format!("/sessions/{id}/summary?grid=1"), None).await;
        let x = v["incumbent"]["x"][0].as_f64().unwrap();
        if (x - 0.25).abs() <= 0.1 {
            hits += 1;
        }
    }
    assert!(hits >= 9, "{hits}/10");
}

#[tokio::test]
async fn closed_sessions_are_gone() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = active_session(&app).await;
    duel(&app, &id).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/close"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "closed");
    for (m, uri) in [("GET", "duel"), ("POST", "freeze"), ("POST", "close")] {
        let (s, v) = call(&app, m, &format!("/sessions/{id}/{uri}"), None).await;
        assert_eq!(s, StatusCode::GONE, "{uri}");
        assert_eq!(v["code"], "gone");
    }
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/anchors"), Some(json!({"points": []}))).await;
    assert_eq!(s, StatusCode::GONE);
    // reads still work
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn trace_uses_harness_layout() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = active_session(&app).await;
    for k in 0..4 {
        duel(&app, &id).await;
        answer(&app, &id, k % 2 == 1).await;
    }
    let (s, text) = call_text(&app, "GET", &format!("/sessions/{id}/trace"), None).await;
    assert_eq!(s, StatusCode::OK);
    let table = hetpbo::trace::parse_table(&text).unwrap();
    assert_eq!(table.header, hetpbo::trace::header(1, &["0".to_string()]));
    assert_eq!(table.rows.len(), 4);
    let won = table.values("challenger_won").unwrap();
    assert_eq!(won, vec![0.0, 1.0, 0.0, 1.0]);
    assert!(table.values("f").unwrap().iter().all(|v| v.is_nan()));
    assert!(table.values("sigma2_hat").unwrap().iter().all(|v| v.is_finite()));
}

#[tokio::test]
async fn concurrent_sessions_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let a = active_session(&app).await;
    let b = active_session(&app).await;
    let run = |id: String, app: Router| async move {
        let mut out = Vec::new();
        for k in 0..5 {
            let (c, r, _) = duel(&app, &id).await;
            out.push((c, r));
            answer(&app, &id, k % 2 == 0).await;
        }
        out
    };
    let (ra, rb) = tokio::join!(tokio::spawn(run(a, app.clone())), tokio::spawn(run(b, app.clone())));
    assert_eq!(ra.unwrap(), rb.unwrap());
}
