//! HTTP API against an in-process server over a mixed fixture store.

mod common;

use std::time::{Duration, Instant};

use common::*;
use reqwest::StatusCode;
use serde_json::{json, Value};
use terratrace_core::fire::FireEvent;
use terratrace_core::llm::{BackendKind, LlmBackend, LlmConfig};
use terratrace_core::synth::Profile;
use terratrace_core::RegionLayout;

fn polygon_json(profile: Profile) -> Value {
    let spec = mixed_spec();
    let (_, lo, hi) = spec.mixed_columns().into_iter().find(|c| c.0 == profile).unwrap();
    serde_json::to_value(spec.sub_polygon(&RegionLayout::california(), lo, hi).unwrap()).unwrap()
}

async fn post(client: &reqwest::Client, url: String, body: &Value) -> (StatusCode, Value, String) {
    let resp = client.post(url).json(body).send().await.unwrap();
    let status = resp.status();
    let text = resp.text().await.unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null), text)
}

#[tokio::test]
async fn analyze_classifies_each_block() {
    let fire_at = mixed_spec().polygon(&RegionLayout::california()).unwrap().centroid();
    let fires = vec![FireEvent { point: fire_at, date: chrono::NaiveDate::from_ymd_opt(2020, 8, 1).unwrap(), confidence: 0.7 }];
    let server = start_server(&mixed_spec(), fires, LlmBackend::Mock).await;
    let client = reqwest::Client::new();
    for (cols, class) in [(Profile::Annual, "AnnualCrop"), (Profile::Evergreen, "PerennialVegetation"), (Profile::Bare, "NonVegetative")] {
        let (status, report, text) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(cols) })).await;
        assert_eq!(status, StatusCode::OK, "{text}");
        assert_eq!(report["class"], class);
        assert!(report["curve"]["points"].as_array().unwrap().len() > 10);
        assert!(report["curve"]["fit"]["coeffs"].as_array().unwrap().len() == 4);
        assert!(report["llm_analysis"].is_null());
        assert_eq!(report["params_used"]["peak_hi"], 0.8);
        assert_eq!(report["fire_history"].as_array().unwrap().len(), 1);
        let (_, _, again) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(cols) })).await;
        assert_eq!(text, again);
    }
}

#[tokio::test]
async fn analyze_error_statuses() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let client = reqwest::Client::new();
    let url = format!("{}/api/analyze", server.base);

    let (status, body, _) = post(&client, url.clone(), &json!({ "polygon": { "vertices": [[36.5, -120.5], [36.6, -120.4]] } })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("vertices"), "{body}");

    let resp = client.post(url.clone()).header("content-type", "application/json").body("{not json").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    // Open ocean inside the extent.
    let ocean = json!({ "polygon": { "vertices": [[33.0, -124.0], [33.0, -123.9], [33.1, -123.9]] } });
    let (status, body, _) = post(&client, url.clone(), &ocean).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "no cells in polygon");

    let short = json!({ "polygon": polygon_json(Profile::Annual), "date_range": ["2020-01-01", "2020-02-15"] });
    let (status, body, _) = post(&client, url.clone(), &short).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["report"]["class"], "InsufficientData");
    assert!(body["report"]["curve"]["points"].as_array().unwrap().len() <= 10);

    let reversed = json!({ "polygon": polygon_json(Profile::Annual), "date_range": ["2020-06-01", "2020-01-01"] });
    assert_eq!(post(&client, url.clone(), &reversed).await.0, StatusCode::BAD_REQUEST);
    let bad_params = json!({ "polygon": polygon_json(Profile::Annual), "params": { "peak_lo": 0.9, "peak_hi": 0.1 } });
    assert_eq!(post(&client, url.clone(), &bad_params).await.0, StatusCode::BAD_REQUEST);
    let bad_degree = json!({ "polygon": polygon_json(Profile::Annual), "fit_degree": 20 });
    assert_eq!(post(&client, url, &bad_degree).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn analyze_with_mock_llm() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let client = reqwest::Client::new();
    let (status, report, _) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(Profile::Annual), "include_llm": true })).await;
    assert_eq!(status, StatusCode::OK);
    let table = report["llm_analysis"].as_array().unwrap();
    assert_eq!(table[0], json!({ "label": "Land cover", "value": "annual crop (rule-based)" }));
}

#[tokio::test]
async fn llm_failure_is_bad_gateway_with_report() {
    let cfg = LlmConfig { kind: BackendKind::Remote, timeout_secs: 2.0, ..LlmConfig::default() };
    let backend = LlmBackend::from_config_with(&cfg, Some("http://127.0.0.1:9/v1/chat".into()), Some("k".into())).unwrap();
    let server = start_server(&mixed_spec(), vec![], backend).await;
    let client = reqwest::Client::new();
    let (status, body, _) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(Profile::Annual), "include_llm": true })).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["report"]["class"], "AnnualCrop");
    assert!(body["report"]["llm_analysis"].is_null());
    assert!(body["report"]["warnings"][0].as_str().unwrap().starts_with("llm analysis unavailable"));
    // Without the narrative the same request succeeds.
    let (status, _, _) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(Profile::Annual) })).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn curve_endpoint() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let client = reqwest::Client::new();
    let store = &server.state.store;
    let cell = store.cells().nth(5).unwrap();
    let from = chrono::NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    let to = chrono::NaiveDate::from_ymd_opt(2020, 8, 31).unwrap();

    let resp = client.get(format!("{}/api/curve?cell={cell}&from={from}&to={to}", server.base)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body: Value = resp.json().await.unwrap();
    let direct = store.load_series(cell, from, to);
    let expected: Vec<(chrono::NaiveDate, f32)> = direct.dates().zip(direct.samples.iter().map(|s| s.1)).collect();
    assert_eq!(serde_json::from_value::<Vec<(chrono::NaiveDate, f32)>>(body["samples"].clone()).unwrap(), expected);
    assert!(!expected.is_empty());
    assert!(body["fit"].is_object());

    let all: Value = client.get(format!("{}/api/curve?cell={cell}", server.base)).send().await.unwrap().json().await.unwrap();
    assert!(all["samples"].as_array().unwrap().len() > expected.len());

    let unknown = client.get(format!("{}/api/curve?cell=0,0,0", server.base)).send().await.unwrap();
    assert_eq!(unknown.status(), StatusCode::NOT_FOUND);
    let bad = client.get(format!("{}/api/curve?cell=banana", server.base)).send().await.unwrap();
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
    let missing = client.get(format!("{}/api/curve", server.base)).send().await.unwrap();
    assert_eq!(missing.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn manifest_endpoint() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let body: Value = reqwest::get(format!("{}/api/manifest", server.base)).await.unwrap().json().await.unwrap();
    assert_eq!(body["regions"].as_array().unwrap().len(), 8);
    let total: u64 = body["counts"].as_array().unwrap().iter().map(|c| c["cells"].as_u64().unwrap()).sum();
    assert_eq!(total, 100);
    let parsed: terratrace_core::DatasetManifest = serde_json::from_value(body).unwrap();
    assert_eq!(&parsed, server.state.store.manifest());
}

#[tokio::test]
async fn nearest_endpoint() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let store = &server.state.store;
    let cell = store.cells().nth(42).unwrap();
    let c = store.center(cell).unwrap();
    let body: Value = reqwest::get(format!("{}/api/nearest?lat={}&lon={}", server.base, c.lat(), c.lon())).await.unwrap().json().await.unwrap();
    assert_eq!(body["distance_m"], 0.0);
    assert_eq!(serde_json::from_value::<terratrace_core::CellId>(body["cell"].clone()).unwrap(), cell);
    let far = reqwest::get(format!("{}/api/nearest?lat=40.0&lon=-122.0", server.base)).await.unwrap();
    assert_eq!(far.status(), StatusCode::NOT_FOUND);
    assert_eq!(far.json::<Value>().await.unwrap()["error"], "no data near point");
    let bad = reqwest::get(format!("{}/api/nearest?lat=95&lon=0", server.base)).await.unwrap();
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn chat_endpoint() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let client = reqwest::Client::new();
    let (_, report, _) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(Profile::Evergreen) })).await;
    let url = format!("{}/api/chat", server.base);

    let (status, body, _) = post(&client, url.clone(), &json!({ "message": "Is this an orchard?", "report_id": report["report_id"] })).await;
    assert_eq!(status, StatusCode::OK);
    let reply = body["reply"].as_str().unwrap();
    assert!(reply.contains("perennial vegetation"), "{reply}");
    assert!(reply.contains("Is this an orchard?"));

    let (status, inline, _) = post(&client, url.clone(), &json!({ "message": "Is this an orchard?", "report": report })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(inline["reply"], body["reply"]);

    let (status, body, _) = post(&client, url.clone(), &json!({ "message": "hello" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("report"));
    assert_eq!(post(&client, url.clone(), &json!({ "message": "  ", "report_id": report["report_id"] })).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&client, url, &json!({ "message": "hi", "report_id": "@@" })).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_chat() {
    let server = start_server(&mixed_spec(), vec![], LlmBackend::Mock).await;
    let client = reqwest::Client::new();
    let (_, report, _) = post(&client, format!("{}/api/analyze", server.base), &json!({ "polygon": polygon_json(Profile::Annual) })).await;
    let id = report["report_id"].as_str().unwrap().to_string();
    let start = Instant::now();
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let (client, url, id) = (client.clone(), format!("{}/api/chat", server.base), id.clone());
            tokio::spawn(async move {
                let resp = client.post(url).json(&json!({ "message": format!("question {i}"), "report_id": id })).send().await.unwrap();
                (resp.status(), resp.json::<Value>().await.unwrap())
            })
        })
        .collect();
    for (i, t) in tasks.into_iter().enumerate() {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert!(body["reply"].as_str().unwrap().contains(&format!("question {i}")));
    }
    assert!(start.elapsed() < Duration::from_secs(30));
}
