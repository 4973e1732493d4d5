//! Golden request/response suite for the model wire protocol.
//!
//! Each fixture case carries a request, the expected status, the response
//! field types any backend must produce, and the exact values the simulated
//! backend produces. Expected digests and embeddings were computed by a
//! separate Python implementation.

use rttc_core::model::{HashEmbedder, RewardScript, SimulatedModel};
use rttc_core::Producer;
use rttc_service::spawn_model_server;
use serde_json::Value;

const FIXTURE: &str = include_str!("fixtures/model_protocol.json");

fn fixture_model() -> SimulatedModel {
    let mut script = RewardScript::new(1.0).unwrap();
    script.set("q1", Producer::Direct, 2.5).unwrap();
    SimulatedModel::new(HashEmbedder::default(), script)
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "bool",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Structural equality with numbers compared to 1e-12.
fn approx_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => (x.as_f64().unwrap() - y.as_f64().unwrap()).abs() <= 1e-12,
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| approx_eq(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| approx_eq(v, w)))
        }
        _ => a == b,
    }
}

/// Runs the suite against `url`; `exact` additionally checks simulated values.
fn conformance(url: &str, exact: bool) -> Vec<String> {
    let fixture: Value = serde_json::from_str(FIXTURE).unwrap();
    let client = reqwest::blocking::Client::new();
    let mut failures = Vec::new();
    for case in fixture["model"].as_array().unwrap() {
        let name = case["name"].as_str().unwrap();
        let resp = client
            .post(format!("{url}{}", case["endpoint"].as_str().unwrap()))
            .json(&case["request"])
            .send()
            .unwrap();
        let status = resp.status().as_u16();
        let body: Value = resp.json().unwrap();
        if u64::from(status) != case["status"].as_u64().unwrap() {
            failures.push(format!("{name}: status {status}, body {body}"));
            continue;
        }
        let fields = case["fields"].as_object().unwrap();
        let obj = body.as_object().unwrap();
        if obj.len() != fields.len() {
            failures.push(format!("{name}: fields {:?}", obj.keys().collect::<Vec<_>>()));
        }
        for (k, t) in fields {
            match obj.get(k) {
                Some(v) if type_name(v) == t.as_str().unwrap() => {}
                other => failures.push(format!("{name}: field {k} = {other:?}, want {t}")),
            }
        }
        if exact {
            for (k, want) in case["expect"].as_object().unwrap() {
                if !obj.get(k).is_some_and(|got| approx_eq(got, want)) {
                    failures.push(format!("{name}: {k} = {:?}, want {want}", obj.get(k)));
                }
            }
        }
    }
    failures
}

#[test]
fn simulated_backend_passes_golden_suite() {
    let server = spawn_model_server(fixture_model(), "127.0.0.1:0").unwrap();
    let failures = conformance(&server.url(), true);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn embed_returns_unit_vectors_and_train_is_stable() {
    let server = spawn_model_server(fixture_model(), "127.0.0.1:0").unwrap();
    let client = reqwest::blocking::Client::new();
    for text in ["a", "Knowledge base retrieval", "the the the", "x1 y2 z3 w4"] {
        let v: Value = client
            .post(format!("{}/embed", server.url()))
            .json(&serde_json::json!({ "text": text }))
            .send()
            .unwrap()
            .json()
            .unwrap();
        let norm: f64 = v["embedding"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap().powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-6, "{text}: {norm}");
    }
    let req = serde_json::json!({
        "base_id": "base",
        "samples": [{"prompt": "p", "completion": "c"}, {"prompt": "q", "completion": "d"}],
        "hyper": {}
    });
    let digest = |r: &Value| -> String {
        client
            .post(format!("{}/train", server.url()))
            .json(r)
            .send()
            .unwrap()
            .json::<Value>()
            .unwrap()["adapter_digest"]
            .as_str()
            .unwrap()
            .to_owned()
    };
    assert_eq!(digest(&req), digest(&req));
    let mut swapped = req.clone();
    swapped["samples"][1]["completion"] = "e".into();
    assert_ne!(digest(&req), digest(&swapped));
}

#[test]
fn health_reports_backend() {
    let server = spawn_model_server(fixture_model(), "127.0.0.1:0").unwrap();
    let v: Value = reqwest::blocking::get(format!("{}/health", server.url()))
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["dim"], 64);
}
