#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use retrofit_core::classifiers::{train_model, ModelConfig, ModelKind, RatingModel};
use retrofit_core::epc::{generate_synthetic, split, FeatureSchema, FieldValue, HomeProfile};
use retrofit_core::report::{ContextTemplates, QuestionDb};
use retrofit_core::retrofit::{Catalog, DEFAULT_COMBINATION_CAP};
use retrofit_service::api::{router, AppState, Snapshot};
use serde_json::{json, Map, Value};
use tower::ServiceExt;

pub fn schema() -> Arc<FeatureSchema> {
    Arc::new(FeatureSchema::default_schema())
}

pub fn tree_model(schema: &Arc<FeatureSchema>) -> RatingModel {
    let data = generate_synthetic(2000, 21, schema.clone());
    let splits = split(&data, 21).unwrap();
    train_model(ModelKind::DecisionTree, &splits, &ModelConfig::default(), 21).unwrap()
}

pub fn state() -> Arc<AppState> {
    let schema = schema();
    let model = tree_model(&schema);
    let catalog = Catalog::default_catalog(&schema);
    let snap = Snapshot::new(
        schema,
        model,
        "test-model".into(),
        catalog,
        ContextTemplates::default_templates(),
        QuestionDb::default_db(),
        DEFAULT_COMBINATION_CAP,
    )
    .unwrap();
    Arc::new(AppState::new(snap))
}

pub fn profile_value(schema: &FeatureSchema, p: &HomeProfile) -> Value {
    let m: Map<String, Value> = schema
        .profile_to_map(p)
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                FieldValue::Number(x) => json!(x),
                FieldValue::Code(c) => json!(c),
            };
            (k, v)
        })
        .collect();
    Value::Object(m)
}

pub fn sample_profile(seed: u64) -> Value {
    let s = schema();
    let p = generate_synthetic(1, seed, s.clone()).rows()[0].clone();
    profile_value(&s, &p)
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Vec<u8>>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, body }
}

pub async fn post(state: &Arc<AppState>, uri: &str, v: &Value) -> Reply {
    call(state, "POST", uri, Some(serde_json::to_vec(v).unwrap())).await
}

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scalar(rng: &mut ChaCha8Rng) -> Value {
    match rng.random_range(0..6) {
        0 => Value::Null,
        1 => json!(rng.random::<bool>()),
        2 => json!(rng.random_range(-1e12..1e12)),
        3 => json!("x".repeat(rng.random_range(0..8))),
        4 => json!([rng.random_range(0..9), "a", null]),
        _ => json!({ "nested": { "deep": [1, 2, {}] } }),
    }
}

/// A value that is never valid for `feature`.
fn invalid_for(schema: &FeatureSchema, feature: &str, rng: &mut ChaCha8Rng) -> Value {
    let f = schema.feature(feature).unwrap();
    if let Some((min, max)) = f.range() {
        match rng.random_range(0..5) {
            0 => json!(max + 1.0 + rng.random::<f64>() * 1e6),
            1 => json!(min - 1.0 - rng.random::<f64>() * 1e6),
            2 => json!("12"),
            3 => Value::Null,
            _ => json!([min]),
        }
    } else {
        match rng.random_range(0..4) {
            0 => json!(0),
            1 => json!("not-a-code"),
            2 => Value::Null,
            _ => json!({ "code": f.codes().unwrap()[0] }),
        }
    }
}

fn mutate_profile(schema: &FeatureSchema, profile: &mut Value, rng: &mut ChaCha8Rng) {
    let names: Vec<String> = schema.features().iter().map(|f| f.name.clone()).collect();
    let name = names.choose(rng).unwrap().clone();
    let obj = profile.as_object_mut().unwrap();
    match rng.random_range(0..3) {
        0 => {
            obj.remove(&name);
        }
        1 => {
            obj.insert(name.clone(), invalid_for(schema, &name, rng));
        }
        _ => {
            obj.insert(format!("bogus_{}", rng.random_range(0..1000)), json!(1.0));
        }
    }
}

/// `(endpoint, body)` pairs, each malformed in at least one field.
pub fn malformed_bodies(n: usize, seed: u64) -> Vec<(&'static str, Vec<u8>)> {
    let schema = schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_profile = sample_profile(5);
    (0..n)
        .map(|i| {
            let endpoint = if i % 2 == 0 { "/predict" } else { "/plans" };
            let mut body = if endpoint == "/predict" {
                json!({ "profile": base_profile.clone() })
            } else {
                json!({ "profile": base_profile.clone(), "categories": ["door", "window"], "budget_eur": 5000.0 })
            };
            let bytes = match rng.random_range(0..9) {
                0 => (0..rng.random_range(0..64)).map(|_| rng.random::<u8>()).collect(),
                1 => {
                    let s = serde_json::to_vec(&body).unwrap();
                    let cut = rng.random_range(0..s.len() - 1);
                    s[..cut].to_vec()
                }
                2 => serde_json::to_vec(&random_scalar(&mut rng)).unwrap(),
                3 => {
                    body["profile"] = random_scalar(&mut rng);
                    if body["profile"].is_object() {
                        body["profile"]["nested"] = json!(1);
                    }
                    serde_json::to_vec(&body).unwrap()
                }
                4 => {
                    body.as_object_mut().unwrap().remove("profile");
                    serde_json::to_vec(&body).unwrap()
                }
                5 if endpoint == "/plans" => {
                    body["categories"] = match rng.random_range(0..4) {
                        0 => json!(["door", "boiler"]),
                        1 => json!("door"),
                        2 => json!([1, 2]),
                        _ => Value::Null,
                    };
                    serde_json::to_vec(&body).unwrap()
                }
                6 if endpoint == "/plans" => {
                    body["budget_eur"] = match rng.random_range(0..3) {
                        0 => json!(-rng.random_range(0.01..1e6)),
                        1 => json!("5000"),
                        _ => json!(1e300),
                    };
                    serde_json::to_vec(&body).unwrap()
                }
                7 => {
                    body[format!("extra_{}", rng.random_range(0..99))] = random_scalar(&mut rng);
                    serde_json::to_vec(&body).unwrap()
                }
                _ => {
                    for _ in 0..rng.random_range(1..4) {
                        mutate_profile(&schema, &mut body["profile"], &mut rng);
                    }
                    serde_json::to_vec(&body).unwrap()
                }
            };
            (endpoint, bytes)
        })
        .collect()
}
