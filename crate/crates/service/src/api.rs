//! HTTP API over an immutable model and catalog snapshot.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use retrofit_core::classifiers::RatingModel;
use retrofit_core::epc::{EnergyRating, FeatureSchema};
use retrofit_core::report::{plan_to_text, suggest_followups, ContextTemplates, QuestionDb, ReportError};
use retrofit_core::retrofit::{cents_to_eur, enumerate_plans, Catalog, PlanError, PlanRequest};
use serde_json::{json, Map, Value};

use crate::chat::{ChatClient, ChatClientStub};
use crate::requests::{parse_body, parse_chat, parse_followups, parse_plans, parse_predict, ApiError};

/// Everything a request reads. Replaced as a whole, never mutated.
#[derive(Debug)]
pub struct Snapshot {
    pub schema: Arc<FeatureSchema>,
    pub model: RatingModel,
    pub model_version: String,
    pub catalog: Catalog,
    pub templates: ContextTemplates,
    pub questions: QuestionDb,
    pub combination_cap: usize,
}

impl Snapshot {
    pub fn new(
        schema: Arc<FeatureSchema>,
        model: RatingModel,
        model_version: String,
        catalog: Catalog,
        templates: ContextTemplates,
        questions: QuestionDb,
        combination_cap: usize,
    ) -> Result<Snapshot, ReportError> {
        templates.check_coverage(&schema)?;
        Ok(Snapshot { schema, model, model_version, catalog, templates, questions, combination_cap })
    }
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    /// Plan documents by id, kept for the life of the process.
    reports: Mutex<BTreeMap<String, String>>,
    chat: Box<dyn ChatClient>,
}

impl AppState {
    pub fn new(snapshot: Snapshot) -> AppState {
        AppState {
            snapshot: RwLock::new(Arc::new(snapshot)),
            reports: Mutex::new(BTreeMap::new()),
            chat: Box::new(ChatClientStub::default()),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    /// Atomically installs a new snapshot; in-flight requests finish on the
    /// old one.
    pub fn replace_snapshot(&self, s: Snapshot) {
        *self.snapshot.write().unwrap() = Arc::new(s);
    }

    pub fn report(&self, id: &str) -> Option<String> {
        self.reports.lock().unwrap().get(id).cloned()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/catalog", get(catalog))
        .route("/predict", post(predict))
        .route("/plans", post(plans))
        .route("/plans/{id}/report", get(report))
        .route("/followups", post(followups))
        .route("/chat", post(chat))
        .fallback(not_found)
        .with_state(state)
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::BAD_REQUEST);
        (status, Json(self.body())).into_response()
    }
}

async fn not_found() -> ApiError {
    ApiError::new(404, "not_found", "path", "no such endpoint")
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    let s = st.snapshot();
    Json(json!({ "model_version": s.model_version, "catalog_version": s.catalog.version }))
}

pub fn catalog_json(c: &Catalog) -> Value {
    let items: Vec<Value> = c
        .items
        .iter()
        .map(|i| {
            let mutations: Map<String, Value> = i.mutations.iter().map(|m| (m.feature.clone(), json!(m.value))).collect();
            json!({
                "id": i.id,
                "category": i.category.as_str(),
                "name": i.name,
                "mutations": mutations,
                "price_eur": cents_to_eur(i.price_cents),
                "grant_eur": cents_to_eur(i.grant_cents),
            })
        })
        .collect();
    json!({ "items": items })
}

async fn catalog(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(catalog_json(&st.snapshot().catalog))
}

async fn predict(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let s = st.snapshot();
    let profile = parse_predict(&parse_body(&body)?, &s.schema)?;
    let p = s.model.predict(&profile);
    let probabilities: Map<String, Value> = EnergyRating::ALL.iter().map(|r| (r.as_str().to_string(), json!(p.probabilities[r.index()]))).collect();
    Ok(Json(json!({ "rating": p.rating.as_str(), "coarse": p.coarse.as_str(), "probabilities": probabilities })))
}

fn plan_error(e: PlanError) -> ApiError {
    match e {
        PlanError::CombinationLimitExceeded { .. } => ApiError::new(422, "too_many_combinations", "categories", e.to_string()),
        PlanError::EmptyCategory(c) => ApiError::new(422, "invalid_value", "categories", format!("catalog has no items for {c}")),
        PlanError::NegativeBudget => ApiError::new(422, "invalid_value", "budget_eur", e.to_string()),
        PlanError::ZeroCap => ApiError::new(500, "internal", "config", e.to_string()),
    }
}

async fn plans(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let s = st.snapshot();
    let r = parse_plans(&parse_body(&body)?, &s.schema)?;
    let worker = s.clone();
    let (frontier, docs) = tokio::task::spawn_blocking(move || {
        let s = worker;
        let req = PlanRequest {
            home: r.profile,
            categories: r.categories,
            budget_cents: r.budget_cents,
            combination_cap: s.combination_cap,
            cost_basis: r.cost_basis,
            strict: r.strict,
        };
        let f = enumerate_plans(&req, &s.catalog, &s.model).map_err(plan_error)?;
        let docs = f
            .entries
            .values()
            .map(|p| plan_to_text(p, &s.catalog, &s.schema, &s.templates))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ApiError::new(500, "internal", "templates", e.to_string()))?;
        Ok::<_, ApiError>((f, docs))
    })
    .await
    .map_err(|e| ApiError::new(500, "internal", "plans", e.to_string()))??;

    {
        let mut store = st.reports.lock().unwrap();
        for d in &docs {
            store.entry(d.plan_id.clone()).or_insert_with(|| d.text.clone());
        }
    }
    let rows: Vec<Value> = frontier
        .entries
        .values()
        .map(|p| {
            json!({
                "rating": p.predicted_rating.as_str(),
                "item_ids": p.item_ids,
                "total_cost_eur": cents_to_eur(p.total_cents),
                "grant_eur": cents_to_eur(p.grant_cents),
                "net_cost_eur": cents_to_eur(p.net_cents),
            })
        })
        .collect();
    let ids: Vec<&str> = docs.iter().map(|d| d.plan_id.as_str()).collect();
    Ok(Json(json!({ "base_rating": frontier.base_rating.as_str(), "frontier": rows, "plan_ids": ids })))
}

async fn report(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match st.report(&id) {
        Some(text) => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()),
        None => Err(ApiError::new(404, "not_found", "id", format!("no plan with id `{id}`"))),
    }
}

fn suggestions_json(question: &str, db: &QuestionDb, k: usize) -> Value {
    let f = suggest_followups(question, db, k);
    let s: Vec<Value> = f.suggestions.iter().map(|s| json!({ "text": s.text, "score": s.score })).collect();
    json!({ "suggestions": s, "low_confidence": f.low_confidence })
}

async fn followups(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let (q, k) = parse_followups(&parse_body(&body)?)?;
    Ok(Json(suggestions_json(&q, &st.snapshot().questions, k)))
}

async fn chat(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let (message, category) = parse_chat(&parse_body(&body)?)?;
    let reply = st.chat.reply(&category, &message);
    let mut out = suggestions_json(&message, &st.snapshot().questions, crate::requests::DEFAULT_FOLLOWUPS);
    out["reply"] = json!(reply);
    out["stub"] = json!(true);
    Ok(Json(out))
}
