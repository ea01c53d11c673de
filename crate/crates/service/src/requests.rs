//! Request validation. Bodies are parsed to `serde_json::Value` first and
//! then checked field by field so every rejection names its field.

use std::collections::{BTreeMap, BTreeSet};

use retrofit_core::epc::{FeatureKind, FeatureSchema, FieldValue, HomeProfile, ProfileError};
use retrofit_core::retrofit::{ComponentCategory, CostBasis};
use serde_json::{json, Map, Value};

/// Largest budget accepted, in euros.
pub const MAX_BUDGET_EUR: f64 = 1e10;
pub const MAX_FOLLOWUPS: u64 = 20;
pub const DEFAULT_FOLLOWUPS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub field: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, field: impl Into<String>, message: impl Into<String>) -> ApiError {
        ApiError { status, code, field: field.into(), message: message.into() }
    }

    fn invalid(field: impl Into<String>, message: impl Into<String>) -> ApiError {
        ApiError::new(422, "invalid_value", field, message)
    }

    fn wrong_type(field: impl Into<String>, expected: &str) -> ApiError {
        let field = field.into();
        let message = format!("`{field}` must be {expected}");
        ApiError::new(422, "wrong_type", field, message)
    }

    fn missing(field: &str) -> ApiError {
        ApiError::new(422, "missing_field", field, format!("`{field}` is required"))
    }

    pub fn body(&self) -> Value {
        json!({ "error": { "code": self.code, "field": self.field, "message": self.message } })
    }
}

pub fn parse_body(bytes: &[u8]) -> Result<Map<String, Value>, ApiError> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| ApiError::new(400, "invalid_json", "body", e.to_string()))?;
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(ApiError::new(400, "wrong_type", "body", "request body must be a JSON object")),
    }
}

fn reject_unknown(body: &Map<String, Value>, allowed: &[&str]) -> Result<(), ApiError> {
    match body.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(ApiError::new(422, "unknown_field", k.clone(), format!("unknown field `{k}`"))),
        None => Ok(()),
    }
}

fn profile_error(e: ProfileError) -> ApiError {
    let field = e.field().map_or_else(|| "profile".to_string(), |f| format!("profile.{f}"));
    let code = match e {
        ProfileError::Missing(_) => "missing_field",
        ProfileError::UnknownFeature(_) => "unknown_field",
        ProfileError::WrongType { .. } => "wrong_type",
        _ => "invalid_value",
    };
    ApiError::new(422, code, field, e.to_string())
}

/// Profile from a `{feature: value}` object. Continuous values must lie in
/// the declared range; exact zero is also accepted for features where zero
/// marks a missing measurement.
pub fn parse_profile(v: Option<&Value>, schema: &FeatureSchema) -> Result<HomeProfile, ApiError> {
    let obj = match v {
        None => return Err(ApiError::missing("profile")),
        Some(Value::Object(o)) => o,
        Some(_) => return Err(ApiError::wrong_type("profile", "an object")),
    };
    let mut map = BTreeMap::new();
    for (k, val) in obj {
        let field = format!("profile.{k}");
        let fv = match val {
            Value::Number(n) => FieldValue::Number(n.as_f64().ok_or_else(|| ApiError::invalid(&field, "number out of range"))?),
            Value::String(s) => FieldValue::Code(s.clone()),
            _ => {
                if schema.index_of(k).is_none() {
                    return Err(profile_error(ProfileError::UnknownFeature(k.clone())));
                }
                return Err(ApiError::wrong_type(field, "a number or a code string"));
            }
        };
        map.insert(k.clone(), fv);
    }
    let p = schema.profile_from_map(&map).map_err(profile_error)?;
    for (i, f) in schema.features().iter().enumerate() {
        if let FeatureKind::Continuous { min, max, .. } = f.kind {
            let x = p.get(i);
            if !(min..=max).contains(&x) && !(f.nonzero && x == 0.0) {
                return Err(ApiError::invalid(format!("profile.{}", f.name), format!("{} = {x} is outside [{min}, {max}]", f.name)));
            }
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlansRequest {
    pub profile: HomeProfile,
    pub categories: BTreeSet<ComponentCategory>,
    pub budget_cents: Option<i64>,
    pub cost_basis: CostBasis,
    pub strict: bool,
}

pub fn parse_predict(body: &Map<String, Value>, schema: &FeatureSchema) -> Result<HomeProfile, ApiError> {
    reject_unknown(body, &["profile"])?;
    parse_profile(body.get("profile"), schema)
}

pub fn parse_plans(body: &Map<String, Value>, schema: &FeatureSchema) -> Result<PlansRequest, ApiError> {
    reject_unknown(body, &["profile", "categories", "budget_eur", "cost_basis", "strict"])?;
    let profile = parse_profile(body.get("profile"), schema)?;
    let cats = match body.get("categories") {
        None => return Err(ApiError::missing("categories")),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(ApiError::wrong_type("categories", "an array of category names")),
    };
    let mut categories = BTreeSet::new();
    for (i, c) in cats.iter().enumerate() {
        let field = format!("categories[{i}]");
        let s = c.as_str().ok_or_else(|| ApiError::wrong_type(&field, "a category name"))?;
        categories.insert(s.parse::<ComponentCategory>().map_err(|e| ApiError::invalid(field, e.to_string()))?);
    }
    let budget_cents = match body.get("budget_eur") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if !(0.0..=MAX_BUDGET_EUR).contains(&x) {
                return Err(ApiError::invalid("budget_eur", format!("budget must be between 0 and {MAX_BUDGET_EUR}")));
            }
            Some((x * 100.0).round() as i64)
        }
        Some(_) => return Err(ApiError::wrong_type("budget_eur", "a number or null")),
    };
    let cost_basis = match body.get("cost_basis") {
        None | Some(Value::Null) => CostBasis::Net,
        Some(Value::String(s)) if s == "net" => CostBasis::Net,
        Some(Value::String(s)) if s == "gross" => CostBasis::Gross,
        Some(_) => return Err(ApiError::invalid("cost_basis", "cost_basis must be \"net\" or \"gross\"")),
    };
    let strict = match body.get("strict") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(ApiError::wrong_type("strict", "a boolean")),
    };
    Ok(PlansRequest { profile, categories, budget_cents, cost_basis, strict })
}

pub fn parse_followups(body: &Map<String, Value>) -> Result<(String, usize), ApiError> {
    reject_unknown(body, &["question", "k"])?;
    let q = match body.get("question") {
        None => return Err(ApiError::missing("question")),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ApiError::wrong_type("question", "a string")),
    };
    let k = match body.get("k") {
        None | Some(Value::Null) => DEFAULT_FOLLOWUPS,
        Some(v) => match v.as_u64() {
            Some(k) if (1..=MAX_FOLLOWUPS).contains(&k) => k as usize,
            _ => return Err(ApiError::invalid("k", format!("k must be an integer from 1 to {MAX_FOLLOWUPS}"))),
        },
    };
    Ok((q, k))
}

pub fn parse_chat(body: &Map<String, Value>) -> Result<(String, String), ApiError> {
    reject_unknown(body, &["message", "category"])?;
    let message = match body.get("message") {
        None => return Err(ApiError::missing("message")),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ApiError::wrong_type("message", "a string")),
    };
    let category = match body.get("category") {
        None | Some(Value::Null) => "general".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(ApiError::wrong_type("category", "a string")),
    };
    Ok((message, category))
}
