//! Plan documents and follow-up question suggestions.
//!
//! A plan document is line oriented. Each line reads
//!
//! ```text
//! key: value[ unit] — context
//! ```
//!
//! where `value` never contains spaces, so [`parse_plan_text`] can recover
//! every key and value exactly. Lines come in a fixed order: rating, costs,
//! then one component line per chosen item followed by its mutated features,
//! categories in schema order.

use std::collections::{BTreeMap, HashMap};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::epc::FeatureSchema;
use crate::retrofit::{format_eur, Catalog, RetrofitPlan};

pub const DEFAULT_TEMPLATES: &str = include_str!("../assets/templates.toml");
pub const DEFAULT_QUESTIONS: &str = include_str!("../assets/questions.toml");

/// Separator between the machine-readable prefix and the context sentence.
pub const CONTEXT_SEPARATOR: &str = " — ";

/// Top similarity below this marks suggestions as low confidence.
pub const LOW_CONFIDENCE_BELOW: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no context template for feature `{0}`")]
    MissingTemplate(String),
    #[error("plan references unknown item `{0}`")]
    UnknownItem(String),
    #[error("template file: {0}")]
    Parse(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplates {
    version: String,
    features: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextTemplates {
    pub version: String,
    features: BTreeMap<String, String>,
}

impl ContextTemplates {
    pub fn parse(text: &str) -> Result<ContextTemplates, ReportError> {
        let raw: RawTemplates = toml::from_str(text).map_err(|e| ReportError::Parse(e.message().trim().to_string()))?;
        Ok(ContextTemplates { version: raw.version, features: raw.features })
    }

    pub fn default_templates() -> ContextTemplates {
        ContextTemplates::parse(DEFAULT_TEMPLATES).expect("shipped templates are valid")
    }

    pub fn get(&self, feature: &str) -> Option<&str> {
        self.features.get(feature).map(String::as_str)
    }

    /// First schema feature without a template.
    pub fn check_coverage(&self, schema: &FeatureSchema) -> Result<(), ReportError> {
        match schema.features().iter().find(|f| !self.features.contains_key(&f.name)) {
            Some(f) => Err(ReportError::MissingTemplate(f.name.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanDocument {
    /// First 16 hex digits of the SHA-256 of `text`.
    pub plan_id: String,
    /// Key and value pairs in text order.
    pub fields: Vec<(String, String)>,
    pub text: String,
}

fn line(out: &mut String, fields: &mut Vec<(String, String)>, key: &str, value: String, unit: Option<&str>, context: &str) {
    out.push_str(key);
    out.push_str(": ");
    out.push_str(&value);
    if let Some(u) = unit {
        out.push(' ');
        out.push_str(u);
    }
    out.push_str(CONTEXT_SEPARATOR);
    out.push_str(context);
    out.push('\n');
    fields.push((key.to_string(), value));
}

pub fn plan_id_of(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Annotated text form of a plan.
pub fn plan_to_text(
    plan: &RetrofitPlan,
    catalog: &Catalog,
    schema: &FeatureSchema,
    templates: &ContextTemplates,
) -> Result<PlanDocument, ReportError> {
    let mut items = Vec::with_capacity(plan.item_ids.len());
    for id in &plan.item_ids {
        items.push(catalog.item(id).ok_or_else(|| ReportError::UnknownItem(id.clone()))?);
    }
    items.sort_by_key(|i| i.category);

    let mut text = String::new();
    let mut fields = Vec::new();
    let r = plan.predicted_rating;
    line(
        &mut text,
        &mut fields,
        "rating",
        r.as_str().to_string(),
        None,
        &format!("Predicted energy rating with this plan, on the 15-grade scale from A1 (best) to G (worst); coarse band {}.", r.to_coarse().as_str()),
    );
    line(
        &mut text,
        &mut fields,
        "total_cost_eur",
        format_eur(plan.total_cents),
        Some("EUR"),
        "Sum of item prices before grants.",
    );
    if !items.is_empty() {
        line(&mut text, &mut fields, "grant_eur", format_eur(plan.grant_cents), Some("EUR"), "Sum of grants available for the chosen items.");
        line(&mut text, &mut fields, "net_cost_eur", format_eur(plan.net_cents), Some("EUR"), "Price paid by the homeowner after grants.");
    }
    for it in items {
        line(
            &mut text,
            &mut fields,
            it.category.as_str(),
            it.id.clone(),
            None,
            &format!("{}, price {} EUR, grant {} EUR.", it.name, format_eur(it.price_cents), format_eur(it.grant_cents)),
        );
        let mut muts: Vec<_> = it.mutations.iter().collect();
        muts.sort_by_key(|m| m.index);
        for m in muts {
            let context = templates.get(&m.feature).ok_or_else(|| ReportError::MissingTemplate(m.feature.clone()))?;
            let unit = schema.features().get(m.index).and_then(|f| f.unit());
            line(&mut text, &mut fields, &m.feature, format!("{}", m.value), unit, context);
        }
    }
    Ok(PlanDocument { plan_id: plan_id_of(&text), fields, text })
}

/// Keys and values of a plan document, in line order.
pub fn parse_plan_text(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let (key, rest) = l.split_once(": ")?;
            let value = rest.split(' ').next()?;
            Some((key.to_string(), value.to_string()))
        })
        .collect()
}

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionEntry {
    pub question: String,
    pub follow_ups: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestions {
    version: String,
    entry: Vec<QuestionEntry>,
}

/// Question database with tf-idf vectors.
///
/// Term weight is `tf * (ln((1 + N) / (1 + df)) + 1)` with `tf` the raw count
/// in the question, `N` the number of questions and `df` the number of
/// questions containing the term. Vectors are l2-normalised; out-of-vocabulary
/// query terms are dropped.
#[derive(Debug, Clone)]
pub struct QuestionDb {
    pub version: String,
    entries: Vec<QuestionEntry>,
    vocab: HashMap<String, usize>,
    idf: Vec<f64>,
    /// Sparse (term, weight) per entry, sorted by term.
    vectors: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuestionDbError {
    #[error("question db: {0}")]
    Parse(String),
    #[error("question db has no entries")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub text: String,
    /// Similarity of the db question the follow-up belongs to.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Followups {
    pub suggestions: Vec<Suggestion>,
    pub low_confidence: bool,
    /// (entry index, similarity), best first.
    pub ranking: Vec<(usize, f64)>,
}

impl QuestionDb {
    pub fn new(version: &str, entries: Vec<QuestionEntry>) -> Result<QuestionDb, QuestionDbError> {
        if entries.is_empty() {
            return Err(QuestionDbError::Empty);
        }
        let docs: Vec<Vec<String>> = entries.iter().map(|e| tokenize(&e.question)).collect();
        let mut vocab = HashMap::new();
        let mut df = Vec::new();
        for d in &docs {
            let mut seen: Vec<usize> = d
                .iter()
                .map(|t| {
                    let n = vocab.len();
                    *vocab.entry(t.clone()).or_insert(n)
                })
                .collect();
            seen.sort_unstable();
            seen.dedup();
            df.resize(vocab.len(), 0usize);
            for t in seen {
                df[t] += 1;
            }
        }
        let n = entries.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let mut db = QuestionDb { version: version.to_string(), entries, vocab, idf, vectors: Vec::new() };
        db.vectors = docs.iter().map(|d| db.embed_tokens(d)).collect();
        Ok(db)
    }

    pub fn parse(text: &str) -> Result<QuestionDb, QuestionDbError> {
        let raw: RawQuestions = toml::from_str(text).map_err(|e| QuestionDbError::Parse(e.message().trim().to_string()))?;
        QuestionDb::new(&raw.version, raw.entry)
    }

    pub fn default_db() -> QuestionDb {
        QuestionDb::parse(DEFAULT_QUESTIONS).expect("shipped question db is valid")
    }

    pub fn entries(&self) -> &[QuestionEntry] {
        &self.entries
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocab.len()
    }

    fn embed_tokens(&self, tokens: &[String]) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(&i) = self.vocab.get(t) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut v: Vec<(usize, f64)> = tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }

    pub fn embed(&self, text: &str) -> Vec<(usize, f64)> {
        self.embed_tokens(&tokenize(text))
    }

    /// Cosine similarity of the query with every entry, in db order.
    pub fn similarities(&self, query: &str) -> Vec<f64> {
        let q = self.embed(query);
        self.vectors
            .iter()
            .map(|v| {
                let (mut i, mut j, mut s) = (0, 0, 0.0);
                while i < q.len() && j < v.len() {
                    match q[i].0.cmp(&v[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            s += q[i].1 * v[j].1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                s
            })
            .collect()
    }
}

/// Follow-ups of the best matching db questions, at most `k`.
///
/// The top match's follow-ups come first; if it has fewer than `k`, the walk
/// continues down the ranking. Entries with zero similarity contribute
/// nothing, so a query sharing no terms with the db returns no suggestions.
pub fn suggest_followups(question: &str, db: &QuestionDb, k: usize) -> Followups {
    let sims = db.similarities(question);
    let mut ranking: Vec<(usize, f64)> = sims.into_iter().enumerate().collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut suggestions: Vec<Suggestion> = Vec::new();
    'walk: for &(i, score) in &ranking {
        if score <= 0.0 {
            break;
        }
        for f in &db.entries[i].follow_ups {
            if suggestions.len() >= k {
                break 'walk;
            }
            if !suggestions.iter().any(|s| &s.text == f) {
                suggestions.push(Suggestion { text: f.clone(), score });
            }
        }
    }
    let top = ranking.first().map_or(0.0, |r| r.1);
    Followups { suggestions, low_confidence: top < LOW_CONFIDENCE_BELOW, ranking }
}
