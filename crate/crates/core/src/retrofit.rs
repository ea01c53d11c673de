//! Retrofit catalog, feature mutation and the per-rating minimum-cost plan
//! frontier.
//!
//! Amounts are held in integer cents so that sums and comparisons are exact.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::RatingModel;
use crate::epc::{EnergyRating, FeatureSchema, HomeProfile};

pub const DEFAULT_CATALOG: &str = include_str!("../assets/catalog.toml");
pub const DEFAULT_COMBINATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentCategory {
    WallInsulation,
    RoofInsulation,
    FloorInsulation,
    Window,
    Door,
    AtticInsulation,
    HeatingControls,
    Mvhr,
    SolarPanels,
}

impl ComponentCategory {
    pub const ALL: [ComponentCategory; 9] = [
        ComponentCategory::WallInsulation,
        ComponentCategory::RoofInsulation,
        ComponentCategory::FloorInsulation,
        ComponentCategory::Window,
        ComponentCategory::Door,
        ComponentCategory::AtticInsulation,
        ComponentCategory::HeatingControls,
        ComponentCategory::Mvhr,
        ComponentCategory::SolarPanels,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentCategory::WallInsulation => "wall_insulation",
            ComponentCategory::RoofInsulation => "roof_insulation",
            ComponentCategory::FloorInsulation => "floor_insulation",
            ComponentCategory::Window => "window",
            ComponentCategory::Door => "door",
            ComponentCategory::AtticInsulation => "attic_insulation",
            ComponentCategory::HeatingControls => "heating_controls",
            ComponentCategory::Mvhr => "mvhr",
            ComponentCategory::SolarPanels => "solar_panels",
        }
    }
}

impl fmt::Display for ComponentCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown category `{0}`")]
pub struct UnknownCategory(pub String);

impl FromStr for ComponentCategory {
    type Err = UnknownCategory;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentCategory::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| UnknownCategory(s.to_string()))
    }
}

/// Euro amount with two decimals.
pub fn format_eur(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", cents.abs() / 100, cents.abs() % 100)
}

pub fn cents_to_eur(cents: i64) -> f64 {
    cents as f64 / 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mutation {
    pub feature: String,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrofitItem {
    pub id: String,
    pub category: ComponentCategory,
    pub name: String,
    /// Sorted by feature name.
    pub mutations: Vec<Mutation>,
    pub price_cents: i64,
    pub grant_cents: i64,
}

impl RetrofitItem {
    pub fn net_cents(&self) -> i64 {
        self.price_cents - self.grant_cents
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("cannot read catalog: {0}")]
    Io(String),
    #[error("duplicate item id `{0}`")]
    DuplicateId(String),
    #[error("item `{item}` mutates unknown feature `{feature}`")]
    UnknownFeature { item: String, feature: String },
    #[error("item `{item}` mutates categorical feature `{feature}`")]
    CategoricalFeature { item: String, feature: String },
    #[error("item `{item}` sets {feature} = {value}, outside [{min}, {max}]")]
    OutOfRange { item: String, feature: String, value: f64, min: f64, max: f64 },
    #[error("item `{item}` has grant {grant} above its price {price}")]
    GrantExceedsPrice { item: String, price: String, grant: String },
    #[error("item `{item}` has a negative or non-finite amount")]
    BadAmount { item: String },
    #[error("item `{0}` has no mutations")]
    NoMutations(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalog {
    version: String,
    #[serde(default)]
    item: Vec<RawItem>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: String,
    category: ComponentCategory,
    name: String,
    mutations: BTreeMap<String, f64>,
    price_eur: f64,
    grant_eur: f64,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}

fn to_cents(x: f64) -> Option<i64> {
    (0.0..1e13).contains(&x).then(|| (x * 100.0).round() as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub version: String,
    /// File order.
    pub items: Vec<RetrofitItem>,
}

impl Catalog {
    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Catalog, CatalogError> {
        let raw: RawCatalog = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            CatalogError::Parse { line, column, message: e.message().trim().to_string() }
        })?;
        let mut seen = BTreeSet::new();
        let mut items = Vec::with_capacity(raw.item.len());
        for it in raw.item {
            if !seen.insert(it.id.clone()) {
                return Err(CatalogError::DuplicateId(it.id));
            }
            if it.mutations.is_empty() {
                return Err(CatalogError::NoMutations(it.id));
            }
            let mut mutations = Vec::with_capacity(it.mutations.len());
            for (feature, value) in it.mutations {
                let index = schema
                    .index_of(&feature)
                    .ok_or_else(|| CatalogError::UnknownFeature { item: it.id.clone(), feature: feature.clone() })?;
                let Some((min, max)) = schema.features()[index].range() else {
                    return Err(CatalogError::CategoricalFeature { item: it.id.clone(), feature });
                };
                if !(value >= min && value <= max) {
                    return Err(CatalogError::OutOfRange { item: it.id.clone(), feature, value, min, max });
                }
                mutations.push(Mutation { feature, index, value });
            }
            let (Some(price_cents), Some(grant_cents)) = (to_cents(it.price_eur), to_cents(it.grant_eur)) else {
                return Err(CatalogError::BadAmount { item: it.id });
            };
            if grant_cents > price_cents {
                return Err(CatalogError::GrantExceedsPrice {
                    item: it.id,
                    price: format_eur(price_cents),
                    grant: format_eur(grant_cents),
                });
            }
            items.push(RetrofitItem { id: it.id, category: it.category, name: it.name, mutations, price_cents, grant_cents });
        }
        Ok(Catalog { version: raw.version, items })
    }

    pub fn load(path: &Path, schema: &FeatureSchema) -> Result<Catalog, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::Io(format!("{}: {e}", path.display())))?;
        Catalog::parse(&text, schema)
    }

    pub fn default_catalog(schema: &FeatureSchema) -> Catalog {
        Catalog::parse(DEFAULT_CATALOG, schema).expect("shipped catalog is valid")
    }

    pub fn item(&self, id: &str) -> Option<&RetrofitItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn in_category(&self, c: ComponentCategory) -> impl Iterator<Item = &RetrofitItem> {
        self.items.iter().filter(move |i| i.category == c)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApplyError {
    #[error("items `{first}` and `{second}` both set {feature}")]
    ConflictingMutations { feature: String, first: String, second: String },
    #[error("two items from category {0}")]
    SameCategory(ComponentCategory),
}

/// Home with every item's mutations applied. The input is not modified.
pub fn apply_items(home: &HomeProfile, items: &[&RetrofitItem]) -> Result<HomeProfile, ApplyError> {
    let mut categories = BTreeSet::new();
    let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
    let mut out = home.clone();
    for it in items {
        if !categories.insert(it.category) {
            return Err(ApplyError::SameCategory(it.category));
        }
        for m in &it.mutations {
            if let Some(first) = owner.insert(m.index, &it.id) {
                return Err(ApplyError::ConflictingMutations {
                    feature: m.feature.clone(),
                    first: first.to_string(),
                    second: it.id.clone(),
                });
            }
            out.set(m.index, m.value);
        }
    }
    Ok(out)
}

/// Maps profiles to ratings; implementations must be deterministic.
pub trait RatingPredictor: Sync {
    fn predict_ratings(&self, profiles: &[HomeProfile]) -> Vec<EnergyRating>;
}

impl RatingPredictor for RatingModel {
    fn predict_ratings(&self, profiles: &[HomeProfile]) -> Vec<EnergyRating> {
        RatingModel::predict_ratings(self, profiles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostBasis {
    /// Price minus grants.
    #[default]
    Net,
    Gross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub home: HomeProfile,
    pub categories: BTreeSet<ComponentCategory>,
    /// `None` means unlimited.
    pub budget_cents: Option<i64>,
    pub combination_cap: usize,
    /// Budget filter and frontier minimum both use this cost.
    pub cost_basis: CostBasis,
    /// Forces one item in every selected category (no keep-existing).
    pub strict: bool,
}

impl PlanRequest {
    pub fn new(home: HomeProfile) -> PlanRequest {
        PlanRequest {
            home,
            categories: ComponentCategory::ALL.into_iter().collect(),
            budget_cents: None,
            combination_cap: DEFAULT_COMBINATION_CAP,
            cost_basis: CostBasis::Net,
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RetrofitPlan {
    /// Chosen item ids in category order; kept categories are absent.
    pub item_ids: Vec<String>,
    pub predicted_rating: EnergyRating,
    pub total_cents: i64,
    pub grant_cents: i64,
    pub net_cents: i64,
}

impl RetrofitPlan {
    fn cost(&self, basis: CostBasis) -> i64 {
        match basis {
            CostBasis::Net => self.net_cents,
            CostBasis::Gross => self.total_cents,
        }
    }
}

/// Total order used to pick a frontier entry: cost, then item count, then
/// the sorted item ids.
pub fn plan_order(a: &RetrofitPlan, b: &RetrofitPlan, basis: CostBasis) -> Ordering {
    fn ids(p: &RetrofitPlan) -> Vec<&str> {
        let mut v: Vec<&str> = p.item_ids.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
    a.cost(basis)
        .cmp(&b.cost(basis))
        .then(a.item_ids.len().cmp(&b.item_ids.len()))
        .then_with(|| ids(a).cmp(&ids(b)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanFrontier {
    pub base_rating: EnergyRating,
    pub entries: BTreeMap<EnergyRating, RetrofitPlan>,
    pub cost_basis: CostBasis,
    /// Size of the enumerated product.
    pub combinations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("{size} combinations exceed the cap of {cap}")]
    CombinationLimitExceeded { size: String, cap: usize },
    #[error("category {0} has no items in the catalog")]
    EmptyCategory(ComponentCategory),
    #[error("budget must be non-negative")]
    NegativeBudget,
    #[error("combination cap must be at least 1")]
    ZeroCap,
}

const CHUNK: usize = 2048;

fn merge_into(f: &mut BTreeMap<EnergyRating, RetrofitPlan>, plan: RetrofitPlan, basis: CostBasis) {
    match f.get(&plan.predicted_rating) {
        Some(cur) if plan_order(cur, &plan, basis) != Ordering::Greater => {}
        _ => {
            f.insert(plan.predicted_rating, plan);
        }
    }
}

/// Exhaustive search over one option per selected category (an item, or
/// keeping the existing feature values unless `strict`). Every combination
/// within budget is rated by `model`; the cheapest plan per rating is kept.
pub fn enumerate_plans(req: &PlanRequest, catalog: &Catalog, model: &dyn RatingPredictor) -> Result<PlanFrontier, PlanError> {
    if req.budget_cents.is_some_and(|b| b < 0) {
        return Err(PlanError::NegativeBudget);
    }
    if req.combination_cap == 0 {
        return Err(PlanError::ZeroCap);
    }
    let mut options: Vec<Vec<Option<&RetrofitItem>>> = Vec::new();
    for &c in &req.categories {
        let items: Vec<Option<&RetrofitItem>> = catalog.in_category(c).map(Some).collect();
        if items.is_empty() {
            return Err(PlanError::EmptyCategory(c));
        }
        let mut opts = if req.strict { Vec::new() } else { vec![None] };
        opts.extend(items);
        options.push(opts);
    }
    let mut size: u128 = 1;
    for o in &options {
        size = size.saturating_mul(o.len() as u128);
    }
    if size > req.combination_cap as u128 {
        return Err(PlanError::CombinationLimitExceeded { size: size.to_string(), cap: req.combination_cap });
    }
    let size = size as usize;
    let base_rating = model.predict_ratings(std::slice::from_ref(&req.home))[0];
    let basis = req.cost_basis;

    let chunks: Vec<BTreeMap<EnergyRating, RetrofitPlan>> = (0..size.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut plans = Vec::new();
            let mut homes = Vec::new();
            for mut k in c * CHUNK..((c + 1) * CHUNK).min(size) {
                let mut chosen: Vec<&RetrofitItem> = Vec::with_capacity(options.len());
                for o in &options {
                    if let Some(it) = o[k % o.len()] {
                        chosen.push(it);
                    }
                    k /= o.len();
                }
                let total: i64 = chosen.iter().map(|i| i.price_cents).sum();
                let grant: i64 = chosen.iter().map(|i| i.grant_cents).sum();
                let cost = if basis == CostBasis::Net { total - grant } else { total };
                if req.budget_cents.is_some_and(|b| cost > b) {
                    continue;
                }
                let Ok(home) = apply_items(&req.home, &chosen) else { continue };
                homes.push(home);
                plans.push(RetrofitPlan {
                    item_ids: chosen.iter().map(|i| i.id.clone()).collect(),
                    predicted_rating: EnergyRating::A1,
                    total_cents: total,
                    grant_cents: grant,
                    net_cents: total - grant,
                });
            }
            let mut best = BTreeMap::new();
            if homes.is_empty() {
                return best;
            }
            for (mut p, r) in plans.into_iter().zip(model.predict_ratings(&homes)) {
                p.predicted_rating = r;
                merge_into(&mut best, p, basis);
            }
            best
        })
        .collect();
    let mut entries = BTreeMap::new();
    for part in chunks {
        for (_, p) in part {
            merge_into(&mut entries, p, basis);
        }
    }
    Ok(PlanFrontier { base_rating, entries, cost_basis: basis, combinations: size })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub rating: EnergyRating,
    pub item_ids: Vec<String>,
    pub total_cents: i64,
    pub grant_cents: i64,
    pub net_cents: i64,
    /// Grades gained over the base rating; negative when worse.
    pub improvement: i32,
}

/// Frontier rows, best rating first.
pub fn frontier_report(f: &PlanFrontier) -> Vec<ReportRow> {
    f.entries
        .values()
        .map(|p| ReportRow {
            rating: p.predicted_rating,
            item_ids: p.item_ids.clone(),
            total_cents: p.total_cents,
            grant_cents: p.grant_cents,
            net_cents: p.net_cents,
            improvement: f.base_rating.index() as i32 - p.predicted_rating.index() as i32,
        })
        .collect()
}

/// Aligned text table of [`frontier_report`].
pub fn render_report(f: &PlanFrontier) -> String {
    let mut out = format!("base rating: {}\n", f.base_rating);
    out.push_str(&format!("{:<6} {:>6} {:>12} {:>12} {:>12}  items\n", "rating", "steps", "total_eur", "grant_eur", "net_eur"));
    for r in frontier_report(f) {
        let items = if r.item_ids.is_empty() { "(none)".to_string() } else { r.item_ids.join(", ") };
        out.push_str(&format!(
            "{:<6} {:>+6} {:>12} {:>12} {:>12}  {}\n",
            r.rating.as_str(),
            r.improvement,
            format_eur(r.total_cents),
            format_eur(r.grant_cents),
            format_eur(r.net_cents),
            items
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epc::{generate_synthetic, FeatureSchema};
    use std::sync::Arc;

    fn schema() -> FeatureSchema {
        FeatureSchema::default_schema()
    }

    fn home() -> HomeProfile {
        generate_synthetic(1, 11, Arc::new(schema())).rows()[0].clone()
    }

    /// Rating from a weighted sum of U-values; lower is better.
    struct UStub {
        idx: Vec<usize>,
    }

    impl UStub {
        fn new() -> UStub {
            let s = schema();
            UStub { idx: ["wall_u", "roof_u", "floor_u", "window_u", "door_u"].iter().map(|f| s.index_of(f).unwrap()).collect() }
        }
    }

    impl RatingPredictor for UStub {
        fn predict_ratings(&self, profiles: &[HomeProfile]) -> Vec<EnergyRating> {
            profiles
                .iter()
                .map(|p| {
                    let s: f64 = self.idx.iter().map(|&i| p.get(i)).sum::<f64>() - p.get(30) * 0.3;
                    EnergyRating::from_index((s * 1.5).clamp(0.0, 14.0) as usize).unwrap()
                })
                .collect()
        }
    }

    #[test]
    fn default_catalog_has_door_example_and_every_category() {
        let c = Catalog::default_catalog(&schema());
        let door = c.item("door-aluminium").unwrap();
        assert_eq!(door.category, ComponentCategory::Door);
        assert_eq!(door.mutations, vec![Mutation { feature: "door_u".into(), index: 14, value: 1.7 }]);
        assert_eq!(door.price_cents, 109_900);
        for cat in ComponentCategory::ALL {
            assert!(c.in_category(cat).next().is_some(), "{cat}");
        }
        assert!(c.items.iter().all(|i| i.grant_cents < i.price_cents));
    }

    #[test]
    fn catalog_validation_errors() {
        let s = schema();
        let item = |extra: &str| format!("version = \"t\"\n[[item]]\nid = \"x\"\ncategory = \"door\"\nname = \"X\"\n{extra}");
        let e = Catalog::parse(&item("mutations = { door_u = 1.0 }\nprice_eur = 1000\ngrant_eur = 1200\n"), &s).unwrap_err();
        assert!(matches!(e, CatalogError::GrantExceedsPrice { .. }), "{e:?}");
        let e = Catalog::parse(&item("mutations = { door_x = 1.0 }\nprice_eur = 1\ngrant_eur = 0\n"), &s).unwrap_err();
        assert_eq!(e, CatalogError::UnknownFeature { item: "x".into(), feature: "door_x".into() });
        let e = Catalog::parse(&item("mutations = { door_u = 9.0 }\nprice_eur = 1\ngrant_eur = 0\n"), &s).unwrap_err();
        assert!(matches!(e, CatalogError::OutOfRange { .. }));
        let e = Catalog::parse(&item("mutations = { main_fuel = 1.0 }\nprice_eur = 1\ngrant_eur = 0\n"), &s).unwrap_err();
        assert!(matches!(e, CatalogError::CategoricalFeature { .. }));
        let e = Catalog::parse(&item("mutations = {}\nprice_eur = 1\ngrant_eur = 0\n"), &s).unwrap_err();
        assert_eq!(e, CatalogError::NoMutations("x".into()));
        let one = "[[item]]\nid = \"x\"\ncategory = \"door\"\nname = \"X\"\nmutations = { door_u = 1.0 }\nprice_eur = 1\ngrant_eur = 0\n";
        let e = Catalog::parse(&format!("version = \"t\"\n{one}{one}"), &s).unwrap_err();
        assert_eq!(e, CatalogError::DuplicateId("x".into()));
    }

    #[test]
    fn parse_errors_carry_positions() {
        let s = schema();
        match Catalog::parse("", &s).unwrap_err() {
            CatalogError::Parse { line, column, .. } => assert_eq!((line, column), (1, 1)),
            e => panic!("{e:?}"),
        }
        match Catalog::parse("version = \"t\"\n[[item]]\nid = = 3\n", &s).unwrap_err() {
            CatalogError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        match Catalog::parse("version = \"t\"\n[[item]]\nid = \"a\"\ncategory = \"boiler\"\n", &s).unwrap_err() {
            CatalogError::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn apply_items_sets_only_mutated_features() {
        let s = schema();
        let c = Catalog::default_catalog(&s);
        let mut h = home();
        let roof = s.index_of("roof_u").unwrap();
        h.set(roof, 2.5);
        let roof_item = RetrofitItem {
            id: "r".into(),
            category: ComponentCategory::RoofInsulation,
            name: "r".into(),
            mutations: vec![Mutation { feature: "roof_u".into(), index: roof, value: 1.3 }],
            price_cents: 0,
            grant_cents: 0,
        };
        let out = apply_items(&h, &[&roof_item]).unwrap();
        assert_eq!(out.get(roof), 1.3);
        assert_eq!(h.get(roof), 2.5);
        for i in (0..41).filter(|&i| i != roof) {
            assert_eq!(out.get(i), h.get(i));
        }
        assert_eq!(apply_items(&h, &[]).unwrap(), h);

        let a = c.item("wall-cavity-fill").unwrap();
        let mut b = c.item("wall-external").unwrap().clone();
        b.category = ComponentCategory::Window;
        assert!(matches!(apply_items(&h, &[a, &b]), Err(ApplyError::ConflictingMutations { .. })));
        let d = c.item("door-aluminium").unwrap();
        let m = c.item("mvhr-whole-house").unwrap();
        assert_eq!(apply_items(&h, &[d, m, a]).unwrap(), apply_items(&h, &[a, m, d]).unwrap());
    }

    fn brute_force(req: &PlanRequest, catalog: &Catalog, model: &dyn RatingPredictor) -> BTreeMap<EnergyRating, RetrofitPlan> {
        fn walk<'a>(
            cats: &[ComponentCategory],
            catalog: &'a Catalog,
            strict: bool,
            chosen: &mut Vec<&'a RetrofitItem>,
            out: &mut Vec<Vec<&'a RetrofitItem>>,
        ) {
            let Some((&c, rest)) = cats.split_first() else {
                out.push(chosen.clone());
                return;
            };
            if !strict {
                walk(rest, catalog, strict, chosen, out);
            }
            for it in catalog.items.iter().filter(|i| i.category == c) {
                chosen.push(it);
                walk(rest, catalog, strict, chosen, out);
                chosen.pop();
            }
        }
        let cats: Vec<_> = req.categories.iter().copied().collect();
        let mut combos = Vec::new();
        walk(&cats, catalog, req.strict, &mut Vec::new(), &mut combos);
        let mut best: BTreeMap<EnergyRating, RetrofitPlan> = BTreeMap::new();
        for combo in combos {
            let total: i64 = combo.iter().map(|i| i.price_cents).sum();
            let grant: i64 = combo.iter().map(|i| i.grant_cents).sum();
            if req.budget_cents.is_some_and(|b| total - grant > b) {
                continue;
            }
            let home = apply_items(&req.home, &combo).unwrap();
            let r = model.predict_ratings(&[home])[0];
            let plan = RetrofitPlan {
                item_ids: combo.iter().map(|i| i.id.clone()).collect(),
                predicted_rating: r,
                total_cents: total,
                grant_cents: grant,
                net_cents: total - grant,
            };
            let better = match best.get(&r) {
                None => true,
                Some(cur) => {
                    let mut a: Vec<_> = plan.item_ids.clone();
                    let mut b: Vec<_> = cur.item_ids.clone();
                    a.sort();
                    b.sort();
                    (plan.net_cents, a.len(), a) < (cur.net_cents, b.len(), b)
                }
            };
            if better {
                best.insert(r, plan);
            }
        }
        best
    }

    #[test]
    fn three_categories_match_brute_force() {
        let s = schema();
        let c = Catalog::default_catalog(&s);
        let mut req = PlanRequest::new(home());
        req.categories = [ComponentCategory::WallInsulation, ComponentCategory::Window, ComponentCategory::Door].into();
        let stub = UStub::new();
        let f = enumerate_plans(&req, &c, &stub).unwrap();
        assert_eq!(f.combinations, 4 * 3 * 3);
        assert_eq!(f.entries, brute_force(&req, &c, &stub));
        assert_eq!(f.entries[&f.base_rating].net_cents, 0);
        assert!(f.entries[&f.base_rating].item_ids.is_empty());
    }

    #[test]
    fn empty_selection_and_zero_budget() {
        let s = schema();
        let c = Catalog::default_catalog(&s);
        let stub = UStub::new();
        let mut req = PlanRequest::new(home());
        req.categories.clear();
        let f = enumerate_plans(&req, &c, &stub).unwrap();
        assert_eq!(f.entries.len(), 1);
        assert_eq!(f.combinations, 1);
        let row = &frontier_report(&f)[0];
        assert_eq!((row.rating, row.net_cents, row.improvement), (f.base_rating, 0, 0));

        let mut req = PlanRequest::new(home());
        req.budget_cents = Some(0);
        let f = enumerate_plans(&req, &c, &stub).unwrap();
        assert_eq!(f.entries.keys().copied().collect::<Vec<_>>(), vec![f.base_rating]);
        req.budget_cents = Some(-1);
        assert_eq!(enumerate_plans(&req, &c, &stub).unwrap_err(), PlanError::NegativeBudget);
    }

    #[test]
    fn cap_strict_mode_and_empty_category() {
        let s = schema();
        let c = Catalog::default_catalog(&s);
        let stub = UStub::new();
        let mut req = PlanRequest::new(home());
        req.combination_cap = 1000;
        match enumerate_plans(&req, &c, &stub).unwrap_err() {
            PlanError::CombinationLimitExceeded { size, cap } => assert_eq!((size.as_str(), cap), ("23328", 1000)),
            e => panic!("{e:?}"),
        }
        let mut req = PlanRequest::new(home());
        req.categories = [ComponentCategory::Door, ComponentCategory::Mvhr].into();
        req.strict = true;
        let f = enumerate_plans(&req, &c, &stub).unwrap();
        assert_eq!(f.combinations, 2);
        assert!(f.entries.values().all(|p| p.item_ids.len() == 2));
        assert_eq!(f.entries, brute_force(&req, &c, &stub));

        let only_doors = Catalog { version: "t".into(), items: c.in_category(ComponentCategory::Door).cloned().collect() };
        assert_eq!(enumerate_plans(&req, &only_doors, &stub).unwrap_err(), PlanError::EmptyCategory(ComponentCategory::Mvhr));
    }

    #[test]
    fn report_orders_best_first() {
        let plan = |r: EnergyRating, cost: i64| RetrofitPlan {
            item_ids: vec![format!("{r}")],
            predicted_rating: r,
            total_cents: cost,
            grant_cents: 0,
            net_cents: cost,
        };
        let f = PlanFrontier {
            base_rating: EnergyRating::D1,
            entries: [(EnergyRating::C1, plan(EnergyRating::C1, 300_000)), (EnergyRating::B2, plan(EnergyRating::B2, 800_000))].into(),
            cost_basis: CostBasis::Net,
            combinations: 2,
        };
        let rows = frontier_report(&f);
        assert_eq!(rows.iter().map(|r| (r.rating, r.improvement)).collect::<Vec<_>>(), vec![(EnergyRating::B2, 5), (EnergyRating::C1, 3)]);
        let text = render_report(&f);
        assert!(text.contains("B2") && text.contains("8000.00") && text.contains("+5"));
    }

    #[test]
    fn gross_basis_minimises_price() {
        let s = schema();
        let c = Catalog::default_catalog(&s);
        let stub = UStub::new();
        let mut req = PlanRequest::new(home());
        req.categories = [ComponentCategory::WallInsulation, ComponentCategory::SolarPanels].into();
        let net = enumerate_plans(&req, &c, &stub).unwrap();
        req.cost_basis = CostBasis::Gross;
        let gross = enumerate_plans(&req, &c, &stub).unwrap();
        assert_eq!(net.entries.keys().collect::<Vec<_>>(), gross.entries.keys().collect::<Vec<_>>());
        for (r, p) in &gross.entries {
            assert!(p.total_cents <= net.entries[r].total_cents);
        }
    }

    #[test]
    fn money_formatting() {
        assert_eq!(format_eur(109_900), "1099.00");
        assert_eq!(format_eur(5), "0.05");
        assert_eq!(format_eur(-250), "-2.50");
        assert_eq!(cents_to_eur(109_900), 1099.0);
    }
}
