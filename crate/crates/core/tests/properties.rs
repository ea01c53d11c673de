use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use retrofit_core::checkpoint::{load_model, save_model};
use retrofit_core::classifiers::{train_model, ModelConfig, ModelKind, RatingModel};
use retrofit_core::epc::synthetic::{oracle_score, rating_for_score};
use retrofit_core::epc::{generate_synthetic, split, Dataset, EnergyRating, FeatureSchema, HomeProfile};
use retrofit_core::metrics::EvalMetrics;
use retrofit_core::report::{parse_plan_text, plan_id_of, plan_to_text, tokenize, ContextTemplates, QuestionDb};
use retrofit_core::retrofit::{enumerate_plans, Catalog, ComponentCategory, PlanFrontier, PlanRequest, RatingPredictor};

fn schema() -> &'static Arc<FeatureSchema> {
    static S: OnceLock<Arc<FeatureSchema>> = OnceLock::new();
    S.get_or_init(|| Arc::new(FeatureSchema::default_schema()))
}

fn homes() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| generate_synthetic(64, 5, schema().clone()))
}

fn tree() -> &'static RatingModel {
    static M: OnceLock<RatingModel> = OnceLock::new();
    M.get_or_init(|| {
        let data = generate_synthetic(600, 2, schema().clone());
        let mut cfg = ModelConfig::default();
        cfg.tree.max_depth = 4;
        train_model(ModelKind::DecisionTree, &split(&data, 2).unwrap(), &cfg, 2).unwrap()
    })
}

/// Noise-free labelling rule of the synthetic generator.
struct Oracle;

impl RatingPredictor for Oracle {
    fn predict_ratings(&self, profiles: &[HomeProfile]) -> Vec<EnergyRating> {
        profiles.iter().map(|p| rating_for_score(oracle_score(schema(), p))).collect()
    }
}

fn categories() -> impl Strategy<Value = BTreeSet<ComponentCategory>> {
    proptest::sample::subsequence(ComponentCategory::ALL.to_vec(), 0..=4).prop_map(|v| v.into_iter().collect())
}

fn frontier(home: usize, cats: &BTreeSet<ComponentCategory>, budget: Option<i64>) -> PlanFrontier {
    let mut req = PlanRequest::new(homes().rows()[home].clone());
    req.categories = cats.clone();
    req.budget_cents = budget;
    enumerate_plans(&req, &Catalog::default_catalog(schema()), &Oracle).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn frontier_respects_budget_and_keeps_the_base(home in 0..64usize, cats in categories(), budget in proptest::option::of(0..2_000_000i64)) {
        let f = frontier(home, &cats, budget);
        let base = &f.entries[&f.base_rating];
        prop_assert!(base.item_ids.is_empty());
        prop_assert_eq!(base.net_cents, 0);
        for (r, p) in &f.entries {
            prop_assert_eq!(*r, p.predicted_rating);
            prop_assert!(budget.is_none_or(|b| p.net_cents <= b));
            prop_assert_eq!(p.net_cents, p.total_cents - p.grant_cents);
        }
    }

    #[test]
    fn more_budget_never_hurts(home in 0..64usize, cats in categories(), b in 0..1_500_000i64, extra in 0..1_500_000i64) {
        let lo = frontier(home, &cats, Some(b));
        let hi = frontier(home, &cats, Some(b + extra));
        prop_assert!(hi.entries.keys().next() <= lo.entries.keys().next());
        for (r, p) in &lo.entries {
            prop_assert!(hi.entries[r].net_cents <= p.net_cents);
        }
    }

    #[test]
    fn plan_documents_parse_back(home in 0..64usize, cats in categories()) {
        let catalog = Catalog::default_catalog(schema());
        let templates = ContextTemplates::default_templates();
        for p in frontier(home, &cats, None).entries.values() {
            let doc = plan_to_text(p, &catalog, schema(), &templates).unwrap();
            prop_assert_eq!(&parse_plan_text(&doc.text), &doc.fields);
            prop_assert_eq!(&doc.plan_id, &plan_id_of(&doc.text));
            prop_assert_eq!(doc.plan_id.len(), 16);
            for id in &p.item_ids {
                for m in &catalog.item(id).unwrap().mutations {
                    let v = doc.fields.iter().find(|(k, _)| *k == m.feature).map(|(_, v)| v.parse::<f64>().unwrap());
                    prop_assert_eq!(v, Some(m.value));
                }
            }
        }
    }

    #[test]
    fn truncated_or_padded_checkpoints_are_rejected(cut in 0.0..1.0f64, pad in any::<u8>()) {
        let bytes = save_model(tree(), schema());
        let n = (cut * bytes.len() as f64) as usize;
        prop_assert!(load_model(&bytes[..n], schema()).is_err());
        let mut longer = bytes.clone();
        longer.push(pad);
        prop_assert!(load_model(&longer, schema()).is_err());
    }

    #[test]
    fn profiles_survive_the_map_form(row in 0..64usize) {
        let p = &homes().rows()[row];
        let back = schema().profile_from_map(&schema().profile_to_map(p)).unwrap();
        prop_assert_eq!(&back, p);
    }

    #[test]
    fn similarities_are_cosines(query in "[a-zA-Z ?']{0,60}") {
        let db = QuestionDb::default_db();
        for s in db.similarities(&query) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        }
        for t in tokenize(&query) {
            prop_assert!(t.chars().all(|c| c.is_ascii_lowercase()));
        }
    }

    #[test]
    fn accuracy_matches_the_confusion_diagonal(pairs in proptest::collection::vec((0..15usize, 0..15usize), 1..200)) {
        let truth: Vec<EnergyRating> = pairs.iter().map(|p| EnergyRating::from_index(p.0).unwrap()).collect();
        let pred: Vec<EnergyRating> = pairs.iter().map(|p| EnergyRating::from_index(p.1).unwrap()).collect();
        let m = EvalMetrics::from_predictions(&truth, &pred).unwrap();
        let hits = pairs.iter().filter(|p| p.0 == p.1).count();
        prop_assert!((m.accuracy - hits as f64 / pairs.len() as f64).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        prop_assert_eq!(m.absent.len() + m.per_class_accuracy.len(), 15);
    }
}

#[test]
fn rating_names_and_groups_agree() {
    for r in EnergyRating::ALL {
        assert_eq!(r.as_str().parse::<EnergyRating>().unwrap(), r);
        assert_eq!(EnergyRating::from_index(r.index()), Some(r));
        assert!(r.to_coarse().members().contains(&r));
    }
}
