//! Prints score quantiles of the synthetic generator at the target class
//! frequencies. Used to refit `RATING_THRESHOLDS` after changing the
//! generator.

use std::sync::Arc;

use retrofit_core::epc::synthetic::{generate_synthetic_with, oracle_score, SyntheticParams};
use retrofit_core::epc::FeatureSchema;

const TARGET: [f64; 15] = [0.5, 2.0, 5.0, 6.0, 8.0, 10.0, 11.0, 11.0, 10.0, 9.0, 8.0, 6.0, 5.0, 4.5, 4.0];

fn main() {
    let schema = Arc::new(FeatureSchema::default_schema());
    let params = SyntheticParams { noise_sigma: 0.0, zero_anomaly_rate: 0.0 };
    let d = generate_synthetic_with(200_000, 99, schema.clone(), &params);
    let mut scores: Vec<f64> = d.rows().iter().map(|p| oracle_score(&schema, p)).collect();
    scores.sort_by(f64::total_cmp);
    let mut cum = 0.0;
    let mut out = Vec::new();
    for t in &TARGET[..14] {
        cum += t / 100.0;
        let q = scores[((scores.len() as f64) * cum) as usize];
        out.push(format!("{q:.1}"));
    }
    println!("thresholds: [{}]", out.join(", "));
    println!("min {:.1} median {:.1} max {:.1}", scores[0], scores[scores.len() / 2], scores[scores.len() - 1]);
}
