//! Calibrated synthetic dwellings for desk-scale experiments.
//!
//! Features are drawn with realistic correlations (older dwellings have worse
//! fabric, bigger houses have more wall area). Labels come from a fixed
//! additive score, roughly a primary energy use per square metre:
//!
//! ```text
//! fabric   = 1.3*A_wall*U_wall + 1.8*A_floor*U_floor
//!          + 0.5*A_roof*U_roof*100/(100 + attic_mm)
//!          + 0.35*A_window*U_window + 0.3*A_door*U_door
//! vent     = 0.33 * TFA * room_height * air_permeability/20 * (1 - mvhr)
//! space    = 70 * (fabric + vent) / TFA * (1 - 0.04*controls) / main_eff
//! water    = (1200 + 2*storage_volume) / TFA / water_eff
//! solar    = 800 * pv_kw / TFA
//! score    = space + water - solar + N(0, noise_sigma^2)
//! ```
//!
//! The score is binned by [`RATING_THRESHOLDS`] into the 15 grades. The
//! thresholds were fit once to quantiles of the noise-free score (see
//! `examples/calibrate_synthetic.rs`) so that the classes are imbalanced with
//! `A1` the rarest (about 0.5% of rows).
//! All constants here are fixture choices, not building physics.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal};

use super::dataset::{Dataset, Provenance};
use super::rating::EnergyRating;
use super::schema::{FeatureSchema, HomeProfile};

/// Upper score bound of each grade `A1..F`; anything above the last is `G`.
pub const RATING_THRESHOLDS: [f64; 14] = [
    62.4, 85.9, 108.1, 124.5, 141.3, 159.4, 178.2, 197.6, 216.9, 237.3, 259.6, 281.5, 306.9, 346.0,
];

pub const DEFAULT_NOISE_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    /// Standard deviation of the Gaussian noise added to the score.
    pub noise_sigma: f64,
    /// Fraction of rows whose `floor_area` and `floor_u` are recorded as
    /// zero after labelling (mimics missing measurements).
    pub zero_anomaly_rate: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams { noise_sigma: DEFAULT_NOISE_SIGMA, zero_anomaly_rate: 0.0 }
    }
}

/// Grade for a score.
pub fn rating_for_score(score: f64) -> EnergyRating {
    let i = RATING_THRESHOLDS.iter().position(|&t| score <= t).unwrap_or(RATING_THRESHOLDS.len());
    EnergyRating::from_index(i).unwrap()
}

struct Columns {
    idx: Vec<Option<usize>>,
}

const NAMES: [&str; 41] = [
    "total_floor_area",
    "wall_area",
    "roof_area",
    "floor_area",
    "window_area",
    "door_area",
    "storeys",
    "room_height",
    "living_area_fraction",
    "south_glazing_fraction",
    "wall_u",
    "roof_u",
    "floor_u",
    "window_u",
    "door_u",
    "thermal_bridging_factor",
    "attic_insulation_mm",
    "air_permeability",
    "draught_stripping_fraction",
    "main_heating_efficiency",
    "main_fuel",
    "heating_controls_level",
    "secondary_heating_fraction",
    "secondary_heating_efficiency",
    "pumps_fans_count",
    "mvhr_efficiency",
    "open_fireplaces",
    "chimney_count",
    "flue_count",
    "low_energy_lighting_fraction",
    "solar_pv_kw",
    "water_storage_volume",
    "cylinder_insulation_mm",
    "water_heating_efficiency",
    "solar_water_heating_area",
    "shower_count",
    "bath_count",
    "county_code",
    "dwelling_type",
    "year_built",
    "occupants",
];

// Indices into NAMES.
const TFA: usize = 0;
const WALL_A: usize = 1;
const ROOF_A: usize = 2;
const FLOOR_A: usize = 3;
const WIN_A: usize = 4;
const DOOR_A: usize = 5;
const HEIGHT: usize = 7;
const WALL_U: usize = 10;
const ROOF_U: usize = 11;
const FLOOR_U: usize = 12;
const WIN_U: usize = 13;
const DOOR_U: usize = 14;
const ATTIC: usize = 16;
const AIRPERM: usize = 17;
const EFF: usize = 19;
const CONTROLS: usize = 21;
const MVHR: usize = 25;
const PV: usize = 30;
const STORAGE: usize = 31;
const WATER_EFF: usize = 33;

impl Columns {
    fn new(schema: &FeatureSchema) -> Self {
        Columns { idx: NAMES.iter().map(|n| schema.index_of(n)).collect() }
    }

    fn require(&self, k: usize) -> usize {
        self.idx[k].unwrap_or_else(|| panic!("synthetic generator needs schema feature `{}`", NAMES[k]))
    }
}

/// Noise-free score of a profile. Panics if the schema lacks one of the
/// features the score reads.
pub fn oracle_score(schema: &FeatureSchema, p: &HomeProfile) -> f64 {
    let c = Columns::new(schema);
    let v = |k: usize| p.get(c.require(k));
    score_from(&|k| v(k))
}

fn score_from(v: &dyn Fn(usize) -> f64) -> f64 {
    let tfa = v(TFA);
    let fabric = 1.3 * v(WALL_A) * v(WALL_U)
        + 1.8 * v(FLOOR_A) * v(FLOOR_U)
        + 0.5 * v(ROOF_A) * v(ROOF_U) * 100.0 / (100.0 + v(ATTIC))
        + 0.35 * v(WIN_A) * v(WIN_U)
        + 0.3 * v(DOOR_A) * v(DOOR_U);
    let vent = 0.33 * tfa * v(HEIGHT) * v(AIRPERM) / 20.0 * (1.0 - v(MVHR));
    let space = 70.0 * (fabric + vent) / tfa * (1.0 - 0.04 * v(CONTROLS)) / v(EFF);
    let water = (1200.0 + 2.0 * v(STORAGE)) / tfa / v(WATER_EFF);
    let solar = 800.0 * v(PV) / tfa;
    space + water - solar
}

pub fn generate_synthetic(n: usize, seed: u64, schema: Arc<FeatureSchema>) -> Dataset {
    generate_synthetic_with(n, seed, schema, &SyntheticParams::default())
}

pub fn generate_synthetic_with(n: usize, seed: u64, schema: Arc<FeatureSchema>, params: &SyntheticParams) -> Dataset {
    let cols = Columns::new(&schema);
    for k in [TFA, WALL_A, ROOF_A, FLOOR_A, WIN_A, DOOR_A, WALL_U, ROOF_U, FLOOR_U, WIN_U, DOOR_U, EFF] {
        cols.require(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.noise_sigma.max(0.0)).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = draw_dwelling(&mut rng);
        let mut score = score_from(&|k| raw[k]);
        if params.noise_sigma > 0.0 {
            score += noise.sample(&mut rng);
        }
        let anomalous = params.zero_anomaly_rate > 0.0 && rng.random::<f64>() < params.zero_anomaly_rate;

        let mut values = vec![0.0; schema.len()];
        for (i, f) in schema.features().iter().enumerate() {
            values[i] = match f.codes() {
                Some(codes) => rng.random_range(0..codes.len()) as f64,
                None => {
                    let (lo, hi) = f.range().unwrap();
                    rng.random_range(lo..=hi)
                }
            };
        }
        for (k, &x) in raw.iter().enumerate() {
            if let Some(i) = cols.idx[k] {
                values[i] = x;
            }
        }
        if anomalous {
            for k in [FLOOR_A, FLOOR_U] {
                values[cols.require(k)] = 0.0;
            }
        }
        rows.push(HomeProfile::from_values_unchecked(values));
        labels.push(rating_for_score(score));
    }
    Dataset::new(schema, rows, labels, Provenance::Synthetic)
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn uni(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// One dwelling in `NAMES` order. Categorical entries hold code indices in
/// the default schema's code order.
fn draw_dwelling(rng: &mut ChaCha8Rng) -> [f64; 41] {
    let mut x = [0.0; 41];

    // detached, semi, end terrace, mid terrace, apartment, maisonette
    let dwelling = {
        let r = uni(rng, 0.0, 1.0);
        [0.35, 0.60, 0.70, 0.82, 0.95, 1.0].iter().position(|&c| r < c).unwrap()
    };
    let exposure = [1.0, 0.8, 0.8, 0.6, 0.5, 0.6][dwelling];
    let year: f64 = 1900.0 + 124.0 * Beta::new(2.2, 1.4).unwrap().sample(rng);
    let age = ((2025.0 - year) / 125.0).clamp(0.0, 1.0);

    let storeys = match dwelling {
        4 => 1.0,
        0 if uni(rng, 0.0, 1.0) < 0.15 => 3.0,
        _ if uni(rng, 0.0, 1.0) < 0.75 => 2.0,
        _ => 1.0,
    };
    let tfa_mean = [150.0, 115.0, 105.0, 95.0, 75.0, 85.0][dwelling];
    let tfa = (LogNormal::new(f64::ln(tfa_mean), 0.3).unwrap().sample(rng)).clamp(30.0, 500.0);
    let footprint = tfa / storeys;
    let height = uni(rng, 2.3, 2.9);
    let shared = if dwelling == 4 { uni(rng, 0.2, 0.6) } else { 1.0 };

    x[TFA] = tfa;
    x[FLOOR_A] = footprint * uni(rng, 0.9, 1.0) * shared;
    x[ROOF_A] = footprint * uni(rng, 1.0, 1.25) * shared;
    x[WALL_A] = 4.0 * footprint.sqrt() * height * storeys * exposure * uni(rng, 0.9, 1.1);
    x[WIN_A] = tfa * uni(rng, 0.1, 0.22);
    x[DOOR_A] = uni(rng, 1.8, 4.5);
    x[6] = storeys;
    x[HEIGHT] = height;
    x[8] = uni(rng, 0.1, 0.5);
    x[9] = uni(rng, 0.0, 1.0);

    // walls and floors are often upgraded independently of age
    x[WALL_U] = (0.15 + 2.1 * (0.5 * age + 0.5 * uni(rng, 0.0, 1.0)) * uni(rng, 0.5, 1.3)).clamp(0.12, 3.0);
    x[ROOF_U] = (0.12 + 1.4 * age * uni(rng, 0.1, 1.4)).clamp(0.1, 3.0);
    x[FLOOR_U] = (0.1 + 1.4 * (0.3 * age + 0.7 * uni(rng, 0.0, 1.0)) * uni(rng, 0.6, 1.1)).clamp(0.1, 1.6);
    x[WIN_U] = (1.2 + 3.2 * age * uni(rng, 0.3, 1.2)).clamp(0.8, 5.7);
    x[DOOR_U] = (1.2 + 2.4 * age * uni(rng, 0.3, 1.2)).clamp(0.8, 4.0);
    x[15] = (0.04 + 0.12 * age * uni(rng, 0.0, 1.0)).clamp(0.0, 0.2);
    x[ATTIC] = round_to(uni(rng, 0.0, 300.0) * (1.0 - 0.5 * age), 25.0);
    x[AIRPERM] = (2.0 + 12.0 * age * uni(rng, 0.3, 1.3)).clamp(1.0, 20.0);
    x[18] = uni(rng, 0.0, 1.0);

    let fuel = pick(rng, &[0.40, 0.35, 0.10, 0.05, 0.05, 0.05]);
    x[EFF] = match fuel {
        2 => uni(rng, 0.95, 1.05),
        _ => uni(rng, 0.72, 0.96),
    };
    x[20] = fuel as f64;
    x[CONTROLS] = (uni(rng, 0.0, 4.0).floor()).min(3.0);
    let has_secondary = uni(rng, 0.0, 1.0) < 0.3;
    x[22] = if has_secondary { 0.1 } else { 0.0 };
    x[23] = uni(rng, 0.3, 0.9);
    x[24] = uni(rng, 0.0, 5.0).floor();
    x[MVHR] = if uni(rng, 0.0, 1.0) < 0.08 { uni(rng, 0.6, 0.9) } else { 0.0 };
    x[26] = uni(rng, 0.0, 3.0).floor();
    x[27] = uni(rng, 0.0, 3.0).floor();
    x[28] = uni(rng, 0.0, 3.0).floor();
    x[29] = uni(rng, 0.0, 1.0);
    x[PV] = if uni(rng, 0.0, 1.0) < 0.15 { round_to(uni(rng, 1.0, 6.0), 0.5) } else { 0.0 };

    x[STORAGE] = if uni(rng, 0.0, 1.0) < 0.3 { 0.0 } else { round_to(uni(rng, 80.0, 250.0), 10.0) };
    x[32] = if x[STORAGE] > 0.0 { round_to(uni(rng, 0.0, 80.0), 5.0) } else { 0.0 };
    x[WATER_EFF] = (x[EFF] * uni(rng, 0.8, 1.0)).clamp(0.3, 1.1);
    x[34] = if uni(rng, 0.0, 1.0) < 0.1 { uni(rng, 2.0, 6.0) } else { 0.0 };
    x[35] = uni(rng, 1.0, 4.0).floor();
    x[36] = uni(rng, 0.0, 3.0).floor();

    x[37] = uni(rng, 0.0, 26.0).floor().min(25.0);
    x[38] = dwelling as f64;
    x[39] = year.round();
    x[40] = uni(rng, 1.0, 7.0).floor();
    x
}
