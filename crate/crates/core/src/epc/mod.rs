//! Dwelling feature schema, rating labels, dataset handling and encoding.

mod dataset;
mod encoder;
mod rating;
mod schema;
pub mod synthetic;

pub use dataset::{
    clean, load_dataset, read_dataset, split, BadValue, CleanError, CleaningPolicy, CleaningReport, Dataset,
    FeatureCleaning, LoadError, Provenance, SplitSet, TooFewRows, RATING_COLUMN,
};
pub use encoder::{Encoder, Slot};
pub use rating::{CoarseRating, EnergyRating, UnknownRating};
pub use schema::{
    FeatureGroup, FeatureKind, FeatureSchema, FeatureSpec, FieldValue, HomeProfile, ProfileError, SchemaError,
    COUNTY_CODE_COUNT, COUNTY_FEATURE, FEATURE_COUNT, MANDATORY_CONTINUOUS,
};
pub use synthetic::{generate_synthetic, generate_synthetic_with, SyntheticParams};
