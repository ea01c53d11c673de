//! Feature schema and the per-dwelling feature record.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Deserialize;
use sha2::{Digest, Sha256};

const DEFAULT_SCHEMA: &str = include_str!("../../assets/schema.toml");

/// Names that every schema must declare, with the kind the rest of the
/// crate expects them to have.
pub const MANDATORY_CONTINUOUS: [&str; 12] = [
    "wall_area",
    "roof_area",
    "floor_area",
    "window_area",
    "door_area",
    "wall_u",
    "roof_u",
    "floor_u",
    "window_u",
    "door_u",
    "main_heating_efficiency",
    "water_storage_volume",
];
pub const COUNTY_FEATURE: &str = "county_code";
pub const COUNTY_CODE_COUNT: usize = 26;
pub const FEATURE_COUNT: usize = 41;

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(String),
    #[error("schema declares {0} features, expected {FEATURE_COUNT}")]
    WrongCount(usize),
    #[error("duplicate feature `{0}`")]
    Duplicate(String),
    #[error("mandatory feature `{0}` missing or of the wrong kind")]
    MissingMandatory(String),
    #[error("feature `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureGroup {
    Envelope,
    Fabric,
    Heating,
    HotWater,
    Spatial,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Continuous { unit: String, min: f64, max: f64 },
    Categorical { codes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub group: FeatureGroup,
    /// An exact zero is an anomaly (missing measurement), not a value.
    pub nonzero: bool,
}

impl FeatureSpec {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn unit(&self) -> Option<&str> {
        match &self.kind {
            FeatureKind::Continuous { unit, .. } => Some(unit),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Continuous { min, max, .. } => Some((min, max)),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn codes(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { codes } => Some(codes),
            FeatureKind::Continuous { .. } => None,
        }
    }

    pub fn code_index(&self, code: &str) -> Option<usize> {
        self.codes()?.iter().position(|c| c == code)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    version: String,
    feature: Vec<RawFeature>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFeature {
    name: String,
    kind: String,
    group: FeatureGroup,
    unit: Option<String>,
    min: Option<f64>,
    max: Option<f64>,
    codes: Option<Vec<String>>,
    #[serde(default)]
    nonzero: bool,
}

/// Ordered list of the features describing a dwelling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    version: String,
    features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    /// The shipped 41-feature data dictionary.
    pub fn default_schema() -> Self {
        Self::from_toml(DEFAULT_SCHEMA).expect("bundled schema is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, SchemaError> {
        let raw: RawSchema = toml::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        let mut features = Vec::with_capacity(raw.feature.len());
        for f in raw.feature {
            let kind = match f.kind.as_str() {
                "continuous" => {
                    let (Some(min), Some(max)) = (f.min, f.max) else {
                        return Err(SchemaError::Invalid {
                            name: f.name,
                            reason: "continuous feature needs min and max".into(),
                        });
                    };
                    if !(min.is_finite() && max.is_finite() && min <= max) {
                        return Err(SchemaError::Invalid {
                            name: f.name,
                            reason: format!("bad range [{min}, {max}]"),
                        });
                    }
                    FeatureKind::Continuous { unit: f.unit.unwrap_or_default(), min, max }
                }
                "categorical" => {
                    let codes = f.codes.unwrap_or_default();
                    let unique: HashSet<&String> = codes.iter().collect();
                    if codes.is_empty() || unique.len() != codes.len() {
                        return Err(SchemaError::Invalid {
                            name: f.name,
                            reason: "categorical feature needs a non-empty list of distinct codes".into(),
                        });
                    }
                    FeatureKind::Categorical { codes }
                }
                other => {
                    return Err(SchemaError::Invalid {
                        name: f.name,
                        reason: format!("unknown kind `{other}`"),
                    })
                }
            };
            features.push(FeatureSpec { name: f.name, kind, group: f.group, nonzero: f.nonzero });
        }
        let schema = FeatureSchema { version: raw.version, features };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.features.len() != FEATURE_COUNT {
            return Err(SchemaError::WrongCount(self.features.len()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::Duplicate(f.name.clone()));
            }
        }
        for name in MANDATORY_CONTINUOUS {
            match self.feature(name) {
                Some(f) if !f.is_categorical() => {}
                _ => return Err(SchemaError::MissingMandatory(name.to_string())),
            }
        }
        match self.feature(COUNTY_FEATURE).and_then(|f| f.codes()) {
            Some(codes) if codes.len() == COUNTY_CODE_COUNT => Ok(()),
            _ => Err(SchemaError::MissingMandatory(COUNTY_FEATURE.to_string())),
        }
    }

    /// Builds a schema without the 41-feature checks. Used for small
    /// hand-computable fixtures.
    pub fn custom(version: &str, features: Vec<FeatureSpec>) -> Self {
        FeatureSchema { version: version.to_string(), features }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    /// SHA-256 over a canonical rendering of names, kinds and codes.
    /// Checkpoints carry this to refuse loading against a different schema.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.version.as_bytes());
        for f in &self.features {
            h.update([0u8]);
            h.update(f.name.as_bytes());
            match &f.kind {
                FeatureKind::Continuous { unit, min, max } => {
                    h.update(b"|c|");
                    h.update(unit.as_bytes());
                    h.update(min.to_le_bytes());
                    h.update(max.to_le_bytes());
                }
                FeatureKind::Categorical { codes } => {
                    h.update(b"|k|");
                    for c in codes {
                        h.update(c.as_bytes());
                        h.update([1u8]);
                    }
                }
            }
            h.update([f.nonzero as u8]);
        }
        h.finalize().into()
    }

    /// Validates a value for feature `index`. Categorical values are code
    /// indices stored as exact integers.
    pub fn check_value(&self, index: usize, value: f64) -> Result<(), ProfileError> {
        let f = &self.features[index];
        if !value.is_finite() {
            return Err(ProfileError::NonFinite(f.name.clone()));
        }
        if let Some(codes) = f.codes() {
            if value.fract() != 0.0 || value < 0.0 || value as usize >= codes.len() {
                return Err(ProfileError::BadCode { feature: f.name.clone(), code: format!("#{value}") });
            }
        }
        Ok(())
    }

    /// Builds a profile from feature-name keyed values.
    pub fn profile_from_map(&self, map: &BTreeMap<String, FieldValue>) -> Result<HomeProfile, ProfileError> {
        for key in map.keys() {
            if self.index_of(key).is_none() {
                return Err(ProfileError::UnknownFeature(key.clone()));
            }
        }
        let mut values = Vec::with_capacity(self.len());
        for (i, f) in self.features.iter().enumerate() {
            let v = map.get(&f.name).ok_or_else(|| ProfileError::Missing(f.name.clone()))?;
            let x = match (&f.kind, v) {
                (FeatureKind::Continuous { .. }, FieldValue::Number(x)) => *x,
                (FeatureKind::Categorical { .. }, FieldValue::Code(code)) => f
                    .code_index(code)
                    .ok_or_else(|| ProfileError::BadCode { feature: f.name.clone(), code: code.clone() })?
                    as f64,
                (FeatureKind::Continuous { .. }, FieldValue::Code(_)) => {
                    return Err(ProfileError::WrongType { feature: f.name.clone(), expected: "number" })
                }
                (FeatureKind::Categorical { .. }, FieldValue::Number(_)) => {
                    return Err(ProfileError::WrongType { feature: f.name.clone(), expected: "code string" })
                }
            };
            self.check_value(i, x)?;
            values.push(x);
        }
        Ok(HomeProfile { values })
    }

    pub fn profile_to_map(&self, p: &HomeProfile) -> BTreeMap<String, FieldValue> {
        self.features
            .iter()
            .zip(&p.values)
            .map(|(f, &v)| {
                let fv = match f.codes() {
                    Some(codes) => FieldValue::Code(codes[v as usize].clone()),
                    None => FieldValue::Number(v),
                };
                (f.name.clone(), fv)
            })
            .collect()
    }
}

/// A raw value keyed by feature name, as it appears in files and requests.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Number(f64),
    Code(String),
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Number(x) => write!(f, "{x}"),
            FieldValue::Code(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("missing feature `{0}`")]
    Missing(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` is not finite")]
    NonFinite(String),
    #[error("feature `{feature}`: unknown code `{code}`")]
    BadCode { feature: String, code: String },
    #[error("feature `{feature}`: expected {expected}")]
    WrongType { feature: String, expected: &'static str },
    #[error("profile has {got} values, schema has {expected}")]
    WrongLength { got: usize, expected: usize },
}

impl ProfileError {
    /// Name of the offending feature, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ProfileError::Missing(f) | ProfileError::UnknownFeature(f) | ProfileError::NonFinite(f) => Some(f),
            ProfileError::BadCode { feature, .. } | ProfileError::WrongType { feature, .. } => Some(feature),
            ProfileError::WrongLength { .. } => None,
        }
    }
}

/// One dwelling: a value per schema feature, in schema order.
///
/// Continuous values are in declared units; categorical values hold the
/// index of the code in the schema's code list.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeProfile {
    values: Vec<f64>,
}

impl HomeProfile {
    pub fn new(schema: &FeatureSchema, values: Vec<f64>) -> Result<Self, ProfileError> {
        if values.len() != schema.len() {
            return Err(ProfileError::WrongLength { got: values.len(), expected: schema.len() });
        }
        for (i, &v) in values.iter().enumerate() {
            schema.check_value(i, v)?;
        }
        Ok(HomeProfile { values })
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        HomeProfile { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub(crate) fn set(&mut self, index: usize, value: f64) {
        self.values[index] = value;
    }

    /// Stable content hash, used to check that training never sees test rows.
    pub fn content_hash(&self) -> u64 {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }
}
