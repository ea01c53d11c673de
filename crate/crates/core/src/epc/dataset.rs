//! Dataset loading, zero-anomaly cleaning and seeded splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::rating::EnergyRating;
use super::schema::{FeatureSchema, HomeProfile};

pub const RATING_COLUMN: &str = "rating";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Real,
    Synthetic,
}

/// Labelled dwellings sharing one schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    rows: Vec<HomeProfile>,
    labels: Vec<EnergyRating>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        schema: Arc<FeatureSchema>,
        rows: Vec<HomeProfile>,
        labels: Vec<EnergyRating>,
        provenance: Provenance,
    ) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        Dataset { schema, rows, labels, provenance }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn rows(&self) -> &[HomeProfile] {
        &self.rows
    }

    pub fn labels(&self) -> &[EnergyRating] {
        &self.labels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HomeProfile, EnergyRating)> {
        self.rows.iter().zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: self.provenance,
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&HomeProfile, EnergyRating) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.rows[i], self.labels[i])).collect();
        self.select(&idx)
    }

    /// Per-rating row counts, indexed by `EnergyRating::index`.
    pub fn histogram(&self) -> [usize; EnergyRating::COUNT] {
        let mut h = [0; EnergyRating::COUNT];
        for l in &self.labels {
            h[l.index()] += 1;
        }
        h
    }

    /// Writes the dataset as comma-separated text with a `rating` column.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LoadError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.schema.features().iter().map(|f| f.name.as_str()).collect();
        header.push(RATING_COLUMN);
        w.write_record(&header)?;
        for (p, r) in self.iter() {
            let mut rec: Vec<String> = self
                .schema
                .features()
                .iter()
                .zip(p.values())
                .map(|(f, &v)| match f.codes() {
                    Some(codes) => codes[v as usize].clone(),
                    None => format!("{v}"),
                })
                .collect();
            rec.push(r.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BadValue {
    /// 0-based data row (the header is not counted).
    pub row: usize,
    pub column: String,
    pub value: String,
}

impl fmt::Display for BadValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: column `{}` has bad value `{}`", self.row, self.column, self.value)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("{} bad value(s), first: {}", .0.len(), .0[0])]
    BadValue(Vec<BadValue>),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn load_dataset(path: &Path, schema: Arc<FeatureSchema>) -> Result<Dataset, LoadError> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema, Provenance::Real)
}

/// Parses delimited text. Every malformed cell is collected; the load fails
/// if there is at least one.
pub fn read_dataset<R: Read>(input: R, schema: Arc<FeatureSchema>, provenance: Provenance) -> Result<Dataset, LoadError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let mut columns = Vec::with_capacity(schema.len());
    for f in schema.features() {
        columns.push(position(&f.name).ok_or_else(|| LoadError::MissingColumn(f.name.clone()))?);
    }
    let rating_col = position(RATING_COLUMN).ok_or_else(|| LoadError::MissingColumn(RATING_COLUMN.into()))?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut bad = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = Vec::with_capacity(schema.len());
        let mut ok = true;
        for (f, &col) in schema.features().iter().zip(&columns) {
            let cell = rec.get(col).unwrap_or("");
            let parsed = match f.codes() {
                Some(_) => f.code_index(cell).map(|i| i as f64),
                None => cell.parse::<f64>().ok().filter(|v| v.is_finite()),
            };
            match parsed {
                Some(v) => values.push(v),
                None => {
                    ok = false;
                    bad.push(BadValue { row, column: f.name.clone(), value: cell.to_string() });
                }
            }
        }
        let cell = rec.get(rating_col).unwrap_or("");
        match cell.parse::<EnergyRating>() {
            Ok(r) if ok => {
                rows.push(HomeProfile::from_values_unchecked(values));
                labels.push(r);
            }
            Ok(_) => {}
            Err(_) => bad.push(BadValue { row, column: RATING_COLUMN.into(), value: cell.to_string() }),
        }
    }
    if !bad.is_empty() {
        return Err(LoadError::BadValue(bad));
    }
    Ok(Dataset::new(schema, rows, labels, provenance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CleaningPolicy {
    #[default]
    ImputeMedian,
    DropRow,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCleaning {
    pub zero_anomalies: usize,
    pub imputed: usize,
    pub rows_dropped: usize,
    pub imputation_value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleaningReport {
    /// Keyed by feature name; only nonzero-flagged features appear.
    pub features: BTreeMap<String, FeatureCleaning>,
    /// Rows containing at least one anomaly.
    pub rows_affected: usize,
    pub rows_dropped: usize,
}

impl CleaningReport {
    pub fn total_changes(&self) -> usize {
        self.rows_dropped + self.features.values().map(|f| f.imputed).sum::<usize>()
    }

    pub fn is_noop(&self) -> bool {
        self.rows_affected == 0
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CleanError {
    #[error("dataset is empty")]
    Empty,
    #[error("feature `{0}` is zero in every row")]
    AllValuesAnomalous(String),
}

/// Replaces or drops exact zeros in features the schema marks `nonzero`.
pub fn clean(data: &Dataset, policy: CleaningPolicy) -> Result<(Dataset, CleaningReport), CleanError> {
    if data.is_empty() {
        return Err(CleanError::Empty);
    }
    let schema = data.schema();
    let targets: Vec<usize> = (0..schema.len())
        .filter(|&i| schema.features()[i].nonzero && !schema.features()[i].is_categorical())
        .collect();

    let mut report = CleaningReport::default();
    for &i in &targets {
        report.features.insert(schema.features()[i].name.clone(), FeatureCleaning::default());
    }
    let affected: Vec<bool> = data.rows().iter().map(|p| targets.iter().any(|&i| p.get(i) == 0.0)).collect();
    report.rows_affected = affected.iter().filter(|&&a| a).count();
    for &i in &targets {
        let entry = report.features.get_mut(&schema.features()[i].name).unwrap();
        entry.zero_anomalies = data.rows().iter().filter(|p| p.get(i) == 0.0).count();
    }

    match policy {
        CleaningPolicy::ImputeMedian => {
            let mut rows = data.rows().to_vec();
            for &i in &targets {
                let name = &schema.features()[i].name;
                let entry = report.features.get_mut(name).unwrap();
                if entry.zero_anomalies == 0 {
                    continue;
                }
                let mut nonzero: Vec<f64> = data.rows().iter().map(|p| p.get(i)).filter(|&v| v != 0.0).collect();
                let m = median(&mut nonzero).ok_or_else(|| CleanError::AllValuesAnomalous(name.clone()))?;
                for p in rows.iter_mut().filter(|p| p.get(i) == 0.0) {
                    p.set(i, m);
                }
                entry.imputed = entry.zero_anomalies;
                entry.imputation_value = Some(m);
            }
            Ok((Dataset::new(data.schema.clone(), rows, data.labels.clone(), data.provenance), report))
        }
        CleaningPolicy::DropRow => {
            for &i in &targets {
                let entry = report.features.get_mut(&schema.features()[i].name).unwrap();
                entry.rows_dropped = entry.zero_anomalies;
            }
            report.rows_dropped = report.rows_affected;
            let keep: Vec<usize> = (0..data.len()).filter(|&r| !affected[r]).collect();
            Ok((data.select(&keep), report))
        }
    }
}

/// Median with the mean-of-middle-pair rule for even lengths.
pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Train/validation/test partition produced by [`split`].
#[derive(Debug, Clone)]
pub struct SplitSet {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub seed: u64,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("need at least 10 rows to split, got {0}")]
pub struct TooFewRows(pub usize);

/// 80/10/10 split. Row order is shuffled with ChaCha8 seeded by
/// `ChaCha8Rng::seed_from_u64(seed)`; validation and test each take
/// `round(n / 10)` rows and train keeps the rest.
pub fn split(data: &Dataset, seed: u64) -> Result<SplitSet, TooFewRows> {
    let n = data.len();
    if n < 10 {
        return Err(TooFewRows(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = (n as f64 / 10.0).round() as usize;
    let n_train = n - 2 * tenth;
    Ok(SplitSet {
        train: data.select(&idx[..n_train]),
        validation: data.select(&idx[n_train..n_train + tenth]),
        test: data.select(&idx[n_train + tenth..]),
        seed,
    })
}
