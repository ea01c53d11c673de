//! Feature encoding: z-scored continuous slots and one-hot categoricals.

use ndarray::Array2;

use super::dataset::Dataset;
use super::schema::{FeatureKind, FeatureSchema, HomeProfile};

/// How one schema feature occupies the encoded vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    /// One slot holding `(x - mean) / std`.
    Continuous { offset: usize, mean: f64, std: f64 },
    /// `cardinality` slots, exactly one set to 1.
    OneHot { offset: usize, cardinality: usize },
}

/// Per-feature encoding statistics, fit on a training split.
///
/// Slots follow schema order, so the layout is fixed by the schema alone and
/// `encoded_dim = #continuous + sum of categorical cardinalities`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    slots: Vec<Slot>,
    encoded_dim: usize,
}

impl Encoder {
    /// Fits means and population standard deviations on `train`. Constant
    /// columns get a standard deviation of 1.
    pub fn fit(train: &Dataset) -> Encoder {
        let schema = train.schema();
        let n = train.len().max(1) as f64;
        let stats: Vec<(f64, f64)> = (0..schema.len())
            .map(|i| {
                if schema.features()[i].is_categorical() {
                    return (0.0, 1.0);
                }
                let mean = train.rows().iter().map(|p| p.get(i)).sum::<f64>() / n;
                let var = train.rows().iter().map(|p| (p.get(i) - mean).powi(2)).sum::<f64>() / n;
                (mean, var.sqrt())
            })
            .collect();
        Self::from_stats(schema, &stats)
    }

    /// Builds an encoder from `(mean, std)` per feature (ignored for
    /// categoricals).
    pub fn from_stats(schema: &FeatureSchema, stats: &[(f64, f64)]) -> Encoder {
        let mut slots = Vec::with_capacity(schema.len());
        let mut offset = 0;
        for (f, &(mean, std)) in schema.features().iter().zip(stats) {
            match &f.kind {
                FeatureKind::Continuous { .. } => {
                    let std = if std > 1e-12 && std.is_finite() { std } else { 1.0 };
                    slots.push(Slot::Continuous { offset, mean, std });
                    offset += 1;
                }
                FeatureKind::Categorical { codes } => {
                    slots.push(Slot::OneHot { offset, cardinality: codes.len() });
                    offset += codes.len();
                }
            }
        }
        Encoder { slots, encoded_dim: offset }
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoded_dim
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// `(mean, std)` per schema feature; categoricals report `(0, 1)`.
    pub fn stats(&self) -> Vec<(f64, f64)> {
        self.slots
            .iter()
            .map(|s| match *s {
                Slot::Continuous { mean, std, .. } => (mean, std),
                Slot::OneHot { .. } => (0.0, 1.0),
            })
            .collect()
    }

    /// Schema feature index owning each encoded column.
    pub fn column_features(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.encoded_dim);
        for (i, s) in self.slots.iter().enumerate() {
            match *s {
                Slot::Continuous { .. } => out.push(i),
                Slot::OneHot { cardinality, .. } => out.extend(std::iter::repeat_n(i, cardinality)),
            }
        }
        out
    }

    pub fn encode_into(&self, p: &HomeProfile, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.encoded_dim);
        for (s, &v) in self.slots.iter().zip(p.values()) {
            match *s {
                Slot::Continuous { offset, mean, std } => out[offset] = (v - mean) / std,
                Slot::OneHot { offset, cardinality } => {
                    out[offset..offset + cardinality].fill(0.0);
                    out[offset + v as usize] = 1.0;
                }
            }
        }
    }

    pub fn encode(&self, p: &HomeProfile) -> Vec<f64> {
        let mut out = vec![0.0; self.encoded_dim];
        self.encode_into(p, &mut out);
        out
    }

    /// Encodes rows into a `rows x encoded_dim` matrix.
    pub fn encode_all<'a>(&self, rows: impl ExactSizeIterator<Item = &'a HomeProfile>) -> Array2<f64> {
        let mut m = Array2::zeros((rows.len(), self.encoded_dim));
        for (mut row, p) in m.rows_mut().into_iter().zip(rows) {
            self.encode_into(p, row.as_slice_mut().expect("standard layout"));
        }
        m
    }
}
