//! Classification metrics shared by every model family.

use std::collections::BTreeMap;

use crate::epc::EnergyRating;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-class F1 from a confusion matrix (`confusion[truth][pred]`).
/// Classes with no true rows get `None`.
pub fn per_class_f1(confusion: &[Vec<usize>]) -> Vec<Option<f64>> {
    let k = confusion.len();
    (0..k)
        .map(|c| {
            let support: usize = confusion[c].iter().sum();
            if support == 0 {
                return None;
            }
            let tp = confusion[c][c] as f64;
            let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
            if tp == 0.0 {
                return Some(0.0);
            }
            let precision = tp / predicted as f64;
            let recall = tp / support as f64;
            Some(2.0 * precision * recall / (precision + recall))
        })
        .collect()
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    m
}

/// Unweighted mean of F1 over classes present in `truth`.
pub fn macro_f1(truth: &[usize], pred: &[usize], classes: usize) -> f64 {
    let f1: Vec<f64> = per_class_f1(&confusion_matrix(truth, pred, classes)).into_iter().flatten().collect();
    if f1.is_empty() {
        0.0
    } else {
        f1.iter().sum::<f64>() / f1.len() as f64
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("test set is empty")]
pub struct EmptyTest;

/// Test-set metrics over the 15 grades.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Mean F1 over grades with at least one test row.
    pub macro_f1: f64,
    /// Recall per grade, for grades with at least one test row.
    pub per_class_accuracy: BTreeMap<EnergyRating, f64>,
    /// `confusion[truth][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
    /// Grades with no test rows, excluded from `macro_f1`.
    pub absent: Vec<EnergyRating>,
}

impl EvalMetrics {
    pub fn from_predictions(truth: &[EnergyRating], pred: &[EnergyRating]) -> Result<EvalMetrics, EmptyTest> {
        assert_eq!(truth.len(), pred.len());
        if truth.is_empty() {
            return Err(EmptyTest);
        }
        let t: Vec<usize> = truth.iter().map(|r| r.index()).collect();
        let p: Vec<usize> = pred.iter().map(|r| r.index()).collect();
        let confusion = confusion_matrix(&t, &p, EnergyRating::COUNT);
        let f1 = per_class_f1(&confusion);
        let present: Vec<f64> = f1.iter().flatten().copied().collect();
        let trace: usize = (0..EnergyRating::COUNT).map(|c| confusion[c][c]).sum();
        let mut per_class_accuracy = BTreeMap::new();
        let mut absent = Vec::new();
        for r in EnergyRating::ALL {
            let support: usize = confusion[r.index()].iter().sum();
            if support == 0 {
                absent.push(r);
            } else {
                per_class_accuracy.insert(r, confusion[r.index()][r.index()] as f64 / support as f64);
            }
        }
        Ok(EvalMetrics {
            accuracy: trace as f64 / truth.len() as f64,
            macro_f1: present.iter().sum::<f64>() / present.len() as f64,
            per_class_accuracy,
            confusion,
            n_test: truth.len(),
            absent,
        })
    }
}
