//! Training, prediction and evaluation for every model family, plus the
//! seeded multi-trial harness that produces the two comparison tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epc::{
    split, CoarseRating, Dataset, Encoder, EnergyRating, FeatureSchema, HomeProfile, SplitSet, TooFewRows,
};
use crate::metrics::{argmax, EmptyTest, EvalMetrics};
use crate::nn::{fit_classifier, softmax, DenseNet, NnError, TrainConfig, Validation};
use crate::scarf::{finetune, pretrain, ScarfError, ScarfParams};
use crate::trees::{
    feature_importance, fit_decision_tree, fit_gbt, fit_random_forest, ForestModel, ForestParams, GbtModel, GbtParams,
    ImportanceReport, Tree, TreeParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    Gbt,
    RandomForest,
    Mlp,
    Scarf,
    C2fMlp,
    C2fScarf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::DecisionTree,
        ModelKind::Gbt,
        ModelKind::RandomForest,
        ModelKind::Mlp,
        ModelKind::Scarf,
        ModelKind::C2fMlp,
        ModelKind::C2fScarf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::Gbt => "gbt",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Mlp => "mlp",
            ModelKind::Scarf => "scarf",
            ModelKind::C2fMlp => "c2f_mlp",
            ModelKind::C2fScarf => "c2f_scarf",
        }
    }

    /// Row label used in the rendered tables.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "Decision Tree",
            ModelKind::Gbt => "Gradient Boosted Tree",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::Mlp => "MLP",
            ModelKind::Scarf => "SCARF",
            ModelKind::C2fMlp => "coarse-to-fine grained MLP",
            ModelKind::C2fScarf => "coarse-to-fine grained SCARF",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, ModelKind::C2fMlp | ModelKind::C2fScarf)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown model `{0}`; expected one of decision_tree, gbt, random_forest, mlp, scarf, c2f_mlp, c2f_scarf")]
pub struct UnknownModel(pub String);

impl FromStr for ModelKind {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL.into_iter().find(|m| m.name() == s.trim()).ok_or_else(|| UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_width: usize,
    pub hidden_layers: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams { hidden_width: 256, hidden_layers: 4 }
    }
}

/// Hyperparameters for every model family. `train.seed` is replaced by the
/// trial seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub train: TrainConfig,
    pub mlp: MlpParams,
    pub scarf: ScarfParams,
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub gbt: GbtParams,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("coarse group {0} has no training rows")]
    EmptyFineGroup(CoarseRating),
    #[error("training split is empty")]
    EmptyTrain,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Scarf(#[from] ScarfError),
}

/// A network classifier. `encoder_layers` marks the pre-trained prefix of a
/// SCARF model (0 for a plain MLP); `labels` maps output units to grades.
#[derive(Debug, Clone, PartialEq)]
pub struct NetClassifier {
    pub net: DenseNet,
    pub encoder_layers: usize,
    pub labels: Vec<EnergyRating>,
}

/// One coarse classifier over the five groups and one classifier per
/// group over that group's grades.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    pub coarse: NetClassifier,
    pub fine: Vec<NetClassifier>,
}

impl HierarchicalModel {
    pub fn fine_arities(&self) -> Vec<usize> {
        self.fine.iter().map(|f| f.net.output_dim()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Net(NetClassifier),
    Hierarchical(HierarchicalModel),
    Tree(Tree),
    Forest(ForestModel),
    Gbt(GbtModel),
}

/// A frozen classifier together with the encoder it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingModel {
    pub kind: ModelKind,
    pub encoder: Encoder,
    pub body: ModelBody,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub rating: EnergyRating,
    pub coarse: CoarseRating,
    /// Over the 15 grades in `A1..G` order. Hierarchical models put all of
    /// the mass on the group chosen by the coarse classifier.
    pub probabilities: [f64; EnergyRating::COUNT],
}

fn full_distribution(labels: &[EnergyRating], p: &[f64]) -> [f64; EnergyRating::COUNT] {
    let mut out = [0.0; EnergyRating::COUNT];
    for (r, v) in labels.iter().zip(p) {
        out[r.index()] += v;
    }
    out
}

impl RatingModel {
    pub fn predict(&self, p: &HomeProfile) -> Prediction {
        let x = self.encoder.encode(p);
        let probabilities = match &self.body {
            ModelBody::Net(c) => full_distribution(&c.labels, &softmax(&c.net.forward(&x).unwrap())),
            ModelBody::Hierarchical(h) => {
                let g = argmax(&h.coarse.net.forward(&x).unwrap());
                let fine = &h.fine[g];
                full_distribution(&fine.labels, &softmax(&fine.net.forward(&x).unwrap()))
            }
            ModelBody::Tree(t) => to_array(t.leaf_value(ndarray::ArrayView1::from(&x))),
            ModelBody::Forest(f) => to_array(&f.predict_proba(ndarray::ArrayView1::from(&x))),
            ModelBody::Gbt(g) => to_array(&g.predict_proba(ndarray::ArrayView1::from(&x))),
        };
        let rating = EnergyRating::from_index(argmax(&probabilities)).unwrap();
        Prediction { rating, coarse: rating.to_coarse(), probabilities }
    }

    /// Ratings for many profiles at once; equal to mapping [`Self::predict`].
    pub fn predict_ratings(&self, profiles: &[HomeProfile]) -> Vec<EnergyRating> {
        if profiles.is_empty() {
            return Vec::new();
        }
        let x = self.encoder.encode_all(profiles.iter());
        self.predict_encoded(&x)
    }

    pub fn predict_encoded(&self, x: &Array2<f64>) -> Vec<EnergyRating> {
        let idx: Vec<usize> = match &self.body {
            ModelBody::Net(c) => return net_ratings(c, x),
            ModelBody::Hierarchical(h) => {
                let coarse = net_argmax(&h.coarse.net, x);
                let mut out = vec![EnergyRating::A1; x.nrows()];
                for (g, fine) in h.fine.iter().enumerate() {
                    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| coarse[i] == g).collect();
                    if rows.is_empty() {
                        continue;
                    }
                    let sub = x.select(Axis(0), &rows);
                    for (i, r) in rows.into_iter().zip(net_ratings(fine, &sub)) {
                        out[i] = r;
                    }
                }
                return out;
            }
            ModelBody::Tree(t) => x.rows().into_iter().map(|r| argmax(t.leaf_value(r))).collect(),
            ModelBody::Forest(f) => x.rows().into_iter().map(|r| argmax(&f.predict_proba(r))).collect(),
            ModelBody::Gbt(g) => x.rows().into_iter().map(|r| argmax(&g.predict_proba(r))).collect(),
        };
        idx.into_iter().map(|i| EnergyRating::from_index(i).unwrap()).collect()
    }

    /// Coarse-classifier output of a hierarchical model.
    pub fn predict_coarse_stage(&self, p: &HomeProfile) -> Option<CoarseRating> {
        match &self.body {
            ModelBody::Hierarchical(h) => {
                let x = self.encoder.encode(p);
                CoarseRating::from_index(argmax(&h.coarse.net.forward(&x).unwrap()))
            }
            _ => None,
        }
    }

    /// Impurity-decrease feature importance; decision trees only.
    pub fn importance(&self, schema: &FeatureSchema) -> Option<ImportanceReport> {
        match &self.body {
            ModelBody::Tree(t) => Some(feature_importance(t, &self.encoder.column_features(), schema)),
            _ => None,
        }
    }

    pub fn evaluate(&self, test: &Dataset) -> Result<EvalMetrics, EmptyTest> {
        if test.is_empty() {
            return Err(EmptyTest);
        }
        let pred = self.predict_ratings(test.rows());
        EvalMetrics::from_predictions(test.labels(), &pred)
    }
}

fn to_array(p: &[f64]) -> [f64; EnergyRating::COUNT] {
    let mut out = [0.0; EnergyRating::COUNT];
    out.copy_from_slice(p);
    out
}

fn net_argmax(net: &DenseNet, x: &Array2<f64>) -> Vec<usize> {
    let logits = net.forward_batch(x.view()).expect("encoded width matches network");
    logits.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())).collect()
}

fn net_ratings(c: &NetClassifier, x: &Array2<f64>) -> Vec<EnergyRating> {
    net_argmax(&c.net, x).into_iter().map(|i| c.labels[i]).collect()
}

/// Deterministic, well-spread seed for sub-model `k` of a trial.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    seed ^ (k + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct Stage<'a> {
    train: &'a Dataset,
    x: Array2<f64>,
    y: Vec<usize>,
    val_x: Option<Array2<f64>>,
    val_y: Vec<usize>,
    labels: Vec<EnergyRating>,
}

impl<'a> Stage<'a> {
    fn new(train: &'a Dataset, val: &Dataset, enc: &Encoder, labels: Vec<EnergyRating>, label_of: impl Fn(EnergyRating) -> usize) -> Stage<'a> {
        Stage {
            train,
            x: enc.encode_all(train.rows().iter()),
            y: train.labels().iter().map(|&r| label_of(r)).collect(),
            val_x: (!val.is_empty()).then(|| enc.encode_all(val.rows().iter())),
            val_y: val.labels().iter().map(|&r| label_of(r)).collect(),
            labels,
        }
    }

    fn fit(&self, enc: &Encoder, cfg: &ModelConfig, seed: u64, scarf: bool) -> Result<NetClassifier, TrainError> {
        let classes = self.labels.len();
        let tc = TrainConfig { seed, ..cfg.train.clone() };
        let validation = self.val_x.as_ref().map(|x| Validation { x, y: &self.val_y });
        if scarf {
            let pre = pretrain(self.train, enc, &tc, &cfg.scarf)?;
            let encoder_layers = pre.net.layers().len();
            let (c, _) = finetune(&pre, &self.x, &self.y, validation, classes, &tc, cfg.scarf.head_hidden, false)?;
            Ok(NetClassifier { net: c.net, encoder_layers, labels: self.labels.clone() })
        } else {
            let mut dims = vec![enc.encoded_dim()];
            dims.extend(std::iter::repeat_n(cfg.mlp.hidden_width, cfg.mlp.hidden_layers));
            dims.push(classes);
            let mut net = DenseNet::mlp(&dims, seed)?;
            fit_classifier(&mut net, &self.x, &self.y, validation, classes, &tc, 0)?;
            Ok(NetClassifier { net, encoder_layers: 0, labels: self.labels.clone() })
        }
    }
}

/// Trains `kind` on `splits.train`, early-stopping on `splits.validation`.
/// The test split is never read.
pub fn train_model(kind: ModelKind, splits: &SplitSet, cfg: &ModelConfig, seed: u64) -> Result<RatingModel, TrainError> {
    let train = &splits.train;
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let encoder = Encoder::fit(train);
    let all = EnergyRating::ALL.to_vec();
    let body = match kind {
        ModelKind::Mlp | ModelKind::Scarf => {
            let stage = Stage::new(train, &splits.validation, &encoder, all, |r| r.index());
            ModelBody::Net(stage.fit(&encoder, cfg, seed, kind == ModelKind::Scarf)?)
        }
        ModelKind::C2fMlp | ModelKind::C2fScarf => {
            ModelBody::Hierarchical(train_coarse_to_fine(splits, &encoder, cfg, seed, kind == ModelKind::C2fScarf)?)
        }
        ModelKind::DecisionTree | ModelKind::RandomForest | ModelKind::Gbt => {
            let x = encoder.encode_all(train.rows().iter());
            let y: Vec<usize> = train.labels().iter().map(|r| r.index()).collect();
            match kind {
                ModelKind::DecisionTree => ModelBody::Tree(fit_decision_tree(&x, &y, EnergyRating::COUNT, cfg.tree)),
                ModelKind::RandomForest => {
                    let p = ForestParams { seed, ..cfg.forest.clone() };
                    ModelBody::Forest(fit_random_forest(&x, &y, EnergyRating::COUNT, &p))
                }
                _ => ModelBody::Gbt(fit_gbt(&x, &y, EnergyRating::COUNT, &cfg.gbt)),
            }
        }
    };
    Ok(RatingModel { kind, encoder, body })
}

/// Coarse stage on every training row, then one fine stage per group on the
/// rows whose true grade belongs to it. With `scarf`, each of the six stages
/// pre-trains its own encoder on its own rows.
pub fn train_coarse_to_fine(
    splits: &SplitSet,
    encoder: &Encoder,
    cfg: &ModelConfig,
    seed: u64,
    scarf: bool,
) -> Result<HierarchicalModel, TrainError> {
    let groups: Vec<(Dataset, Dataset)> = CoarseRating::ALL
        .iter()
        .map(|&g| {
            (
                splits.train.filter(|_, r| r.to_coarse() == g),
                splits.validation.filter(|_, r| r.to_coarse() == g),
            )
        })
        .collect();
    if let Some(g) = groups.iter().position(|(t, _)| t.is_empty()) {
        return Err(TrainError::EmptyFineGroup(CoarseRating::ALL[g]));
    }
    let coarse_labels: Vec<EnergyRating> = CoarseRating::ALL.iter().map(|g| g.members()[0]).collect();
    let stages: Vec<Stage<'_>> = std::iter::once(Stage::new(
        &splits.train,
        &splits.validation,
        encoder,
        coarse_labels,
        |r| r.to_coarse().index(),
    ))
    .chain(groups.iter().zip(CoarseRating::ALL).map(|((t, v), g)| {
        let members = g.members();
        Stage::new(t, v, encoder, members.to_vec(), |r| members.iter().position(|&m| m == r).unwrap())
    }))
    .collect();
    let mut fitted: Vec<NetClassifier> = stages
        .par_iter()
        .enumerate()
        .map(|(k, s)| s.fit(encoder, cfg, sub_seed(seed, k as u64), scarf))
        .collect::<Result<_, _>>()?;
    let fine = fitted.split_off(1);
    Ok(HierarchicalModel { coarse: fitted.pop().unwrap(), fine })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrialError {
    #[error("{model} with seed {seed}: {source}")]
    Training { model: ModelKind, seed: u64, source: TrainError },
    #[error("seed {seed}: {source}")]
    Split { seed: u64, source: TooFewRows },
    #[error("seed {seed}: {source}")]
    Evaluation { seed: u64, source: EmptyTest },
    #[error("seed {seed}: {overlap} test rows also appear in train")]
    Leakage { seed: u64, overlap: usize },
    #[error("no models requested")]
    NoModels,
    #[error("no seeds requested")]
    NoSeeds,
}

/// Number of test rows whose content hash matches a training row.
pub fn leakage(train: &Dataset, test: &Dataset) -> usize {
    let seen: HashSet<u64> = train.rows().iter().map(HomeProfile::content_hash).collect();
    test.rows().iter().filter(|r| seen.contains(&r.content_hash())).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub model: ModelKind,
    pub seeds: Vec<u64>,
    pub metrics: Vec<EvalMetrics>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl TrialReport {
    pub fn macro_f1(&self) -> (f64, f64) {
        mean_std(&self.metrics.iter().map(|m| m.macro_f1).collect::<Vec<_>>())
    }

    pub fn accuracy(&self) -> (f64, f64) {
        mean_std(&self.metrics.iter().map(|m| m.accuracy).collect::<Vec<_>>())
    }

    /// Mean recall for `r` over the seeds whose test split contains it,
    /// with the number of such seeds.
    pub fn class_accuracy(&self, r: EnergyRating) -> Option<(f64, usize)> {
        let xs: Vec<f64> = self.metrics.iter().filter_map(|m| m.per_class_accuracy.get(&r).copied()).collect();
        (!xs.is_empty()).then(|| (mean_std(&xs).0, xs.len()))
    }
}

/// For each seed: split, train every model on the same split, evaluate on
/// its test rows. Seeds run in parallel; results keep the given order.
pub fn run_trials(data: &Dataset, models: &[ModelKind], seeds: &[u64], cfg: &ModelConfig) -> Result<Vec<TrialReport>, TrialError> {
    if models.is_empty() {
        return Err(TrialError::NoModels);
    }
    if seeds.is_empty() {
        return Err(TrialError::NoSeeds);
    }
    let per_seed: Vec<Vec<EvalMetrics>> = seeds
        .par_iter()
        .map(|&seed| {
            let splits = split(data, seed).map_err(|source| TrialError::Split { seed, source })?;
            let overlap = leakage(&splits.train, &splits.test);
            if overlap > 0 {
                return Err(TrialError::Leakage { seed, overlap });
            }
            models
                .iter()
                .map(|&model| {
                    let m = train_model(model, &splits, cfg, seed)
                        .map_err(|source| TrialError::Training { model, seed, source })?;
                    m.evaluate(&splits.test).map_err(|source| TrialError::Evaluation { seed, source })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(models
        .iter()
        .enumerate()
        .map(|(i, &model)| TrialReport {
            model,
            seeds: seeds.to_vec(),
            metrics: per_seed.iter().map(|row| row[i].clone()).collect(),
        })
        .collect())
}

/// Reference figures for the full certificate dataset (macro F1, accuracy),
/// kept for side-by-side display only.
pub const REFERENCE_TABLE2: [(ModelKind, f64, f64); 7] = [
    (ModelKind::DecisionTree, 0.517, 0.512),
    (ModelKind::Gbt, 0.471, 0.495),
    (ModelKind::RandomForest, 0.631, 0.628),
    (ModelKind::Mlp, 0.639, 0.695),
    (ModelKind::Scarf, 0.658, 0.687),
    (ModelKind::C2fMlp, 0.668, 0.683),
    (ModelKind::C2fScarf, 0.671, 0.686),
];

/// Reference per-class accuracy for A1, A2, A3.
pub const REFERENCE_TABLE3: [(ModelKind, [f64; 3]); 4] = [
    (ModelKind::Mlp, [0.0, 0.906, 0.784]),
    (ModelKind::Scarf, [0.175, 0.861, 0.834]),
    (ModelKind::C2fMlp, [0.368, 0.902, 0.796]),
    (ModelKind::C2fScarf, [0.296, 0.897, 0.821]),
];

const TOP_GRADES: [EnergyRating; 3] = [EnergyRating::A1, EnergyRating::A2, EnergyRating::A3];

/// `model,macro_f1_mean,macro_f1_std,accuracy_mean,accuracy_std,seeds`.
pub fn table2_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from("model,macro_f1_mean,macro_f1_std,accuracy_mean,accuracy_std,seeds\n");
    for r in reports {
        let (f, fs) = r.macro_f1();
        let (a, s) = r.accuracy();
        out.push_str(&format!("{},{f:.6},{fs:.6},{a:.6},{s:.6},{}\n", r.model, r.metrics.len()));
    }
    out
}

/// `model,a1_mean,a1_seeds,a2_mean,a2_seeds,a3_mean,a3_seeds`; a mean is
/// `NA` when no test split held that grade.
pub fn table3_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from("model,a1_mean,a1_seeds,a2_mean,a2_seeds,a3_mean,a3_seeds\n");
    for r in reports {
        out.push_str(r.model.name());
        for g in TOP_GRADES {
            match r.class_accuracy(g) {
                Some((m, n)) => out.push_str(&format!(",{m:.6},{n}")),
                None => out.push_str(",NA,0"),
            }
        }
        out.push('\n');
    }
    out
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Aligned text: measured means next to the reference figures.
pub fn render_tables(reports: &[TrialReport]) -> String {
    let t2: BTreeMap<ModelKind, (f64, f64)> = REFERENCE_TABLE2.iter().map(|&(m, f, a)| (m, (f, a))).collect();
    let t3: BTreeMap<ModelKind, [f64; 3]> = REFERENCE_TABLE3.iter().copied().collect();
    let w = reports.iter().map(|r| r.model.title().len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "Macro F1 and accuracy, mean over {} seeds (reference figures in brackets)\n",
        reports.first().map_or(0, |r| r.metrics.len())
    );
    out.push_str(&format!("{:<w$}  {:>18}  {:>18}\n", "Model", "Macro F1", "Accuracy"));
    for r in reports {
        let (f, a) = (r.macro_f1().0, r.accuracy().0);
        let (rf, ra) = t2.get(&r.model).map_or(("-".into(), "-".into()), |&(x, y)| (pct(x), pct(y)));
        out.push_str(&format!(
            "{:<w$}  {:>18}  {:>18}\n",
            r.model.title(),
            format!("{} [{}]", pct(f), rf),
            format!("{} [{}]", pct(a), ra)
        ));
    }
    out.push_str(&format!("\nPer-class accuracy\n{:<w$}  {:>16}  {:>16}  {:>16}\n", "Model", "A1", "A2", "A3"));
    for r in reports {
        out.push_str(&format!("{:<w$}", r.model.title()));
        for (i, g) in TOP_GRADES.into_iter().enumerate() {
            let got = r.class_accuracy(g).map_or("NA".into(), |(m, _)| pct(m));
            let reference = t3.get(&r.model).map_or("-".into(), |v| pct(v[i]));
            out.push_str(&format!("  {:>16}", format!("{got} [{reference}]")));
        }
        out.push('\n');
    }
    out
}
