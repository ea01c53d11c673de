//! Tree baselines over encoded inputs: CART with Gini impurity, random
//! forests, one-vs-rest gradient boosting, and impurity-based importance.
//!
//! Trees grow level by level over columns sorted once per dataset. A split
//! is taken only when it lowers the weighted impurity; candidate splits are
//! compared in feature order, then threshold order, and a later candidate
//! must be strictly better to win.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::epc::FeatureSchema;
use crate::metrics::argmax;

const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Class distribution for classification trees, a single score for
    /// regression trees.
    Leaf { value: Vec<f64> },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize, decrease: f64 },
}

/// Nodes in an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    /// Total sample weight seen at the root.
    pub root_weight: f64,
}

impl Tree {
    pub fn leaf_value(&self, x: ArrayView1<f64>) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

/// Column-wise sort order of a feature matrix, shared by every tree fitted
/// on it.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
}

impl Presorted {
    pub fn new(x: &Array2<f64>) -> Presorted {
        let (n, d) = x.dim();
        let mut order = Vec::with_capacity(d);
        let mut values = Vec::with_capacity(d);
        for f in 0..d {
            let col = x.column(f);
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            values.push(idx.iter().map(|&i| col[i as usize]).collect());
            order.push(idx);
        }
        Presorted { order, values }
    }

    pub fn features(&self) -> usize {
        self.order.len()
    }

    pub fn rows(&self) -> usize {
        self.order.first().map_or(0, Vec::len)
    }
}

enum Target<'a> {
    Classes { y: &'a [usize], k: usize },
    /// Gradient and hessian of a logistic loss.
    Newton { g: &'a [f64], h: &'a [f64] },
}

impl Target<'_> {
    fn width(&self) -> usize {
        match self {
            Target::Classes { k, .. } => *k,
            Target::Newton { .. } => 2,
        }
    }

    fn add(&self, stats: &mut [f64], row: usize, w: f64) {
        match self {
            Target::Classes { y, .. } => stats[y[row]] += w,
            Target::Newton { g, h } => {
                stats[0] += w * g[row];
                stats[1] += w * h[row];
            }
        }
    }

    /// Score whose sum over children minus the parent's is the weighted
    /// impurity decrease: `sum c^2 / W` for Gini, `G^2 / W` for squared error.
    fn score(&self, stats: &[f64], w: f64) -> f64 {
        match self {
            Target::Classes { .. } => stats.iter().map(|c| c * c).sum::<f64>() / w,
            Target::Newton { .. } => stats[0] * stats[0] / w,
        }
    }

    fn leaf(&self, stats: &[f64], w: f64) -> Vec<f64> {
        match self {
            Target::Classes { .. } => stats.iter().map(|c| c / w).collect(),
            Target::Newton { .. } => {
                let h = stats[1].max(1e-12);
                vec![stats[0] / h]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum sample weight on each side of a split.
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 12, min_leaf: 1 }
    }
}

struct Open {
    node: usize,
    depth: usize,
    stats: Vec<f64>,
    weight: f64,
    features: Option<Vec<bool>>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn grow(
    pre: &Presorted,
    x: &Array2<f64>,
    target: &Target<'_>,
    weights: &[f64],
    params: TreeParams,
    features_per_split: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let d = pre.features();
    let width = target.width();
    let min_leaf = params.min_leaf.max(1) as f64;
    let subset = features_per_split < d;
    let pick = |rng: &mut ChaCha8Rng| -> Option<Vec<bool>> {
        if !subset {
            return None;
        }
        let mut mask = vec![false; d];
        for f in rand::seq::index::sample(rng, d, features_per_split) {
            mask[f] = true;
        }
        Some(mask)
    };

    let mut root_stats = vec![0.0; width];
    let mut root_weight = 0.0;
    for (r, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            target.add(&mut root_stats, r, w);
            root_weight += w;
        }
    }
    let mut nodes = vec![TreeNode::Leaf { value: Vec::new() }];
    // position of each row's node in `open`, or NONE
    const NONE: u32 = u32::MAX;
    let mut slot: Vec<u32> = weights.iter().map(|&w| if w > 0.0 { 0 } else { NONE }).collect();
    let mut open = vec![Open { node: 0, depth: 0, stats: root_stats, weight: root_weight, features: pick(rng) }];

    let mut left = vec![0.0; width];
    let mut weight_left: Vec<f64>;
    let mut last: Vec<f64>;
    while !open.is_empty() {
        let m = open.len();
        let mut best: Vec<Option<Best>> = vec![None; m];
        let parent_score: Vec<f64> = open.iter().map(|o| target.score(&o.stats, o.weight)).collect();
        let splittable: Vec<bool> = open
            .iter()
            .map(|o| o.depth < params.max_depth && o.weight >= 2.0 * min_leaf)
            .collect();
        if splittable.iter().any(|&s| s) {
            let mut running = vec![0.0; m * width];
            for f in 0..d {
                running.iter_mut().for_each(|v| *v = 0.0);
                weight_left = vec![0.0; m];
                last = vec![f64::NAN; m];
                for (&r, &v) in pre.order[f].iter().zip(&pre.values[f]) {
                    let s = slot[r as usize];
                    if s == NONE {
                        continue;
                    }
                    let s = s as usize;
                    if !splittable[s] || open[s].features.as_ref().is_some_and(|mask| !mask[f]) {
                        continue;
                    }
                    let wl = weight_left[s];
                    let o = &open[s];
                    if wl >= min_leaf && v > last[s] && o.weight - wl >= min_leaf {
                        let run = &running[s * width..(s + 1) * width];
                        for (l, (&rn, &t)) in left.iter_mut().zip(run.iter().zip(&o.stats)) {
                            *l = t - rn;
                        }
                        let gain = target.score(run, wl) + target.score(&left, o.weight - wl) - parent_score[s];
                        if gain > MIN_DECREASE && best[s].is_none_or(|b| gain > b.gain) {
                            best[s] = Some(Best { gain, feature: f, threshold: last[s] + (v - last[s]) / 2.0 });
                        }
                    }
                    let w = weights[r as usize];
                    target.add(&mut running[s * width..(s + 1) * width], r as usize, w);
                    weight_left[s] += w;
                    last[s] = v;
                }
            }
        }

        let mut next: Vec<Open> = Vec::new();
        let mut remap = vec![NONE; m * 2];
        for (s, o) in open.iter_mut().enumerate() {
            match best[s] {
                Some(b) => {
                    let l = nodes.len();
                    nodes.push(TreeNode::Leaf { value: Vec::new() });
                    nodes.push(TreeNode::Leaf { value: Vec::new() });
                    nodes[o.node] =
                        TreeNode::Split { feature: b.feature, threshold: b.threshold, left: l, right: l + 1, decrease: b.gain };
                    remap[2 * s] = next.len() as u32;
                    next.push(Open { node: l, depth: o.depth + 1, stats: vec![0.0; width], weight: 0.0, features: None });
                    remap[2 * s + 1] = next.len() as u32;
                    next.push(Open { node: l + 1, depth: o.depth + 1, stats: vec![0.0; width], weight: 0.0, features: None });
                }
                None => nodes[o.node] = TreeNode::Leaf { value: target.leaf(&o.stats, o.weight) },
            }
        }
        for (r, sl) in slot.iter_mut().enumerate() {
            if *sl == NONE {
                continue;
            }
            let s = *sl as usize;
            *sl = match best[s] {
                Some(b) => {
                    let side = usize::from(x[[r, b.feature]] > b.threshold);
                    let c = remap[2 * s + side];
                    target.add(&mut next[c as usize].stats, r, weights[r]);
                    next[c as usize].weight += weights[r];
                    c
                }
                None => NONE,
            };
        }
        for o in next.iter_mut() {
            o.features = pick(rng);
        }
        open = next;
    }
    Tree { nodes, root_weight }
}

/// A single classification tree fitted on every row.
pub fn fit_decision_tree(x: &Array2<f64>, y: &[usize], classes: usize, params: TreeParams) -> Tree {
    let pre = Presorted::new(x);
    let weights = vec![1.0; y.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    grow(&pre, x, &Target::Classes { y, k: classes }, &weights, params, pre.features(), &mut rng)
}

pub fn tree_proba(tree: &Tree, x: ArrayView1<f64>) -> Vec<f64> {
    tree.leaf_value(x).to_vec()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Fraction of encoded columns tried at each split; `None` means
    /// `sqrt(columns)`.
    pub feature_frac: Option<f64>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, tree: TreeParams::default(), feature_frac: None, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub features_per_split: usize,
    pub classes: usize,
}

impl ForestModel {
    /// Mean of the trees' leaf distributions.
    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        for t in &self.trees {
            for (a, b) in p.iter_mut().zip(t.leaf_value(x)) {
                *a += b;
            }
        }
        p.iter_mut().for_each(|v| *v /= self.trees.len() as f64);
        p
    }
}

pub fn fit_random_forest(x: &Array2<f64>, y: &[usize], classes: usize, params: &ForestParams) -> ForestModel {
    assert!(params.n_trees >= 1, "a forest needs at least one tree");
    let pre = Presorted::new(x);
    let d = pre.features();
    let per_split = match params.feature_frac {
        Some(f) => ((f * d as f64).round() as usize).clamp(1, d),
        None => ((d as f64).sqrt().round() as usize).clamp(1, d),
    };
    let n = y.len();
    let target = Target::Classes { y, k: classes };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            grow(&pre, x, &target, &weights, params.tree, per_split, &mut rng)
        })
        .collect();
    ForestModel { trees, features_per_split: per_split, classes }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams { n_rounds: 200, max_depth: 4, shrinkage: 0.1, min_leaf: 1 }
    }
}

/// One additive logistic model per class.
#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    /// Initial log-odds per class; `None` for classes absent from training.
    pub base: Vec<Option<f64>>,
    pub trees: Vec<Vec<Tree>>,
    pub shrinkage: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GbtModel {
    pub fn scores(&self, x: ArrayView1<f64>) -> Vec<Option<f64>> {
        self.base
            .iter()
            .zip(&self.trees)
            .map(|(b, ts)| b.map(|b| b + self.shrinkage * ts.iter().map(|t| t.leaf_value(x)[0]).sum::<f64>()))
            .collect()
    }

    /// Softmax over `log sigmoid(F_k)`, i.e. the one-vs-rest probabilities
    /// renormalized. Classes never seen in training get 0.
    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let s: Vec<f64> = self.scores(x).into_iter().map(|f| f.map_or(0.0, sigmoid)).collect();
        let total: f64 = s.iter().sum();
        if total > 0.0 {
            s.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / s.len() as f64; s.len()]
        }
    }
}

pub fn fit_gbt(x: &Array2<f64>, y: &[usize], classes: usize, params: &GbtParams) -> GbtModel {
    assert!(params.n_rounds >= 1, "boosting needs at least one round");
    let pre = Presorted::new(x);
    let n = y.len();
    let weights = vec![1.0; n];
    let tp = TreeParams { max_depth: params.max_depth, min_leaf: params.min_leaf };
    let fitted: Vec<(Option<f64>, Vec<Tree>)> = (0..classes)
        .into_par_iter()
        .map(|k| {
            let pos = y.iter().filter(|&&c| c == k).count();
            if pos == 0 {
                return (None, Vec::new());
            }
            let p = pos as f64 / n as f64;
            let base = if pos == n { f64::INFINITY } else { (p / (1.0 - p)).ln() };
            let target_y: Vec<f64> = y.iter().map(|&c| f64::from(u8::from(c == k))).collect();
            let mut f = vec![base; n];
            let mut trees = Vec::with_capacity(params.n_rounds);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..params.n_rounds {
                let prob: Vec<f64> = f.iter().map(|&z| sigmoid(z)).collect();
                let g: Vec<f64> = target_y.iter().zip(&prob).map(|(t, p)| t - p).collect();
                let h: Vec<f64> = prob.iter().map(|p| p * (1.0 - p)).collect();
                let tree = grow(&pre, x, &Target::Newton { g: &g, h: &h }, &weights, tp, pre.features(), &mut rng);
                for (r, fr) in f.iter_mut().enumerate() {
                    *fr += params.shrinkage * tree.leaf_value(x.row(r))[0];
                }
                trees.push(tree);
            }
            (Some(base), trees)
        })
        .collect();
    let (base, trees) = fitted.into_iter().unzip();
    GbtModel { base, trees, shrinkage: params.shrinkage }
}

pub fn predict_with(proba: impl Fn(ArrayView1<f64>) -> Vec<f64>, x: &Array2<f64>) -> Vec<usize> {
    x.rows().into_iter().map(|r| argmax(&proba(r))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEntry {
    pub feature: String,
    /// Impurity decrease per unit of root weight.
    pub decrease: f64,
    pub share: f64,
}

/// Features with nonzero importance, largest first; equal values keep
/// schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature)
    }

    pub fn to_delimited(&self) -> String {
        let mut out = String::from("rank,feature,decrease,share\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{:.6},{:.6}\n", i + 1, e.feature, e.decrease, e.share));
        }
        out
    }
}

/// Sums the impurity decrease of every split per schema feature, with
/// encoded columns mapped back through `column_features`.
pub fn feature_importance(tree: &Tree, column_features: &[usize], schema: &FeatureSchema) -> ImportanceReport {
    let mut totals = vec![0.0; schema.len()];
    for node in &tree.nodes {
        if let TreeNode::Split { feature, decrease, .. } = node {
            totals[column_features[*feature]] += decrease / tree.root_weight;
        }
    }
    let sum: f64 = totals.iter().sum();
    let mut entries: Vec<ImportanceEntry> = totals
        .iter()
        .enumerate()
        .filter(|(_, &t)| t > 0.0)
        .map(|(i, &t)| ImportanceEntry { feature: schema.features()[i].name.clone(), decrease: t, share: t / sum })
        .collect();
    entries.sort_by(|a, b| b.decrease.total_cmp(&a.decrease));
    ImportanceReport { entries }
}
