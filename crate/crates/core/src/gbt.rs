//! Second-order gradient-boosted regression trees with exact greedy splits.
//!
//! Squared-error objective: per round `g_i = pred_i - y_i`, `h_i = 1`.
//! A node split into L and R scores
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda) ] - gamma
//! ```
//!
//! and is kept only when `gain > 0` and both children reach `min_child_weight`.
//! Leaves hold `w* = -G/(H+lambda)`; the model predicts
//! `base_score + learning_rate * sum(tree leaves)` with `base_score` the mean
//! training target.
//!
//! Trees grow level by level. Each feature is pre-sorted once; one pass over a
//! feature's sorted rows scores every candidate threshold for every open node
//! of the level. Features are scanned in parallel and reduced in feature
//! order, so the model does not depend on the worker count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMatrix, RowKey};
use crate::ingest::PadTable;
use crate::matrix::DenseMatrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum GbtError {
    #[error("training matrix is empty")]
    EmptyMatrix,
    #[error("non-finite value in training input (row {row})")]
    NonFiniteInput { row: usize },
    #[error("expected {expected} features, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("target length {targets} does not match {rows} rows")]
    TargetLength { rows: usize, targets: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("model has no trees")]
    UntrainedModel,
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
    #[error("malformed model: {0}")]
    Malformed(String),
}

pub type Result<T, E = GbtError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 5,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GbtError::InvalidParams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be >= 0");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be >= 0");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `value < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { weight: f64 },
}

impl TreeNode {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let TreeNode::Leaf { weight } = n {
                out.push(*weight);
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&TreeNode)) {
        f(self);
        if let TreeNode::Split { left, right, .. } = self {
            left.visit(f);
            right.visit(f);
        }
    }

    fn max_feature(&self) -> Option<usize> {
        let mut max = None;
        self.visit(&mut |n| {
            if let TreeNode::Split { feature, .. } = n {
                max = max.max(Some(*feature));
            }
        });
        max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtModel {
    pub format_version: u32,
    pub params: GbtParams,
    pub base_score: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
    pub gain_totals: Vec<f64>,
}

impl GbtModel {
    /// A model with no trees; predicts `base_score` everywhere.
    pub fn constant(base_score: f64, feature_names: Vec<String>) -> Self {
        let n = feature_names.len();
        Self {
            format_version: FORMAT_VERSION,
            params: GbtParams {
                n_trees: 0,
                ..Default::default()
            },
            base_score,
            feature_names,
            trees: Vec::new(),
            gain_totals: vec![0.0; n],
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw sum of leaf weights of `trees[range]` (not scaled by the learning rate).
    pub fn tree_sum(&self, row: &[f64], range: std::ops::Range<usize>) -> f64 {
        self.trees[range].iter().map(|t| t.leaf_value(row)).sum()
    }

    /// Prediction of a single row; the caller guarantees the width.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features());
        self.base_score + self.params.learning_rate * self.tree_sum(row, 0..self.trees.len())
    }

    pub fn predict(&self, rows: &DenseMatrix) -> Result<Vec<f64>> {
        if rows.n_cols() != self.n_features() {
            return Err(GbtError::WidthMismatch {
                expected: self.n_features(),
                actual: rows.n_cols(),
            });
        }
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: GbtModel = serde_json::from_str(s).map_err(|e| GbtError::Malformed(e.to_string()))?;
        if model.format_version != FORMAT_VERSION {
            return Err(GbtError::FormatVersion(model.format_version));
        }
        if model.gain_totals.len() != model.feature_names.len() {
            return Err(GbtError::Malformed("gain_totals length differs from feature_names".into()));
        }
        if let Some(f) = model.trees.iter().filter_map(TreeNode::max_feature).max() {
            if f >= model.feature_names.len() {
                return Err(GbtError::Malformed(format!("split on feature {f} out of range")));
            }
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub share: f64,
}

/// Features ranked by total split gain share, descending; ties by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
}

pub fn importance(model: &GbtModel, top: usize) -> Result<ImportanceReport> {
    if model.trees.is_empty() {
        return Err(GbtError::UntrainedModel);
    }
    let total: f64 = model.gain_totals.iter().sum();
    let mut entries: Vec<ImportanceEntry> = model
        .feature_names
        .iter()
        .zip(&model.gain_totals)
        .map(|(name, g)| ImportanceEntry {
            feature: name.clone(),
            share: if total > 0.0 { g / total } else { 0.0 },
        })
        .collect();
    entries.sort_by(|a, b| b.share.total_cmp(&a.share).then_with(|| a.feature.cmp(&b.feature)));
    entries.truncate(top);
    Ok(ImportanceReport { entries })
}

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

enum Building {
    Open,
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

struct Node {
    g: f64,
    h: f64,
    state: Building,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Gain of splitting a node with totals `(g, h)` into `(gl, hl)` and the rest.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (score(gl, hl, lambda) + score(gr, hr, lambda) - score(g, h, lambda)) - gamma
}

/// Whether `gain` beats the incumbent. Gains within a relative `1e-10` of each
/// other count as ties (mirrored partitions differ only by rounding), so the
/// earlier candidate keeps its place.
fn improves(gain: f64, best: Option<&Candidate>, parent_score: f64) -> bool {
    match best {
        None => gain > 0.0,
        Some(b) => gain - b.gain > 1e-10 * (parent_score + b.gain.abs()),
    }
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

struct Trainer<'a> {
    params: &'a GbtParams,
    /// Column-major copy of the inputs.
    columns: Vec<Vec<f64>>,
    /// Row indices of each feature sorted by (value, row).
    sorted: Vec<Vec<u32>>,
    /// Feature values in `sorted` order.
    sorted_values: Vec<Vec<f64>>,
    n_rows: usize,
}

impl<'a> Trainer<'a> {
    fn new(x: &DenseMatrix, params: &'a GbtParams) -> Self {
        let n_rows = x.n_rows();
        let columns: Vec<Vec<f64>> = (0..x.n_cols())
            .map(|f| (0..n_rows).map(|r| x.get(r, f)).collect())
            .collect();
        let sorted: Vec<Vec<u32>> = columns
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let sorted_values = sorted
            .iter()
            .zip(&columns)
            .map(|(idx, col)| idx.iter().map(|&r| col[r as usize]).collect())
            .collect();
        Self {
            params,
            columns,
            sorted,
            sorted_values,
            n_rows,
        }
    }

    /// Best candidate per open slot for one feature; `slot_of[r]` is NONE for
    /// rows outside the open nodes.
    fn scan_feature(&self, f: usize, slot_of: &[u32], totals: &[(f64, f64)], grad: &[f64]) -> Vec<Option<Candidate>> {
        let p = self.params;
        let n_slots = totals.len();
        let mut gl = vec![0.0; n_slots];
        let mut hl = vec![0.0; n_slots];
        let mut last: Vec<Option<f64>> = vec![None; n_slots];
        let mut best: Vec<Option<Candidate>> = vec![None; n_slots];
        for (&r, &v) in self.sorted[f].iter().zip(&self.sorted_values[f]) {
            let r = r as usize;
            let s = slot_of[r];
            if s == NONE {
                continue;
            }
            let s = s as usize;
            if let Some(prev) = last[s] {
                if v > prev {
                    let (g, h) = totals[s];
                    let hr = h - hl[s];
                    if hl[s] >= p.min_child_weight && hr >= p.min_child_weight {
                        let gain = split_gain(gl[s], hl[s], g, h, p.lambda, p.gamma);
                        if improves(gain, best[s].as_ref(), score(g, h, p.lambda)) {
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold: midpoint(prev, v),
                            });
                        }
                    }
                }
            }
            gl[s] += grad[r];
            hl[s] += 1.0;
            last[s] = Some(v);
        }
        best
    }

    fn grow_tree(&self, grad: &[f64], sampled: &[bool], gain_totals: &mut [f64]) -> TreeNode {
        let p = self.params;
        let mut node_of: Vec<u32> = (0..self.n_rows).map(|r| if sampled[r] { 0 } else { NONE }).collect();
        let (g0, h0) = (0..self.n_rows)
            .filter(|&r| sampled[r])
            .fold((0.0, 0.0), |(g, h), r| (g + grad[r], h + 1.0));
        let mut nodes = vec![Node {
            g: g0,
            h: h0,
            state: Building::Open,
        }];
        let mut level: Vec<usize> = vec![0];

        for depth in 0..=p.max_depth {
            if level.is_empty() {
                break;
            }
            if depth == p.max_depth {
                for &n in &level {
                    nodes[n].state = Building::Leaf(leaf_weight(nodes[n].g, nodes[n].h, p.lambda));
                }
                break;
            }
            let mut slot_of_node = BTreeMap::new();
            for (s, &n) in level.iter().enumerate() {
                slot_of_node.insert(n, s as u32);
            }
            let slot_of: Vec<u32> = node_of
                .iter()
                .map(|&n| if n == NONE { NONE } else { slot_of_node.get(&(n as usize)).copied().unwrap_or(NONE) })
                .collect();
            let totals: Vec<(f64, f64)> = level.iter().map(|&n| (nodes[n].g, nodes[n].h)).collect();

            let per_feature: Vec<Vec<Option<Candidate>>> = (0..self.columns.len())
                .into_par_iter()
                .map(|f| self.scan_feature(f, &slot_of, &totals, grad))
                .collect();

            let mut next = Vec::new();
            let mut chosen: Vec<Option<(Candidate, usize, usize)>> = vec![None; level.len()];
            for (s, &n) in level.iter().enumerate() {
                let mut best: Option<Candidate> = None;
                let parent_score = score(nodes[n].g, nodes[n].h, p.lambda);
                for cands in &per_feature {
                    if let Some(c) = cands[s] {
                        if improves(c.gain, best.as_ref(), parent_score) {
                            best = Some(c);
                        }
                    }
                }
                match best {
                    Some(c) => {
                        let left = nodes.len();
                        nodes.push(Node {
                            g: 0.0,
                            h: 0.0,
                            state: Building::Open,
                        });
                        nodes.push(Node {
                            g: 0.0,
                            h: 0.0,
                            state: Building::Open,
                        });
                        nodes[n].state = Building::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            gain: c.gain,
                            left,
                            right: left + 1,
                        };
                        gain_totals[c.feature] += c.gain;
                        chosen[s] = Some((c, left, left + 1));
                        next.push(left);
                        next.push(left + 1);
                    }
                    None => {
                        nodes[n].state = Building::Leaf(leaf_weight(nodes[n].g, nodes[n].h, p.lambda));
                    }
                }
            }
            // Route rows in index order so child sums are order-independent of threads.
            for r in 0..self.n_rows {
                let s = slot_of[r];
                if s == NONE {
                    continue;
                }
                match chosen[s as usize] {
                    Some((c, left, right)) => {
                        let child = if self.columns[c.feature][r] < c.threshold { left } else { right };
                        node_of[r] = child as u32;
                        nodes[child].g += grad[r];
                        nodes[child].h += 1.0;
                    }
                    None => node_of[r] = NONE,
                }
            }
            level = next;
        }
        assemble(&nodes, 0)
    }
}

fn assemble(nodes: &[Node], id: usize) -> TreeNode {
    match nodes[id].state {
        Building::Leaf(weight) => TreeNode::Leaf { weight },
        Building::Split {
            feature,
            threshold,
            gain,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            gain,
            left: Box::new(assemble(nodes, left)),
            right: Box::new(assemble(nodes, right)),
        },
        Building::Open => unreachable!("every node is closed before assembly"),
    }
}

fn mean(y: &[f64]) -> f64 {
    if y.iter().all(|v| *v == y[0]) {
        return y[0];
    }
    y.iter().sum::<f64>() / y.len() as f64
}

/// Trains a boosted ensemble on a dense matrix.
pub fn train(x: &DenseMatrix, y: &[f64], feature_names: &[String], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if x.n_rows() == 0 || x.n_cols() == 0 {
        return Err(GbtError::EmptyMatrix);
    }
    if y.len() != x.n_rows() {
        return Err(GbtError::TargetLength {
            rows: x.n_rows(),
            targets: y.len(),
        });
    }
    if feature_names.len() != x.n_cols() {
        return Err(GbtError::WidthMismatch {
            expected: feature_names.len(),
            actual: x.n_cols(),
        });
    }
    for (r, row) in x.rows().enumerate() {
        if !y[r].is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(GbtError::NonFiniteInput { row: r });
        }
    }

    let n = x.n_rows();
    let base_score = mean(y);
    let trainer = Trainer::new(x, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut gain_totals = vec![0.0; x.n_cols()];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut sampled = vec![true; n];

    for _ in 0..params.n_trees {
        for r in 0..n {
            grad[r] = pred[r] - y[r];
        }
        if params.subsample < 1.0 {
            for s in sampled.iter_mut() {
                *s = rng.random::<f64>() < params.subsample;
            }
            if !sampled.iter().any(|s| *s) {
                sampled.fill(true);
            }
        }
        let tree = trainer.grow_tree(&grad, &sampled, &mut gain_totals);
        for (r, row) in x.rows().enumerate() {
            pred[r] += params.learning_rate * tree.leaf_value(row);
        }
        trees.push(tree);
    }

    Ok(GbtModel {
        format_version: FORMAT_VERSION,
        params: params.clone(),
        base_score,
        feature_names: feature_names.to_vec(),
        trees,
        gain_totals,
    })
}

pub fn train_matrix(matrix: &FeatureMatrix, params: &GbtParams) -> Result<GbtModel> {
    train(&matrix.x, &matrix.y, &matrix.spec.names, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    /// Aligned with the requested keys; `None` where `oil(D - t, w)` is unobserved.
    pub predictions: Vec<Option<f64>>,
    pub skipped: Vec<RowKey>,
}

/// Copy-forward baseline: predicts `oil(D, w)` as the observed `oil(D - t, w)`.
pub fn baseline_predict(table: &PadTable, t: usize, targets: &[RowKey]) -> Result<BaselineOutput> {
    if t < 1 {
        return Err(GbtError::InvalidParams("baseline horizon t must be at least 1".into()));
    }
    let mut predictions = Vec::with_capacity(targets.len());
    let mut skipped = Vec::new();
    for key in targets {
        let source = key.date - chrono::Duration::days(t as i64);
        let value = table
            .well_index(&key.well)
            .zip(table.day_index(source))
            .and_then(|(w, d)| table.record(w, d).oil_volume);
        if value.is_none() {
            skipped.push(key.clone());
        }
        predictions.push(value);
    }
    Ok(BaselineOutput { predictions, skipped })
}
