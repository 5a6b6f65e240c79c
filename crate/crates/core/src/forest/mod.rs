//! Forests whose predictions are weighted empirical measures.
//!
//! Each tree is grown on a subsample of `a_n` rows (with or without
//! replacement) by greedy axis-aligned cuts placed midway between
//! consecutive covariate values. At a query `x`, tree `j` puts mass
//! `1/(M N_j(x))` on every subsample slot sharing `x`'s leaf; summing over
//! trees gives the weights `alpha_i(x)` of the forest measure
//! `sum_i alpha_i(x) delta_{Y_i}`. A row drawn twice into a leaf gets twice
//! the mass.

mod build;
pub mod criterion;
mod model;

pub use build::{best_split, SplitCandidate};
pub use criterion::{inter_gain, intra_gain, CellScorer, Gain};
pub use model::{ForestFile, NodeFile, TreeFile};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::rng::substream;

/// Covariates `x` (`n x d`) and responses `y` (`n x d'`), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    dy: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Self> {
        let d = x.first().map_or(0, Vec::len);
        let dy = y.first().map_or(0, Vec::len);
        if let Some(r) = x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        if let Some(r) = y.iter().find(|r| r.len() != dy) {
            return Err(Error::DimensionMismatch { expected: dy, got: r.len() });
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { what: "responses", expected: x.len(), got: y.len() });
        }
        Self::from_flat(d, dy, x.concat(), y.concat())
    }

    pub fn from_flat(d: usize, dy: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if d == 0 || dy == 0 {
            return Err(Error::InvalidData("covariate and response dimensions must be >= 1".into()));
        }
        if x.len() % d != 0 {
            return Err(Error::InvalidData("covariate buffer is not a whole number of rows".into()));
        }
        let n = x.len() / d;
        if y.len() != n * dy {
            return Err(Error::LengthMismatch { what: "responses", expected: n * dy, got: y.len() });
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { n, d, dy, x, y })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim_x(&self) -> usize {
        self.d
    }

    pub fn dim_y(&self) -> usize {
        self.dy
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dy..(i + 1) * self.dy]
    }

    #[inline]
    pub fn x_at(&self, i: usize, k: usize) -> f64 {
        self.x[i * self.d + k]
    }

    pub fn x_flat(&self) -> &[f64] {
        &self.x
    }

    pub fn y_flat(&self) -> &[f64] {
        &self.y
    }

    /// Copy of the dataset with the responses replaced.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.d, self.dy, self.x.clone(), y)
    }

    /// The rows `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * self.d);
        let mut y = Vec::with_capacity(rows.len() * self.dy);
        for &i in rows {
            x.extend_from_slice(self.x_row(i));
            y.extend_from_slice(self.y_row(i));
        }
        Self::from_flat(self.d, self.dy, x, y)
    }
}

/// Splitting rule used to grow trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Variance reduction, i.e. the quadratic intra-class Wasserstein gain.
    IntraL2,
    /// Inter-class `W_p^p` gain; scalar responses only.
    InterWp,
}

/// How candidate cuts are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    /// Every midpoint between consecutive values on `mtry` random directions.
    #[default]
    Greedy,
    /// One uniform threshold per tried direction (extremely randomized trees).
    ExtraRandom,
    /// Response-blind cuts: direction drawn proportionally to the cell's side
    /// lengths, position uniform along that side.
    Mondrian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// Number of trees `M`.
    pub m_trees: usize,
    /// Per-tree subsample size `a_n`.
    pub subsample_size: usize,
    pub with_replacement: bool,
    pub mtry: usize,
    pub nodesize: usize,
    pub criterion: Criterion,
    /// Wasserstein order for [`Criterion::InterWp`].
    pub p: f64,
    pub seed: u64,
    #[serde(default)]
    pub splitter: Splitter,
    /// Rescale each response coordinate by its training standard deviation
    /// before evaluating split gains.
    #[serde(default)]
    pub standardize: bool,
}

impl ForestParams {
    /// The desk-scale setting used throughout the simulations: `M = 200`,
    /// `a_n = 500` with replacement, `mtry = d`, `nodesize = 2`.
    pub fn desk_scale(d: usize) -> Self {
        Self {
            m_trees: 200,
            subsample_size: 500,
            with_replacement: true,
            mtry: d,
            nodesize: 2,
            criterion: Criterion::IntraL2,
            p: 2.0,
            seed: 0,
            splitter: Splitter::Greedy,
            standardize: false,
        }
    }

    pub fn with_criterion(mut self, criterion: Criterion, p: f64) -> Self {
        self.criterion = criterion;
        self.p = p;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize, d: usize, dy: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if self.m_trees < 1 {
            return fail("m_trees must be >= 1".into());
        }
        if self.subsample_size < 2 {
            return fail(format!("subsample_size must be >= 2, got {}", self.subsample_size));
        }
        if !self.with_replacement && self.subsample_size > n {
            return fail(format!(
                "subsample_size {} exceeds the {n} available rows without replacement",
                self.subsample_size
            ));
        }
        if self.mtry < 1 || self.mtry > d {
            return fail(format!("mtry must lie in [1, {d}], got {}", self.mtry));
        }
        if self.nodesize < 2 || self.nodesize > self.subsample_size {
            return fail(format!(
                "nodesize must lie in [2, subsample_size = {}], got {}",
                self.subsample_size, self.nodesize
            ));
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(Error::InvalidOrder(self.p));
        }
        if self.criterion == Criterion::InterWp && self.splitter != Splitter::Mondrian && dy != 1 {
            return Err(Error::UnsupportedOutputDim("inter_wp"));
        }
        Ok(())
    }

    pub(crate) fn gain(&self) -> Gain {
        match self.criterion {
            Criterion::IntraL2 => Gain::Intra,
            Criterion::InterWp => Gain::Inter { p: self.p },
        }
    }
}

/// A node of a trained tree. Leaves hold positions into the tree's subsample.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { dim: usize, threshold: f64, left: usize, right: usize },
    Leaf { slots: Vec<usize> },
}

/// A trained tree: its subsample (original row indices, possibly repeated)
/// and its nodes, root first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub subsample: Vec<usize>,
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf containing `x` (`x[dim] <= threshold` goes left).
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split { dim, threshold, left, right } => {
                    id = if x[*dim] <= *threshold { *left } else { *right };
                }
                Node::Leaf { .. } => return id,
            }
        }
    }

    /// Subsample slots in the leaf containing `x`.
    pub fn leaf_slots(&self, x: &[f64]) -> &[usize] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { slots } => slots,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn contains_row(&self, row: usize) -> bool {
        self.subsample.contains(&row)
    }
}

/// Forest weights `alpha_i(x)` over the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWeights {
    pub alpha: Vec<f64>,
}

impl PredictionWeights {
    pub fn sum(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// A trained forest together with the training responses its leaves point to.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub(crate) params: ForestParams,
    pub(crate) dim_x: usize,
    pub(crate) dim_y: usize,
    pub(crate) trees: Vec<Tree>,
    pub(crate) y: Vec<f64>,
    pub(crate) normalization: Option<Vec<f64>>,
}

/// Trains a forest. Tree `j` draws from `substream(seed, j)`, so the result
/// does not depend on how trees are scheduled across threads.
pub fn fit(data: &Dataset, params: &ForestParams) -> Result<Forest> {
    params.validate(data.n(), data.dim_x(), data.dim_y())?;

    let normalization = if params.standardize && params.splitter != Splitter::Mondrian {
        Some(response_scales(data))
    } else {
        None
    };
    let split_y: Vec<f64> = match &normalization {
        Some(scales) => data
            .y_flat()
            .chunks_exact(data.dim_y())
            .flat_map(|row| row.iter().zip(scales).map(|(v, s)| v / s))
            .collect(),
        None => data.y_flat().to_vec(),
    };

    let trees = (0..params.m_trees)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(params.seed, j as u64);
            build::build_tree(data, &split_y, params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Forest {
        params: params.clone(),
        dim_x: data.dim_x(),
        dim_y: data.dim_y(),
        trees,
        y: data.y_flat().to_vec(),
        normalization,
    })
}

/// Per-coordinate population standard deviation; constant coordinates get 1.
fn response_scales(data: &Dataset) -> Vec<f64> {
    let n = data.n() as f64;
    (0..data.dim_y())
        .map(|k| {
            let mean = (0..data.n()).map(|i| data.y_row(i)[k]).sum::<f64>() / n;
            let var = (0..data.n()).map(|i| (data.y_row(i)[k] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect()
}

impl Forest {
    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// Number of training rows.
    pub fn n(&self) -> usize {
        self.y.len() / self.dim_y
    }

    pub fn normalization(&self) -> Option<&[f64]> {
        self.normalization.as_deref()
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim_y..(i + 1) * self.dim_y]
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::DimensionMismatch { expected: self.dim_x, got: x.len() });
        }
        Ok(())
    }

    /// Weights `alpha_i(x)`, summing to 1.
    pub fn weights(&self, x: &[f64]) -> Result<PredictionWeights> {
        self.check_query(x)?;
        Ok(self
            .weights_over(x, |_| true)
            .expect("every forest has at least one tree"))
    }

    /// Weights computed from the trees accepted by `keep` only, or `None`
    /// when no tree is accepted.
    pub fn weights_over(&self, x: &[f64], keep: impl Fn(usize) -> bool) -> Option<PredictionWeights> {
        let used: Vec<&Tree> = self.trees.iter().enumerate().filter(|(j, _)| keep(*j)).map(|t| t.1).collect();
        if used.is_empty() {
            return None;
        }
        let m = used.len() as f64;
        let mut alpha = vec![0.0; self.n()];
        for tree in used {
            let slots = tree.leaf_slots(x);
            // Trained leaves are never empty.
            if slots.is_empty() {
                continue;
            }
            let mass = 1.0 / (m * slots.len() as f64);
            for &s in slots {
                alpha[tree.subsample[s]] += mass;
            }
        }
        Some(PredictionWeights { alpha })
    }

    /// The forest's estimate of the conditional law at `x`.
    pub fn predict_measure(&self, x: &[f64]) -> Result<DiscreteMeasure> {
        let w = self.weights(x)?;
        self.measure_from_weights(&w)
    }

    pub fn measure_from_weights(&self, w: &PredictionWeights) -> Result<DiscreteMeasure> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (i, &a) in w.alpha.iter().enumerate() {
            if a > 0.0 {
                points.extend_from_slice(self.y_row(i));
                weights.push(a);
            }
        }
        DiscreteMeasure::from_probabilities(self.dim_y, points, weights)
    }

    /// `sum_i alpha_i(x) Y_i`, the classical forest regression estimate.
    pub fn predict_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let mut mean = vec![0.0; self.dim_y];
        for (i, &a) in w.alpha.iter().enumerate() {
            if a > 0.0 {
                for (m, v) in mean.iter_mut().zip(self.y_row(i)) {
                    *m += a * v;
                }
            }
        }
        Ok(mean)
    }
}

#[cfg(test)]
mod tests;
