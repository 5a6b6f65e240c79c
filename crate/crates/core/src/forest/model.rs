//! Model file format.
//!
//! ```json
//! {"version": 1, "params": {...}, "dim_x": d, "normalization": null,
//!  "trees": [{"subsample": [...], "nodes": [{"dim": k, "thr": t, "l": i, "r": j} | {"leaf": [...]}]}],
//!  "y": [[...], ...]}
//! ```
//!
//! Node 0 is the root. Reals are written in shortest round-trip form, so a
//! saved and reloaded forest predicts bit-for-bit like the original.

use serde::{Deserialize, Serialize};

use super::{Forest, ForestParams, Node, Tree};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestFile {
    pub version: u32,
    pub params: ForestParams,
    pub dim_x: usize,
    pub normalization: Option<Vec<f64>>,
    pub trees: Vec<TreeFile>,
    pub y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub subsample: Vec<usize>,
    pub nodes: Vec<NodeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeFile {
    Split { dim: usize, thr: f64, l: usize, r: usize },
    Leaf { leaf: Vec<usize> },
}

impl Forest {
    /// Assembles a forest from its parts, checking structural consistency.
    pub fn from_parts(
        params: ForestParams,
        dim_x: usize,
        dim_y: usize,
        trees: Vec<Tree>,
        y: Vec<f64>,
        normalization: Option<Vec<f64>>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::Format(msg));
        if dim_x == 0 || dim_y == 0 || y.len() % dim_y != 0 || y.is_empty() {
            return bad("inconsistent dimensions".into());
        }
        let n = y.len() / dim_y;
        if trees.is_empty() {
            return bad("forest has no trees".into());
        }
        if let Some(s) = &normalization {
            if s.len() != dim_y || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return bad("normalization must hold one positive scale per response coordinate".into());
            }
        }
        for (j, tree) in trees.iter().enumerate() {
            if tree.subsample.iter().any(|&i| i >= n) {
                return bad(format!("tree {j}: subsample index out of range"));
            }
            if tree.nodes.is_empty() {
                return bad(format!("tree {j}: no nodes"));
            }
            for node in &tree.nodes {
                match node {
                    Node::Split { dim, threshold, left, right } => {
                        if *dim >= dim_x || !threshold.is_finite() {
                            return bad(format!("tree {j}: invalid split"));
                        }
                        if *left >= tree.nodes.len() || *right >= tree.nodes.len() || *left == 0 || *right == 0 {
                            return bad(format!("tree {j}: child reference out of range"));
                        }
                    }
                    Node::Leaf { slots } => {
                        if slots.is_empty() || slots.iter().any(|&s| s >= tree.subsample.len()) {
                            return bad(format!("tree {j}: invalid leaf"));
                        }
                    }
                }
            }
            if !is_rooted_tree(tree) {
                return bad(format!("tree {j}: nodes do not form a binary tree rooted at 0"));
            }
        }
        Ok(Self { params, dim_x, dim_y, trees, y, normalization })
    }

    pub fn to_file(&self) -> ForestFile {
        ForestFile {
            version: FORMAT_VERSION,
            params: self.params.clone(),
            dim_x: self.dim_x,
            normalization: self.normalization.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeFile {
                    subsample: t.subsample.clone(),
                    nodes: t
                        .nodes
                        .iter()
                        .map(|n| match n {
                            Node::Split { dim, threshold, left, right } => {
                                NodeFile::Split { dim: *dim, thr: *threshold, l: *left, r: *right }
                            }
                            Node::Leaf { slots } => NodeFile::Leaf { leaf: slots.clone() },
                        })
                        .collect(),
                })
                .collect(),
            y: self.y.chunks_exact(self.dim_y).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn from_file(file: ForestFile) -> Result<Self> {
        if file.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", file.version)));
        }
        let dim_y = file.y.first().map_or(0, Vec::len);
        if file.y.iter().any(|r| r.len() != dim_y) {
            return Err(Error::Format("ragged response rows".into()));
        }
        let trees = file
            .trees
            .into_iter()
            .map(|t| Tree {
                subsample: t.subsample,
                nodes: t
                    .nodes
                    .into_iter()
                    .map(|n| match n {
                        NodeFile::Split { dim, thr, l, r } => Node::Split { dim, threshold: thr, left: l, right: r },
                        NodeFile::Leaf { leaf } => Node::Leaf { slots: leaf },
                    })
                    .collect(),
            })
            .collect();
        Self::from_parts(file.params, file.dim_x, dim_y, trees, file.y.concat(), file.normalization)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// Every node reachable from 0 exactly once, and every node reachable.
fn is_rooted_tree(tree: &Tree) -> bool {
    let mut seen = vec![false; tree.nodes.len()];
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        if seen[id] {
            return false;
        }
        seen[id] = true;
        if let Node::Split { left, right, .. } = &tree.nodes[id] {
            stack.push(*left);
            stack.push(*right);
        }
    }
    seen.into_iter().all(|s| s)
}
