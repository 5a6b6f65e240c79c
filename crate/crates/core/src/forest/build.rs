//! Tree growing.
//!
//! Cells are processed first-in first-out from a queue that starts with the
//! root. A cell becomes a leaf when it holds fewer than `nodesize` slots, when
//! all of its covariate rows coincide, or when the splitter finds no cut with
//! two nonempty children. `nodesize == subsample_size` is the top of the
//! allowed range and means no splitting at all, so those trees are a single
//! leaf. Otherwise it is cut and both children join the back
//! of the queue.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use super::criterion::CellScorer;
use super::{Dataset, ForestParams, Node, Splitter, Tree};
use crate::error::Result;
use crate::rng::Stream;

/// A chosen cut: `x[dim] <= threshold` goes left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub dim: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Best midpoint cut of the cell `rows` (row indices, repeats allowed) over
/// the directions `try_dims`, scored with the criterion of `params`.
///
/// Ties go to the lowest direction, then the smallest threshold. Returns
/// `None` when every tried direction is constant on the cell.
pub fn best_split(
    rows: &[usize],
    data: &Dataset,
    try_dims: &[usize],
    params: &ForestParams,
) -> Option<SplitCandidate> {
    let mut grower = Grower::new(data, data.y_flat(), params);
    let mut dims = try_dims.to_vec();
    dims.sort_unstable();
    dims.dedup();
    grower.best_split(rows, &dims)
}

pub(crate) fn build_tree(
    data: &Dataset,
    split_y: &[f64],
    params: &ForestParams,
    rng: &mut Stream,
) -> Result<Tree> {
    let n = data.n();
    let subsample: Vec<usize> = if params.with_replacement {
        (0..params.subsample_size).map(|_| rng.random_range(0..n)).collect()
    } else {
        index::sample(rng, n, params.subsample_size).into_vec()
    };

    let mut grower = Grower::new(data, split_y, params);
    let mut nodes = vec![Node::Leaf { slots: Vec::new() }];
    let mut queue = VecDeque::new();
    queue.push_back((0usize, (0..subsample.len()).collect::<Vec<usize>>()));
    let mut rows = Vec::new();

    while let Some((id, slots)) = queue.pop_front() {
        rows.clear();
        rows.extend(slots.iter().map(|&s| subsample[s]));
        let stop = slots.len() < params.nodesize || params.nodesize == params.subsample_size;
        let cut = if stop || identical_rows(data, &rows) {
            None
        } else {
            grower.choose(&rows, rng)
        };
        let Some((dim, threshold)) = cut else {
            nodes[id] = Node::Leaf { slots };
            continue;
        };
        let (left_slots, right_slots): (Vec<usize>, Vec<usize>) = slots
            .iter()
            .partition(|&&s| data.x_at(subsample[s], dim) <= threshold);
        debug_assert!(!left_slots.is_empty() && !right_slots.is_empty());
        let left = nodes.len();
        nodes.push(Node::Leaf { slots: Vec::new() });
        nodes.push(Node::Leaf { slots: Vec::new() });
        nodes[id] = Node::Split { dim, threshold, left, right: left + 1 };
        queue.push_back((left, left_slots));
        queue.push_back((left + 1, right_slots));
    }

    Ok(Tree { subsample, nodes })
}

fn identical_rows(data: &Dataset, rows: &[usize]) -> bool {
    let first = data.x_row(rows[0]);
    rows[1..].iter().all(|&r| data.x_row(r) == first)
}

/// A cut strictly between `a < b`, never equal to `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a * 0.5 + b * 0.5;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    y: &'a [f64],
    params: &'a ForestParams,
    scorer: CellScorer,
    order: Vec<(f64, usize)>,
}

impl<'a> Grower<'a> {
    fn new(data: &'a Dataset, y: &'a [f64], params: &'a ForestParams) -> Self {
        Self { data, y, params, scorer: CellScorer::default(), order: Vec::new() }
    }

    fn load(&mut self, rows: &[usize]) {
        let dy = self.data.dim_y();
        let y = self.y;
        self.scorer
            .reset(self.params.gain(), rows.len(), dy, |pos| &y[rows[pos] * dy..(rows[pos] + 1) * dy]);
    }

    fn try_dims(&self, rng: &mut Stream) -> Vec<usize> {
        let mut dims = index::sample(rng, self.data.dim_x(), self.params.mtry).into_vec();
        dims.sort_unstable();
        dims
    }

    fn choose(&mut self, rows: &[usize], rng: &mut Stream) -> Option<(usize, f64)> {
        match self.params.splitter {
            Splitter::Greedy => {
                let dims = self.try_dims(rng);
                self.best_split(rows, &dims).map(|c| (c.dim, c.threshold))
            }
            Splitter::ExtraRandom => {
                let dims = self.try_dims(rng);
                self.random_split(rows, &dims, rng).map(|c| (c.dim, c.threshold))
            }
            Splitter::Mondrian => self.mondrian_split(rows, rng),
        }
    }

    fn best_split(&mut self, rows: &[usize], dims: &[usize]) -> Option<SplitCandidate> {
        self.load(rows);
        let mut best: Option<SplitCandidate> = None;
        for &dim in dims {
            self.order.clear();
            self.order
                .extend(rows.iter().enumerate().map(|(pos, &r)| (self.data.x_at(r, dim), pos)));
            self.order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.order[0].0 == self.order[rows.len() - 1].0 {
                continue;
            }
            self.scorer.clear_left();
            for i in 0..rows.len() - 1 {
                self.scorer.push_left(self.order[i].1);
                let (a, b) = (self.order[i].0, self.order[i + 1].0);
                if a < b {
                    let gain = self.scorer.gain();
                    if best.is_none_or(|c| gain > c.gain) {
                        best = Some(SplitCandidate { dim, threshold: midpoint(a, b), gain });
                    }
                }
            }
        }
        best
    }

    /// One uniform threshold on `[min, max)` of each tried direction; the
    /// best-scoring one wins. Constant directions are skipped.
    fn random_split(&mut self, rows: &[usize], dims: &[usize], rng: &mut Stream) -> Option<SplitCandidate> {
        self.load(rows);
        let mut best: Option<SplitCandidate> = None;
        for &dim in dims {
            let (lo, hi) = extent(self.data, rows, dim);
            if lo == hi {
                continue;
            }
            let mut threshold = rng.random_range(lo..hi);
            if threshold >= hi {
                threshold = lo;
            }
            self.scorer.clear_left();
            for (pos, &r) in rows.iter().enumerate() {
                if self.data.x_at(r, dim) <= threshold {
                    self.scorer.push_left(pos);
                }
            }
            let gain = self.scorer.gain();
            if best.is_none_or(|c| gain > c.gain) {
                best = Some(SplitCandidate { dim, threshold, gain });
            }
        }
        best
    }

    /// Response-blind cut over the bounding box of the cell.
    fn mondrian_split(&self, rows: &[usize], rng: &mut Stream) -> Option<(usize, f64)> {
        let boxes: Vec<(f64, f64)> = (0..self.data.dim_x()).map(|k| extent(self.data, rows, k)).collect();
        let total: f64 = boxes.iter().map(|(lo, hi)| hi - lo).sum();
        if !(total > 0.0) {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut dim = None;
        for (k, (lo, hi)) in boxes.iter().enumerate() {
            if hi > lo {
                acc += hi - lo;
                dim = Some(k);
                if u < acc {
                    break;
                }
            }
        }
        let dim = dim?;
        let (lo, hi) = boxes[dim];
        let mut threshold = rng.random_range(lo..hi);
        if threshold >= hi {
            threshold = lo;
        }
        Some((dim, threshold))
    }
}

fn extent(data: &Dataset, rows: &[usize], dim: usize) -> (f64, f64) {
    rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
        let v = data.x_at(r, dim);
        (lo.min(v), hi.max(v))
    })
}
