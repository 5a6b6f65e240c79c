//! Exact discrete optimal transport by the primal network simplex method.
//!
//! The balanced transportation problem is solved on the complete bipartite
//! graph between the two supports. The spanning tree is stored with parent,
//! thread and successor-count arrays, entering arcs are chosen by block
//! search, and a strongly feasible tree is maintained so that degenerate
//! pivots cannot cycle. An artificial root joined to every node supplies
//! the initial feasible tree.

use super::{check_order, ground_cost, root, DiscreteMeasure};
use crate::error::{Error, Result};

/// An optimal coupling: `(source atom, target atom, mass)` triples plus its
/// total cost `sum mass * ||x_i - y_j||^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn row_marginals(&self, rows: usize) -> Vec<f64> {
        let mut m = vec![0.0; rows];
        for &(i, _, w) in &self.entries {
            m[i] += w;
        }
        m
    }

    pub fn col_marginals(&self, cols: usize) -> Vec<f64> {
        let mut m = vec![0.0; cols];
        for &(_, j, w) in &self.entries {
            m[j] += w;
        }
        m
    }
}

/// Exact `W_p(mu, nu)` and an optimal plan.
///
/// Works on the dense cost matrix, so it is meant for supports of a few
/// hundred atoms per side.
pub fn wasserstein_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    check_order(p)?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }

    // Zero-mass atoms never carry flow; drop them to shrink the graph.
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights()[j] > 0.0).collect();

    let mut costs = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        let x = mu.point(i);
        for &j in &cols {
            costs.push(ground_cost(x, nu.point(j), p));
        }
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }

    let supply: Vec<f64> = rows
        .iter()
        .map(|&i| mu.weights()[i])
        .chain(cols.iter().map(|&j| -nu.weights()[j]))
        .collect();

    let mut simplex = Simplex::new(rows.len(), cols.len(), costs, supply);
    simplex.run()?;

    let mut entries = Vec::new();
    let mut cost = 0.0;
    for (a, &f) in simplex.flow[..simplex.n_real].iter().enumerate() {
        if f > 0.0 {
            cost += f * simplex.cost[a];
            entries.push((rows[a / cols.len()], cols[a % cols.len()], f));
        }
    }

    let plan = TransportPlan { entries, cost };
    check_marginals(&plan, mu, nu)?;
    Ok((root(cost, p), plan))
}

fn check_marginals(plan: &TransportPlan, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    const TOL: f64 = 1e-9;
    let rows = plan.row_marginals(mu.len());
    let cols = plan.col_marginals(nu.len());
    let bad_row = rows.iter().zip(mu.weights()).any(|(a, b)| (a - b).abs() > TOL);
    let bad_col = cols.iter().zip(nu.weights()).any(|(a, b)| (a - b).abs() > TOL);
    if bad_row || bad_col {
        return Err(Error::Solver("plan marginals do not match the input measures".into()));
    }
    Ok(())
}

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;
/// Relative threshold below which a negative reduced cost is treated as zero.
const PIVOT_EPS: f64 = 2.220_446_049_250_313e-15;

struct Simplex {
    n_rows: usize,
    n_cols: usize,
    n_nodes: usize,
    n_real: usize,

    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pred_dir: Vec<i8>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,

    block_size: usize,
    next_arc: usize,

    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl Simplex {
    fn new(n_rows: usize, n_cols: usize, costs: Vec<f64>, supply: Vec<f64>) -> Self {
        let n_nodes = n_rows + n_cols;
        let n_real = n_rows * n_cols;
        let n_all = n_real + n_nodes;
        let root = n_nodes;

        let mut source = Vec::with_capacity(n_all);
        let mut target = Vec::with_capacity(n_all);
        for i in 0..n_rows {
            for j in 0..n_cols {
                source.push(i);
                target.push(n_rows + j);
            }
        }
        source.resize(n_all, 0);
        target.resize(n_all, 0);

        let max_cost = costs.iter().cloned().fold(0.0, f64::max);
        let art_cost = (max_cost + 1.0) * n_nodes as f64;

        let mut cost = costs;
        cost.resize(n_all, 0.0);
        let mut flow = vec![0.0; n_all];
        let mut state = vec![STATE_LOWER; n_all];

        let mut parent = vec![NONE; n_nodes + 1];
        let mut pred = vec![NONE; n_nodes + 1];
        let mut thread = vec![0; n_nodes + 1];
        let mut rev_thread = vec![0; n_nodes + 1];
        let mut succ_num = vec![1; n_nodes + 1];
        let mut last_succ = vec![0; n_nodes + 1];
        let mut pred_dir = vec![DIR_UP; n_nodes + 1];
        let mut pi = vec![0.0; n_nodes + 1];

        thread[root] = 0;
        rev_thread[0] = root;
        succ_num[root] = n_nodes + 1;
        last_succ[root] = root.wrapping_sub(1);

        for u in 0..n_nodes {
            let e = n_real + u;
            parent[u] = root;
            pred[u] = e;
            thread[u] = u + 1;
            rev_thread[u + 1] = u;
            succ_num[u] = 1;
            last_succ[u] = u;
            state[e] = STATE_TREE;
            if supply[u] >= 0.0 {
                pred_dir[u] = DIR_UP;
                pi[u] = 0.0;
                source[e] = u;
                target[e] = root;
                flow[e] = supply[u];
                cost[e] = 0.0;
            } else {
                pred_dir[u] = DIR_DOWN;
                pi[u] = art_cost;
                source[e] = root;
                target[e] = u;
                flow[e] = -supply[u];
                cost[e] = art_cost;
            }
        }

        let block_size = ((n_real as f64).sqrt() as usize).max(10);

        Self {
            n_rows,
            n_cols,
            n_nodes,
            n_real,
            source,
            target,
            cost,
            flow,
            state,
            parent,
            pred,
            thread,
            rev_thread,
            succ_num,
            last_succ,
            pred_dir,
            pi,
            dirty_revs: Vec::new(),
            block_size,
            next_arc: 0,
            in_arc: NONE,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
            delta: 0.0,
        }
    }

    fn run(&mut self) -> Result<()> {
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::EmptySupport);
        }
        // Generous bound; a strongly feasible tree with the pivot guard terminates long before.
        let max_pivots = 50 * (self.n_real + self.n_nodes) + 10_000;
        let mut pivots = 0usize;
        while self.find_entering_arc() {
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Solver("unbounded pivot cycle".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Solver(format!("no convergence after {pivots} pivots")));
            }
        }
        Ok(())
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        f64::from(self.state[e]) * (self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]])
    }

    #[inline]
    fn pivot_scale(&self, e: usize) -> f64 {
        self.pi[self.source[e]]
            .abs()
            .max(self.pi[self.target[e]].abs())
            .max(self.cost[e].abs())
    }

    fn find_entering_arc(&mut self) -> bool {
        let mut min = 0.0;
        let mut cnt = self.block_size;
        let n = self.n_real;
        let start = self.next_arc;
        for step in 0..n {
            let e = (start + step) % n;
            let c = self.reduced_cost(e);
            if c < min {
                min = c;
                self.in_arc = e;
            }
            cnt -= 1;
            if cnt == 0 {
                if min < 0.0 && min < -PIVOT_EPS * self.pivot_scale(self.in_arc) {
                    self.next_arc = (e + 1) % n;
                    return true;
                }
                cnt = self.block_size;
            }
        }
        if min < 0.0 && min < -PIVOT_EPS * self.pivot_scale(self.in_arc) {
            self.next_arc = (start + n - 1) % n;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source[self.in_arc];
        let mut v = self.target[self.in_arc];
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Finds the blocking arc of the pivot cycle. Capacities are infinite, so
    /// only arcs whose flow would decrease can block.
    fn find_leaving_arc(&mut self) -> bool {
        // Non-tree arcs are always at their lower bound.
        let first = self.source[self.in_arc];
        let second = self.target[self.in_arc];
        self.delta = f64::INFINITY;
        let mut result = 0;

        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }

        let mut u = second;
        while u != self.join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }

        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            self.flow[self.in_arc] += val;
            let mut u = self.source[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target[self.in_arc];
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.flow[out] = 0.0;
        self.state[out] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;

        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };

            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            // When old_rev_thread == v_in, join and v_out coincide.
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // Re-hang the stem between u_in and u_out.
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            // Reverse pred/pred_dir and recompute subtree sizes along the stem.
            let mut tmp_sc: isize = 0;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] as isize - self.succ_num[p] as isize;
                self.succ_num[u] = tmp_sc as usize;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = if u_in == self.source[in_arc] { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in]
            - f64::from(self.pred_dir[u_in]) * self.cost[self.in_arc];
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    #[cfg(test)]
    fn max_dual_violation(&self) -> f64 {
        (0..self.n_real)
            .map(|e| -(self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]]))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{wasserstein_1d, DiscreteMeasure};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_measure(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DiscreteMeasure {
        let pts = (0..n * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        DiscreteMeasure::from_flat(dim, pts, w).unwrap()
    }

    #[test]
    fn euclidean_diracs() {
        let a = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        let (w, plan) = wasserstein_exact(&a, &b, 2.0).unwrap();
        assert_relative_eq!(w, 5.0, epsilon = 1e-12);
        assert_eq!(plan.entries, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn permuted_support_is_zero() {
        let pts = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![5.0, 5.0]];
        let perm = vec![pts[2].clone(), pts[0].clone(), pts[1].clone()];
        let a = DiscreteMeasure::new(&pts, None).unwrap();
        let b = DiscreteMeasure::new(&perm, None).unwrap();
        let (w, _) = wasserstein_exact(&a, &b, 1.0).unwrap();
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn agrees_with_quantile_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let (m, n) = (rng.random_range(1..=10), rng.random_range(1..=10));
            let a = random_measure(&mut rng, m, 1);
            let b = random_measure(&mut rng, n, 1);
            for p in [1.0, 2.0, 1.5] {
                let exact = wasserstein_exact(&a, &b, p).unwrap().0;
                let closed = wasserstein_1d(&a, &b, p).unwrap();
                assert!((exact - closed).abs() < 1e-9, "{exact} vs {closed}");
            }
        }
    }

    #[test]
    fn optimality_certificate_on_larger_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, n) in &[(40, 60), (120, 90), (7, 200)] {
            let a = random_measure(&mut rng, m, 2);
            let b = random_measure(&mut rng, n, 2);
            let costs: Vec<f64> = (0..m)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| ground_cost(a.point(i), b.point(j), 2.0))
                .collect();
            let supply = a.weights().iter().cloned().chain(b.weights().iter().map(|w| -w)).collect();
            let mut s = Simplex::new(m, n, costs, supply);
            s.run().unwrap();
            assert!(s.max_dual_violation() < 1e-9, "dual violation {}", s.max_dual_violation());
            let (_, plan) = wasserstein_exact(&a, &b, 2.0).unwrap();
            assert!((plan.total_mass() - 1.0).abs() < 1e-9);
            // A basic solution has at most m + n - 1 positive entries.
            assert!(plan.entries.len() <= m + n - 1);
        }
    }

    #[test]
    fn degenerate_uniform_problem() {
        // Equal uniform weights make almost every pivot degenerate.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 80;
        let pa: Vec<f64> = (0..n * 2).map(|_| rng.random_range(0.0..1.0)).collect();
        let pb: Vec<f64> = (0..n * 2).map(|_| rng.random_range(0.0..1.0)).collect();
        let a = DiscreteMeasure::uniform(2, pa).unwrap();
        let b = DiscreteMeasure::uniform(2, pb).unwrap();
        let (w, plan) = wasserstein_exact(&a, &b, 1.0).unwrap();
        assert!(w > 0.0);
        for m in plan.row_marginals(n) {
            assert!((m - 1.0 / n as f64).abs() < 1e-12);
        }
    }
}
