//! Splitting criteria.
//!
//! Two gains are supported for a cut of cell `A` into `A_L` and `A_R`:
//!
//! * `intra_l2`: the variance-reduction gain, summed over output
//!   coordinates. Written with within-cell deviations it is
//!   `sum_k W_A^(k) - W_L^(k) - W_R^(k)` with
//!   `W_.^(k) = (1/N_A) sum (y^(k) - mean_.^(k))^2`, which is also half the
//!   average squared `W_2` distance from each Dirac `delta_{y_i}` to its
//!   cell's empirical measure.
//! * `inter_wp`: `(N_L/N_A) W_p^p(pi_L, pi_A) + (N_R/N_A) W_p^p(pi_R, pi_A)`
//!   for uniform empirical measures on scalar responses.
//!
//! The free functions evaluate one split from scratch. [`CellScorer`]
//! evaluates every cut position of a sorted covariate in one sweep.

use crate::error::{Error, Result};
use crate::measure::{abs_pow, wasserstein_1d_pow, DiscreteMeasure};

/// Variance-reduction gain of a split, summed over output coordinates.
///
/// `left_y` and `right_y` must partition `cell_y` as multisets.
pub fn intra_gain(cell_y: &[Vec<f64>], left_y: &[Vec<f64>], right_y: &[Vec<f64>]) -> Result<f64> {
    check_partition(cell_y, left_y, right_y)?;
    let dim = cell_y[0].len();
    let mut gain = Dd::default();
    for k in 0..dim {
        let spread = |set: &[Vec<f64>]| {
            let mean = set.iter().fold(Dd::default(), |acc, y| acc.add(Dd::from(y[k]))).div(set.len() as f64);
            set.iter().fold(Dd::default(), |acc, y| {
                let dev = Dd::from(y[k]).sub(mean);
                acc.add(dev.mul(dev))
            })
        };
        gain = gain.add(spread(cell_y)).sub(spread(left_y)).sub(spread(right_y));
    }
    Ok(gain.div(cell_y.len() as f64).hi)
}

/// Inter-class Wasserstein gain of a split of scalar responses.
pub fn inter_gain(
    cell_y: &[Vec<f64>],
    left_y: &[Vec<f64>],
    right_y: &[Vec<f64>],
    p: f64,
) -> Result<f64> {
    check_partition(cell_y, left_y, right_y)?;
    if cell_y[0].len() != 1 {
        return Err(Error::UnsupportedOutputDim("inter_wp"));
    }
    let flat = |set: &[Vec<f64>]| set.iter().map(|y| y[0]).collect::<Vec<_>>();
    let cell = DiscreteMeasure::uniform_1d(&flat(cell_y))?;
    let left = DiscreteMeasure::uniform_1d(&flat(left_y))?;
    let right = DiscreteMeasure::uniform_1d(&flat(right_y))?;
    let n_a = cell_y.len() as f64;
    Ok(left_y.len() as f64 / n_a * wasserstein_1d_pow(&left, &cell, p)?
        + right_y.len() as f64 / n_a * wasserstein_1d_pow(&right, &cell, p)?)
}

fn check_partition(cell: &[Vec<f64>], left: &[Vec<f64>], right: &[Vec<f64>]) -> Result<()> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::EmptyChild);
    }
    let dim = cell[0].len();
    if let Some(bad) = cell.iter().chain(left).chain(right).find(|y| y.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let cmp = |a: &Vec<f64>, b: &Vec<f64>| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    let mut whole: Vec<&Vec<f64>> = cell.iter().collect();
    let mut parts: Vec<&Vec<f64>> = left.iter().chain(right).collect();
    whole.sort_by(|a, b| cmp(a, b));
    parts.sort_by(|a, b| cmp(a, b));
    if whole != parts {
        return Err(Error::NotAPartition);
    }
    Ok(())
}

/// `D^(m)_j = A_j - A_{j-1}` for `j = 1..=m`, where
/// `A_j = m N int_0^{j/m} F^{-1}(u) du` for the parent with sorted values
/// `sorted` and prefix sums `prefix`. With `j N = k m + rem`,
/// `A_j = m prefix[k] + rem sorted[k]`. Appended to `out`.
fn slot_increments(m: usize, sorted: &[f64], prefix: &[f64], out: &mut Vec<f64>) {
    let n = sorted.len();
    let (mut k, mut rem) = (0usize, 0usize);
    let mut prev = 0.0;
    for _ in 0..m {
        rem += n;
        k += rem / m;
        rem %= m;
        let mut a = prefix[k] * m as f64;
        if rem > 0 {
            a += sorted[k] * rem as f64;
        }
        out.push(a - prev);
        prev = a;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ra.iter().zip(&b[a.len() - ra.len()..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Largest cell for which the p = 2 slot table (`N(N+1)/2` entries) is built.
const W2_TABLE_MAX: usize = 2048;

/// Double-double number `hi + lo`. Gains are differences of nearly equal
/// sums of squares, so the from-scratch evaluation carries about twice the
/// working precision.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

impl Dd {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn add(self, o: Self) -> Self {
        let s = two_sum(self.hi, o.hi);
        two_sum(s.hi, s.lo + self.lo + o.lo)
    }

    fn sub(self, o: Self) -> Self {
        self.add(Self { hi: -o.hi, lo: -o.lo })
    }

    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        two_sum(p, e)
    }

    fn div(self, d: f64) -> Self {
        let q1 = self.hi / d;
        let r = self.sub(Self::from(q1).mul(Self::from(d)));
        two_sum(q1, r.hi / d)
    }
}

/// Which gain a [`CellScorer`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    Intra,
    Inter { p: f64 },
}

/// Reusable per-cell state for evaluating many cuts of the same cell.
///
/// Cell members are addressed by position `0..len`. For the inter gain the
/// responses are sorted once per cell; each cut then costs one linear pass
/// over the sorted responses.
#[derive(Debug, Default)]
pub struct CellScorer {
    len: usize,
    dim_y: usize,
    gain: Option<Gain>,
    /// Cell-centred responses, row-major `len x dim_y`.
    centred: Vec<f64>,
    total: Vec<f64>,
    left_sum: Vec<f64>,
    /// Neumaier compensation for `left_sum`.
    left_comp: Vec<f64>,
    left_count: usize,
    // inter
    rank_of: Vec<usize>,
    sorted: Vec<f64>,
    prefix: Vec<f64>,
    mean_sq: f64,
    in_left: Vec<bool>,
    // inter, p = 1: sorted gaps and left members among the r + 1 smallest
    gaps: Vec<f64>,
    left_below: Vec<f64>,
    // inter, p = 2
    w2_table: bool,
    slot_table: Vec<f64>,
    left_sorted: Vec<f64>,
    right_sorted: Vec<f64>,
}

impl CellScorer {
    /// Loads a cell. `y_of(pos)` yields the response of member `pos`.
    pub fn reset<'a>(&mut self, gain: Gain, len: usize, dim_y: usize, y_of: impl Fn(usize) -> &'a [f64]) {
        self.len = len;
        self.dim_y = dim_y;
        self.gain = Some(gain);
        self.left_count = 0;
        self.centred.clear();
        self.total.clear();
        self.left_sum.clear();
        self.left_sum.resize(dim_y, 0.0);
        self.left_comp.clear();
        self.left_comp.resize(dim_y, 0.0);

        let mut mean = vec![Dd::default(); dim_y];
        for pos in 0..len {
            for (m, &v) in mean.iter_mut().zip(y_of(pos)) {
                *m = m.add(Dd::from(v));
            }
        }
        let mean: Vec<Dd> = mean.into_iter().map(|m| m.div(len as f64)).collect();
        let mut total = vec![Dd::default(); dim_y];
        for pos in 0..len {
            for (k, &v) in y_of(pos).iter().enumerate() {
                let c = Dd::from(v).sub(mean[k]).hi;
                self.centred.push(c);
                total[k] = total[k].add(Dd::from(c));
            }
        }
        self.total.extend(total.iter().map(|t| t.hi));

        if let Gain::Inter { .. } = gain {
            let mut order: Vec<usize> = (0..len).collect();
            order.sort_by(|&a, &b| self.centred[a].total_cmp(&self.centred[b]));
            self.rank_of.clear();
            self.rank_of.resize(len, 0);
            self.sorted.clear();
            for (rank, &pos) in order.iter().enumerate() {
                self.rank_of[pos] = rank;
                self.sorted.push(self.centred[pos]);
            }
            self.prefix.clear();
            self.prefix.push(0.0);
            let mut acc = 0.0;
            for &v in &self.sorted {
                acc += v;
                self.prefix.push(acc);
            }
            self.mean_sq = self.sorted.iter().map(|v| v * v).sum::<f64>() / len as f64;
            self.in_left.clear();
            self.in_left.resize(len, false);
            self.gaps.clear();
            self.gaps.extend(self.sorted.windows(2).map(|w| w[1] - w[0]));
            self.left_below.clear();
            self.left_below.resize(len - 1, 0.0);
        }
        self.w2_table = gain == (Gain::Inter { p: 2.0 }) && len <= W2_TABLE_MAX;
        if self.w2_table {
            self.slot_table.clear();
            for m in 1..=len {
                slot_increments(m, &self.sorted, &self.prefix, &mut self.slot_table);
            }
            self.left_sorted.clear();
            self.right_sorted.clone_from(&self.sorted);
        }
    }

    /// Empties the left child.
    pub fn clear_left(&mut self) {
        self.left_count = 0;
        self.left_sum.iter_mut().for_each(|s| *s = 0.0);
        self.left_comp.iter_mut().for_each(|c| *c = 0.0);
        if matches!(self.gain, Some(Gain::Inter { .. })) {
            self.in_left.iter_mut().for_each(|b| *b = false);
            self.left_below.iter_mut().for_each(|c| *c = 0.0);
        }
        if self.w2_table {
            self.left_sorted.clear();
            self.right_sorted.clone_from(&self.sorted);
        }
    }

    /// Moves member `pos` into the left child.
    pub fn push_left(&mut self, pos: usize) {
        self.left_count += 1;
        let row = &self.centred[pos * self.dim_y..(pos + 1) * self.dim_y];
        for ((s, c), &v) in self.left_sum.iter_mut().zip(self.left_comp.iter_mut()).zip(row) {
            let t = *s + v;
            *c += if s.abs() >= v.abs() { (*s - t) + v } else { (v - t) + *s };
            *s = t;
        }
        if let Some(Gain::Inter { .. }) = self.gain {
            let rank = self.rank_of[pos];
            self.in_left[rank] = true;
            self.left_below[rank.min(self.len - 1)..].iter_mut().for_each(|c| *c += 1.0);
            if self.w2_table {
                let v = self.sorted[rank];
                let at = self.left_sorted.partition_point(|&u| u < v);
                self.left_sorted.insert(at, v);
                let at = self.right_sorted.partition_point(|&u| u < v);
                self.right_sorted.remove(at);
            }
        }
    }

    /// Gain of the current left/right partition. Both children must be nonempty.
    pub fn gain(&self) -> f64 {
        match self.gain.expect("scorer not loaded") {
            Gain::Intra => self.intra(),
            Gain::Inter { p } if p == 1.0 => self.inter_w1(),
            Gain::Inter { p } if p == 2.0 && self.w2_table => self.inter_w2(),
            Gain::Inter { p } => self.inter_general(p),
        }
    }

    /// Between-class form: `sum_k (N_L/N)(mean_L - mean_A)^2 + (N_R/N)(mean_R - mean_A)^2`.
    fn intra(&self) -> f64 {
        let n = self.len as f64;
        let nl = self.left_count as f64;
        let nr = n - nl;
        let mut g = 0.0;
        for k in 0..self.dim_y {
            let mean_a = self.total[k] / n;
            let left = self.left_sum[k] + self.left_comp[k];
            let dl = left / nl - mean_a;
            let dr = (self.total[k] - left) / nr - mean_a;
            g += nl * dl * dl + nr * dr * dr;
        }
        g / n
    }

    /// For p = 1 both children contribute the same CDF discrepancy:
    /// the gain is `(2/N^2) sum_r gap_r |N c_r - m (r+1)|`, where `c_r` counts
    /// left members among the `r+1` smallest responses and `m = N_L`.
    fn inter_w1(&self) -> f64 {
        let nf = self.len as f64;
        let m = self.left_count as f64;
        let mut acc = [0.0; 4];
        let chunks = self.gaps.len() / 4 * 4;
        for r in (0..chunks).step_by(4) {
            for i in 0..4 {
                let q = r + i;
                acc[i] += self.gaps[q] * (nf * self.left_below[q] - m * (q + 1) as f64).abs();
            }
        }
        let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for q in chunks..self.gaps.len() {
            total += self.gaps[q] * (nf * self.left_below[q] - m * (q + 1) as f64).abs();
        }
        2.0 * total / (nf * nf)
    }

    /// For p = 2 the gain is `2 E_A[y^2] - (2/N^2) sum_side sum_j y_j D^(m_s)_j`
    /// over each child's sorted responses, with `D^(m)` from [`slot_increments`].
    fn inter_w2(&self) -> f64 {
        let n = self.len;
        let nf = n as f64;
        let m_l = self.left_count;
        let cross = dot(&self.left_sorted, self.increments(m_l)) + dot(&self.right_sorted, self.increments(n - m_l));
        2.0 * self.mean_sq - 2.0 / (nf * nf) * cross
    }

    fn increments(&self, m: usize) -> &[f64] {
        let start = m * (m - 1) / 2;
        &self.slot_table[start..start + m]
    }

    /// Any order: merge each child's quantile breakpoints with the parent's.
    /// Breakpoints are kept as integers in units of `1/(m N)`.
    fn inter_general(&self, p: f64) -> f64 {
        let n = self.len;
        let m_l = self.left_count;
        let side = |left: bool, m: usize| -> f64 {
            let mut acc = 0.0;
            let mut k = 0usize; // parent interval index
            let mut j = 0usize;
            for r in 0..n {
                if self.in_left[r] != left {
                    continue;
                }
                let v = self.sorted[r];
                let lo = j * n;
                let hi = (j + 1) * n;
                j += 1;
                let mut pos = lo;
                while pos < hi {
                    let edge = ((k + 1) * m).min(hi);
                    acc += (edge - pos) as f64 * abs_pow(v - self.sorted[k], p);
                    pos = edge;
                    if edge == (k + 1) * m {
                        k += 1;
                    }
                }
            }
            acc
        };
        let total = side(true, m_l) + side(false, n - m_l);
        total / (n as f64 * n as f64)
    }
}
