//! Weighted discrete probability measures and Wasserstein distances.
//!
//! A [`DiscreteMeasure`] is a finite weighted point cloud in `R^d'`. Forest
//! predictions, reference samples and tree leaves are all represented this
//! way. Three distances are provided:
//!
//! | function | inputs | cost |
//! |----------|--------|------|
//! | [`wasserstein_1d`] | `d' = 1` | `O((m+n) log(m+n))`, quantile formula |
//! | [`wasserstein_exact`] | any `d'` | network simplex on the dense cost matrix |
//! | [`sinkhorn`] | any `d'` | entropic approximation, log-domain scaling |

mod exact;
#[cfg(test)]
mod props;
mod sinkhorn;

pub use exact::{wasserstein_exact, TransportPlan};
pub use sinkhorn::sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose weights sum to 1 within this tolerance are renormalized
/// silently by [`DiscreteMeasure::from_probabilities`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// A probability measure `sum_i w_i delta_{x_i}` with finitely many atoms.
///
/// Duplicate support points are allowed; their weights add.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Builds a measure from support points and optional unnormalized weights.
///
/// Omitted weights default to uniform. Given weights are rescaled to sum 1.
pub fn make_measure(points: &[Vec<f64>], weights: Option<&[f64]>) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new(points, weights)
}

impl DiscreteMeasure {
    pub fn new(points: &[Vec<f64>], weights: Option<&[f64]>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySupport)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidData("support points must have dimension >= 1".into()));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            flat.extend_from_slice(p);
        }
        let weights = match weights {
            Some(w) => w.to_vec(),
            None => vec![1.0; points.len()],
        };
        Self::from_flat(dim, flat, weights)
    }

    /// Builds a measure from a row-major point buffer and unnormalized weights.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total = validate(dim, &points, &weights)?;
        if !(total > 0.0) {
            return Err(Error::ZeroMass(total));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { dim, points, weights })
    }

    /// Builds a measure from weights that are already a probability vector.
    ///
    /// Sums within [`WEIGHT_SUM_TOLERANCE`] of 1 are renormalized; anything
    /// further off is rejected.
    pub fn from_probabilities(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total = validate(dim, &points, &weights)?;
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::NotNormalized(total));
        }
        let weights = if total == 1.0 {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        Ok(Self { dim, points, weights })
    }

    /// Uniform empirical measure on scalar samples.
    pub fn uniform_1d(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::from_flat(1, values.to_vec(), vec![1.0; n])
    }

    /// Uniform empirical measure on `d`-dimensional samples stored row-major.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidData("support points must have dimension >= 1".into()));
        }
        let n = points.len() / dim;
        Self::from_flat(dim, points, vec![1.0; n])
    }

    /// The Dirac mass at `point`.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total mass located exactly at `point`.
    pub fn mass_at(&self, point: &[f64]) -> f64 {
        self.points()
            .zip(&self.weights)
            .filter(|(x, _)| *x == point)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, w) in self.points().zip(&self.weights) {
            for (acc, v) in m.iter_mut().zip(x) {
                *acc += w * v;
            }
        }
        m
    }

    /// Applies `f` to every support point, keeping the weights.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut flat = Vec::with_capacity(self.points.len());
        let mut dim = None;
        for x in self.points() {
            let y = f(x);
            match dim {
                None => dim = Some(y.len()),
                Some(d) if d != y.len() => {
                    return Err(Error::DimensionMismatch { expected: d, got: y.len() })
                }
                _ => {}
            }
            flat.extend(y);
        }
        Self::from_probabilities(dim.unwrap_or(self.dim), flat, self.weights.clone())
    }

    pub fn to_json(&self) -> MeasureJson {
        MeasureJson {
            dim: self.dim,
            points: self.points().map(<[f64]>::to_vec).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn from_json(json: &MeasureJson) -> Result<Self> {
        let mut flat = Vec::with_capacity(json.points.len() * json.dim);
        for p in &json.points {
            if p.len() != json.dim {
                return Err(Error::DimensionMismatch { expected: json.dim, got: p.len() });
            }
            flat.extend_from_slice(p);
        }
        Self::from_probabilities(json.dim, flat, json.weights.clone())
    }
}

fn validate(dim: usize, points: &[f64], weights: &[f64]) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidData("support points must have dimension >= 1".into()));
    }
    if weights.is_empty() {
        return Err(Error::EmptySupport);
    }
    if points.len() != weights.len() * dim {
        return Err(Error::LengthMismatch {
            what: "points",
            expected: weights.len() * dim,
            got: points.len(),
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("support points"));
    }
    let mut total = 0.0;
    for (index, &weight) in weights.iter().enumerate() {
        if !weight.is_finite() {
            return Err(Error::NonFinite("weights"));
        }
        if weight < 0.0 {
            return Err(Error::NegativeWeight { index, weight });
        }
        total += weight;
    }
    Ok(total)
}

/// Wire form of a measure: `{"dim": d', "points": [[...], ...], "weights": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureJson {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub(crate) fn check_order(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidOrder(p))
    }
}

/// `|d|^p` with fast paths for the common orders.
#[inline]
pub(crate) fn abs_pow(d: f64, p: f64) -> f64 {
    if p == 1.0 {
        d.abs()
    } else if p == 2.0 {
        d * d
    } else {
        d.abs().powf(p)
    }
}

/// `c^(1/p)` with fast paths for the common orders.
#[inline]
pub(crate) fn root(c: f64, p: f64) -> f64 {
    let c = c.max(0.0);
    if p == 1.0 {
        c
    } else if p == 2.0 {
        c.sqrt()
    } else {
        c.powf(1.0 / p)
    }
}

/// `||x - y||^p` for the Euclidean norm.
#[inline]
pub(crate) fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    if x.len() == 1 {
        return abs_pow(x[0] - y[0], p);
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        sq
    } else if p == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(p / 2.0)
    }
}

/// `W_p^p` between two measures on the real line.
///
/// Both quantile functions are step functions; the integral is accumulated
/// over the merged sequence of cumulative-weight breakpoints.
pub fn wasserstein_1d_pow(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    check_order(p)?;
    for m in [mu, nu] {
        if m.dim != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: m.dim });
        }
    }
    let (xs, cx) = sorted_quantiles(mu);
    let (ys, cy) = sorted_quantiles(nu);
    Ok(quantile_distance_pow(&xs, &cx, &ys, &cy, p))
}

/// `W_p` between two measures on the real line (quantile formula).
pub fn wasserstein_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    Ok(root(wasserstein_1d_pow(mu, nu, p)?, p))
}

/// `W_p` for any output dimension: quantile formula in 1D, exact transport otherwise.
pub fn wasserstein(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    if mu.dim == 1 && nu.dim == 1 {
        wasserstein_1d(mu, nu, p)
    } else {
        Ok(wasserstein_exact(mu, nu, p)?.0)
    }
}

/// Sorted support values with their cumulative weights; the last breakpoint is pinned to 1.
fn sorted_quantiles(m: &DiscreteMeasure) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| m.points[a].total_cmp(&m.points[b]));
    let mut values = Vec::with_capacity(order.len());
    let mut cum = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &i in &order {
        acc += m.weights[i];
        values.push(m.points[i]);
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    (values, cum)
}

fn quantile_distance_pow(xs: &[f64], cx: &[f64], ys: &[f64], cy: &[f64], p: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut prev = 0.0;
    let mut total = 0.0;
    while i < xs.len() && j < ys.len() {
        let next = cx[i].min(cy[j]);
        let width = next - prev;
        if width > 0.0 {
            total += width * abs_pow(xs[i] - ys[j], p);
        }
        prev = next;
        if cx[i] <= next {
            i += 1;
        }
        if cy[j] <= next {
            j += 1;
        }
    }
    total
}
