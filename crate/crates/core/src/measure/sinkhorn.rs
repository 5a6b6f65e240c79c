//! Entropic-regularized transport (Sinkhorn scaling in the log domain).

use super::{check_order, ground_cost, root, DiscreteMeasure};
use crate::error::{Error, Result};

/// Marginal violation (L1) at which the scaling iterations stop.
const MARGINAL_TOL: f64 = 1e-9;

/// Approximate `W_p(mu, nu)` from the entropic optimal plan.
///
/// Returns `(sum_ij P_ij ||x_i - y_j||^p)^(1/p)` where `P` is the Sinkhorn
/// plan at regularization `epsilon`. `P` is a feasible coupling (up to the
/// stopping tolerance), so the value sits above the exact distance and
/// converges to it as `epsilon -> 0`.
pub fn sinkhorn(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    epsilon: f64,
    max_iters: usize,
) -> Result<f64> {
    check_order(p)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidRegularization(epsilon));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }

    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights()[j] > 0.0).collect();
    let (m, n) = (rows.len(), cols.len());
    let mut cost = Vec::with_capacity(m * n);
    for &i in &rows {
        for &j in &cols {
            cost.push(ground_cost(mu.point(i), nu.point(j), p));
        }
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost matrix"));
    }
    let log_a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j].ln()).collect();
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();

    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut buf = Vec::with_capacity(m.max(n));

    for _ in 0..max_iters.max(1) {
        for i in 0..m {
            buf.clear();
            buf.extend((0..n).map(|j| (g[j] - cost[i * n + j]) / epsilon));
            f[i] = epsilon * (log_a[i] - log_sum_exp(&buf));
        }
        for j in 0..n {
            buf.clear();
            buf.extend((0..m).map(|i| (f[i] - cost[i * n + j]) / epsilon));
            g[j] = epsilon * (log_b[j] - log_sum_exp(&buf));
        }
        // Columns are exact after the g-update; check the rows.
        let violation: f64 = (0..m)
            .map(|i| {
                let row: f64 = (0..n)
                    .map(|j| ((f[i] + g[j] - cost[i * n + j]) / epsilon).exp())
                    .sum();
                (row - a[i]).abs()
            })
            .sum();
        if violation < MARGINAL_TOL {
            break;
        }
    }

    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let c = cost[i * n + j];
            total += ((f[i] + g[j] - c) / epsilon).exp() * c;
        }
    }
    Ok(root(total, p))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
