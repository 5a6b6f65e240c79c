//! Evaluation against the synthetic ground truth.
//!
//! Test points are drawn uniformly on the cube and shared by every method
//! under comparison; each point's reference sample comes from its own RNG
//! substream, so results do not depend on evaluation order or thread count.

mod bench;

pub use bench::{
    param_sweep, run_benchmark, BenchConfig, BenchReport, Cell, MethodFailure, NoiseCell, OrderMetric, SweepAxis,
    SweepRow,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{fit, Criterion, Dataset, Forest, ForestParams, Splitter};
use crate::measure::{wasserstein, DiscreteMeasure};
use crate::rng::{derive_seed, substream};
use crate::synth::{conditional_mean, sample_true_conditional, ScenarioKind};

/// Largest reference sample used with exact transport (multivariate output).
pub const MULTIVARIATE_M_REF: usize = 300;

/// Anything that predicts a conditional law at a query point.
pub trait Estimator: Sync {
    fn predict_measure(&self, x: &[f64]) -> Result<DiscreteMeasure>;

    fn predict_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_measure(x)?.mean())
    }
}

impl Estimator for Forest {
    fn predict_measure(&self, x: &[f64]) -> Result<DiscreteMeasure> {
        Forest::predict_measure(self, x)
    }

    fn predict_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        Forest::predict_mean(self, x)
    }
}

/// Compared methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Method {
    /// Greedy forest with the variance-reduction criterion.
    WrfIntra,
    /// Greedy forest with the inter-class `W_p^p` criterion.
    WrfInter { p: f64 },
    /// Extremely randomized trees with the variance-reduction criterion.
    Ert,
    /// Response-blind simplified Mondrian forest.
    Mondrian,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Self::WrfIntra => "wrf_intra".into(),
            Self::WrfInter { p } => format!("wrf_inter_p{p}"),
            Self::Ert => "ert".into(),
            Self::Mondrian => "mondrian".into(),
        }
    }

    /// Parses `wrf_intra`, `wrf_inter_p<p>`, `ert`, `mondrian`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wrf_intra" | "intra" => Some(Self::WrfIntra),
            "ert" => Some(Self::Ert),
            "mondrian" | "mf" => Some(Self::Mondrian),
            _ => {
                let p: f64 = s.strip_prefix("wrf_inter_p").or_else(|| s.strip_prefix("inter"))?.parse().ok()?;
                (p >= 1.0 && p.is_finite()).then_some(Self::WrfInter { p })
            }
        }
    }

    /// `base` with this method's criterion and splitter.
    pub fn params(&self, base: &ForestParams) -> ForestParams {
        let mut p = base.clone();
        match *self {
            Self::WrfIntra => {
                p.criterion = Criterion::IntraL2;
                p.splitter = Splitter::Greedy;
            }
            Self::WrfInter { p: order } => {
                p.criterion = Criterion::InterWp;
                p.p = order;
                p.splitter = Splitter::Greedy;
            }
            Self::Ert => {
                p.criterion = Criterion::IntraL2;
                p.splitter = Splitter::ExtraRandom;
            }
            Self::Mondrian => {
                p.criterion = Criterion::IntraL2;
                p.splitter = Splitter::Mondrian;
            }
        }
        p
    }

    pub fn fit(&self, data: &Dataset, base: &ForestParams) -> Result<Forest> {
        fit(data, &self.params(base))
    }
}

/// Extremely randomized trees: one uniform threshold per tried direction.
pub fn fit_ert(data: &Dataset, params: &ForestParams) -> Result<Forest> {
    let mut p = params.clone();
    p.splitter = Splitter::ExtraRandom;
    fit(data, &p)
}

/// Simplified Mondrian forest: cuts depend on the covariates only.
pub fn fit_mondrian(data: &Dataset, params: &ForestParams) -> Result<Forest> {
    let mut p = params.clone();
    p.splitter = Splitter::Mondrian;
    fit(data, &p)
}

/// Test points and, per arm, reference samples from the true conditional law.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub kind: ScenarioKind,
    pub t: u8,
    pub m_ref: usize,
    pub points: Vec<Vec<f64>>,
    pub references: Vec<DiscreteMeasure>,
}

/// `n_test` uniform points on `[0,1]^d`, a function of `(d, n_test, eval_seed)` only.
pub fn evaluation_points(d: usize, n_test: usize, eval_seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    let mut rng = substream(derive_seed(eval_seed, 0x7e57), 0);
    (0..n_test).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

/// Reference size actually used: capped for multivariate responses, where
/// distances need exact transport.
pub fn effective_m_ref(kind: ScenarioKind, m_ref: usize) -> usize {
    if kind.dim_y() > 1 {
        m_ref.min(MULTIVARIATE_M_REF)
    } else {
        m_ref
    }
}

impl EvalSet {
    /// Shared points plus one reference sample per point, point `i` drawing
    /// from its own substream.
    pub fn new(kind: ScenarioKind, t: u8, d: usize, n_test: usize, m_ref: usize, eval_seed: u64) -> Result<Self> {
        if t > 1 {
            return Err(Error::InvalidArm(t));
        }
        if n_test == 0 {
            return Err(Error::InvalidParams("n_test must be >= 1".into()));
        }
        let m_ref = effective_m_ref(kind, m_ref);
        let points = evaluation_points(d, n_test, eval_seed);
        let references = reference_draws(kind, t, &points, m_ref, derive_seed(eval_seed, 1 + u64::from(t)))?;
        Ok(Self { kind, t, m_ref, points, references })
    }

    /// A second, independent reference sample at the same points.
    pub fn replicate_references(&self, eval_seed: u64) -> Result<Vec<DiscreteMeasure>> {
        reference_draws(self.kind, self.t, &self.points, self.m_ref, derive_seed(eval_seed, 100 + u64::from(self.t)))
    }

    pub fn n_test(&self) -> usize {
        self.points.len()
    }
}

fn reference_draws(
    kind: ScenarioKind,
    t: u8,
    points: &[Vec<f64>],
    m_ref: usize,
    seed: u64,
) -> Result<Vec<DiscreteMeasure>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, x)| sample_true_conditional(kind, t, x, m_ref, &mut substream(seed, i as u64)))
        .collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-point `W_p(estimate, reference)` over an evaluation set.
pub fn pointwise_wasserstein(est: &dyn Estimator, set: &EvalSet, p: f64) -> Result<Vec<f64>> {
    set.points
        .par_iter()
        .zip(&set.references)
        .map(|(x, reference)| wasserstein(&est.predict_measure(x)?, reference, p))
        .collect()
}

/// Mean and standard error of `W_p` between the estimated and true laws.
pub fn avg_wasserstein(est: &dyn Estimator, set: &EvalSet, p: f64) -> Result<(f64, f64)> {
    Ok(mean_stderr(&pointwise_wasserstein(est, set, p)?))
}

/// Mean and standard error of `W_p` between two independent reference samples.
pub fn reference_noise(set: &EvalSet, p: f64, eval_seed: u64) -> Result<(f64, f64)> {
    let other = set.replicate_references(eval_seed)?;
    let values = set
        .references
        .par_iter()
        .zip(&other)
        .map(|(a, b)| wasserstein(a, b, p))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_stderr(&values))
}

/// Mean squared error of the predicted conditional mean against the oracle
/// `E[Y(t) | X = x]`, with its standard error.
pub fn mse_conditional_mean(est: &dyn Estimator, kind: ScenarioKind, t: u8, points: &[Vec<f64>]) -> Result<(f64, f64)> {
    let errors = points
        .par_iter()
        .map(|x| {
            let truth = conditional_mean(kind, t, x)?;
            let pred = est.predict_mean(x)?;
            if pred.len() != truth.len() {
                return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
            }
            Ok(pred.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_stderr(&errors))
}

#[cfg(test)]
mod tests;
