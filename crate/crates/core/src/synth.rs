//! Synthetic treatment-effect scenarios and their ground-truth oracles.
//!
//! Covariates are uniform on `[0,1]^d`. The control outcome is
//! `N(m0(x), s0sq(x))`; the treated outcome is an even mixture of a
//! point mass (or standard normal) at `-1` and `N(m1(x), s1sq(x))`. The
//! multivariate scenario pairs the treated outcome with a Gaussian cost.
//! Oracles accept any `x`, including points outside the unit cube.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Dataset;
use crate::measure::DiscreteMeasure;
use crate::rng::{substream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Randomized assignment, treated outcome `1/2 delta_{-1} + 1/2 N(m1, s1sq)`.
    Main,
    /// As `Main`, with a treatment cost recorded as a second response.
    MultivariateCost,
    /// Confounded assignment `e(x)`, treated outcome `1/2 N(-1, 1) + 1/2 N(m1, s1sq)`.
    AppendixA,
    /// Same generator as `AppendixA`; evaluated at a point where `e(x) = 0`.
    AppendixC,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Main => "main",
            Self::MultivariateCost => "multivariate_cost",
            Self::AppendixA => "appendix_a",
            Self::AppendixC => "appendix_c",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Main, Self::MultivariateCost, Self::AppendixA, Self::AppendixC]
            .into_iter()
            .find(|k| k.name() == s)
    }

    /// Response dimension of the observed outcome.
    pub fn dim_y(self) -> usize {
        match self {
            Self::MultivariateCost => 2,
            _ => 1,
        }
    }

    fn confounded(self) -> bool {
        matches!(self, Self::AppendixA | Self::AppendixC)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub const DEFAULT_DIM: usize = 50;

    pub fn new(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self { kind, n, d: Self::DEFAULT_DIM, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 6 {
            return Err(Error::InvalidParams(format!("scenario dimension must be >= 6, got {}", self.d)));
        }
        if self.n < 2 {
            return Err(Error::InvalidParams(format!("scenario size must be >= 2, got {}", self.n)));
        }
        Ok(())
    }
}

/// Observational data `(x, y_observed, t)` plus both potential outcomes.
///
/// For the cost scenario the treated response is `(Y(1), C(1))` and the
/// control response is `(Y(0), 0)`: untreated units incur no cost.
#[derive(Debug, Clone, PartialEq)]
pub struct HTEDataset {
    pub d: usize,
    pub dy: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<u8>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl HTEDataset {
    /// Builds an observational dataset without potential outcomes.
    pub fn observed(d: usize, dy: usize, x: Vec<f64>, y: Vec<f64>, t: Vec<u8>) -> Result<Self> {
        let n = t.len();
        if d == 0 || dy == 0 {
            return Err(Error::InvalidData("covariate and response dimensions must be >= 1".into()));
        }
        if x.len() != n * d {
            return Err(Error::LengthMismatch { what: "covariates", expected: n * d, got: x.len() });
        }
        if y.len() != n * dy {
            return Err(Error::LengthMismatch { what: "responses", expected: n * dy, got: y.len() });
        }
        if let Some(&bad) = t.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArm(bad));
        }
        Ok(Self { d, dy, x, y, t, y0: Vec::new(), y1: Vec::new() })
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dy..(i + 1) * self.dy]
    }

    pub fn has_potential_outcomes(&self) -> bool {
        self.y0.len() == self.y.len() && self.y1.len() == self.y.len()
    }

    /// Row indices with `t == arm`.
    pub fn arm_rows(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.t[i] == arm).collect()
    }

    /// Rows of one arm as a regression dataset.
    pub fn arm(&self, arm: u8) -> Result<Dataset> {
        if arm > 1 {
            return Err(Error::InvalidArm(arm));
        }
        let rows = self.arm_rows(arm);
        if rows.is_empty() {
            return Err(Error::EmptyArm(if arm == 0 { "control" } else { "treated" }));
        }
        let mut x = Vec::with_capacity(rows.len() * self.d);
        let mut y = Vec::with_capacity(rows.len() * self.dy);
        for &i in &rows {
            x.extend_from_slice(self.x_row(i));
            y.extend_from_slice(self.y_row(i));
        }
        Dataset::from_flat(self.d, self.dy, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVar {
    pub m0: f64,
    pub s0sq: f64,
    pub m1: f64,
    pub s1sq: f64,
}

/// Means and variances of the Gaussian outcome components at `x` (`d >= 6`).
pub fn mean_var_functions(x: &[f64]) -> MeanVar {
    let (x1, x2, x3, x4, x5, x6) = (x[0], x[1], x[2], x[3], x[4], x[5]);
    let m0 = 10.0 * x2 * x4 + x3 + (x4 - 2.0 * x1).exp();
    MeanVar {
        m0,
        s0sq: (-x1 * x2 + 4.0 * x3 * x3).max(0.2),
        m1: 2.0 * m0 + 1.0 - 5.0 * x2 * x5,
        s1sq: (3.0 * x2 + x3 * x4 + x6).max(1e-12),
    }
}

/// `tau(x) = -2.5 x2 x5`.
pub fn true_cate(x: &[f64]) -> f64 {
    -2.5 * x[1] * x[4]
}

/// Treatment probability: `1/2 sin(2 x1 x2 + 6 x3) + 1/2` for the confounded
/// scenarios, `1/2` otherwise.
pub fn propensity(kind: ScenarioKind, x: &[f64]) -> f64 {
    if kind.confounded() {
        0.5 * (2.0 * x[0] * x[1] + 6.0 * x[2]).sin() + 0.5
    } else {
        0.5
    }
}

/// A point with `e(x) = 0`: `x1 = pi/4`, `x2 = 1`, `x3 = pi/6`, remaining
/// coordinates taken from `rest` (which must have length `d`; its first three
/// entries are overwritten).
pub fn zero_propensity_point(rest: &[f64]) -> Vec<f64> {
    let mut x = rest.to_vec();
    x[0] = std::f64::consts::FRAC_PI_4;
    x[1] = 1.0;
    x[2] = std::f64::consts::FRAC_PI_6;
    x
}

/// Mean of the cost `C(1)` and its variance.
fn cost_moments(x: &[f64]) -> (f64, f64) {
    (2.0 * x[2] * x[4] + x[1], x[4] * x[5] + 1.0)
}

/// `E[Y(t) | X = x]` (a vector for the cost scenario).
pub fn conditional_mean(kind: ScenarioKind, t: u8, x: &[f64]) -> Result<Vec<f64>> {
    let mv = mean_var_functions(x);
    match t {
        0 => Ok(match kind {
            ScenarioKind::MultivariateCost => vec![mv.m0, 0.0],
            _ => vec![mv.m0],
        }),
        1 => {
            let y1 = 0.5 * mv.m1 - 0.5;
            Ok(match kind {
                ScenarioKind::MultivariateCost => vec![y1, cost_moments(x).0],
                _ => vec![y1],
            })
        }
        other => Err(Error::InvalidArm(other)),
    }
}

fn normal(mean: f64, var: f64, rng: &mut Stream) -> f64 {
    Normal::new(mean, var.sqrt()).expect("variances are positive").sample(rng)
}

/// One draw of `Y(t)` at `x`, appended to `out`.
fn draw_outcome(kind: ScenarioKind, t: u8, x: &[f64], mv: &MeanVar, rng: &mut Stream, out: &mut Vec<f64>) {
    match t {
        0 => {
            out.push(normal(mv.m0, mv.s0sq, rng));
            if kind == ScenarioKind::MultivariateCost {
                out.push(0.0);
            }
        }
        _ => {
            let first = rng.random_bool(0.5);
            let y = match (first, kind.confounded()) {
                (true, false) => -1.0,
                (true, true) => normal(-1.0, 1.0, rng),
                (false, _) => normal(mv.m1, mv.s1sq, rng),
            };
            out.push(y);
            if kind == ScenarioKind::MultivariateCost {
                let (mean, var) = cost_moments(x);
                out.push(normal(mean, var, rng));
            }
        }
    }
}

/// Draws a dataset. The same spec always gives the same data.
pub fn generate(spec: &ScenarioSpec) -> Result<HTEDataset> {
    spec.validate()?;
    let (n, d, dy) = (spec.n, spec.d, spec.kind.dim_y());
    let mut rng = substream(spec.seed, 0);
    let mut x = Vec::with_capacity(n * d);
    let mut t = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n * dy);
    let mut y1 = Vec::with_capacity(n * dy);
    let mut y = Vec::with_capacity(n * dy);
    for i in 0..n {
        x.extend((0..d).map(|_| rng.random::<f64>()));
        let xi = &x[i * d..(i + 1) * d];
        let e = propensity(spec.kind, xi);
        let ti = Bernoulli::new(e).expect("propensity lies in [0,1]").sample(&mut rng) as u8;
        let mv = mean_var_functions(xi);
        draw_outcome(spec.kind, 0, xi, &mv, &mut rng, &mut y0);
        draw_outcome(spec.kind, 1, xi, &mv, &mut rng, &mut y1);
        let src = if ti == 1 { &y1 } else { &y0 };
        y.extend_from_slice(&src[i * dy..(i + 1) * dy]);
        t.push(ti);
    }
    Ok(HTEDataset { d, dy, x, y, t, y0, y1 })
}

/// Uniform empirical measure of `m` independent draws from `L(Y(t) | X = x)`.
pub fn sample_true_conditional(
    kind: ScenarioKind,
    t: u8,
    x: &[f64],
    m: usize,
    rng: &mut Stream,
) -> Result<DiscreteMeasure> {
    if t > 1 {
        return Err(Error::InvalidArm(t));
    }
    if m == 0 {
        return Err(Error::EmptySupport);
    }
    let mv = mean_var_functions(x);
    let mut flat = Vec::with_capacity(m * kind.dim_y());
    for _ in 0..m {
        draw_outcome(kind, t, x, &mv, rng, &mut flat);
    }
    DiscreteMeasure::uniform(kind.dim_y(), flat)
}
