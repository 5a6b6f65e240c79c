//! Benchmark runs and one-parameter sweeps.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{avg_wasserstein, mse_conditional_mean, reference_noise, EvalSet, Method};
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::synth::{generate, HTEDataset, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: ScenarioSpec,
    pub methods: Vec<Method>,
    /// Shared forest parameters; each method sets its own criterion and splitter.
    pub params: ForestParams,
    pub arms: Vec<u8>,
    pub orders: Vec<f64>,
    pub n_test: usize,
    pub m_ref: usize,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub t: u8,
    pub p: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_test: usize,
    pub m_ref: usize,
    pub runtime_s: f64,
}

/// Distance between two independent reference samples: the floor below
/// which no estimator can be measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCell {
    pub t: u8,
    pub p: f64,
    pub mean: f64,
    pub stderr: f64,
    pub m_ref: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderMetric {
    pub p: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub method: String,
    pub t: u8,
    pub metrics: Vec<OrderMetric>,
    pub mse: f64,
    pub mse_stderr: f64,
    pub n_test: usize,
    pub m_ref: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: String,
    pub t: u8,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    pub train_seed: u64,
    pub cells: Vec<Cell>,
    pub sweeps: Vec<SweepRow>,
    #[serde(default)]
    pub noise: Vec<NoiseCell>,
    #[serde(default)]
    pub failures: Vec<MethodFailure>,
}

impl BenchReport {
    fn empty(spec: &ScenarioSpec) -> Self {
        Self {
            scenario: spec.kind.name().to_string(),
            train_seed: spec.seed,
            cells: Vec::new(),
            sweeps: Vec::new(),
            noise: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn cell(&self, method: &Method, t: u8, p: f64) -> Option<&Cell> {
        let name = method.name();
        self.cells.iter().find(|c| c.method == name && c.t == t && c.p == p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per cell, then one row per sweep entry and order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,scenario,train_seed,method,axis,value,t,p,mean,stderr,mse,n_test,m_ref,runtime_s\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "cell,{},{},{},,,{},{},{},{},,{},{},{}",
                self.scenario, self.train_seed, c.method, c.t, c.p, c.mean, c.stderr, c.n_test, c.m_ref, c.runtime_s
            );
        }
        for r in &self.sweeps {
            for m in &r.metrics {
                let _ = writeln!(
                    out,
                    "sweep,{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.scenario,
                    self.train_seed,
                    r.method,
                    r.axis.name(),
                    r.value,
                    r.t,
                    m.p,
                    m.mean,
                    m.stderr,
                    r.mse,
                    r.n_test,
                    r.m_ref,
                    r.runtime_s
                );
            }
        }
        out
    }
}

fn check_config(methods: &[Method], arms: &[u8], orders: &[f64]) -> Result<()> {
    if methods.is_empty() {
        return Err(Error::InvalidParams("at least one method is required".into()));
    }
    if let Some(&t) = arms.iter().find(|&&t| t > 1) {
        return Err(Error::InvalidArm(t));
    }
    if let Some(&p) = orders.iter().find(|&&p| !(p.is_finite() && p >= 1.0)) {
        return Err(Error::InvalidOrder(p));
    }
    Ok(())
}

fn fit_arm(data: &HTEDataset, t: u8, method: &Method, params: &ForestParams) -> Result<Forest> {
    method.fit(&data.arm(t)?, params)
}

/// Trains every method on each requested arm of one training draw and
/// evaluates all `(t, p)` cells on shared test points. A method that fails
/// is recorded in `failures` and the run continues.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    check_config(&config.methods, &config.arms, &config.orders)?;
    let data = generate(&config.scenario)?;
    let mut report = BenchReport::empty(&config.scenario);
    for &t in &config.arms {
        let set = EvalSet::new(
            config.scenario.kind,
            t,
            config.scenario.d,
            config.n_test,
            config.m_ref,
            config.eval_seed,
        )?;
        for &p in &config.orders {
            let (mean, stderr) = reference_noise(&set, p, config.eval_seed)?;
            report.noise.push(NoiseCell { t, p, mean, stderr, m_ref: set.m_ref });
        }
        for method in &config.methods {
            let start = Instant::now();
            let forest = match fit_arm(&data, t, method, &config.params) {
                Ok(f) => f,
                Err(e) => {
                    report.failures.push(MethodFailure { method: method.name(), t, error: e.to_string() });
                    continue;
                }
            };
            let fit_time = start.elapsed().as_secs_f64();
            for &p in &config.orders {
                let start = Instant::now();
                match avg_wasserstein(&forest, &set, p) {
                    Ok((mean, stderr)) => report.cells.push(Cell {
                        method: method.name(),
                        t,
                        p,
                        mean,
                        stderr,
                        n_test: set.n_test(),
                        m_ref: set.m_ref,
                        runtime_s: fit_time + start.elapsed().as_secs_f64(),
                    }),
                    Err(e) => report.failures.push(MethodFailure { method: method.name(), t, error: e.to_string() }),
                }
            }
        }
    }
    Ok(report)
}

/// Parameter varied by [`param_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Mtry,
    Nodesize,
    SubsampleSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mtry => "mtry",
            Self::Nodesize => "nodesize",
            Self::SubsampleSize => "subsample_size",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Mtry, Self::Nodesize, Self::SubsampleSize].into_iter().find(|a| a.name() == s)
    }

    pub fn apply(self, base: &ForestParams, value: usize) -> ForestParams {
        let mut p = base.clone();
        match self {
            Self::Mtry => p.mtry = value,
            Self::Nodesize => p.nodesize = value,
            Self::SubsampleSize => p.subsample_size = value,
        }
        p
    }
}

/// One fit and evaluation per `(value, method)` on arm `config.arms[0]`,
/// every value sharing the same training draw, test points and references.
pub fn param_sweep(axis: SweepAxis, values: &[usize], config: &BenchConfig) -> Result<BenchReport> {
    check_config(&config.methods, &config.arms, &config.orders)?;
    if values.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one value".into()));
    }
    let &t = config.arms.first().ok_or_else(|| Error::InvalidParams("sweep needs an arm".into()))?;
    let data = generate(&config.scenario)?;
    let arm = data.arm(t)?;
    for &v in values {
        axis.apply(&config.params, v)
            .validate(arm.n(), arm.dim_x(), arm.dim_y())
            .map_err(|e| Error::InvalidParams(format!("invalid {} value {v}: {e}", axis.name())))?;
    }
    let set = EvalSet::new(config.scenario.kind, t, config.scenario.d, config.n_test, config.m_ref, config.eval_seed)?;
    let mut report = BenchReport::empty(&config.scenario);
    for &value in values {
        let params = axis.apply(&config.params, value);
        for method in &config.methods {
            let start = Instant::now();
            let row = method.fit(&arm, &params).and_then(|forest| {
                let metrics = config
                    .orders
                    .iter()
                    .map(|&p| avg_wasserstein(&forest, &set, p).map(|(mean, stderr)| OrderMetric { p, mean, stderr }))
                    .collect::<Result<Vec<_>>>()?;
                let (mse, mse_stderr) = mse_conditional_mean(&forest, config.scenario.kind, t, &set.points)?;
                Ok(SweepRow {
                    axis,
                    value,
                    method: method.name(),
                    t,
                    metrics,
                    mse,
                    mse_stderr,
                    n_test: set.n_test(),
                    m_ref: set.m_ref,
                    runtime_s: start.elapsed().as_secs_f64(),
                })
            });
            match row {
                Ok(row) => report.sweeps.push(row),
                Err(e) => report.failures.push(MethodFailure { method: method.name(), t, error: e.to_string() }),
            }
        }
    }
    Ok(report)
}
