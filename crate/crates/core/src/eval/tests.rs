use super::*;
use crate::forest::Node;
use crate::rng::Stream;
use crate::synth::{generate, mean_var_functions, ScenarioSpec};
use rand::Rng;
use std::sync::Mutex;

/// Returns a fresh sample of the true law at each query.
struct Cheat {
    kind: ScenarioKind,
    t: u8,
    m: usize,
    rng: Mutex<Stream>,
}

impl Estimator for Cheat {
    fn predict_measure(&self, x: &[f64]) -> Result<DiscreteMeasure> {
        sample_true_conditional(self.kind, self.t, x, self.m, &mut self.rng.lock().unwrap())
    }
}

struct Constant(f64);

impl Estimator for Constant {
    fn predict_measure(&self, _x: &[f64]) -> Result<DiscreteMeasure> {
        DiscreteMeasure::dirac(&[self.0])
    }
}

struct OracleMean(ScenarioKind, u8);

impl Estimator for OracleMean {
    fn predict_measure(&self, x: &[f64]) -> Result<DiscreteMeasure> {
        DiscreteMeasure::dirac(&conditional_mean(self.0, self.1, x)?)
    }
}

fn small_params(d: usize) -> ForestParams {
    ForestParams {
        m_trees: 20,
        subsample_size: 100,
        with_replacement: true,
        mtry: d,
        nodesize: 2,
        criterion: Criterion::IntraL2,
        p: 2.0,
        seed: 3,
        splitter: Splitter::Greedy,
        standardize: false,
    }
}

fn small_config(kind: ScenarioKind, methods: Vec<Method>) -> BenchConfig {
    BenchConfig {
        scenario: ScenarioSpec { kind, n: 300, d: 8, seed: 1 },
        methods,
        params: small_params(8),
        arms: vec![0],
        orders: vec![1.0],
        n_test: 30,
        m_ref: 500,
        eval_seed: 2,
    }
}

#[test]
fn method_names_round_trip() {
    for m in [Method::WrfIntra, Method::WrfInter { p: 1.0 }, Method::WrfInter { p: 2.0 }, Method::Ert, Method::Mondrian] {
        assert_eq!(Method::parse(&m.name()), Some(m));
    }
    assert_eq!(Method::parse("wrf_inter_p0.5"), None);
    assert_eq!(Method::parse("rf"), None);
}

#[test]
fn evaluation_points_are_shared_and_reproducible() {
    let a = EvalSet::new(ScenarioKind::Main, 0, 8, 20, 100, 5).unwrap();
    let b = EvalSet::new(ScenarioKind::Main, 0, 8, 20, 100, 5).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.references, b.references);
    let c = EvalSet::new(ScenarioKind::Main, 1, 8, 20, 100, 5).unwrap();
    assert_eq!(a.points, c.points);
    assert_eq!(EvalSet::new(ScenarioKind::MultivariateCost, 1, 8, 2, 2000, 5).unwrap().m_ref, MULTIVARIATE_M_REF);
    assert!(EvalSet::new(ScenarioKind::Main, 2, 8, 2, 10, 5).is_err());
}

#[test]
fn cheating_and_constant_estimators() {
    let set = EvalSet::new(ScenarioKind::Main, 0, 50, 200, 2000, 7).unwrap();
    let (floor, _) = reference_noise(&set, 1.0, 7).unwrap();
    let cheat = Cheat { kind: ScenarioKind::Main, t: 0, m: 2000, rng: Mutex::new(substream(99, 0)) };
    let (cheat_mean, _) = avg_wasserstein(&cheat, &set, 1.0).unwrap();
    assert!(cheat_mean <= 2.0 * floor, "{cheat_mean} vs floor {floor}");
    let (constant, _) = avg_wasserstein(&Constant(0.0), &set, 1.0).unwrap();
    assert!(constant >= 5.0 * cheat_mean, "{constant} vs {cheat_mean}");
}

#[test]
fn oracle_mean_has_zero_mse() {
    let points = evaluation_points(8, 50, 1);
    for (kind, t) in [(ScenarioKind::Main, 0), (ScenarioKind::Main, 1), (ScenarioKind::MultivariateCost, 1)] {
        let (mse, _) = mse_conditional_mean(&OracleMean(kind, t), kind, t, &points).unwrap();
        assert!(mse.abs() <= 1e-12);
    }
}

#[test]
fn zero_predictor_mse_is_second_moment() {
    let points = evaluation_points(6, 2000, 2);
    let (mse, se) = mse_conditional_mean(&Constant(0.0), ScenarioKind::Main, 0, &points).unwrap();
    // Independent Monte-Carlo estimate of E[m0(X)^2].
    let mut rng = substream(77, 0);
    let sq: Vec<f64> = (0..100_000)
        .map(|_| {
            let x: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            mean_var_functions(&x).m0.powi(2)
        })
        .collect();
    let (mc, mc_se) = mean_stderr(&sq);
    assert!((mse - mc).abs() < 4.0 * (se + mc_se), "{mse} vs {mc}");
}

#[test]
fn mse_shrinks_with_more_trees() {
    let kind = ScenarioKind::Main;
    let points = evaluation_points(8, 100, 3);
    let mut by_m = Vec::new();
    for m in [10, 50, 200] {
        let mut values = Vec::new();
        for seed in 0..4 {
            let data = generate(&ScenarioSpec { kind, n: 300, d: 8, seed }).unwrap().arm(0).unwrap();
            let mut p = small_params(8);
            p.m_trees = m;
            p.seed = seed;
            let forest = fit(&data, &p).unwrap();
            values.push(mse_conditional_mean(&forest, kind, 0, &points).unwrap().0);
        }
        by_m.push(mean_stderr(&values));
    }
    for w in by_m.windows(2) {
        assert!(w[1].0 <= w[0].0 + 2.0 * (w[0].1 + w[1].1), "{by_m:?}");
    }
}

/// Covariate extent of every split node's cell, replayed from the subsample.
fn split_extents(forest: &Forest, data: &Dataset) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for tree in forest.trees() {
        let mut cells = vec![Vec::new(); tree.nodes.len()];
        for &row in &tree.subsample {
            let mut id = 0;
            loop {
                cells[id].push(row);
                match &tree.nodes[id] {
                    Node::Split { dim, threshold, left, right } => {
                        id = if data.x_at(row, *dim) <= *threshold { *left } else { *right }
                    }
                    Node::Leaf { .. } => break,
                }
            }
        }
        for (id, node) in tree.nodes.iter().enumerate() {
            if let Node::Split { dim, threshold, .. } = node {
                let xs = cells[id].iter().map(|&r| data.x_at(r, *dim));
                let lo = xs.clone().fold(f64::INFINITY, f64::min);
                let hi = xs.fold(f64::NEG_INFINITY, f64::max);
                out.push((lo, *threshold, hi));
            }
        }
    }
    out
}

#[test]
fn ert_thresholds_stay_in_cell_extent() {
    let data = generate(&ScenarioSpec { kind: ScenarioKind::Main, n: 200, d: 8, seed: 4 }).unwrap().arm(0).unwrap();
    let p = small_params(3);
    let forest = fit_ert(&data, &p).unwrap();
    assert_eq!(forest, fit_ert(&data, &p).unwrap());
    let extents = split_extents(&forest, &data);
    assert!(!extents.is_empty());
    for (lo, thr, hi) in extents {
        assert!(lo <= thr && thr < hi, "{lo} {thr} {hi}");
    }
    for _ in 0..10 {
        let w = forest.weights(&[0.5; 8]).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mondrian_ignores_responses() {
    let data = generate(&ScenarioSpec { kind: ScenarioKind::Main, n: 200, d: 8, seed: 5 }).unwrap().arm(0).unwrap();
    let p = small_params(8);
    let forest = fit_mondrian(&data, &p).unwrap();
    let mut y = data.y_flat().to_vec();
    y.reverse();
    y.rotate_left(17);
    let permuted = fit_mondrian(&data.with_responses(y).unwrap(), &p).unwrap();
    assert_eq!(forest.trees(), permuted.trees());
    assert_eq!(forest, fit_mondrian(&data, &p).unwrap());
    for (lo, thr, hi) in split_extents(&forest, &data) {
        assert!(lo <= thr && thr < hi);
    }
}

#[test]
fn single_cell_report() {
    let report = run_benchmark(&small_config(ScenarioKind::Main, vec![Method::WrfIntra])).unwrap();
    assert_eq!(report.cells.len(), 1);
    let c = &report.cells[0];
    assert!(c.mean >= 0.0 && c.stderr >= 0.0 && c.runtime_s > 0.0);
    assert_eq!((c.n_test, c.m_ref, c.t, c.p), (30, 500, 0, 1.0));
    assert_eq!(report.noise.len(), 1);
    assert_eq!(report.to_csv().lines().count(), 2);
}

#[test]
fn identical_methods_and_runs_agree() {
    let config = small_config(ScenarioKind::Main, vec![Method::Ert, Method::Ert]);
    let a = run_benchmark(&config).unwrap();
    assert_eq!(a.cells[0].mean, a.cells[1].mean);
    let b = run_benchmark(&config).unwrap();
    let strip = |r: &BenchReport| r.cells.iter().map(|c| (c.method.clone(), c.mean, c.stderr)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.noise, b.noise);
}

#[test]
fn failures_are_recorded() {
    let mut config = small_config(ScenarioKind::MultivariateCost, vec![Method::WrfInter { p: 2.0 }, Method::WrfIntra]);
    config.arms = vec![1];
    config.orders = vec![1.0, 2.0];
    config.n_test = 5;
    let report = run_benchmark(&config).unwrap();
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.cells.len(), 2);
    assert!(report.cells.iter().all(|c| c.m_ref == 300));
    assert!(run_benchmark(&small_config(ScenarioKind::Main, vec![])).is_err());
}

#[test]
fn sweep_cardinality_and_degenerate_values() {
    let mut config = small_config(ScenarioKind::Main, vec![Method::WrfIntra, Method::Mondrian]);
    config.n_test = 10;
    let report = param_sweep(SweepAxis::Nodesize, &[2, 5, 10, 20, 40, 100], &config).unwrap();
    assert_eq!(report.sweeps.len(), 12);
    for row in &report.sweeps {
        assert!(row.metrics.iter().all(|m| m.mean.is_finite()) && row.mse.is_finite());
    }
    assert!(param_sweep(SweepAxis::Mtry, &[9], &config).is_err());
    assert!(param_sweep(SweepAxis::Mtry, &[], &config).is_err());
    assert_eq!(SweepAxis::parse("subsample_size"), Some(SweepAxis::SubsampleSize));
}
