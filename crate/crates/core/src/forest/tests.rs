use super::*;
use crate::measure::wasserstein_exact;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(seed: u64, n: usize, d: usize, dy: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..n * dy).map(|_| rng.random_range(-2.0..2.0)).collect();
    Dataset::from_flat(d, dy, x, y).unwrap()
}

fn params(m: usize, a_n: usize, mtry: usize) -> ForestParams {
    ForestParams {
        m_trees: m,
        subsample_size: a_n,
        with_replacement: true,
        mtry,
        nodesize: 2,
        criterion: Criterion::IntraL2,
        p: 2.0,
        seed: 1,
        splitter: Splitter::Greedy,
        standardize: false,
    }
}

/// Two single-split trees over ten rows: tree 1's right leaf holds rows 3
/// and 4, tree 2's right leaf holds rows 4 and 6.
fn toy_forest() -> Forest {
    let y: Vec<f64> = vec![9.0, 9.0, 9.0, 0.0, 2.0, 9.0, 4.0, 9.0, 9.0, 9.0];
    let tree = |right_rows: [usize; 2], left_rows: [usize; 3]| Tree {
        subsample: left_rows.iter().chain(&right_rows).cloned().collect(),
        nodes: vec![
            Node::Split { dim: 0, threshold: 0.0, left: 1, right: 2 },
            Node::Leaf { slots: vec![0, 1, 2] },
            Node::Leaf { slots: vec![3, 4] },
        ],
    };
    Forest::from_parts(
        params(2, 5, 1),
        1,
        1,
        vec![tree([3, 4], [0, 1, 2]), tree([4, 6], [7, 8, 9])],
        y,
        None,
    )
    .unwrap()
}

#[test]
fn toy_forest_weights() {
    let f = toy_forest();
    let w = f.weights(&[1.0]).unwrap();
    let mut expected = vec![0.0; 10];
    expected[3] = 0.25;
    expected[4] = 0.5;
    expected[6] = 0.25;
    assert_eq!(w.alpha, expected);

    let m = f.predict_measure(&[1.0]).unwrap();
    assert_eq!(m.flat_points(), &[0.0, 2.0, 4.0]);
    assert_eq!(m.weights(), &[0.25, 0.5, 0.25]);
    assert_eq!(f.predict_mean(&[1.0]).unwrap(), vec![2.0]);
}

#[test]
fn query_dimension_is_checked() {
    let f = toy_forest();
    assert!(matches!(f.weights(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 1, got: 2 })));
}

#[test]
fn single_leaf_gives_uniform_weights() {
    let data = random_data(3, 12, 3, 1);
    let mut p = params(1, 12, 2);
    p.with_replacement = false;
    p.nodesize = 12;
    let f = fit(&data, &p).unwrap();
    assert_eq!(f.trees()[0].nodes.len(), 1);
    let w = f.weights(&[0.3, 0.3, 0.3]).unwrap();
    for a in w.alpha {
        assert_relative_eq!(a, 1.0 / 12.0, epsilon = 1e-15);
    }
}

#[test]
fn single_point_leaf_is_a_dirac() {
    let data = Dataset::new(&[vec![0.0], vec![1.0], vec![2.0]], &[vec![5.0], vec![-1.0], vec![3.0]]).unwrap();
    let mut p = params(1, 3, 1);
    p.with_replacement = false;
    let f = fit(&data, &p).unwrap();
    let m = f.predict_measure(&[-3.0]).unwrap();
    assert_eq!(m.flat_points(), &[5.0]);
    assert_eq!(m.weights(), &[1.0]);
}

#[test]
fn midpoint_of_two_points() {
    let data = Dataset::new(&[vec![1.0], vec![3.0]], &[vec![0.0], vec![1.0]]).unwrap();
    let c = best_split(&[0, 1], &data, &[0], &params(1, 2, 1)).unwrap();
    assert_eq!((c.dim, c.threshold), (0, 2.0));
}

#[test]
fn no_split_on_constant_directions() {
    let data = Dataset::new(&[vec![1.0, 4.0], vec![1.0, 4.0], vec![1.0, 5.0]], &[vec![0.0], vec![1.0], vec![2.0]])
        .unwrap();
    assert!(best_split(&[0, 1], &data, &[0, 1], &params(1, 2, 2)).is_none());
    // direction 1 still separates rows 0 and 2
    assert!(best_split(&[0, 2], &data, &[0], &params(1, 2, 2)).is_none());
    assert!(best_split(&[0, 2], &data, &[1], &params(1, 2, 2)).is_some());
}

#[test]
fn best_split_matches_exhaustive_search() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [0.0, 0.0, 2.0, 2.0];
    let data = Dataset::new(&x.map(|v| vec![v]), &y.map(|v| vec![v])).unwrap();
    // Oracle: evaluate the variance-reduction gain of all three midpoints.
    let cell: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
    let oracle: Vec<(f64, f64)> = (1..4)
        .map(|k| {
            let thr = (x[k - 1] + x[k]) / 2.0;
            (thr, intra_gain(&cell, &cell[..k], &cell[k..]).unwrap())
        })
        .collect();
    let (thr, gain) = oracle.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    assert_eq!((thr, gain), (2.5, 1.0));

    let c = best_split(&[0, 1, 2, 3], &data, &[0], &params(1, 4, 1)).unwrap();
    assert_eq!(c.threshold, 2.5);
    assert_relative_eq!(c.gain, 1.0, epsilon = 1e-15);
}

#[test]
fn tie_break_prefers_lowest_direction() {
    // Both directions order the points identically.
    let data = Dataset::new(
        &[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]],
        &[vec![0.0], vec![0.0], vec![3.0]],
    )
    .unwrap();
    let c = best_split(&[0, 1, 2], &data, &[1, 0], &params(1, 3, 2)).unwrap();
    assert_eq!((c.dim, c.threshold), (0, 1.5));
}

#[test]
fn nodesize_equal_to_subsample_gives_one_leaf() {
    let data = random_data(4, 30, 4, 1);
    let mut p = params(3, 20, 4);
    p.nodesize = 20;
    let f = fit(&data, &p).unwrap();
    for t in f.trees() {
        assert_eq!(t.nodes.len(), 1);
        assert!(matches!(&t.nodes[0], Node::Leaf { slots } if slots.len() == 20));
    }
}

#[test]
fn identical_covariates_give_one_leaf() {
    let x = vec![vec![0.5, 0.25]; 15];
    let y: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64]).collect();
    let data = Dataset::new(&x, &y).unwrap();
    for splitter in [Splitter::Greedy, Splitter::ExtraRandom, Splitter::Mondrian] {
        let mut p = params(4, 15, 2);
        p.splitter = splitter;
        let f = fit(&data, &p).unwrap();
        assert!(f.trees().iter().all(|t| t.nodes.len() == 1));
    }
}

#[test]
fn fit_is_deterministic_and_seed_sensitive() {
    let data = random_data(5, 40, 5, 1);
    let p = params(6, 40, 3);
    let a = fit(&data, &p).unwrap();
    let b = fit(&data, &p).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let c = fit(&data, &p.clone().with_seed(2)).unwrap();
    assert_ne!(a.trees(), c.trees());
    let one = fit(&data, &params(1, 40, 3)).unwrap();
    assert_eq!(one.trees().len(), 1);
}

#[test]
fn thread_count_does_not_change_the_forest() {
    let data = random_data(6, 60, 6, 1);
    let p = params(16, 60, 3).with_criterion(Criterion::InterWp, 1.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| fit(&data, &p).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn invalid_params_are_rejected() {
    let data = random_data(7, 10, 3, 1);
    let mut p = params(1, 11, 3);
    p.with_replacement = false;
    assert!(matches!(fit(&data, &p), Err(Error::InvalidParams(_))));
    assert!(matches!(fit(&data, &params(1, 10, 4)), Err(Error::InvalidParams(_))));
    let mut p = params(1, 10, 3);
    p.nodesize = 11;
    assert!(matches!(fit(&data, &p), Err(Error::InvalidParams(_))));
    let multi = random_data(7, 10, 3, 2);
    let p = params(1, 10, 3).with_criterion(Criterion::InterWp, 2.0);
    assert!(matches!(fit(&multi, &p), Err(Error::UnsupportedOutputDim(_))));
}

#[test]
fn multivariate_predictions() {
    let data = random_data(8, 50, 3, 2);
    let f = fit(&data, &params(10, 50, 3)).unwrap();
    let m = f.predict_measure(&[0.2, 0.5, 0.9]).unwrap();
    assert_eq!(m.dim(), 2);
    assert_relative_eq!(m.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    let mean = f.predict_mean(&[0.2, 0.5, 0.9]).unwrap();
    for (a, b) in mean.iter().zip(m.mean()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn standardization_is_recorded() {
    let mut data = random_data(9, 40, 3, 2);
    let scaled: Vec<f64> = data.y_flat().chunks(2).flat_map(|r| [r[0], 100.0 * r[1]]).collect();
    data = data.with_responses(scaled).unwrap();
    let mut p = params(4, 40, 3);
    p.standardize = true;
    let f = fit(&data, &p).unwrap();
    let s = f.normalization().unwrap();
    assert!(s[1] > 50.0 * s[0]);
    let back = Forest::from_json(&f.to_json().unwrap()).unwrap();
    assert_eq!(back.normalization(), f.normalization());
}

#[test]
fn constant_responses_predict_the_constant() {
    let data = random_data(10, 30, 3, 1).with_responses(vec![1.75; 30]).unwrap();
    let f = fit(&data, &params(5, 30, 3)).unwrap();
    assert_relative_eq!(f.predict_mean(&[0.1, 0.6, 0.3]).unwrap()[0], 1.75, epsilon = 1e-14);
}

#[test]
fn model_round_trip_is_exact() {
    let data = random_data(11, 40, 4, 1);
    let f = fit(&data, &params(5, 40, 2)).unwrap();
    let text = f.to_json().unwrap();
    let back = Forest::from_json(&text).unwrap();
    assert_eq!(back, f);
    assert_eq!(back.to_json().unwrap(), text);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..20 {
        let x: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        assert_eq!(back.weights(&x).unwrap(), f.weights(&x).unwrap());
    }
}

#[test]
fn corrupt_models_are_rejected() {
    let f = toy_forest();
    let mut file = f.to_file();
    file.trees[0].subsample[0] = 99;
    assert!(Forest::from_file(file).is_err());
    let mut file = f.to_file();
    file.trees[0].nodes[0] = NodeFile::Split { dim: 0, thr: 0.0, l: 1, r: 1 };
    assert!(Forest::from_file(file).is_err());
    let mut file = f.to_file();
    file.version = 2;
    assert!(Forest::from_file(file).is_err());
}

/// Slots reaching each node, by replaying the routing of the subsample.
fn node_cells(tree: &Tree, data: &Dataset) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); tree.nodes.len()];
    for (slot, &row) in tree.subsample.iter().enumerate() {
        let x = data.x_row(row);
        let mut id = 0;
        loop {
            cells[id].push(slot);
            match &tree.nodes[id] {
                Node::Split { dim, threshold, left, right } => {
                    id = if x[*dim] <= *threshold { *left } else { *right };
                }
                Node::Leaf { .. } => break,
            }
        }
    }
    cells
}

fn check_tree_invariants(tree: &Tree, data: &Dataset, nodesize: usize) {
    let cells = node_cells(tree, data);
    for (id, node) in tree.nodes.iter().enumerate() {
        match node {
            Node::Split { left, right, .. } => {
                assert!(cells[id].len() >= nodesize);
                assert!(!cells[*left].is_empty() && !cells[*right].is_empty());
            }
            Node::Leaf { slots } => {
                assert!(!slots.is_empty());
                let mut a = slots.clone();
                a.sort_unstable();
                assert_eq!(a, cells[id], "leaf slots must be exactly the routed subsample");
            }
        }
    }
}

#[test]
fn greedy_splits_are_optimal() {
    let d = 3;
    for (seed, criterion, p) in [(1, Criterion::IntraL2, 2.0), (2, Criterion::InterWp, 1.0), (3, Criterion::InterWp, 2.0)] {
        let data = random_data(seed, 40, d, 1);
        let params = params(3, 40, d).with_criterion(criterion, p);
        let f = fit(&data, &params).unwrap();
        let gain_of = |cell: &[usize], dim: usize, thr: f64| {
            let rows: Vec<Vec<f64>> = cell.iter().map(|&r| data.y_row(r).to_vec()).collect();
            let (l, r): (Vec<_>, Vec<_>) = cell.iter().partition(|&&r| data.x_at(r, dim) <= thr);
            let ly: Vec<Vec<f64>> = l.iter().map(|&r| data.y_row(r).to_vec()).collect();
            let ry: Vec<Vec<f64>> = r.iter().map(|&r| data.y_row(r).to_vec()).collect();
            match criterion {
                Criterion::IntraL2 => intra_gain(&rows, &ly, &ry).unwrap(),
                Criterion::InterWp => inter_gain(&rows, &ly, &ry, p).unwrap(),
            }
        };
        for tree in f.trees() {
            let cells = node_cells(tree, &data);
            for (id, node) in tree.nodes.iter().enumerate() {
                let Node::Split { dim, threshold, .. } = node else { continue };
                let rows: Vec<usize> = cells[id].iter().map(|&s| tree.subsample[s]).collect();
                let recorded = gain_of(&rows, *dim, *threshold);
                for k in 0..d {
                    let mut xs: Vec<f64> = rows.iter().map(|&r| data.x_at(r, k)).collect();
                    xs.sort_by(f64::total_cmp);
                    xs.dedup();
                    for w in xs.windows(2) {
                        let g = gain_of(&rows, k, (w[0] + w[1]) / 2.0);
                        assert!(g <= recorded + 1e-12 * recorded.abs().max(1.0), "{g} > {recorded}");
                    }
                }
            }
        }
    }
}

#[test]
fn eq8_form_matches_variance_reduction() {
    // Half the mean squared W_2 distance from each Dirac to its cell measure.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let n = rng.random_range(2..12);
        let cell: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-3.0..3.0), rng.random()]).collect();
        let k = rng.random_range(1..n);
        let term = |set: &[Vec<f64>]| -> f64 {
            let m = crate::measure::DiscreteMeasure::new(set, None).unwrap();
            set.iter()
                .map(|y| {
                    let dirac = crate::measure::DiscreteMeasure::dirac(y).unwrap();
                    wasserstein_exact(&dirac, &m, 2.0).unwrap().0.powi(2)
                })
                .sum::<f64>()
                / (2.0 * n as f64)
        };
        let eq8 = term(&cell) - term(&cell[..k]) - term(&cell[k..]);
        let direct = intra_gain(&cell, &cell[..k], &cell[k..]).unwrap();
        assert!((eq8 - direct).abs() <= 1e-10 * direct.abs().max(1e-300) + 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trees_partition_space(seed in 0u64..1000, replace in any::<bool>(), splitter in 0usize..3, nodesize in 2usize..6) {
        let data = random_data(seed, 30, 3, 1);
        let mut p = params(3, 25, 2);
        p.with_replacement = replace;
        p.nodesize = nodesize;
        p.seed = seed;
        p.splitter = [Splitter::Greedy, Splitter::ExtraRandom, Splitter::Mondrian][splitter];
        let f = fit(&data, &p).unwrap();
        for tree in f.trees() {
            check_tree_invariants(tree, &data, nodesize);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..1.5)).collect();
            let w = f.weights(&x).unwrap();
            prop_assert!((w.sum() - 1.0).abs() < 1e-9);
            for (i, &a) in w.alpha.iter().enumerate() {
                prop_assert!(a >= 0.0);
                if a > 0.0 {
                    prop_assert!(f.trees().iter().any(|t| t.contains_row(i)));
                }
            }
        }
    }
}
