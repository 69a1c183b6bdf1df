use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fgc::baselines::{fjgsed_fit, fsrsc_fit, FjgsedConfig, FsrscConfig};
use fgc::discretize::{discretize_q, procrustes_rotation, rotation_residual};
use fgc::experiment::{run_experiment, ExperimentSpec, Method};
use fgc::fairness::FairnessSystem;
use fgc::graph::{num_pairs, WeightVector};
use fgc::learner::{kkt_residual, solve_w, GlSolverConfig, PairwiseCost};
use fgc::metrics::{balance, clustering_error, ratiocut, ratiocut_trace};
use fgc::pipeline::{unified_fit, FitConfig};
use fgc::synthetic::{sample_signals, vsbm_generate, NoiseSpec, VsbmParams};

mod common;

fn orthonormal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
        .qr()
        .q()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn small_instance(d: usize, k: usize, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, DMatrix<f64>, FairnessSystem) {
    let params = VsbmParams {
        num_nodes: d,
        num_clusters: k,
        num_groups: 2,
        ..Default::default()
    };
    let truth = vsbm_generate(&params, seed).unwrap();
    let x = sample_signals(&truth.laplacian, n, &NoiseSpec::Uniform { lo: 0.0, hi: 0.2 }, seed + 1).unwrap();
    let fs = FairnessSystem::new(&truth.group_labels, 2).unwrap();
    (truth.cluster_labels, truth.group_labels, x, fs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn graph_solution_keeps_degrees_positive_and_meets_kkt(
        d in 3usize..10,
        seed in 0u64..10_000,
        beta in 0.01f64..1.0,
        alpha in 0.2f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..num_pairs(d)).map(|_| rng.random_range(0.0..5.0)).collect();
        let cost = PairwiseCost::new(p, d).unwrap();
        let cfg = GlSolverConfig { alpha, beta, max_iter: 100_000, ..Default::default() };
        let sol = solve_w(&cost, &cfg).unwrap();
        prop_assert!(sol.weights.degrees().iter().all(|&v| v > 0.0));
        let kkt = kkt_residual(&cost, sol.weights.values(), alpha, beta);
        prop_assert!(kkt <= cfg.rel_tol * (1.0 + cost.norm()), "kkt {kkt}");
    }

    #[test]
    fn procrustes_is_orthogonal_and_labels_are_one_hot(d in 6usize..30, k in 2usize..6, seed in 0u64..10_000) {
        let u = orthonormal(d, k, seed);
        let labels: Vec<usize> = (0..d).map(|i| (i * 7 + seed as usize) % k).collect();
        let r = procrustes_rotation(&fgc::discretize::indicator(&labels, k), &u).unwrap();
        prop_assert!((r.transpose() * &r - DMatrix::identity(k, k)).amax() <= 1e-10);
        let next = discretize_q(&u, &r).unwrap();
        prop_assert!(next.iter().all(|&c| c < k));
        // One rotation step followed by one label step never increases the residual.
        prop_assert!(rotation_residual(&next, &u, &r) <= rotation_residual(&labels, &u, &r) + 1e-12);
    }

    #[test]
    fn clustering_error_is_the_best_relabeling(
        k in 1usize..=5,
        pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..40),
    ) {
        let est: Vec<usize> = pairs.iter().map(|p| p.0 % k).collect();
        let truth: Vec<usize> = pairs.iter().map(|p| p.1 % k).collect();
        let best = permutations(k)
            .iter()
            .map(|perm| est.iter().zip(&truth).filter(|(e, t)| perm[**e] != **t).count())
            .min()
            .unwrap();
        let ce = clustering_error(&est, &truth, k).unwrap();
        prop_assert_eq!(ce.misclassified, best);
        prop_assert!((ce.ce - best as f64 / est.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn balance_is_one_exactly_for_equal_group_counts(
        k in 1usize..4,
        s in 2usize..4,
        labels in proptest::collection::vec((0usize..3, 0usize..3), 2..40),
    ) {
        let clusters: Vec<usize> = labels.iter().map(|l| l.0 % k).collect();
        let groups: Vec<usize> = labels.iter().map(|l| l.1 % s).collect();
        let (b, per) = balance(&clusters, &groups, k, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(per.iter().all(|v| (0.0..=1.0).contains(v)));
        let equal = (0..k).all(|c| {
            let counts: Vec<usize> = (0..s)
                .map(|g| clusters.iter().zip(&groups).filter(|(cc, gg)| **cc == c && **gg == g).count())
                .collect();
            counts.iter().all(|&n| n == counts[0] && n > 0)
        });
        prop_assert_eq!(b == 1.0, equal);
    }

    #[test]
    fn ratiocut_equals_its_trace_form(d in 4usize..20, k in 1usize..4, seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = WeightVector::new((0..num_pairs(d)).map(|_| rng.random_range(0.0..2.0)).collect(), d).unwrap();
        let labels: Vec<usize> = (0..d).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        let direct = ratiocut(&labels, &w.to_adjacency(), k).unwrap();
        let trace = ratiocut_trace(&labels, &w.to_laplacian(), k);
        prop_assert!((direct - trace).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn generated_graphs_are_trace_normalized_laplacians(blocks in 1usize..6, k in 1usize..4, seed in 0u64..10_000) {
        let d = blocks * k * 2;
        let params = VsbmParams { num_nodes: d.max(4), num_clusters: k, num_groups: 2, ..Default::default() };
        prop_assume!(params.validate().is_ok());
        let Ok(truth) = vsbm_generate(&params, seed) else { return Ok(()) };
        let l = truth.laplacian.matrix();
        prop_assert!((l.trace() - d.max(4) as f64).abs() <= 1e-10);
        prop_assert!(l.row_iter().all(|r| r.sum().abs() <= 1e-10));
        prop_assert!((l - l.transpose()).amax() == 0.0);
        prop_assert!(l.clone().symmetric_eigenvalues().min() >= -1e-8);
    }
}

#[test]
fn larger_cost_never_raises_its_edge() {
    // D = 3 grid; the solver is checked against the reference optimum first.
    let (d, alpha, beta) = (3, 1.0, 0.5);
    let grid = [0.0, 0.5, 1.0, 2.0];
    let cfg = GlSolverConfig {
        alpha,
        beta,
        max_iter: 100_000,
        rel_tol: 1e-12,
        ..Default::default()
    };
    let solve = |p: &[f64]| {
        solve_w(&PairwiseCost::new(p.to_vec(), d).unwrap(), &cfg)
            .unwrap()
            .weights
            .into_values()
    };
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let p = [a, b, c];
                let w = solve(&p);
                let oracle = common::projected_gradient(&p, d, alpha, beta, 100_000);
                for k in 0..3 {
                    assert!((w[k] - oracle[k]).abs() < 1e-6, "p {p:?}: {w:?} vs {oracle:?}");
                    let mut bumped = p;
                    bumped[k] += 0.25;
                    assert!(solve(&bumped)[k] <= w[k] + 1e-9, "p {p:?}, edge {k}");
                }
            }
        }
    }
}

#[test]
fn unified_fit_iterates_stay_valid() {
    let (_, _, x, fs) = small_instance(24, 2, 300, 5);
    let fit = unified_fit(
        &x,
        &fs,
        2,
        &FitConfig {
            outer_max_iter: 20,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(fit.objective_history.iter().all(|j| j.is_finite()));
    let k = fit.y.ncols();
    assert!((fit.y.transpose() * &fit.y - DMatrix::identity(k, k)).amax() <= 1e-8);
    assert!(fit.labels.iter().all(|&c| c < 2));
    assert!(fit.weights.degrees().iter().all(|&v| v > 0.0));
}

#[test]
fn fjgsed_rows_are_sparse_and_stochastic() {
    let (_, _, x, fs) = small_instance(32, 2, 400, 9);
    let cfg = FjgsedConfig {
        neighbors: 5,
        ..Default::default()
    };
    let fit = fjgsed_fit(&x, &fs, 2, &cfg).unwrap();
    assert!(fit.max_row_nonzeros.iter().all(|&n| n <= 5));
    assert!(fit.row_sum_deviation.iter().all(|&v| v <= 1e-10));
    assert!(fit.fit.objective_history.iter().all(|j| j.is_finite()));
}

#[test]
fn fsrsc_primal_residual_settles() {
    let (_, _, x, fs) = small_instance(32, 2, 400, 10);
    let fit = fsrsc_fit(&x, &fs, 2, &FsrscConfig::default()).unwrap();
    let tail = &fit.steps[fit.steps.len() - 10..];
    for pair in tail.windows(2) {
        assert!(pair[1].primal_residual <= pair[0].primal_residual + 1e-12, "{pair:?}");
    }
}

#[test]
fn trial_results_do_not_depend_on_the_job_count() {
    let params = VsbmParams {
        num_nodes: 16,
        num_clusters: 2,
        num_groups: 2,
        ..Default::default()
    };
    let spec = ExperimentSpec::new(
        params,
        200,
        NoiseSpec::Uniform { lo: 0.0, hi: 0.2 },
        vec![Method::Sep, Method::Corr],
        3,
    );
    let one = run_experiment(&spec, 1).unwrap();
    let three = run_experiment(&spec, 3).unwrap();
    let key = |rows: &[fgc::experiment::TrialRow]| {
        rows.iter()
            .map(|r| (r.method, r.trial, r.report.clone(), r.status.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(key(&one), key(&three));
}
