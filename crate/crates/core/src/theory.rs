//! Randomized checks of the curvature and estimation-error bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::fair_embed_eigen;
use crate::error::Result;
use crate::fairness::FairnessSystem;
use crate::graph::{num_pairs, WeightVector};
use crate::learner::{pairwise_cost, solve_w, DualInit, GlSolverConfig};
use crate::metrics::{prop2_bound, regularizer_min_curvature};
use crate::synthetic::{sample_signals, vsbm_generate, NoiseSpec, VsbmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCheck {
    pub name: &'static str,
    pub instances: usize,
    pub failures: usize,
    /// Smallest slack seen; negative means a violation.
    pub worst_slack: f64,
}

impl TheoryCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Smallest Hessian eigenvalue of the regularizer against `4 beta` on random
/// positive points, `3 <= D <= 12`.
pub fn strong_convexity_suite(instances: usize, seed: u64) -> Result<TheoryCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let d = rng.random_range(3..=12);
        let beta = 10f64.powf(rng.random_range(-3.0..1.0));
        let alpha = 10f64.powf(rng.random_range(-1.0..1.0));
        let w: Vec<f64> = (0..num_pairs(d)).map(|_| rng.random_range(0.01..3.0)).collect();
        let slack = regularizer_min_curvature(&WeightVector::new(w, d)?, alpha, beta)? - (4.0 * beta - 1e-8);
        if slack < 0.0 {
            failures += 1;
        }
        worst = worst.min(slack);
    }
    Ok(TheoryCheck {
        name: "strong-convexity",
        instances,
        failures,
        worst_slack: worst,
    })
}

/// Solves the graph subproblem for a fair eigen embedding of a random vSBM
/// graph and compares `||L_hat - L*||_F` with the estimation bound.
/// Instances whose solve misses a `1e-9` KKT residual count as failures.
pub fn estimation_bound_suite(instances: usize, seed: u64) -> Result<TheoryCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for t in 0..instances {
        let params = VsbmParams {
            num_nodes: 4 * rng.random_range(3..=5),
            num_clusters: 2,
            ..Default::default()
        };
        let s = seed.wrapping_mul(1_000).wrapping_add(t as u64);
        let truth = vsbm_generate(&params, s)?;
        let n = rng.random_range(50..=200);
        let x = sample_signals(&truth.laplacian, n, &NoiseSpec::Uniform { lo: 0.0, hi: 0.2 }, s ^ 0xabc)?;
        let fs = FairnessSystem::new(&truth.group_labels, 2)?;
        let y = fair_embed_eigen(&truth.laplacian, &fs, 2)?;
        let mu = 10f64.powf(rng.random_range(-3.0..0.0));
        let beta = 10f64.powf(rng.random_range(-2.0..0.0));
        let p = pairwise_cost(&x, Some(&(fs.z() * &y)), 1.0, mu)?;
        let cfg = GlSolverConfig {
            alpha: 1.0,
            beta,
            max_iter: 200_000,
            rel_tol: 1e-9 / (1.0 + p.norm()),
            dual_init: DualInit::Ones,
            adaptive_restart: true,
        };
        let sol = solve_w(&p, &cfg)?;
        let report = prop2_bound(
            &sol.weights.to_laplacian(),
            &truth.laplacian,
            &x,
            &y,
            &fs,
            mu,
            1.0,
            beta,
        )?;
        let slack = report.bound - report.lhs;
        if sol.kkt_residual > 1e-9 || !report.holds {
            failures += 1;
        }
        worst = worst.min(slack);
    }
    Ok(TheoryCheck {
        name: "estimation-bound",
        instances,
        failures,
        worst_slack: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_a_few_instances() {
        assert!(strong_convexity_suite(10, 1).unwrap().passed());
        let p = estimation_bound_suite(3, 2).unwrap();
        assert!(p.passed(), "{p:?}");
    }
}
