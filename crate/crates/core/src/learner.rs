//! Graph learning from smooth signals.
//!
//! Minimizes, over packed edge weights `w >= 0`,
//!
//! ```text
//! p^T w - alpha * 1^T log(S w) + 2 beta ||w||^2
//! ```
//!
//! with an accelerated proximal-gradient method on the dual. The dual
//! variable lives on nodes; its smooth part has Lipschitz constant
//! `||S||^2 / (4 beta) = (D - 1) / (2 beta)` and the log barrier has a
//! closed-form proximal step, which keeps every recovered degree positive.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FgcError, Result};
use crate::graph::{degree_adjoint, degree_apply, num_pairs, pairs, SignalMatrix, WeightVector};

/// Packed pairwise costs `p_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCost {
    values: Vec<f64>,
    num_nodes: usize,
}

impl PairwiseCost {
    pub fn new(values: Vec<f64>, num_nodes: usize) -> Result<Self> {
        if values.len() != num_pairs(num_nodes) {
            return Err(FgcError::InvalidShape(format!(
                "{} costs for {num_nodes} nodes",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FgcError::InvalidParameter(
                "pairwise costs must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { values, num_nodes })
    }

    pub fn zeros(num_nodes: usize) -> Self {
        Self {
            values: vec![0.0; num_pairs(num_nodes)],
            num_nodes,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Squared Euclidean distances between rows, packed.
pub fn row_distances(m: &DMatrix<f64>) -> Vec<f64> {
    let t = m.transpose();
    pairs(m.nrows())
        .map(|(i, j)| {
            t.column(i)
                .iter()
                .zip(t.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect()
}

/// `p_ij = (xi / N) ||X_i - X_j||^2 + mu ||U_i - U_j||^2`; the second term is
/// dropped when `u` is `None`.
pub fn pairwise_cost(x: &SignalMatrix, u: Option<&DMatrix<f64>>, xi: f64, mu: f64) -> Result<PairwiseCost> {
    let d = x.nrows();
    if x.ncols() == 0 {
        return Err(FgcError::DimensionMismatch("no signal samples".into()));
    }
    let n = x.ncols() as f64;
    let mut values: Vec<f64> = row_distances(x).into_iter().map(|v| xi / n * v).collect();
    if let Some(u) = u {
        if u.nrows() != d {
            return Err(FgcError::DimensionMismatch(format!(
                "embedding has {} rows, signals have {d}",
                u.nrows()
            )));
        }
        for (v, du) in values.iter_mut().zip(row_distances(u)) {
            *v += mu * du;
        }
    }
    PairwiseCost::new(values, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualInit {
    Ones,
    /// Entries drawn from `U(0.5, 1.5)`.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlSolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub dual_init: DualInit,
    /// Reset the momentum whenever it points uphill.
    pub adaptive_restart: bool,
}

impl Default for GlSolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.01,
            max_iter: 5000,
            rel_tol: 1e-8,
            dual_init: DualInit::Ones,
            adaptive_restart: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlSolution {
    pub weights: WeightVector,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
}

/// `p^T w - alpha 1^T log(Sw) + 2 beta ||w||^2`, or `+inf` outside the barrier domain.
pub fn gl_objective(p: &PairwiseCost, w: &[f64], alpha: f64, beta: f64) -> f64 {
    let deg = degree_apply(w, p.num_nodes);
    if deg.iter().any(|&v| !(v > 0.0)) {
        return f64::INFINITY;
    }
    let lin: f64 = p.values.iter().zip(w).map(|(a, b)| a * b).sum();
    let log: f64 = deg.iter().map(|v| v.ln()).sum();
    let sq: f64 = w.iter().map(|v| v * v).sum();
    lin - alpha * log + 2.0 * beta * sq
}

/// Norm of the projected gradient: the optimality residual on `w >= 0`.
pub fn kkt_residual(p: &PairwiseCost, w: &[f64], alpha: f64, beta: f64) -> f64 {
    let deg = degree_apply(w, p.num_nodes);
    if deg.iter().any(|&v| !(v > 0.0)) {
        return f64::INFINITY;
    }
    let inv: Vec<f64> = deg.iter().map(|v| 1.0 / v).collect();
    let st = degree_adjoint(&inv);
    p.values
        .iter()
        .zip(st)
        .zip(w)
        .map(|((pk, sk), &wk)| {
            let g = pk - alpha * sk + 4.0 * beta * wk;
            let g = if wk > 0.0 { g } else { g.min(0.0) };
            g * g
        })
        .sum::<f64>()
        .sqrt()
}

fn primal_from_dual(p_scaled: &[f64], omega: &[f64], beta: f64) -> Vec<f64> {
    degree_adjoint(omega)
        .into_iter()
        .zip(p_scaled)
        .map(|(s, p)| ((s - p) / (4.0 * beta)).max(0.0))
        .collect()
}

/// Solves the weight subproblem to `rel_tol`.
///
/// For `alpha != 1` the problem is solved as
/// `alpha * min (p/alpha)^T w - 1^T log(Sw) + 2 (beta/alpha) ||w||^2`,
/// which has the same minimizer.
pub fn solve_w(p: &PairwiseCost, cfg: &GlSolverConfig) -> Result<GlSolution> {
    let d = p.num_nodes;
    if d < 2 {
        return Err(FgcError::InvalidShape("need at least two nodes".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.beta > 0.0) {
        return Err(FgcError::InvalidParameter(format!(
            "alpha = {} and beta = {} must be positive",
            cfg.alpha, cfg.beta
        )));
    }
    let beta = cfg.beta / cfg.alpha;
    let p_scaled: Vec<f64> = p.values.iter().map(|v| v / cfg.alpha).collect();
    let lip = (d as f64 - 1.0) / (2.0 * beta);
    let tol = cfg.rel_tol * (1.0 + p.norm());

    let mut omega: Vec<f64> = match cfg.dual_init {
        DualInit::Ones => vec![1.0; d],
        DualInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..d).map(|_| 0.5 + rng.random::<f64>()).collect()
        }
    };
    let mut r_prev = omega.clone();
    let mut eta = 1.0f64;
    let mut w_prev = primal_from_dual(&p_scaled, &r_prev, beta);
    let mut kkt = f64::INFINITY;

    for t in 1..=cfg.max_iter {
        let w_bar = primal_from_dual(&p_scaled, &omega, beta);
        let sw = degree_apply(&w_bar, d);
        let r: Vec<f64> = sw
            .iter()
            .zip(&omega)
            .map(|(&s, &om)| {
                let z = s - lip * om;
                let v = (z + (z * z + 4.0 * lip).sqrt()) / 2.0;
                om - (s - v) / lip
            })
            .collect();

        let eta_next = (1.0 + (1.0 + 4.0 * eta * eta).sqrt()) / 2.0;
        let restart = cfg.adaptive_restart
            && omega
                .iter()
                .zip(&r)
                .zip(&r_prev)
                .map(|((om, rn), rp)| (om - rn) * (rn - rp))
                .sum::<f64>()
                > 0.0;
        let momentum = if restart { 0.0 } else { (eta - 1.0) / eta_next };
        omega = r
            .iter()
            .zip(&r_prev)
            .map(|(rn, rp)| rn + momentum * (rn - rp))
            .collect();
        eta = if restart { 1.0 } else { eta_next };

        let w = primal_from_dual(&p_scaled, &r, beta);
        r_prev = r;

        let change = w
            .iter()
            .zip(&w_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        w_prev = w;
        if change <= cfg.rel_tol * scale {
            kkt = kkt_residual(p, &w_prev, cfg.alpha, cfg.beta);
            if kkt <= tol {
                let objective = gl_objective(p, &w_prev, cfg.alpha, cfg.beta);
                return Ok(GlSolution {
                    weights: WeightVector::new(w_prev, d)?,
                    iterations: t,
                    kkt_residual: kkt,
                    objective,
                });
            }
        }
    }
    if !kkt.is_finite() {
        kkt = kkt_residual(p, &w_prev, cfg.alpha, cfg.beta);
    }
    Err(FgcError::NonConvergence {
        solver: "graph learning",
        iterations: cfg.max_iter,
        residual: kkt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_cost_examples() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let p = pairwise_cost(&x, None, 1.0, 5.0).unwrap();
        assert_eq!(p.values(), &[1.0]);

        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
        let u = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let p = pairwise_cost(&x, Some(&u), 2.0, 0.5).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert_eq!(p.values()[1], 2.0 / 2.0 * 5.0 + 0.5);
    }

    #[test]
    fn pairwise_cost_matches_double_loop() {
        let x = DMatrix::from_fn(6, 4, |i, k| ((i * 5 + k * 3) % 7) as f64 * 0.37 - 1.0);
        let u = DMatrix::from_fn(6, 2, |i, k| ((i + 2 * k) % 3) as f64 * 0.5);
        let (xi, mu) = (0.3, 1.7);
        let p = pairwise_cost(&x, Some(&u), xi, mu).unwrap();
        for (k, (i, j)) in pairs(6).enumerate() {
            let mut dx = 0.0;
            for c in 0..4 {
                dx += (x[(i, c)] - x[(j, c)]).powi(2);
            }
            let mut du = 0.0;
            for c in 0..2 {
                du += (u[(i, c)] - u[(j, c)]).powi(2);
            }
            let expected = xi / 4.0 * dx + mu * du;
            assert!((p.values()[k] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn two_node_closed_forms() {
        let cfg = GlSolverConfig {
            beta: 0.5,
            ..Default::default()
        };
        let w = solve_w(&PairwiseCost::zeros(2), &cfg).unwrap();
        assert!((w.weights.values()[0] - 1.0).abs() < 1e-6);

        let p = PairwiseCost::new(vec![2.0], 2).unwrap();
        let w = solve_w(&p, &cfg).unwrap();
        assert!((w.weights.values()[0] - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn alpha_rescaling() {
        // 4 beta w^2 + p w - 2 alpha = 0
        let (alpha, beta, p) = (2.5, 0.3, 1.2);
        let cfg = GlSolverConfig {
            alpha,
            beta,
            ..Default::default()
        };
        let w = solve_w(&PairwiseCost::new(vec![p], 2).unwrap(), &cfg).unwrap();
        let expected = (-p + (p * p + 32.0 * beta * alpha).sqrt()) / (8.0 * beta);
        assert!((w.weights.values()[0] - expected).abs() < 1e-6);
    }

    #[test]
    fn zero_cost_gives_uniform_graph() {
        let d = 7;
        let beta = 0.05;
        let cfg = GlSolverConfig {
            beta,
            ..Default::default()
        };
        let sol = solve_w(&PairwiseCost::zeros(d), &cfg).unwrap();
        let c = (1.0 / (2.0 * beta * (d as f64 - 1.0))).sqrt();
        for v in sol.weights.values() {
            assert!((v - c).abs() < 1e-6 * c);
        }
    }

    #[test]
    fn random_dual_init_reaches_the_same_point() {
        let p = PairwiseCost::new((0..10).map(|k| (k % 4) as f64 * 0.3).collect(), 5).unwrap();
        let a = solve_w(&p, &GlSolverConfig::default()).unwrap();
        let b = solve_w(
            &p,
            &GlSolverConfig {
                dual_init: DualInit::Random(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = PairwiseCost::new((0..45).map(|k| (k % 7) as f64).collect(), 10).unwrap();
        let cfg = GlSolverConfig {
            max_iter: 2,
            ..Default::default()
        };
        assert!(matches!(
            solve_w(&p, &cfg),
            Err(FgcError::NonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn degrees_stay_positive_with_large_costs() {
        let p = PairwiseCost::new((0..28).map(|k| 10.0 + k as f64).collect(), 8).unwrap();
        let sol = solve_w(&p, &GlSolverConfig::default()).unwrap();
        assert!(sol.weights.degrees().iter().all(|&v| v > 0.0));
        assert!(sol.kkt_residual <= 1e-8 * (1.0 + p.norm()));
    }
}
