//! Fair spectral embedding.
//!
//! Embeddings are parameterized as `U = Z Y` with `Y` on the Stiefel manifold,
//! so the fairness constraint holds by construction. Two routes are offered:
//! the plain eigenvector solution of `Z^T L Z`, and a feasible descent solver
//! for the coupled objective
//!
//! ```text
//! phi(Y) = mu Tr(Y^T A Y) - 2 gamma Tr(B^T Y),   A = Z^T L Z,  B = Z^T Q R^T
//! ```

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{FgcError, Result};
use crate::fairness::FairnessSystem;
use crate::graph::LaplacianMatrix;
use crate::linalg::{
    orthogonality_drift, orthonormalize, pin_column_signs, random_orthonormal, sym_eigen_sorted, trace_product,
};

/// Eigenvectors of `Z^T L Z` for the `k` smallest eigenvalues, with pinned signs.
pub fn fair_embed_eigen(l: &LaplacianMatrix, fs: &FairnessSystem, k: usize) -> Result<DMatrix<f64>> {
    check_k(fs, k)?;
    let a = fs.compress(l.matrix());
    let (_, vectors) = sym_eigen_sorted(&a)?;
    let mut y = vectors.columns(0, k).into_owned();
    pin_column_signs(&mut y);
    Ok(y)
}

pub(crate) fn check_k(fs: &FairnessSystem, k: usize) -> Result<()> {
    if k == 0 || k > fs.fair_dim() {
        return Err(FgcError::InvalidParameter(format!(
            "K = {k} must lie in 1..={} (D - S + 1)",
            fs.fair_dim()
        )));
    }
    Ok(())
}

/// A random point on the Stiefel manifold of the fair subspace.
pub fn random_embedding(fs: &FairnessSystem, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    check_k(fs, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(random_orthonormal(fs.fair_dim(), k, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiefelConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    pub initial_step: f64,
    /// Re-orthonormalize once `max |Y^T Y - I|` exceeds this.
    pub reorth_tol: f64,
}

impl Default for StiefelConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            grad_tol: 1e-7,
            armijo: 1e-4,
            backtrack: 0.2,
            initial_step: 1e-3,
            reorth_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiefelReport {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Largest `max |Y^T Y - I|` over accepted iterates.
    pub max_drift: f64,
    pub initial_objective: f64,
    pub objective: f64,
}

/// `phi(Y) = mu Tr(Y^T A Y) - 2 gamma Tr(B^T Y)`.
#[derive(Debug, Clone)]
pub struct StiefelProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub mu: f64,
    pub gamma: f64,
}

impl StiefelProblem {
    /// Builds the embedding subproblem from the graph and the current rotation state.
    pub fn new(
        l: &LaplacianMatrix,
        fs: &FairnessSystem,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        mu: f64,
        gamma: f64,
    ) -> Result<Self> {
        let k = r.nrows();
        if q.nrows() != fs.num_nodes() || q.ncols() != k || r.ncols() != k {
            return Err(FgcError::DimensionMismatch(format!(
                "Q is {}x{}, R is {}x{}, D = {}",
                q.nrows(),
                q.ncols(),
                r.nrows(),
                r.ncols(),
                fs.num_nodes()
            )));
        }
        Ok(Self {
            a: fs.compress(l.matrix()),
            b: fs.z().transpose() * q * r.transpose(),
            mu,
            gamma,
        })
    }

    pub fn objective(&self, y: &DMatrix<f64>) -> f64 {
        let ay = &self.a * y;
        self.mu * trace_product(y, &ay) - 2.0 * self.gamma * trace_product(&self.b, y)
    }

    /// Euclidean gradient `2 mu A Y - 2 gamma B`.
    pub fn gradient(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * y * (2.0 * self.mu) - &self.b * (2.0 * self.gamma)
    }

    fn scale(&self) -> f64 {
        1.0 + 2.0 * self.mu.abs() * self.a.norm() + 2.0 * self.gamma.abs() * self.b.norm()
    }
}

/// Cayley curve `Y(tau) = Y - tau U (I + tau/2 V^T U)^{-1} V^T Y` with
/// `U = [G, Y]`, `V = [Y, -G]`.
fn cayley_step(y: &DMatrix<f64>, g: &DMatrix<f64>, tau: f64) -> Option<DMatrix<f64>> {
    let (n, k) = y.shape();
    let mut u = DMatrix::zeros(n, 2 * k);
    u.columns_mut(0, k).copy_from(g);
    u.columns_mut(k, k).copy_from(y);
    let mut v = DMatrix::zeros(n, 2 * k);
    v.columns_mut(0, k).copy_from(y);
    v.columns_mut(k, k).copy_from(&(-g));
    let vt = v.transpose();
    let mut inner = &vt * &u * (tau / 2.0);
    for i in 0..2 * k {
        inner[(i, i)] += 1.0;
    }
    let rhs = &vt * y;
    let sol = inner.lu().solve(&rhs)?;
    Some(y - u * sol * tau)
}

/// Minimizes `phi` over `Y^T Y = I` from a feasible start.
///
/// Steps follow the Cayley curve with Barzilai-Borwein lengths and monotone
/// Armijo backtracking, so the returned objective never exceeds the start.
pub fn stiefel_minimize(
    problem: &StiefelProblem,
    y0: &DMatrix<f64>,
    cfg: &StiefelConfig,
) -> Result<(DMatrix<f64>, StiefelReport)> {
    if y0.nrows() != problem.a.nrows() || problem.b.shape() != y0.shape() {
        return Err(FgcError::DimensionMismatch(format!(
            "start is {}x{}, problem is {}x{}",
            y0.nrows(),
            y0.ncols(),
            problem.b.nrows(),
            problem.b.ncols()
        )));
    }
    let start_drift = orthogonality_drift(y0);
    if start_drift > 1e-8 {
        return Err(FgcError::InvalidParameter(format!(
            "warm start is not orthonormal (drift {start_drift:.3e})"
        )));
    }

    let tol = cfg.grad_tol * problem.scale();
    let mut y = y0.clone();
    let mut f = problem.objective(&y);
    let initial_objective = f;
    let mut g = problem.gradient(&y);
    let mut rgrad = &g - &y * (g.transpose() * &y);
    let mut grad_norm = rgrad.norm();
    let mut tau = cfg.initial_step;
    let mut max_drift = start_drift;
    let mut iterations = 0;

    while iterations < cfg.max_iter && grad_norm > tol {
        // derivative of phi(Y(tau)) at tau = 0
        let yg = y.transpose() * &g;
        let deriv = -(g.norm_squared() - trace_product(&yg, &yg.transpose()));
        let mut accepted = None;
        let mut step = tau;
        while step > 1e-20 {
            if let Some(candidate) = cayley_step(&y, &g, step) {
                let fc = problem.objective(&candidate);
                if fc <= f + cfg.armijo * step * deriv {
                    accepted = Some((candidate, fc));
                    break;
                }
            }
            step *= cfg.backtrack;
        }
        let Some((mut y_new, mut f_new)) = accepted else {
            break;
        };
        iterations += 1;

        let drift = orthogonality_drift(&y_new);
        max_drift = max_drift.max(drift);
        if drift > cfg.reorth_tol {
            let fixed = orthonormalize(&y_new);
            let f_fixed = problem.objective(&fixed);
            if f_fixed <= f {
                y_new = fixed;
                f_new = f_fixed;
            } else {
                break;
            }
        }

        let g_new = problem.gradient(&y_new);
        let rgrad_new = &g_new - &y_new * (g_new.transpose() * &y_new);
        let s = &y_new - &y;
        let dg = &rgrad_new - &rgrad;
        let sy = trace_product(&s, &dg).abs();
        tau = if sy > 0.0 {
            if iterations % 2 == 0 {
                s.norm_squared() / sy
            } else {
                sy / dg.norm_squared().max(f64::MIN_POSITIVE)
            }
        } else {
            cfg.initial_step
        };
        tau = tau.clamp(1e-20, 1e20);

        y = y_new;
        f = f_new;
        g = g_new;
        rgrad = rgrad_new;
        grad_norm = rgrad.norm();
    }

    let report = StiefelReport {
        iterations,
        grad_norm,
        converged: grad_norm <= tol,
        max_drift,
        initial_objective,
        objective: f,
    };
    Ok((y, report))
}
