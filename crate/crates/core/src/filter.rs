//! Node-adaptive low-pass graph filter.
//!
//! For node weights `v` the denoised signals solve
//! `(diag(v) + xi L) X = diag(v) X_o`, one linear system per column. Columns
//! are advanced together with Jacobi-preconditioned conjugate gradients; every
//! column keeps its own scalars so the result for one column never depends on
//! the others.

use nalgebra::{DMatrix, DVector};

use crate::error::{FgcError, Result};
use crate::graph::{LaplacianMatrix, SignalMatrix};

pub const UPSILON_MAX: f64 = 1e6;
pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Per-node fidelity weights, all positive and at most [`UPSILON_MAX`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeights(Vec<f64>);

impl NodeWeights {
    pub fn ones(num_nodes: usize) -> Self {
        Self(vec![1.0; num_nodes])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(FgcError::InvalidParameter(
                "node weights must be positive and finite".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Largest column residual `||A x - b|| / ||b||` at exit.
    pub max_relative_residual: f64,
}

/// Default CG iteration cap, `10 D`.
pub fn default_max_iter(num_nodes: usize) -> usize {
    10 * num_nodes.max(1)
}

/// Solves the filter equations starting from `X_o`.
pub fn denoise(
    xo: &SignalMatrix,
    l: &LaplacianMatrix,
    upsilon: &NodeWeights,
    xi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SignalMatrix> {
    denoise_from(xo, l, upsilon, xi, xo, tol, max_iter).map(|(x, _)| x)
}

/// Solves the filter equations with `x0` as the starting point.
pub fn denoise_from(
    xo: &SignalMatrix,
    l: &LaplacianMatrix,
    upsilon: &NodeWeights,
    xi: f64,
    x0: &SignalMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(SignalMatrix, CgReport)> {
    let d = xo.nrows();
    if l.num_nodes() != d || upsilon.len() != d || x0.shape() != xo.shape() {
        return Err(FgcError::DimensionMismatch(format!(
            "signals {}x{}, graph {} nodes, {} node weights, start {}x{}",
            d,
            xo.ncols(),
            l.num_nodes(),
            upsilon.len(),
            x0.nrows(),
            x0.ncols()
        )));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(FgcError::InvalidParameter(format!("xi = {xi} must be >= 0")));
    }
    let exact = CgReport {
        iterations: 0,
        max_relative_residual: 0.0,
    };
    if xi == 0.0 || l.matrix().iter().all(|&v| v == 0.0) {
        return Ok((xo.clone(), exact));
    }

    let ups = DVector::from_column_slice(upsilon.values());
    let mut a = l.matrix() * xi;
    for i in 0..d {
        a[(i, i)] += ups[i];
    }
    let precond: Vec<f64> = (0..d).map(|i| 1.0 / a[(i, i)]).collect();
    let mut b = xo.clone();
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row *= ups[i];
    }
    pcg_columns(&a, &b, x0.clone(), &precond, tol, max_iter)
}

fn pcg_columns(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mut x: DMatrix<f64>,
    precond: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, CgReport)> {
    let (d, n) = b.shape();
    let b_norms: Vec<f64> = b.column_iter().map(|c| c.norm()).collect();
    let apply_precond = |r: &DMatrix<f64>| {
        let mut z = r.clone();
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row *= precond[i];
        }
        z
    };
    let col_dot = |u: &DMatrix<f64>, v: &DMatrix<f64>, j: usize| u.column(j).dot(&v.column(j));

    let mut r = b - a * &x;
    let mut z = apply_precond(&r);
    let mut p = z.clone();
    let mut rz: Vec<f64> = (0..n).map(|j| col_dot(&r, &z, j)).collect();
    let mut active: Vec<bool> = vec![true; n];

    let true_residual = |x: &DMatrix<f64>, j: usize| {
        let res = b.column(j) - a * x.column(j);
        res.norm()
    };

    for j in 0..n {
        if b_norms[j] == 0.0 {
            x.column_mut(j).fill(0.0);
            active[j] = false;
        } else if r.column(j).norm() <= tol * b_norms[j] {
            active[j] = false;
        }
    }

    let mut iterations = 0;
    while active.iter().any(|&on| on) {
        if iterations >= max_iter {
            let worst = (0..n)
                .map(|j| true_residual(&x, j) / b_norms[j].max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            return Err(FgcError::NonConvergence {
                solver: "conjugate gradient",
                iterations,
                residual: worst,
            });
        }
        iterations += 1;
        let ap = a * &p;
        for j in 0..n {
            if !active[j] {
                continue;
            }
            let pap = col_dot(&p, &ap, j);
            if !(pap > 0.0) {
                active[j] = false;
                continue;
            }
            let alpha = rz[j] / pap;
            for i in 0..d {
                x[(i, j)] += alpha * p[(i, j)];
                r[(i, j)] -= alpha * ap[(i, j)];
            }
            if r.column(j).norm() <= tol * b_norms[j] {
                let actual = true_residual(&x, j);
                if actual <= tol * b_norms[j] {
                    active[j] = false;
                    continue;
                }
                // recursive residual drifted; restart this column from the true residual
                let res = b.column(j) - a * x.column(j);
                r.column_mut(j).copy_from(&res);
                for i in 0..d {
                    z[(i, j)] = precond[i] * r[(i, j)];
                    p[(i, j)] = z[(i, j)];
                }
                rz[j] = col_dot(&r, &z, j);
                continue;
            }
            for i in 0..d {
                z[(i, j)] = precond[i] * r[(i, j)];
            }
            let rz_new = col_dot(&r, &z, j);
            let beta = rz_new / rz[j];
            rz[j] = rz_new;
            for i in 0..d {
                p[(i, j)] = z[(i, j)] + beta * p[(i, j)];
            }
        }
    }

    let max_relative_residual = (0..n)
        .filter(|&j| b_norms[j] > 0.0)
        .map(|j| true_residual(&x, j) / b_norms[j])
        .fold(0.0, f64::max);
    Ok((
        x,
        CgReport {
            iterations,
            max_relative_residual,
        },
    ))
}

/// Closed-form node-weight update `v_i = sqrt(N) / ||X_o[i,:] - X[i,:]||`,
/// capped at `upsilon_max`.
pub fn update_upsilon(xo: &SignalMatrix, x: &SignalMatrix, upsilon_max: f64) -> Result<NodeWeights> {
    if xo.shape() != x.shape() {
        return Err(FgcError::DimensionMismatch(format!(
            "observed {:?} vs filtered {:?}",
            xo.shape(),
            x.shape()
        )));
    }
    let sqrt_n = (x.ncols() as f64).sqrt();
    let values = (0..x.nrows())
        .map(|i| {
            let res = (xo.row(i) - x.row(i)).norm();
            if res * upsilon_max <= sqrt_n {
                upsilon_max
            } else {
                sqrt_n / res
            }
        })
        .collect();
    Ok(NodeWeights(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{smoothness, WeightVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(d: usize, n: usize, seed: u64) -> (SignalMatrix, LaplacianMatrix, NodeWeights) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = WeightVector::new(
            (0..crate::graph::num_pairs(d))
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        rng.random::<f64>()
                    } else {
                        0.0
                    }
                })
                .collect(),
            d,
        )
        .unwrap();
        let x = DMatrix::from_fn(d, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let ups = NodeWeights::new((0..d).map(|_| 0.2 + rng.random::<f64>() * 3.0).collect()).unwrap();
        (x, w.to_laplacian(), ups)
    }

    #[test]
    fn zero_xi_is_identity() {
        let (x, l, ups) = random_instance(6, 4, 1);
        assert_eq!(denoise(&x, &l, &ups, 0.0, 1e-10, 60).unwrap(), x);
    }

    #[test]
    fn empty_graph_is_identity() {
        let (x, _, ups) = random_instance(6, 4, 2);
        let l = WeightVector::zeros(6).to_laplacian();
        assert_eq!(denoise(&x, &l, &ups, 3.0, 1e-10, 60).unwrap(), x);
    }

    #[test]
    fn matches_dense_solve() {
        let (x, l, ups) = random_instance(8, 5, 3);
        let xi = 0.7;
        let got = denoise(&x, &l, &ups, xi, 1e-12, 200).unwrap();
        let mut a = l.matrix() * xi;
        let mut b = x.clone();
        for i in 0..8 {
            a[(i, i)] += ups.values()[i];
            b.row_mut(i).scale_mut(ups.values()[i]);
        }
        let direct = a.lu().solve(&b).unwrap();
        assert!((got - direct).amax() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let (x, l, ups) = random_instance(12, 3, 4);
        let err = denoise(&x, &l, &ups, 5.0, 1e-14, 1).unwrap_err();
        assert!(matches!(err, FgcError::NonConvergence { iterations: 1, .. }));
    }

    #[test]
    fn filter_does_not_increase_smoothness() {
        for seed in 0..5 {
            let (x, l, _) = random_instance(10, 6, 10 + seed);
            let ups = NodeWeights::ones(10);
            let y = denoise(&x, &l, &ups, 1.5, 1e-10, 100).unwrap();
            assert!(smoothness(&y, &l).unwrap() <= smoothness(&x, &l).unwrap() + 1e-9);
        }
    }

    #[test]
    fn low_pass_limit_is_weighted_mean() {
        let d = 7;
        // connected path
        let mut vals = vec![0.0; crate::graph::num_pairs(d)];
        for i in 0..d - 1 {
            vals[crate::graph::pair_index(i, i + 1, d)] = 1.0;
        }
        let l = WeightVector::new(vals, d).unwrap().to_laplacian();
        let (x, _, ups) = random_instance(d, 3, 7);
        let y = denoise(&x, &l, &ups, 1e6, 1e-9, 10_000).unwrap();
        let total: f64 = ups.values().iter().sum();
        for k in 0..3 {
            let c: f64 = (0..d).map(|i| ups.values()[i] * x[(i, k)]).sum::<f64>() / total;
            for i in 0..d {
                assert!(
                    (y[(i, k)] - c).abs() <= 1e-3 * c.abs().max(1e-3),
                    "{} vs {c}",
                    y[(i, k)]
                );
            }
        }
    }

    #[test]
    fn upsilon_examples() {
        let xo = DMatrix::from_row_slice(2, 4, &[1., 0., 0., 0., 3., 3., 3., 3.]);
        let x = DMatrix::from_row_slice(2, 4, &[0., 0., 0., 0., 3., 3., 3., 3.]);
        let u = update_upsilon(&xo, &x, UPSILON_MAX).unwrap();
        assert_eq!(u.values(), &[2.0, UPSILON_MAX]);
    }

    #[test]
    fn upsilon_stationarity() {
        let (x, l, ups) = random_instance(9, 11, 8);
        let y = denoise(&x, &l, &ups, 0.9, 1e-10, 200).unwrap();
        let u = update_upsilon(&x, &y, UPSILON_MAX).unwrap();
        let sqrt_n = 11f64.sqrt();
        for i in 0..9 {
            let res = (x.row(i) - y.row(i)).norm();
            if u.values()[i] < UPSILON_MAX {
                assert!((u.values()[i] * res - sqrt_n).abs() < 1e-12);
            }
        }
    }
}
