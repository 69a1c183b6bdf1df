//! Two fair end-to-end baselines that share the embedding and rotation
//! updates of the unified solver but build their graphs differently:
//! adaptive-neighbour rows (FJGSED) and a sparse self-representation fitted
//! with an augmented Lagrangian (FSRSC).

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use crate::discretize::indicator;
use crate::embedding::{check_k, StiefelConfig};
use crate::error::{FgcError, Result};
use crate::fairness::{symmetrize, FairnessSystem};
use crate::filter::NodeWeights;
use crate::graph::{pack_upper, AdjacencyMatrix, SignalMatrix, WeightVector};
use crate::learner::row_distances;
use crate::linalg::trace_product;
use crate::pipeline::{full_distances, initial_partition, update_partition, FitResult, Partition, PartitionSettings};

/// Weights of one adaptive-neighbour row. `costs[j]` is the cost of linking
/// to node `j`; the node itself must be marked with `+inf`.
///
/// The `l` cheapest entries get `(c_{l+1} - c_j) / (l c_{l+1} - sum_{j<=l} c_j)`;
/// when that denominator vanishes they share `1/l`.
pub fn fjgsed_w_row(costs: &[f64], l: usize) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..costs.len()).filter(|&j| costs[j].is_finite()).collect();
    if l == 0 || order.len() < l + 1 {
        return Err(FgcError::InvalidParameter(format!(
            "need at least {} finite costs for l = {l}, found {}",
            l + 1,
            order.len()
        )));
    }
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    let cut = costs[order[l]];
    let head: f64 = order[..l].iter().map(|&j| costs[j]).sum();
    let denom = l as f64 * cut - head;
    let mut row = vec![0.0; costs.len()];
    if denom <= 1e-12 * (l as f64 * cut.abs()).max(1.0) {
        for &j in &order[..l] {
            row[j] = 1.0 / l as f64;
        }
    } else {
        for &j in &order[..l] {
            row[j] = ((cut - costs[j]) / denom).max(0.0);
        }
    }
    Ok(row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FjgsedConfig {
    /// Neighbours per row.
    pub neighbors: usize,
    /// Weight of the embedding distance in the row costs.
    pub mu: f64,
    /// Weight of the rotation term in the embedding update.
    pub gamma: f64,
    pub max_iter: usize,
    /// Stop once labels repeat and the relative change of `W` is below this.
    pub rel_tol: f64,
    pub stiefel: StiefelConfig,
    pub rotation_restarts: usize,
    pub rotation_max_iter: usize,
    pub seed: u64,
}

impl Default for FjgsedConfig {
    fn default() -> Self {
        Self {
            neighbors: 10,
            mu: 0.01,
            gamma: 0.01,
            max_iter: 30,
            rel_tol: 1e-6,
            stiefel: StiefelConfig::default(),
            rotation_restarts: 20,
            rotation_max_iter: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FjgsedFit {
    pub fit: FitResult,
    /// Largest `|row sum - 1|` of `W` before symmetrization, per sweep.
    pub row_sum_deviation: Vec<f64>,
    /// Most nonzeros in any row of `W` before symmetrization, per sweep.
    pub max_row_nonzeros: Vec<usize>,
}

fn symmetric(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

fn partition_settings<'a>(
    mu: f64,
    gamma: f64,
    stiefel: &'a StiefelConfig,
    rotation_restarts: usize,
    rotation_max_iter: usize,
    seed: u64,
) -> PartitionSettings<'a> {
    PartitionSettings {
        mu,
        gamma,
        stiefel,
        warm_start_y: true,
        random_init_y: false,
        random_init_r: false,
        rotation_restarts,
        rotation_max_iter,
        seed,
    }
}

fn embedding_terms(w: &WeightVector, part: &Partition, fs: &FairnessSystem, mu: f64, gamma: f64) -> f64 {
    let l = w.to_laplacian();
    let u = fs.z() * &part.y;
    let k = part.y.ncols();
    mu * trace_product(&u, &(l.matrix() * &u)) + gamma * (indicator(&part.labels, k) - &u * &part.r).norm_squared()
}

fn check_inputs(x: &SignalMatrix, fs: &FairnessSystem, k: usize) -> Result<()> {
    check_k(fs, k)?;
    if fs.num_nodes() != x.nrows() {
        return Err(FgcError::DimensionMismatch(format!(
            "{} signal rows, {} group labels",
            x.nrows(),
            fs.num_nodes()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FgcError::InvalidParameter("signals contain non-finite values".into()));
    }
    Ok(())
}

fn finish(
    method: &str,
    x: &SignalMatrix,
    fs: &FairnessSystem,
    weights: WeightVector,
    part: Partition,
    history: Vec<f64>,
    converged: bool,
    iterations: usize,
) -> FitResult {
    let k = part.r.nrows();
    FitResult {
        method: method.to_string(),
        u: fs.z() * &part.y,
        weights,
        x: x.clone(),
        upsilon: NodeWeights::ones(x.nrows()),
        y: part.y,
        r: part.r,
        labels: part.labels,
        num_clusters: k,
        objective_history: history,
        converged,
        iterations,
    }
}

pub fn fjgsed_fit(x: &SignalMatrix, fs: &FairnessSystem, k: usize, cfg: &FjgsedConfig) -> Result<FjgsedFit> {
    check_inputs(x, fs, k)?;
    let d = x.nrows();
    if cfg.neighbors == 0 || cfg.neighbors >= d {
        return Err(FgcError::InvalidParameter(format!(
            "neighbors = {} must lie in 1..{d}",
            cfg.neighbors
        )));
    }
    if !(cfg.mu >= 0.0 && cfg.gamma >= 0.0) {
        return Err(FgcError::InvalidParameter("mu and gamma must be >= 0".into()));
    }
    let settings = partition_settings(
        cfg.mu,
        cfg.gamma,
        &cfg.stiefel,
        cfg.rotation_restarts,
        cfg.rotation_max_iter,
        cfg.seed,
    );
    let dx = full_distances(x);
    let mut part: Option<Partition> = None;
    let mut weights: Option<WeightVector> = None;
    let mut history = Vec::new();
    let mut deviation = Vec::new();
    let mut nonzeros = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 1..=cfg.max_iter.max(1) {
        sweeps = sweep;
        let mut cost = dx.clone();
        if let Some(p) = &part {
            let du = full_distances(&(fs.z() * &p.y));
            cost += du * (cfg.mu / 2.0);
        }
        let rows: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|i| {
                let mut c: Vec<f64> = cost.row(i).iter().copied().collect();
                c[i] = f64::INFINITY;
                fjgsed_w_row(&c, cfg.neighbors)
            })
            .collect::<Result<_>>()
            .map_err(|e| e.at_sweep(sweep))?;
        deviation.push(
            rows.iter()
                .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
                .fold(0.0, f64::max),
        );
        nonzeros.push(
            rows.iter()
                .map(|r| r.iter().filter(|&&v| v != 0.0).count())
                .max()
                .unwrap_or(0),
        );
        let w_full = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
        let w = pack_upper(&AdjacencyMatrix::new(symmetric(w_full)).map_err(|e| e.at_sweep(sweep))?);
        let l = w.to_laplacian();

        let current = match part.take() {
            Some(p) => p,
            None => initial_partition(&l, fs, k, &settings).map_err(|e| e.at_sweep(sweep))?,
        };
        let next = update_partition(&l, fs, &current, &settings).map_err(|e| e.at_sweep(sweep))?;
        let fit_term: f64 = w.values().iter().zip(row_distances(x)).map(|(a, b)| 2.0 * a * b).sum();
        history.push(fit_term + embedding_terms(&w, &next, fs, cfg.mu, cfg.gamma));

        let settled = next.labels == current.labels
            && weights.as_ref().is_some_and(|old| {
                let diff: f64 = old
                    .values()
                    .iter()
                    .zip(w.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                diff.sqrt() <= cfg.rel_tol * w.values().iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300)
            });
        part = Some(next);
        weights = Some(w);
        if settled {
            converged = true;
            break;
        }
    }
    let fit = finish(
        "fjgsed",
        x,
        fs,
        weights.expect("at least one sweep"),
        part.expect("at least one sweep"),
        history,
        converged,
        sweeps,
    );
    Ok(FjgsedFit {
        fit,
        row_sum_deviation: deviation,
        max_row_nonzeros: nonzeros,
    })
}

/// Elementwise `sign(J) max(|J| - threshold, 0)`.
pub fn fsrsc_soft_threshold(j: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    j.map(|v| v.signum() * (v.abs() - threshold).max(0.0))
}

/// Right-hand side used for the `W` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnForm {
    /// `gamma J~ + 2 XX^T - (mu/2) P`, from setting the gradient to zero.
    Derived,
    /// `(mu/2) P - gamma J~ - 2 XX^T`, the alternative printed form.
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsrscConfig {
    /// Sparsity weight.
    pub alpha: f64,
    /// Weight of the embedding distances in the representation.
    pub mu: f64,
    /// Augmented-Lagrangian penalty. Should be comparable to the entries of
    /// `X X^T`; the default suits unit-scale signals with a few thousand samples.
    pub gamma: f64,
    /// Weight of the rotation term in the embedding update.
    pub rotation_weight: f64,
    /// ALM steps between embedding updates.
    pub alm_iterations: usize,
    pub max_iter: usize,
    /// Stop once labels repeat and `||A - W||_F` is below this.
    pub tol: f64,
    pub column_form: ColumnForm,
    pub stiefel: StiefelConfig,
    pub rotation_restarts: usize,
    pub rotation_max_iter: usize,
    pub seed: u64,
}

impl Default for FsrscConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            mu: 0.01,
            gamma: 1e4,
            rotation_weight: 0.01,
            alm_iterations: 20,
            max_iter: 20,
            tol: 1e-6,
            column_form: ColumnForm::Derived,
            stiefel: StiefelConfig::default(),
            rotation_restarts: 20,
            rotation_max_iter: 100,
            seed: 0,
        }
    }
}

/// Diagnostics of one ALM step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmStep {
    /// `||A - W||_F` after the projection.
    pub primal_residual: f64,
    /// Largest relative residual of the column systems.
    pub solve_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FsrscFit {
    pub fit: FitResult,
    pub steps: Vec<AlmStep>,
}

/// State of the augmented-Lagrangian iteration for the representation `W`.
#[derive(Debug, Clone)]
pub struct FsrscAlm {
    gram: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub multiplier: DMatrix<f64>,
}

impl FsrscAlm {
    pub fn new(x: &SignalMatrix) -> Self {
        let d = x.nrows();
        Self {
            gram: x * x.transpose(),
            w: DMatrix::zeros(d, d),
            a: DMatrix::zeros(d, d),
            multiplier: DMatrix::zeros(d, d),
        }
    }

    /// One `A -> W -> projection -> multiplier` step. `p` holds squared
    /// embedding distances, or `None` before an embedding exists.
    pub fn step(&mut self, p: Option<&DMatrix<f64>>, cfg: &FsrscConfig) -> Result<AlmStep> {
        let d = self.w.nrows();
        let g = cfg.gamma;
        self.a = fsrsc_soft_threshold(&(&self.w - &self.multiplier / g), cfg.alpha / g);
        let target = &self.a + &self.multiplier / g;
        let system = DMatrix::identity(d, d) * g + &self.gram * 2.0;
        let mut rhs = &target * g + &self.gram * 2.0;
        if let Some(p) = p {
            rhs -= p * (cfg.mu / 2.0);
        }
        if cfg.column_form == ColumnForm::AsPrinted {
            rhs = -rhs;
        }
        let chol = Cholesky::new(system.clone())
            .ok_or_else(|| FgcError::Numerical("representation system is not positive definite".into()))?;
        let solved = chol.solve(&rhs);
        let residual = &system * &solved - &rhs;
        let solve_residual = (0..d)
            .map(|c| residual.column(c).norm() / rhs.column(c).norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);

        let mut w = solved.map(|v| v.max(0.0));
        w.fill_diagonal(0.0);
        self.w = symmetric(w);
        self.multiplier += (&self.a - &self.w) * g;
        Ok(AlmStep {
            primal_residual: (&self.a - &self.w).norm(),
            solve_residual,
        })
    }
}

pub fn fsrsc_fit(x: &SignalMatrix, fs: &FairnessSystem, k: usize, cfg: &FsrscConfig) -> Result<FsrscFit> {
    check_inputs(x, fs, k)?;
    for (name, v) in [
        ("alpha", cfg.alpha),
        ("mu", cfg.mu),
        ("rotation_weight", cfg.rotation_weight),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(FgcError::InvalidParameter(format!(
                "{name} = {v} must be finite and >= 0"
            )));
        }
    }
    if !(cfg.gamma.is_finite() && cfg.gamma > 0.0) {
        return Err(FgcError::InvalidParameter(format!(
            "gamma = {} must be positive",
            cfg.gamma
        )));
    }
    let settings = partition_settings(
        cfg.mu,
        cfg.rotation_weight,
        &cfg.stiefel,
        cfg.rotation_restarts,
        cfg.rotation_max_iter,
        cfg.seed,
    );
    let mut alm = FsrscAlm::new(x);
    let mut part: Option<Partition> = None;
    let mut steps = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    let mut weights = WeightVector::zeros(x.nrows());

    for sweep in 1..=cfg.max_iter.max(1) {
        sweeps = sweep;
        let p = part.as_ref().map(|p| full_distances(&(fs.z() * &p.y)));
        for _ in 0..cfg.alm_iterations.max(1) {
            steps.push(alm.step(p.as_ref(), cfg).map_err(|e| e.at_sweep(sweep))?);
        }
        weights = pack_upper(&AdjacencyMatrix::new(alm.w.clone()).map_err(|e| e.at_sweep(sweep))?);
        let l = weights.to_laplacian();
        let current = match part.take() {
            Some(p) => p,
            None => initial_partition(&l, fs, k, &settings).map_err(|e| e.at_sweep(sweep))?,
        };
        let next = update_partition(&l, fs, &current, &settings).map_err(|e| e.at_sweep(sweep))?;
        let fit_term =
            (x - alm.w.transpose() * x).norm_squared() + cfg.alpha * alm.w.iter().map(|v| v.abs()).sum::<f64>();
        history.push(fit_term + embedding_terms(&weights, &next, fs, cfg.mu, cfg.rotation_weight));
        let settled = next.labels == current.labels && steps.last().is_some_and(|s| s.primal_residual <= cfg.tol);
        part = Some(next);
        if settled {
            converged = true;
            break;
        }
    }
    let fit = finish(
        "fsrsc",
        x,
        fs,
        weights,
        part.expect("at least one sweep"),
        history,
        converged,
        sweeps,
    );
    Ok(FsrscFit { fit, steps })
}
