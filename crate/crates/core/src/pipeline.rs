//! End-to-end fitting: the alternating unified solver, the separate-stage
//! pipeline, and the simple graph constructors used by the baselines.
//!
//! The unified objective is
//!
//! ```text
//! (1/N) ||Y (Xo - X)||^2 + (xi/N) Tr(X^T L X) + Reg(L) + sum 1/v_i
//!     + mu Tr(U^T L U) + gamma ||Q - U R||^2,      U = Z Y
//! ```
//!
//! and one sweep updates `w, Y, R, Q, X, v` in that order.

use nalgebra::DMatrix;

use crate::discretize::{
    discretize_q, indicator, lloyd_kmeans, procrustes_rotation, rotation_residual, spectral_rotation,
};
use crate::embedding::{check_k, fair_embed_eigen, random_embedding, stiefel_minimize, StiefelConfig, StiefelProblem};
use crate::error::{FgcError, Result};
use crate::fairness::FairnessSystem;
use crate::filter::{default_max_iter, denoise_from, update_upsilon, NodeWeights, DEFAULT_CG_TOL, UPSILON_MAX};
use crate::graph::{pack_upper, regularizer, smoothness, AdjacencyMatrix, LaplacianMatrix, SignalMatrix, WeightVector};
use crate::learner::{gl_objective, pairwise_cost, row_distances, solve_w, DualInit, GlSolverConfig};
use crate::linalg::trace_product;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub xi: f64,
    pub beta: f64,
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
    pub outer_max_iter: usize,
    pub outer_rel_tol: f64,
    pub gl_max_iter: usize,
    pub gl_rel_tol: f64,
    pub stiefel: StiefelConfig,
    pub cg_tol: f64,
    /// `None` means `10 D`.
    pub cg_max_iter: Option<usize>,
    pub upsilon_max: f64,
    pub seed: u64,
    /// Start each embedding solve from the previous `Y` rather than the eigenvectors of the current graph.
    pub warm_start_y: bool,
    /// Random initial `Y` instead of the eigenvector start.
    pub random_init_y: bool,
    /// Random initial `R` instead of the best spectral-rotation start.
    pub random_init_r: bool,
    /// Random orthogonal starts tried (besides the identity) when initializing `R`.
    pub rotation_restarts: usize,
    pub rotation_max_iter: usize,
    /// Run the `X` and `v` updates; off fixes `X = Xo`, `v = 1`.
    pub denoise: bool,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            xi: 0.05,
            beta: 0.01,
            alpha: 1.0,
            mu: 0.01,
            gamma: 0.01,
            outer_max_iter: 100,
            outer_rel_tol: 1e-6,
            gl_max_iter: 20_000,
            gl_rel_tol: 1e-8,
            stiefel: StiefelConfig::default(),
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: None,
            upsilon_max: UPSILON_MAX,
            seed: 0,
            warm_start_y: true,
            random_init_y: false,
            random_init_r: false,
            rotation_restarts: 20,
            rotation_max_iter: 100,
            denoise: true,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("xi", self.xi),
            ("beta", self.beta),
            ("alpha", self.alpha),
            ("mu", self.mu),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(FgcError::InvalidParameter(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if !(self.beta > 0.0 && self.alpha > 0.0) {
            return Err(FgcError::InvalidParameter("alpha and beta must be positive".into()));
        }
        if self.outer_max_iter == 0 {
            return Err(FgcError::InvalidParameter("outer_max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn gl_config(&self) -> GlSolverConfig {
        GlSolverConfig {
            alpha: self.alpha,
            beta: self.beta,
            max_iter: self.gl_max_iter,
            rel_tol: self.gl_rel_tol,
            dual_init: DualInit::Ones,
            adaptive_restart: true,
        }
    }

    /// `(key, value)` pairs in the order they are written to a config snapshot.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("xi", self.xi.to_string()),
            ("beta", self.beta.to_string()),
            ("alpha", self.alpha.to_string()),
            ("mu", self.mu.to_string()),
            ("gamma", self.gamma.to_string()),
            ("outer_max_iter", self.outer_max_iter.to_string()),
            ("outer_rel_tol", self.outer_rel_tol.to_string()),
            ("gl_max_iter", self.gl_max_iter.to_string()),
            ("gl_rel_tol", self.gl_rel_tol.to_string()),
            ("stiefel_max_iter", self.stiefel.max_iter.to_string()),
            ("stiefel_grad_tol", self.stiefel.grad_tol.to_string()),
            ("cg_tol", self.cg_tol.to_string()),
            (
                "cg_max_iter",
                self.cg_max_iter.map_or_else(|| "auto".to_string(), |v| v.to_string()),
            ),
            ("upsilon_max", self.upsilon_max.to_string()),
            ("seed", self.seed.to_string()),
            ("warm_start_y", self.warm_start_y.to_string()),
            ("random_init_y", self.random_init_y.to_string()),
            ("random_init_r", self.random_init_r.to_string()),
            ("rotation_restarts", self.rotation_restarts.to_string()),
            ("rotation_max_iter", self.rotation_max_iter.to_string()),
            ("denoise", self.denoise.to_string()),
            ("kmeans_restarts", self.kmeans_restarts.to_string()),
            ("kmeans_max_iter", self.kmeans_max_iter.to_string()),
        ]
    }

    /// Applies one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| FgcError::parse(key, format!("cannot parse {value:?}")))
        }
        match key {
            "xi" => self.xi = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "mu" => self.mu = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "outer_max_iter" => self.outer_max_iter = num(key, value)?,
            "outer_rel_tol" => self.outer_rel_tol = num(key, value)?,
            "gl_max_iter" => self.gl_max_iter = num(key, value)?,
            "gl_rel_tol" => self.gl_rel_tol = num(key, value)?,
            "stiefel_max_iter" => self.stiefel.max_iter = num(key, value)?,
            "stiefel_grad_tol" => self.stiefel.grad_tol = num(key, value)?,
            "cg_tol" => self.cg_tol = num(key, value)?,
            "cg_max_iter" => {
                self.cg_max_iter = if value.trim() == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "upsilon_max" => self.upsilon_max = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "warm_start_y" => self.warm_start_y = num(key, value)?,
            "random_init_y" => self.random_init_y = num(key, value)?,
            "random_init_r" => self.random_init_r = num(key, value)?,
            "rotation_restarts" => self.rotation_restarts = num(key, value)?,
            "rotation_max_iter" => self.rotation_max_iter = num(key, value)?,
            "denoise" => self.denoise = num(key, value)?,
            "kmeans_restarts" => self.kmeans_restarts = num(key, value)?,
            "kmeans_max_iter" => self.kmeans_max_iter = num(key, value)?,
            _ => return Err(FgcError::parse(key, "unknown fit setting")),
        }
        Ok(())
    }
}

/// Iterates of the alternating solver.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: SignalMatrix,
    pub upsilon: NodeWeights,
    pub weights: WeightVector,
    pub y: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub fidelity: f64,
    pub smoothness: f64,
    pub regularizer: f64,
    pub node_weights: f64,
    pub embedding: f64,
    pub rotation: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.fidelity + self.smoothness + self.regularizer + self.node_weights + self.embedding + self.rotation
    }
}

fn fidelity(xo: &SignalMatrix, x: &SignalMatrix, upsilon: &NodeWeights) -> f64 {
    let n = xo.ncols() as f64;
    let diff = xo - x;
    diff.row_iter()
        .zip(upsilon.values())
        .map(|(row, u)| u * row.norm_squared())
        .sum::<f64>()
        / n
}

fn filter_part(
    xo: &SignalMatrix,
    x: &SignalMatrix,
    upsilon: &NodeWeights,
    l: &LaplacianMatrix,
    xi: f64,
) -> Result<f64> {
    Ok(fidelity(xo, x, upsilon) + xi * smoothness(x, l)?)
}

fn upsilon_part(xo: &SignalMatrix, x: &SignalMatrix, upsilon: &NodeWeights) -> f64 {
    fidelity(xo, x, upsilon) + upsilon.values().iter().map(|v| 1.0 / v).sum::<f64>()
}

/// Every term of the unified objective at `state`.
pub fn objective_terms(
    state: &SolverState,
    xo: &SignalMatrix,
    fs: &FairnessSystem,
    cfg: &FitConfig,
) -> Result<ObjectiveTerms> {
    let l = state.weights.to_laplacian();
    let u = fs.z() * &state.y;
    let k = state.y.ncols();
    Ok(ObjectiveTerms {
        fidelity: fidelity(xo, &state.x, &state.upsilon),
        smoothness: cfg.xi * smoothness(&state.x, &l)?,
        regularizer: regularizer(&state.weights, cfg.alpha, cfg.beta)?,
        node_weights: state.upsilon.values().iter().map(|v| 1.0 / v).sum(),
        embedding: cfg.mu * trace_product(&u, &(l.matrix() * &u)),
        rotation: cfg.gamma * (indicator(&state.labels, k) - &u * &state.r).norm_squared(),
    })
}

pub fn objective_value(state: &SolverState, xo: &SignalMatrix, fs: &FairnessSystem, cfg: &FitConfig) -> Result<f64> {
    Ok(objective_terms(state, xo, fs, cfg)?.total())
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: String,
    pub weights: WeightVector,
    pub x: SignalMatrix,
    pub upsilon: NodeWeights,
    pub y: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    /// Objective after each full sweep; empty for single-pass pipelines.
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn laplacian(&self) -> LaplacianMatrix {
        self.weights.to_laplacian()
    }

    /// Clusters with no members.
    pub fn empty_clusters(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_clusters];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.num_clusters).filter(|&c| !seen[c]).collect()
    }
}

/// Embedding, rotation and labels shared by every alternating method.
#[derive(Debug, Clone)]
pub(crate) struct Partition {
    pub y: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub labels: Vec<usize>,
}

pub(crate) struct PartitionSettings<'a> {
    pub mu: f64,
    pub gamma: f64,
    pub stiefel: &'a StiefelConfig,
    pub warm_start_y: bool,
    pub random_init_y: bool,
    pub random_init_r: bool,
    pub rotation_restarts: usize,
    pub rotation_max_iter: usize,
    pub seed: u64,
}

impl<'a> PartitionSettings<'a> {
    pub fn from_fit(cfg: &'a FitConfig) -> Self {
        Self {
            mu: cfg.mu,
            gamma: cfg.gamma,
            stiefel: &cfg.stiefel,
            warm_start_y: cfg.warm_start_y,
            random_init_y: cfg.random_init_y,
            random_init_r: cfg.random_init_r,
            rotation_restarts: cfg.rotation_restarts,
            rotation_max_iter: cfg.rotation_max_iter,
            seed: cfg.seed,
        }
    }
}

/// Starting point before the first embedding solve.
pub(crate) fn initial_partition(
    l: &LaplacianMatrix,
    fs: &FairnessSystem,
    k: usize,
    s: &PartitionSettings,
) -> Result<Partition> {
    let y = if s.random_init_y {
        random_embedding(fs, k, s.seed ^ 0x5eed_0001)?
    } else {
        fair_embed_eigen(l, fs, k)?
    };
    let u = fs.z() * &y;
    let (r, labels) = if s.random_init_r {
        let r = random_embedding_rotation(k, s.seed ^ 0x5eed_0002);
        let labels = discretize_q(&u, &r)?;
        (r, labels)
    } else {
        let fit = spectral_rotation(&u, s.rotation_restarts, s.seed, s.rotation_max_iter)?;
        (fit.rotation, fit.labels)
    };
    Ok(Partition { y, r, labels })
}

fn random_embedding_rotation(k: usize, seed: u64) -> DMatrix<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    crate::linalg::random_orthonormal(k, k, &mut rng)
}

/// One `Y -> R -> Q` pass. Each block is accepted only if it does not raise
/// its part of the objective.
pub(crate) fn update_partition(
    l: &LaplacianMatrix,
    fs: &FairnessSystem,
    current: &Partition,
    s: &PartitionSettings,
) -> Result<Partition> {
    let k = current.r.nrows();
    let q = indicator(&current.labels, k);
    let problem = StiefelProblem::new(l, fs, &q, &current.r, s.mu, s.gamma)?;
    let mut start = current.y.clone();
    if !s.warm_start_y {
        let eig = fair_embed_eigen(l, fs, k)?;
        if problem.objective(&eig) <= problem.objective(&start) {
            start = eig;
        }
    }
    let (y, _) = stiefel_minimize(&problem, &start, s.stiefel)?;
    let u = fs.z() * &y;

    let mut r = procrustes_rotation(&q, &u)?;
    if rotation_residual(&current.labels, &u, &r) > rotation_residual(&current.labels, &u, &current.r) {
        r = current.r.clone();
    }
    let mut labels = discretize_q(&u, &r)?;
    if rotation_residual(&labels, &u, &r) > rotation_residual(&current.labels, &u, &r) {
        labels = current.labels.clone();
    }
    Ok(Partition { y, r, labels })
}

/// The alternating solver for the unified objective.
pub fn unified_fit(xo: &SignalMatrix, fs: &FairnessSystem, k: usize, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_k(fs, k)?;
    let d = xo.nrows();
    if fs.num_nodes() != d {
        return Err(FgcError::DimensionMismatch(format!(
            "{d} signal rows, {} group labels",
            fs.num_nodes()
        )));
    }
    if xo.iter().any(|v| !v.is_finite()) {
        return Err(FgcError::InvalidParameter("signals contain non-finite values".into()));
    }
    let gl = cfg.gl_config();
    let settings = PartitionSettings::from_fit(cfg);
    let cg_max = cfg.cg_max_iter.unwrap_or_else(|| default_max_iter(d));

    let mut x = xo.clone();
    let mut upsilon = NodeWeights::ones(d);
    let mut weights: Option<WeightVector> = None;
    let mut partition: Option<Partition> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    for sweep in 1..=cfg.outer_max_iter {
        sweeps = sweep;
        // w
        let u = partition.as_ref().map(|p| fs.z() * &p.y);
        let p = pairwise_cost(&x, u.as_ref(), cfg.xi, cfg.mu)?;
        let sol = solve_w(&p, &gl).map_err(|e| e.at_sweep(sweep))?;
        let w = match weights.take() {
            Some(old)
                if gl_objective(&p, old.values(), cfg.alpha, cfg.beta)
                    < gl_objective(&p, sol.weights.values(), cfg.alpha, cfg.beta) =>
            {
                old
            }
            _ => sol.weights,
        };
        let l = w.to_laplacian();

        // Y, R, Q
        let current = match partition.take() {
            Some(p) => p,
            None => initial_partition(&l, fs, k, &settings).map_err(|e| e.at_sweep(sweep))?,
        };
        let next = update_partition(&l, fs, &current, &settings).map_err(|e| e.at_sweep(sweep))?;
        partition = Some(next);

        // X, v
        if cfg.denoise {
            let (x_new, _) =
                denoise_from(xo, &l, &upsilon, cfg.xi, &x, cfg.cg_tol, cg_max).map_err(|e| e.at_sweep(sweep))?;
            if filter_part(xo, &x_new, &upsilon, &l, cfg.xi)? <= filter_part(xo, &x, &upsilon, &l, cfg.xi)? {
                x = x_new;
            }
            let u_new = update_upsilon(xo, &x, cfg.upsilon_max)?;
            if upsilon_part(xo, &x, &u_new) <= upsilon_part(xo, &x, &upsilon) {
                upsilon = u_new;
            }
        }
        weights = Some(w);

        let part = partition.as_ref().expect("set above");
        let state = SolverState {
            x: x.clone(),
            upsilon: upsilon.clone(),
            weights: weights.clone().expect("set above"),
            y: part.y.clone(),
            r: part.r.clone(),
            labels: part.labels.clone(),
        };
        let j = objective_value(&state, xo, fs, cfg).map_err(|e| e.at_sweep(sweep))?;
        if !j.is_finite() {
            return Err(FgcError::Numerical(format!("objective became {j}")).at_sweep(sweep));
        }
        let previous = history.last().copied();
        history.push(j);
        if let Some(prev) = previous {
            if (prev - j).abs() <= cfg.outer_rel_tol * j.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }

    let part = partition.expect("at least one sweep");
    let weights = weights.expect("at least one sweep");
    Ok(FitResult {
        method: if cfg.denoise { "unified" } else { "no-denoise" }.to_string(),
        u: fs.z() * &part.y,
        weights,
        x,
        upsilon,
        y: part.y,
        r: part.r,
        labels: part.labels,
        num_clusters: k,
        objective_history: history,
        converged,
        iterations: sweeps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineGraph {
    Pearson,
    Knn(usize),
    EpsNn(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphMethod {
    /// Smoothness-based learning on the raw signals.
    Learned,
    Baseline(BaselineGraph),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretizer {
    Rotation,
    Kmeans,
}

/// Simple graphs from the rows of `x`.
pub fn construct_baseline_graph(x: &SignalMatrix, method: BaselineGraph) -> Result<AdjacencyMatrix> {
    let d = x.nrows();
    let mut w = DMatrix::zeros(d, d);
    match method {
        BaselineGraph::Pearson => {
            let n = x.ncols() as f64;
            let centered: Vec<Vec<f64>> = x
                .row_iter()
                .map(|row| {
                    let mean = row.sum() / n;
                    row.iter().map(|v| v - mean).collect()
                })
                .collect();
            let norms: Vec<f64> = centered
                .iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            for i in 0..d {
                for j in (i + 1)..d {
                    let c = if norms[i] == 0.0 || norms[j] == 0.0 {
                        0.0
                    } else {
                        let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                        (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                    };
                    w[(i, j)] = c.max(0.0);
                    w[(j, i)] = c.max(0.0);
                }
            }
        }
        BaselineGraph::Knn(k) => {
            if k == 0 || k >= d {
                return Err(FgcError::InvalidParameter(format!("k = {k} must lie in 1..{d}")));
            }
            let dist = full_distances(x);
            for i in 0..d {
                let mut order: Vec<usize> = (0..d).filter(|&j| j != i).collect();
                order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
                for &j in &order[..k] {
                    w[(i, j)] = 1.0;
                    w[(j, i)] = 1.0;
                }
            }
        }
        BaselineGraph::EpsNn(eps) => {
            if !(eps >= 0.0) {
                return Err(FgcError::InvalidParameter(format!("epsilon = {eps} must be >= 0")));
            }
            let dist = full_distances(x);
            for i in 0..d {
                for j in (i + 1)..d {
                    if dist[(i, j)].sqrt() <= eps {
                        w[(i, j)] = 1.0;
                        w[(j, i)] = 1.0;
                    }
                }
            }
        }
    }
    AdjacencyMatrix::new(w)
}

/// Squared Euclidean distances between rows as a full matrix.
pub(crate) fn full_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let d = x.nrows();
    let packed = row_distances(x);
    let mut out = DMatrix::zeros(d, d);
    for (v, (i, j)) in packed.into_iter().zip(crate::graph::pairs(d)) {
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    out
}

/// Median Euclidean distance between rows, a default radius for `EpsNn`.
pub fn median_row_distance(x: &SignalMatrix) -> f64 {
    let mut dist: Vec<f64> = row_distances(x).into_iter().map(f64::sqrt).collect();
    if dist.is_empty() {
        return 0.0;
    }
    dist.sort_by(f64::total_cmp);
    dist[dist.len() / 2]
}

/// Graph construction, fair embedding and discretization run once each, in sequence.
pub fn separate_fit(
    xo: &SignalMatrix,
    fs: &FairnessSystem,
    k: usize,
    cfg: &FitConfig,
    graph: GraphMethod,
    discretizer: Discretizer,
) -> Result<FitResult> {
    cfg.validate()?;
    check_k(fs, k)?;
    let d = xo.nrows();
    if fs.num_nodes() != d {
        return Err(FgcError::DimensionMismatch(format!(
            "{d} signal rows, {} group labels",
            fs.num_nodes()
        )));
    }
    let (weights, name) = match graph {
        GraphMethod::Learned => {
            let p = pairwise_cost(xo, None, cfg.xi, cfg.mu)?;
            (solve_w(&p, &cfg.gl_config())?.weights, "sep")
        }
        GraphMethod::Baseline(b) => {
            let name = match b {
                BaselineGraph::Pearson => "corr",
                BaselineGraph::Knn(_) => "knn",
                BaselineGraph::EpsNn(_) => "epsnn",
            };
            (pack_upper(&construct_baseline_graph(xo, b)?), name)
        }
    };
    let l = weights.to_laplacian();
    let y = fair_embed_eigen(&l, fs, k)?;
    let u = fs.z() * &y;
    let (labels, r, name) = match discretizer {
        Discretizer::Rotation => {
            let fit = spectral_rotation(&u, cfg.rotation_restarts, cfg.seed, cfg.rotation_max_iter)?;
            (fit.labels, fit.rotation, name.to_string())
        }
        Discretizer::Kmeans => {
            let fit = lloyd_kmeans(&u, k, cfg.seed, cfg.kmeans_restarts, cfg.kmeans_max_iter)?;
            let r = procrustes_rotation(&indicator(&fit.labels, k), &u)?;
            (fit.labels, r, format!("{name}-kmeans"))
        }
    };
    Ok(FitResult {
        method: name,
        weights,
        x: xo.clone(),
        upsilon: NodeWeights::ones(d),
        y,
        u,
        r,
        labels,
        num_clusters: k,
        objective_history: Vec::new(),
        converged: true,
        iterations: 1,
    })
}
