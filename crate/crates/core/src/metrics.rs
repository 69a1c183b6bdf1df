//! Evaluation metrics and checks of the estimation and misclassification bounds.

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FgcError, Result};
use crate::fairness::{normalized_indicator, FairnessSystem};
use crate::graph::{
    degree_operator_matrix, regularizer_gradient, regularizer_hessian, AdjacencyMatrix, LaplacianMatrix, SignalMatrix,
    WeightVector,
};
use crate::linalg::{sym_eigen_sorted, trace_product};

pub const DEFAULT_EDGE_EPS: f64 = 1e-8;

/// `2TP / (2TP + FN + FP)` over the strict upper triangle. Two empty graphs score 1.
pub fn f1_score(truth: &AdjacencyMatrix, estimate: &AdjacencyMatrix, edge_eps: f64) -> Result<f64> {
    let d = truth.num_nodes();
    if estimate.num_nodes() != d {
        return Err(FgcError::DimensionMismatch(format!(
            "graphs have {d} and {} nodes",
            estimate.num_nodes()
        )));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for i in 0..d {
        for j in (i + 1)..d {
            let t = truth.matrix()[(i, j)] > edge_eps;
            let e = estimate.matrix()[(i, j)] > edge_eps;
            match (t, e) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fneg + fp;
    Ok(if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    })
}

/// `||Z^T L^ Z - Z^T L* Z||_F` after rescaling `L^` to trace `D`.
pub fn estimation_error(l_hat: &LaplacianMatrix, l_star: &LaplacianMatrix, fs: &FairnessSystem) -> Result<f64> {
    let d = l_star.num_nodes();
    if l_hat.num_nodes() != d || fs.num_nodes() != d {
        return Err(FgcError::DimensionMismatch(format!(
            "estimate has {} nodes, truth {d}, groups {}",
            l_hat.num_nodes(),
            fs.num_nodes()
        )));
    }
    let normalized = l_hat.normalized_to_trace(d as f64)?;
    Ok((fs.compress(normalized.matrix()) - fs.compress(l_star.matrix())).norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringError {
    pub ce: f64,
    pub misclassified: usize,
    /// `permutation[estimated] = true` label.
    pub permutation: Vec<usize>,
}

/// Fraction of misclassified nodes under the best relabeling, found by
/// optimal assignment on the confusion matrix.
pub fn clustering_error(estimated: &[usize], truth: &[usize], k: usize) -> Result<ClusteringError> {
    if estimated.len() != truth.len() {
        return Err(FgcError::DimensionMismatch(format!(
            "{} estimated labels, {} true labels",
            estimated.len(),
            truth.len()
        )));
    }
    if let Some(bad) = estimated.iter().chain(truth).find(|&&l| l >= k) {
        return Err(FgcError::InvalidParameter(format!("label {bad} outside 0..{k}")));
    }
    if estimated.is_empty() {
        return Ok(ClusteringError {
            ce: 0.0,
            misclassified: 0,
            permutation: (0..k).collect(),
        });
    }
    let mut confusion = Matrix::new(k, k, 0i64);
    for (&e, &t) in estimated.iter().zip(truth) {
        confusion[(e, t)] += 1;
    }
    let (matched, permutation) = kuhn_munkres(&confusion);
    let misclassified = estimated.len() - matched as usize;
    Ok(ClusteringError {
        ce: misclassified as f64 / estimated.len() as f64,
        misclassified,
        permutation,
    })
}

/// Mean over clusters of `min_{s != s'} |D_s ∩ C_k| / |D_s' ∩ C_k|`; a cluster
/// missing any group (or empty) scores 0.
pub fn balance(labels: &[usize], groups: &[usize], k: usize, s: usize) -> Result<(f64, Vec<f64>)> {
    if labels.len() != groups.len() {
        return Err(FgcError::DimensionMismatch(format!(
            "{} labels, {} group labels",
            labels.len(),
            groups.len()
        )));
    }
    if k == 0 {
        return Err(FgcError::InvalidParameter("need at least one cluster".into()));
    }
    let mut counts = vec![vec![0usize; s]; k];
    for (&c, &g) in labels.iter().zip(groups) {
        if c >= k || g >= s {
            return Err(FgcError::InvalidParameter(format!("label ({c}, {g}) out of range")));
        }
        counts[c][g] += 1;
    }
    let per_cluster: Vec<f64> = counts
        .iter()
        .map(|row| {
            let lo = row.iter().copied().min().unwrap_or(0);
            let hi = row.iter().copied().max().unwrap_or(0);
            if lo == 0 {
                0.0
            } else {
                lo as f64 / hi as f64
            }
        })
        .collect();
    let mean = per_cluster.iter().sum::<f64>() / k as f64;
    Ok((mean, per_cluster))
}

/// `sum_k Cut(C_k, V \ C_k) / |C_k|`.
pub fn ratiocut(labels: &[usize], adjacency: &AdjacencyMatrix, k: usize) -> Result<f64> {
    let d = adjacency.num_nodes();
    if labels.len() != d {
        return Err(FgcError::DimensionMismatch(format!(
            "{} labels for {d} nodes",
            labels.len()
        )));
    }
    let mut sizes = vec![0usize; k];
    for &c in labels {
        if c >= k {
            return Err(FgcError::InvalidParameter(format!("label {c} outside 0..{k}")));
        }
        sizes[c] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&n| n == 0) {
        return Err(FgcError::EmptyCluster(empty));
    }
    let mut cuts = vec![0.0; k];
    for i in 0..d {
        for j in 0..d {
            if labels[i] != labels[j] {
                cuts[labels[i]] += adjacency.matrix()[(i, j)];
            }
        }
    }
    Ok(cuts.iter().zip(&sizes).map(|(c, &n)| c / n as f64).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub fs: f64,
    pub ee: f64,
    pub ce: f64,
    pub balance: f64,
    /// `NaN` when some cluster is empty.
    pub ratiocut: f64,
    pub misclassified: usize,
    pub per_cluster_balance: Vec<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "fs,ee,ce,balance,ratiocut,misclassified";

    pub fn evaluate(
        l_hat: &LaplacianMatrix,
        labels: &[usize],
        true_laplacian: &LaplacianMatrix,
        true_clusters: &[usize],
        fs: &FairnessSystem,
        k: usize,
    ) -> Result<Self> {
        let estimate = l_hat.weights().to_adjacency();
        let truth = true_laplacian.weights().to_adjacency();
        let ce = clustering_error(labels, true_clusters, k)?;
        let (bal, per_cluster) = balance(labels, fs.group_labels(), k, fs.num_groups())?;
        let ee = if l_hat.trace() > 0.0 {
            estimation_error(l_hat, true_laplacian, fs)?
        } else {
            f64::NAN
        };
        Ok(Self {
            fs: f1_score(&truth, &estimate, DEFAULT_EDGE_EPS)?,
            ee,
            ce: ce.ce,
            balance: bal,
            ratiocut: ratiocut(labels, &truth, k).unwrap_or(f64::NAN),
            misclassified: ce.misclassified,
            per_cluster_balance: per_cluster,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.fs, self.ee, self.ce, self.balance, self.ratiocut, self.misclassified
        )
    }
}

// ---- estimation bound ----

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub c_d: f64,
    pub c_x: f64,
    pub c_r: f64,
    pub bound: f64,
    /// `||L^ - L*||_F`
    pub lhs: f64,
    pub holds: bool,
}

/// `sqrt(2) (sqrt(D - 1) + 1)`.
pub fn c_d(num_nodes: usize) -> f64 {
    2f64.sqrt() * ((num_nodes as f64 - 1.0).sqrt() + 1.0)
}

/// `Tr(X X^T X X^T) / N^2`.
pub fn c_x(x: &SignalMatrix) -> f64 {
    let n = x.ncols() as f64;
    let gram = x * x.transpose();
    gram.norm_squared() / (n * n)
}

/// Estimation bound for `L^`, the minimizer of
/// `(1/N) Tr(X^T L X) + Reg(L) + mu Tr(U^T L U)` with `U = Z Y^`, against a
/// feasible `L*`.
#[allow(clippy::too_many_arguments)]
pub fn prop2_bound(
    l_hat: &LaplacianMatrix,
    l_star: &LaplacianMatrix,
    x: &SignalMatrix,
    y_hat: &DMatrix<f64>,
    fs: &FairnessSystem,
    mu: f64,
    alpha: f64,
    beta: f64,
) -> Result<BoundReport> {
    let d = l_star.num_nodes();
    if l_hat.num_nodes() != d || x.nrows() != d || y_hat.nrows() != fs.fair_dim() {
        return Err(FgcError::DimensionMismatch("bound inputs disagree in size".into()));
    }
    let n = x.ncols() as f64;
    let k = y_hat.ncols() as f64;
    let cd = c_d(d);
    let cx = c_x(x);
    let grad = regularizer_gradient(&l_star.weights(), alpha, beta)?;
    let cr = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let ztx = fs.z().transpose() * x;
    let coupling = (y_hat.transpose() * &ztx * ztx.transpose() * y_hat).trace();
    let root = (cx + 2.0 * mu / n * coupling + k * mu * mu).max(0.0).sqrt();
    let bound = cr * cd / (2.0 * beta) + cd * cd / (2.0 * beta) * root;
    let lhs = (l_hat.matrix() - l_star.matrix()).norm();
    Ok(BoundReport {
        c_d: cd,
        c_x: cx,
        c_r: cr,
        bound,
        lhs,
        holds: lhs <= bound,
    })
}

// ---- misclassification bound ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundConstant {
    C256,
    C512,
}

impl BoundConstant {
    pub fn value(self) -> f64 {
        match self {
            BoundConstant::C256 => 256.0,
            BoundConstant::C512 => 512.0,
        }
    }
}

/// Graph-estimation term `C (4 + 2 eps) K^2 / (D (c - d)^2) * ee^2`.
pub fn prop1_second_term(
    k: usize,
    d_nodes: usize,
    c: f64,
    d: f64,
    epsilon: f64,
    ee: f64,
    constant: BoundConstant,
) -> Result<f64> {
    if c <= d {
        return Err(FgcError::InvalidParameter(format!("need c > d, got c = {c}, d = {d}")));
    }
    if k == 0 || d_nodes == 0 {
        return Err(FgcError::InvalidParameter("K and D must be positive".into()));
    }
    let k = k as f64;
    Ok(constant.value() * (4.0 + 2.0 * epsilon) * k * k / (d_nodes as f64 * (c - d) * (c - d)) * ee * ee)
}

/// Perturbs every edge slot by `level * scale * |g|`, `g` standard normal,
/// where `scale` is the mean nonzero weight.
pub fn inject_graph_noise(w: &WeightVector, level: f64, seed: u64) -> Result<WeightVector> {
    let nonzero: Vec<f64> = w.values().iter().copied().filter(|&v| v > 0.0).collect();
    let scale = if nonzero.is_empty() {
        1.0
    } else {
        nonzero.iter().sum::<f64>() / nonzero.len() as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = w
        .values()
        .iter()
        .map(|&v| {
            let g: f64 = StandardNormal.sample(&mut rng);
            v + level * scale * g.abs()
        })
        .collect();
    WeightVector::new(values, w.num_nodes())
}

// ---- statistics and small identities ----

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0 + 1.0;
        for &idx in &order[start..end] {
            out[idx] = avg;
        }
        start = end;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman rank correlation with average ranks for ties; 0 for constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(FgcError::DimensionMismatch(format!(
            "need two equal-length samples of size >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(pearson(&ranks(a), &ranks(b)))
}

/// Largest singular value of the degree operator.
pub fn degree_operator_norm(num_nodes: usize) -> f64 {
    let s = degree_operator_matrix(num_nodes);
    let (values, _) = sym_eigen_sorted(&(&s * s.transpose())).expect("finite operator");
    values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Smallest eigenvalue of the regularizer Hessian at `w`.
pub fn regularizer_min_curvature(w: &WeightVector, alpha: f64, beta: f64) -> Result<f64> {
    let h = regularizer_hessian(w, alpha, beta)?;
    let (values, _) = sym_eigen_sorted(&h)?;
    Ok(values[0])
}

/// `Tr(U~^T L U~)` for the size-normalized indicator; equals the ratio cut.
pub fn ratiocut_trace(labels: &[usize], l: &LaplacianMatrix, k: usize) -> f64 {
    let u = normalized_indicator(labels, k);
    trace_product(&u, &(l.matrix() * &u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::pair_index;

    fn adjacency(d: usize, edges: &[(usize, usize)]) -> AdjacencyMatrix {
        let mut w = vec![0.0; d * (d - 1) / 2];
        for &(i, j) in edges {
            w[pair_index(i, j, d)] = 1.0;
        }
        WeightVector::new(w, d).unwrap().to_adjacency()
    }

    #[test]
    fn f1_cases() {
        let a = adjacency(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (0, 2)]);
        assert_eq!(f1_score(&a, &a, DEFAULT_EDGE_EPS).unwrap(), 1.0);
        let b = adjacency(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        assert!((f1_score(&a, &b, DEFAULT_EDGE_EPS).unwrap() - 10.0 / 12.0).abs() < 1e-12);
        let e = adjacency(5, &[]);
        assert_eq!(f1_score(&e, &e, DEFAULT_EDGE_EPS).unwrap(), 1.0);
    }

    #[test]
    fn clustering_error_cases() {
        assert_eq!(clustering_error(&[0, 0, 1, 1], &[0, 0, 1, 1], 2).unwrap().ce, 0.0);
        assert_eq!(clustering_error(&[1, 1, 0, 0], &[0, 0, 1, 1], 2).unwrap().ce, 0.0);
        let r = clustering_error(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.misclassified, 1);
    }

    #[test]
    fn balance_cases() {
        let (b, _) = balance(&[0, 0, 0, 0], &[0, 0, 1, 1], 1, 2).unwrap();
        assert_eq!(b, 1.0);
        let (b, _) = balance(&[0, 0, 0, 0], &[0, 1, 1, 1], 1, 2).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
        let (b, per) = balance(&[0, 0, 1, 1], &[0, 0, 0, 1], 2, 2).unwrap();
        assert_eq!(per, vec![0.0, 1.0]);
        assert_eq!(b, 0.5);
    }

    #[test]
    fn ratiocut_cases() {
        let two = adjacency(4, &[(0, 1), (2, 3)]);
        assert_eq!(ratiocut(&[0, 0, 1, 1], &two, 2).unwrap(), 0.0);
        let path = adjacency(4, &[(0, 1), (1, 2), (2, 3)]);
        assert!((ratiocut(&[0, 0, 1, 1], &path, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            ratiocut(&[0, 0, 0, 0], &path, 2),
            Err(FgcError::EmptyCluster(1))
        ));
        let l = path.to_laplacian();
        assert!((ratiocut_trace(&[0, 0, 1, 1], &l, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimation_error_is_scale_free() {
        let l = adjacency(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).to_laplacian();
        let l = l.normalized_to_trace(4.0).unwrap();
        let fs = FairnessSystem::new(&[0, 1, 0, 1], 2).unwrap();
        assert!(estimation_error(&l, &l, &fs).unwrap() < 1e-12);
        assert!(estimation_error(&l.scaled(2.0), &l, &fs).unwrap() < 1e-12);
        let zero = WeightVector::zeros(4).to_laplacian();
        assert!(estimation_error(&zero, &l, &fs).is_err());
    }

    #[test]
    fn bound_constants() {
        assert!((c_d(2) - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        let x = DMatrix::identity(5, 5);
        assert!((c_x(&x) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn misclassification_term() {
        let v = prop1_second_term(4, 192, 0.15, 0.05, 0.0, 1.0, BoundConstant::C256).unwrap();
        assert!((v - 8533.333333333334).abs() < 1e-6);
        assert_eq!(
            prop1_second_term(4, 192, 0.15, 0.05, 0.0, 0.0, BoundConstant::C512).unwrap(),
            0.0
        );
        let a = prop1_second_term(3, 50, 0.3, 0.1, 0.5, 0.7, BoundConstant::C512).unwrap();
        let b = prop1_second_term(3, 50, 0.3, 0.1, 0.5, 1.4, BoundConstant::C512).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-9 * b);
        assert!(prop1_second_term(4, 192, 0.05, 0.05, 0.0, 1.0, BoundConstant::C256).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
