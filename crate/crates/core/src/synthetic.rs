//! Stochastic block model with sensitive groups, and smooth Gaussian signals
//! drawn from the resulting graph.
//!
//! Edge probabilities depend on whether two nodes share a cluster and whether
//! they share a group:
//!
//! | same cluster | same group | probability |
//! |--------------|------------|-------------|
//! | yes          | yes        | `a`         |
//! | no           | yes        | `b`         |
//! | yes          | no         | `c`         |
//! | no           | no         | `d`         |

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FgcError, Result};
use crate::graph::{pairs, LaplacianMatrix, SignalMatrix, WeightVector};

pub const MAX_GENERATION_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct VsbmParams {
    pub num_nodes: usize,
    pub num_clusters: usize,
    pub num_groups: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Fraction of every cluster that belongs to each group. Empty means uniform.
    pub group_fractions: Vec<f64>,
    pub weight_range: (f64, f64),
    /// Randomly permute node indices after the block layout.
    pub shuffle: bool,
}

impl Default for VsbmParams {
    fn default() -> Self {
        Self {
            num_nodes: 192,
            num_clusters: 4,
            num_groups: 2,
            a: 0.8,
            b: 0.2,
            c: 0.15,
            d: 0.05,
            group_fractions: Vec::new(),
            weight_range: (0.1, 2.0),
            shuffle: true,
        }
    }
}

impl VsbmParams {
    pub fn fractions(&self) -> Vec<f64> {
        if self.group_fractions.is_empty() {
            vec![1.0 / self.num_groups as f64; self.num_groups]
        } else {
            self.group_fractions.clone()
        }
    }

    /// `a > b > c > d`, the ordering the misclassification bound assumes.
    pub fn is_strictly_ordered(&self) -> bool {
        self.a > self.b && self.b > self.c && self.c > self.d
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(FgcError::InvalidParameter(msg));
        if self.num_nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.num_nodes));
        }
        if self.num_clusters == 0 || self.num_groups == 0 {
            return bad("cluster and group counts must be positive".into());
        }
        for (name, p) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {name} = {p} is outside [0, 1]"));
            }
        }
        let (lo, hi) = self.weight_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("weight range [{lo}, {hi}] is invalid"));
        }
        let fr = self.fractions();
        if fr.len() != self.num_groups {
            return bad(format!(
                "{} group fractions given for {} groups",
                fr.len(),
                self.num_groups
            ));
        }
        if fr
            .iter()
            .any(|z| !(*z > 0.0 && *z < 1.0 || (self.num_groups == 1 && *z == 1.0)))
        {
            return bad("group fractions must lie in (0, 1)".into());
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad("group fractions must sum to 1".into());
        }
        if self.num_nodes % self.num_clusters != 0 {
            return bad(format!(
                "{} clusters do not divide {} nodes",
                self.num_clusters, self.num_nodes
            ));
        }
        self.group_counts_per_cluster().map(|_| ())
    }

    fn group_counts_per_cluster(&self) -> Result<Vec<usize>> {
        let m = (self.num_nodes / self.num_clusters) as f64;
        self.fractions()
            .iter()
            .map(|z| {
                let n = z * m;
                if (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
                    Err(FgcError::InvalidParameter(format!(
                        "group fraction {z} does not give a whole number of nodes per cluster of size {m}"
                    )))
                } else {
                    Ok(n.round() as usize)
                }
            })
            .collect()
    }

    /// Probability that nodes with the given memberships are connected.
    pub fn edge_probability(&self, same_cluster: bool, same_group: bool) -> f64 {
        match (same_cluster, same_group) {
            (true, true) => self.a,
            (false, true) => self.b,
            (true, false) => self.c,
            (false, false) => self.d,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub cluster_labels: Vec<usize>,
    pub group_labels: Vec<usize>,
    pub num_clusters: usize,
    pub num_groups: usize,
    /// Trace-normalized edge weights.
    pub weights: WeightVector,
    pub laplacian: LaplacianMatrix,
}

/// Deterministic block layout: cluster-major, groups interleaved inside each cluster.
pub fn block_layout(params: &VsbmParams) -> Result<(Vec<usize>, Vec<usize>)> {
    params.validate()?;
    let counts = params.group_counts_per_cluster()?;
    let m = params.num_nodes / params.num_clusters;
    let mut clusters = Vec::with_capacity(params.num_nodes);
    let mut groups = Vec::with_capacity(params.num_nodes);
    for k in 0..params.num_clusters {
        let mut remaining = counts.clone();
        let mut placed = 0;
        while placed < m {
            for (s, left) in remaining.iter_mut().enumerate() {
                if *left > 0 {
                    clusters.push(k);
                    groups.push(s);
                    *left -= 1;
                    placed += 1;
                }
            }
        }
    }
    Ok((clusters, groups))
}

/// Draws a graph. The same `(params, seed)` always gives the same graph.
pub fn vsbm_generate(params: &VsbmParams, seed: u64) -> Result<GroundTruth> {
    let (mut clusters, mut groups) = block_layout(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if params.shuffle {
        let mut perm: Vec<usize> = (0..params.num_nodes).collect();
        perm.shuffle(&mut rng);
        clusters = perm.iter().map(|&p| clusters[p]).collect();
        groups = perm.iter().map(|&p| groups[p]).collect();
    }
    let d = params.num_nodes;
    let (lo, hi) = params.weight_range;

    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let values: Vec<f64> = pairs(d)
            .map(|(i, j)| {
                let p = params.edge_probability(clusters[i] == clusters[j], groups[i] == groups[j]);
                let u: f64 = rng.random();
                if u < p {
                    lo + (hi - lo) * rng.random::<f64>()
                } else {
                    0.0
                }
            })
            .collect();
        let w = WeightVector::new(values, d)?;
        if w.degrees().iter().any(|&deg| deg <= 0.0) {
            continue;
        }
        // Tr(L) = sum of degrees = 2 * sum(w)
        let total: f64 = w.values().iter().sum();
        let weights = w.scaled(d as f64 / (2.0 * total));
        let laplacian = weights.to_laplacian();
        return Ok(GroundTruth {
            cluster_labels: clusters,
            group_labels: groups,
            num_clusters: params.num_clusters,
            num_groups: params.num_groups,
            weights,
            laplacian,
        });
    }
    Err(FgcError::IsolatedNode {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

/// Expected number of edges for a given node layout.
pub fn expected_edge_count(params: &VsbmParams, clusters: &[usize], groups: &[usize]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (i, j) in pairs(clusters.len()) {
        let p = params.edge_probability(clusters[i] == clusters[j], groups[i] == groups[j]);
        mean += p;
        var += p * (1.0 - p);
    }
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Explicit per-node standard deviations.
    PerNode(Vec<f64>),
    /// Each node's standard deviation drawn from `U(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::Uniform { lo: 0.0, hi: 0.0 }
    }

    fn resolve(&self, num_nodes: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        match self {
            NoiseSpec::PerNode(s) => {
                if s.len() != num_nodes {
                    return Err(FgcError::DimensionMismatch(format!(
                        "{} noise levels for {num_nodes} nodes",
                        s.len()
                    )));
                }
                if s.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(FgcError::InvalidParameter("noise levels must be >= 0".into()));
                }
                Ok(s.clone())
            }
            &NoiseSpec::Uniform { lo, hi } => {
                if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(FgcError::InvalidParameter(format!(
                        "noise range [{lo}, {hi}] is invalid"
                    )));
                }
                Ok((0..num_nodes).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
            }
        }
    }
}

/// Moore-Penrose pseudo-inverse of a Laplacian, eigenvalues below
/// `1e-10 * lambda_max` treated as zero.
pub fn laplacian_pinv(l: &LaplacianMatrix) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(l.matrix().clone());
    let cutoff = 1e-10 * eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|lam| if lam > cutoff { 1.0 / lam } else { 0.0 });
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&inv) * v.transpose()
}

/// Covariance `L^+ + diag(sigma^2)` of the signal model.
pub fn signal_covariance(l: &LaplacianMatrix, sigmas: &[f64]) -> DMatrix<f64> {
    let mut cov = laplacian_pinv(l);
    for (i, s) in sigmas.iter().enumerate() {
        cov[(i, i)] += s * s;
    }
    cov
}

/// Draws `n` i.i.d. columns from `N(0, L^+ + Sigma_e)`.
pub fn sample_signals(laplacian: &LaplacianMatrix, n: usize, noise: &NoiseSpec, seed: u64) -> Result<SignalMatrix> {
    if n == 0 {
        return Err(FgcError::InvalidParameter("need at least one sample".into()));
    }
    let d = laplacian.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigmas = noise.resolve(d, &mut rng)?;
    let cov = signal_covariance(laplacian, &sigmas);

    let eig = SymmetricEigen::new(cov);
    let min = eig.eigenvalues.min();
    if min < -1e-8 {
        return Err(FgcError::Numerical(format!(
            "signal covariance is not PSD (min eigenvalue {min:e})"
        )));
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&root);

    let mut z = Vec::with_capacity(d * n);
    for _ in 0..d * n {
        z.push(rng.sample::<f64, _>(StandardNormal));
    }
    let z = DMatrix::from_vec(d, n, z);
    Ok(factor * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(a: f64, b: f64, c: f64, d: f64) -> VsbmParams {
        VsbmParams {
            num_nodes: 12,
            num_clusters: 2,
            num_groups: 2,
            a,
            b,
            c,
            d,
            ..Default::default()
        }
    }

    #[test]
    fn complete_graph_when_all_probabilities_are_one() {
        let gt = vsbm_generate(&small(1.0, 1.0, 1.0, 1.0), 3).unwrap();
        assert_eq!(gt.weights.edge_count(0.0), 66);
        assert!((gt.laplacian.trace() - 12.0).abs() < 1e-10);
    }

    #[test]
    fn empty_probabilities_fail_with_isolated_nodes() {
        assert!(matches!(
            vsbm_generate(&small(0.0, 0.0, 0.0, 0.0), 3),
            Err(FgcError::IsolatedNode { attempts: 20 })
        ));
    }

    #[test]
    fn layout_is_balanced() {
        let p = VsbmParams {
            num_nodes: 24,
            num_clusters: 4,
            num_groups: 3,
            ..Default::default()
        };
        let gt = vsbm_generate(&p, 11).unwrap();
        for k in 0..4 {
            for s in 0..3 {
                let n = (0..24)
                    .filter(|&i| gt.cluster_labels[i] == k && gt.group_labels[i] == s)
                    .count();
                assert_eq!(n, 2);
            }
        }
    }

    #[test]
    fn uneven_fractions() {
        let p = VsbmParams {
            num_nodes: 16,
            num_clusters: 2,
            num_groups: 2,
            group_fractions: vec![0.25, 0.75],
            ..Default::default()
        };
        let (clusters, groups) = block_layout(&p).unwrap();
        assert_eq!(clusters.iter().filter(|&&c| c == 0).count(), 8);
        assert_eq!(groups.iter().filter(|&&g| g == 0).count(), 4);

        let bad = VsbmParams {
            group_fractions: vec![0.3, 0.7],
            ..p
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(small(1.5, 0.2, 0.1, 0.0).validate().is_err());
        let p = VsbmParams {
            num_nodes: 10,
            num_clusters: 3,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn same_seed_same_graph_and_signals() {
        let p = VsbmParams {
            num_nodes: 24,
            ..Default::default()
        };
        let a = vsbm_generate(&p, 5).unwrap();
        let b = vsbm_generate(&p, 5).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.cluster_labels, b.cluster_labels);
        let noise = NoiseSpec::Uniform { lo: 0.0, hi: 0.2 };
        let xa = sample_signals(&a.laplacian, 7, &noise, 9).unwrap();
        let xb = sample_signals(&b.laplacian, 7, &noise, 9).unwrap();
        assert_eq!(xa, xb);
        let c = vsbm_generate(&p, 6).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn pinv_of_path() {
        let l = WeightVector::new(vec![1.0, 0.0, 1.0], 3).unwrap().to_laplacian();
        let pinv = laplacian_pinv(&l);
        let back = l.matrix() * &pinv * l.matrix();
        assert!((back - l.matrix()).amax() < 1e-12);
    }

    #[test]
    fn per_node_noise_length_is_checked() {
        let l = WeightVector::new(vec![1.0], 2).unwrap().to_laplacian();
        assert!(sample_signals(&l, 3, &NoiseSpec::PerNode(vec![0.1]), 0).is_err());
        assert!(sample_signals(&l, 0, &NoiseSpec::none(), 0).is_err());
    }
}
