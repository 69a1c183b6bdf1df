//! Group-fairness constraint `F^T U = 0` and the nullspace basis `Z`.
//!
//! Column `s` of `F` is the mean-centred indicator of sensitive group `s`
//! (the last group is dropped, it is implied by the others). An embedding
//! `U = Z Y` satisfies the constraint for every `Y`.

use nalgebra::DMatrix;

use crate::error::{FgcError, Result};

#[derive(Debug, Clone)]
pub struct FairnessSystem {
    f: DMatrix<f64>,
    z: DMatrix<f64>,
    group_labels: Vec<usize>,
    group_sizes: Vec<usize>,
}

impl FairnessSystem {
    /// Builds `F` and `Z` from zero-based group labels in `0..num_groups`.
    pub fn new(group_labels: &[usize], num_groups: usize) -> Result<Self> {
        let d = group_labels.len();
        if num_groups == 0 {
            return Err(FgcError::InvalidParameter("need at least one group".into()));
        }
        if d == 0 {
            return Err(FgcError::InvalidShape("no nodes".into()));
        }
        let mut sizes = vec![0usize; num_groups];
        for (node, &g) in group_labels.iter().enumerate() {
            if g >= num_groups {
                return Err(FgcError::InvalidParameter(format!(
                    "node {node} has group {g} but only {num_groups} groups exist"
                )));
            }
            sizes[g] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&n| n == 0) {
            return Err(FgcError::EmptyGroup(empty));
        }

        let f = DMatrix::from_fn(d, num_groups - 1, |i, s| {
            let member = if group_labels[i] == s { 1.0 } else { 0.0 };
            member - sizes[s] as f64 / d as f64
        });
        let (q, rank) = householder_full_q(&f);
        if rank != num_groups - 1 {
            return Err(FgcError::Numerical(format!(
                "constraint matrix has rank {rank}, expected {}",
                num_groups - 1
            )));
        }
        let z = q.columns(rank, d - rank).into_owned();
        Ok(Self {
            f,
            z,
            group_labels: group_labels.to_vec(),
            group_sizes: sizes,
        })
    }

    /// Infers the number of groups as `max(label) + 1`.
    pub fn from_labels(group_labels: &[usize]) -> Result<Self> {
        let s = group_labels.iter().max().map_or(0, |m| m + 1);
        Self::new(group_labels, s)
    }

    pub fn num_nodes(&self) -> usize {
        self.group_labels.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn group_labels(&self) -> &[usize] {
        &self.group_labels
    }

    pub fn group_sizes(&self) -> &[usize] {
        &self.group_sizes
    }

    /// Dimension of the fair subspace, `D - S + 1`.
    pub fn fair_dim(&self) -> usize {
        self.z.ncols()
    }

    /// The fair graph `Z^T M Z`.
    pub fn compress(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let zt_m = self.z.transpose() * m;
        let mut out = zt_m * &self.z;
        symmetrize(&mut out);
        out
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Householder QR with column pivoting. Returns the full `D x D` orthogonal
/// factor and the numerical rank (threshold `1e-10 * ||A||_F`).
fn householder_full_q(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (rows, cols) = a.shape();
    let mut work = a.clone();
    let tol = 1e-10 * a.norm();
    let mut reflectors: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut rank = 0;

    for k in 0..cols.min(rows) {
        let (pivot, pivot_norm) = (k..cols)
            .map(|c| (c, work.view((k, c), (rows - k, 1)).norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_norm <= tol || pivot_norm == 0.0 {
            break;
        }
        work.swap_columns(k, pivot);

        let x: Vec<f64> = (k..rows).map(|i| work[(i, k)]).collect();
        let alpha = if x[0] >= 0.0 { -pivot_norm } else { pivot_norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            v.iter_mut().for_each(|t| *t /= vnorm);
            for c in k..cols {
                let dot: f64 = (k..rows).map(|i| v[i - k] * work[(i, c)]).sum();
                for i in k..rows {
                    work[(i, c)] -= 2.0 * v[i - k] * dot;
                }
            }
            reflectors.push((k, v));
        }
        rank += 1;
    }

    // Q = H_0 H_1 ... H_{r-1}, applied to the identity from the right-most factor.
    let mut q = DMatrix::identity(rows, rows);
    for (k, v) in reflectors.iter().rev() {
        for c in 0..rows {
            let dot: f64 = (*k..rows).map(|i| v[i - k] * q[(i, c)]).sum();
            if dot != 0.0 {
                for i in *k..rows {
                    q[(i, c)] -= 2.0 * v[i - k] * dot;
                }
            }
        }
    }
    (q, rank)
}

/// Whether every nonempty cluster holds each group in its global proportion,
/// tested through the equivalent linear condition `F^T U~ = 0` where `U~` is
/// the size-normalized cluster indicator.
pub fn check_lemma1(clusters: &[usize], num_clusters: usize, fs: &FairnessSystem) -> bool {
    max_constraint_violation(clusters, num_clusters, fs) <= 1e-9
}

/// `max |F^T U~|` for the normalized indicator of `clusters`.
pub fn max_constraint_violation(clusters: &[usize], num_clusters: usize, fs: &FairnessSystem) -> f64 {
    let u = normalized_indicator(clusters, num_clusters);
    (fs.f().transpose() * u).amax()
}

/// `U~[i, k] = 1/sqrt(|C_k|)` if node `i` is in cluster `k`. Empty clusters give zero columns.
pub fn normalized_indicator(clusters: &[usize], num_clusters: usize) -> DMatrix<f64> {
    let mut sizes = vec![0usize; num_clusters];
    for &c in clusters {
        sizes[c] += 1;
    }
    DMatrix::from_fn(clusters.len(), num_clusters, |i, k| {
        if clusters[i] == k {
            1.0 / (sizes[k] as f64).sqrt()
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_system_invariants(fs: &FairnessSystem) {
        let d = fs.num_nodes();
        let z = fs.z();
        assert_eq!(z.ncols(), d - fs.num_groups() + 1);
        let ztz = z.transpose() * z;
        assert!((ztz - DMatrix::identity(z.ncols(), z.ncols())).amax() <= 1e-10);
        if fs.f().ncols() > 0 {
            assert!((fs.f().transpose() * z).amax() <= 1e-10);
            for s in 0..fs.f().ncols() {
                assert!(fs.f().column(s).sum().abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn two_groups_of_two() {
        let fs = FairnessSystem::new(&[0, 0, 1, 1], 2).unwrap();
        assert_eq!(fs.f().ncols(), 1);
        let col: Vec<f64> = fs.f().column(0).iter().copied().collect();
        assert_eq!(col, vec![0.5, 0.5, -0.5, -0.5]);
        assert_system_invariants(&fs);
    }

    #[test]
    fn single_group_gives_identity_basis() {
        let fs = FairnessSystem::new(&[0; 5], 1).unwrap();
        assert_eq!(fs.f().ncols(), 0);
        assert_eq!(fs.z(), &DMatrix::identity(5, 5));
    }

    #[test]
    fn empty_group_is_rejected() {
        assert!(matches!(
            FairnessSystem::new(&[0, 0, 2, 2], 3),
            Err(FgcError::EmptyGroup(1))
        ));
    }

    #[test]
    fn balanced_indicator_satisfies_constraint() {
        let fs = FairnessSystem::new(&[0, 0, 1, 1], 2).unwrap();
        // clusters {1,3} and {2,4} in one-based node numbering
        let clusters = [0, 1, 0, 1];
        assert!(max_constraint_violation(&clusters, 2, &fs) == 0.0);
        assert!(check_lemma1(&clusters, 2, &fs));
        assert!(!check_lemma1(&[0, 0, 1, 1], 2, &fs));
    }

    #[test]
    fn span_of_f_and_z_is_full() {
        let labels = [0, 1, 2, 0, 1, 2, 0, 0, 1];
        let fs = FairnessSystem::new(&labels, 3).unwrap();
        assert_system_invariants(&fs);
        let mut both = DMatrix::zeros(9, 9);
        both.columns_mut(0, 2).copy_from(fs.f());
        both.columns_mut(2, 7).copy_from(fs.z());
        let rank = both
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|s| **s > 1e-10)
            .count();
        assert_eq!(rank, 9);
    }

    proptest! {
        #[test]
        fn invariants_on_random_labels(labels in proptest::collection::vec(0usize..4, 4..30)) {
            let s = labels.iter().max().unwrap() + 1;
            match FairnessSystem::new(&labels, s) {
                Ok(fs) => assert_system_invariants(&fs),
                Err(FgcError::EmptyGroup(_)) => {}
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }
}
