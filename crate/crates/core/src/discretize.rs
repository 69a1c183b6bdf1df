//! Turning a continuous embedding into cluster labels.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FgcError, Result};
use crate::linalg::{leading_entry, random_orthonormal};

/// One-hot `D x K` matrix for zero-based labels.
pub fn indicator(labels: &[usize], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), k, |i, c| if labels[i] == c { 1.0 } else { 0.0 })
}

/// Orthogonal `R` maximizing `Tr(Q^T U R)`: `R = Theta_R Theta_L^T` from
/// `Q^T U = Theta_L Sigma Theta_R^T`.
pub fn procrustes_rotation(q: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.shape() != u.shape() {
        return Err(FgcError::DimensionMismatch(format!(
            "Q is {}x{}, U is {}x{}",
            q.nrows(),
            q.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    let m = q.transpose() * u;
    let svd = m.svd(true, true);
    let (Some(mut theta_l), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(FgcError::Numerical("SVD did not return singular vectors".into()));
    };
    let mut theta_r = v_t.transpose();
    // left/right pairs flip together
    for c in 0..theta_l.ncols() {
        if leading_entry(theta_l.column(c).iter().copied()) < 0.0 {
            theta_l.column_mut(c).neg_mut();
            theta_r.column_mut(c).neg_mut();
        }
    }
    Ok(theta_r * theta_l.transpose())
}

/// Row-wise argmax of `U R`; ties go to the smallest column.
pub fn discretize_q(u: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Vec<usize>> {
    if u.ncols() != r.nrows() || r.nrows() != r.ncols() {
        return Err(FgcError::DimensionMismatch(format!(
            "U has {} columns, R is {}x{}",
            u.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    let ur = u * r;
    Ok(ur
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// `||Q - U R||_F^2`.
pub fn rotation_residual(labels: &[usize], u: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    let q = indicator(labels, u.ncols());
    (q - u * r).norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationFit {
    pub labels: Vec<usize>,
    pub rotation: DMatrix<f64>,
    pub residual: f64,
}

/// Alternates the rotation and label updates from `r0` until the labels stop
/// changing or `max_iter` sweeps. The residual never increases.
pub fn refine_rotation(u: &DMatrix<f64>, r0: &DMatrix<f64>, max_iter: usize) -> Result<RotationFit> {
    let k = u.ncols();
    let mut r = r0.clone();
    let mut labels = discretize_q(u, &r)?;
    for _ in 0..max_iter {
        r = procrustes_rotation(&indicator(&labels, k), u)?;
        let next = discretize_q(u, &r)?;
        if next == labels {
            break;
        }
        labels = next;
    }
    let residual = rotation_residual(&labels, u, &r);
    Ok(RotationFit {
        labels,
        rotation: r,
        residual,
    })
}

/// Spectral rotation from the identity plus `restarts` random orthogonal
/// starts; keeps the fit with the smallest residual (earliest on ties).
pub fn spectral_rotation(u: &DMatrix<f64>, restarts: usize, seed: u64, max_iter: usize) -> Result<RotationFit> {
    let k = u.ncols();
    let mut best = refine_rotation(u, &DMatrix::identity(k, k), max_iter)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        let r0 = random_orthonormal(k, k, &mut rng);
        let fit = refine_rotation(u, &r0, max_iter)?;
        if fit.residual < best.residual {
            best = fit;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansFit {
    pub labels: Vec<usize>,
    pub centers: DMatrix<f64>,
    pub wcss: f64,
}

fn sq_dist(rows: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    rows.row(i)
        .iter()
        .zip(centers.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_seed<R: Rng>(rows: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = rows.nrows();
    let mut centers = DMatrix::zeros(k, rows.ncols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&rows.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(rows, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&rows.row(pick));
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(rows, i, &centers, c));
        }
    }
    centers
}

fn lloyd_run(rows: &DMatrix<f64>, mut centers: DMatrix<f64>, max_iter: usize) -> KmeansFit {
    let (n, dim) = rows.shape();
    let k = centers.nrows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(rows, i, &centers, c);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += rows.row(i);
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed at the point farthest from its own center
                let far = (0..n)
                    .map(|i| (i, sq_dist(rows, i, &centers, labels[i])))
                    .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                centers.row_mut(c).copy_from(&rows.row(far));
                labels[far] = c;
                changed = true;
            } else {
                let mean = sums.row(c) / counts[c] as f64;
                centers.row_mut(c).copy_from(&mean);
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(rows, i, &centers, c))
        .sum();
    KmeansFit { labels, centers, wcss }
}

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` runs by WCSS.
pub fn lloyd_kmeans(rows: &DMatrix<f64>, k: usize, seed: u64, restarts: usize, max_iter: usize) -> Result<KmeansFit> {
    if k == 0 || rows.nrows() < k {
        return Err(FgcError::InvalidParameter(format!(
            "cannot form {k} clusters from {} points",
            rows.nrows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansFit> = None;
    for _ in 0..restarts.max(1) {
        let centers = plus_plus_seed(rows, k, &mut rng);
        let fit = lloyd_run(rows, centers, max_iter);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn identity_alignment() {
        let q = DMatrix::identity(3, 3);
        let r = procrustes_rotation(&q, &q).unwrap();
        assert!((r - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn rotation_is_undone() {
        let theta = 0.7;
        let q = DMatrix::identity(2, 2);
        let r = procrustes_rotation(&q, &rot(theta)).unwrap();
        assert!((&r - rot(-theta)).amax() < 1e-12);
        let best = (rot(theta) * &r).trace();
        for s in 0..360 {
            let other = (rot(theta) * rot(s as f64 * std::f64::consts::PI / 180.0)).trace();
            assert!(best >= other - 1e-12);
        }
    }

    #[test]
    fn argmax_rows_and_ties() {
        let u = DMatrix::from_row_slice(2, 2, &[0.1, 0.9, 0.5, 0.5]);
        assert_eq!(discretize_q(&u, &DMatrix::identity(2, 2)).unwrap(), vec![1, 0]);
    }

    #[test]
    fn refinement_never_increases_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_orthonormal(30, 4, &mut rng);
        let r0 = random_orthonormal(4, 4, &mut rng);
        let start = rotation_residual(&discretize_q(&u, &r0).unwrap(), &u, &r0);
        let fit = refine_rotation(&u, &r0, 100).unwrap();
        assert!(fit.residual <= start + 1e-12);
    }

    #[test]
    fn kmeans_small_cases() {
        let rows = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, 5.0, 5.1]);
        let fit = lloyd_kmeans(&rows, 2, 1, 3, 100).unwrap();
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[2], fit.labels[3]);
        assert_ne!(fit.labels[0], fit.labels[2]);
        let one = lloyd_kmeans(&rows, 1, 1, 1, 100).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        assert!(lloyd_kmeans(&rows, 5, 1, 1, 10).is_err());
    }

    #[test]
    fn kmeans_matches_enumeration() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let rows = DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>() * 4.0);
            let fit = lloyd_kmeans(&rows, 2, seed, 10, 100).unwrap();
            let mut best = f64::INFINITY;
            for mask in 1u32..(1 << 8) - 1 {
                let labels: Vec<usize> = (0..8).map(|i| ((mask >> i) & 1) as usize).collect();
                let mut w = 0.0;
                for c in 0..2 {
                    let members: Vec<usize> = (0..8).filter(|&i| labels[i] == c).collect();
                    let mean = members
                        .iter()
                        .fold(nalgebra::RowDVector::zeros(2), |acc, &i| acc + rows.row(i))
                        / members.len() as f64;
                    w += members
                        .iter()
                        .map(|&i| (rows.row(i) - &mean).norm_squared())
                        .sum::<f64>();
                }
                best = best.min(w);
            }
            assert!(fit.wcss <= best + 1e-9, "{} vs {best}", fit.wcss);
        }
    }
}
