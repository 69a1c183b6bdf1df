use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FgcError, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub(crate) fn sym_eigen_sorted(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FgcError::Numerical("non-finite entry in symmetric matrix".into()));
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Largest-magnitude entry (first on ties).
pub(crate) fn leading_entry(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best })
}

/// Flips each column so that its largest-magnitude entry is positive.
pub(crate) fn pin_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        if leading_entry(col.iter().copied()) < 0.0 {
            col.neg_mut();
        }
    }
}

/// Thin QR orthonormalization with `R` diagonal made nonnegative.
pub(crate) fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..q.ncols() {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

pub(crate) fn random_orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&g)
}

/// `max |M^T M - I|`.
pub(crate) fn orthogonality_drift(m: &DMatrix<f64>) -> f64 {
    let k = m.ncols();
    (m.transpose() * m - DMatrix::identity(k, k)).amax()
}

pub(crate) fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
