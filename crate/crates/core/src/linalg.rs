//! Dense linear-algebra helpers shared by the samplers and closed forms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Diagonal jitter applied once before a Cholesky factorisation is declared failed.
pub const CHOLESKY_JITTER: f64 = 1e-8;

/// Cholesky of a symmetric matrix, retrying once with `jitter` added to the diagonal.
pub fn cholesky_jittered(m: DMatrix<f64>, jitter: f64, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let mut jittered = m;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("{what} ({n}x{n}) even after {jitter:e} jitter"))
    })
}

/// Cholesky of a symmetric matrix that also rejects numerically singular
/// input: every squared pivot must exceed `1e-12` times the largest diagonal
/// entry.
pub fn cholesky_full_rank(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = m.diagonal().iter().copied().fold(0.0_f64, f64::max);
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * scale);
    ok.then_some(chol)
}

/// Eigen-decomposition `m = Q diag(values) Q'` of a symmetric matrix with
/// eigenvalues sorted in descending order and each eigenvector's sign fixed so
/// that its largest-magnitude entry is positive.
///
/// The sign and order conventions make the decomposition equivariant under
/// simultaneous row/column permutations of `m` (absent eigenvalue ties).
pub fn sym_eigen_canonical(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[j];
        let col = eig.eigenvectors.column(j);
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bi, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(k, &(col * sign));
    }
    (values, vectors)
}

/// Columns of `x` selected by `idx`, in that order.
pub fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &x.column(j));
    }
    out
}

/// Column means of `x`.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Horizontal concatenation `[a b]`.
pub fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `[v X]`: a vector prepended as the first column of `x`.
pub fn prepend_column(v: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols() + 1);
    out.set_column(0, v);
    out.columns_mut(1, x.ncols()).copy_from(x);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_reconstructs_and_sorts() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let (vals, q) = sym_eigen_canonical(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let back = &q * DMatrix::from_diagonal(&vals) * q.transpose();
        assert!((back - &m).abs().max() < 1e-12);
        for col in q.column_iter() {
            let big = col
                .iter()
                .cloned()
                .fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn eigen_is_permutation_equivariant() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        // swap rows/cols 0 and 2
        let perm = [2usize, 1, 0];
        let mp = DMatrix::from_fn(3, 3, |i, j| m[(perm[i], perm[j])]);
        let (v1, q1) = sym_eigen_canonical(&m);
        let (v2, q2) = sym_eigen_canonical(&mp);
        assert!((v1 - v2).abs().max() < 1e-12);
        for i in 0..3 {
            for k in 0..3 {
                assert!((q2[(i, k)] - q1[(perm[i], k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jitter_rescues_semidefinite_then_fails_on_indefinite() {
        let psd = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_jittered(psd, 1e-8, "psd").is_ok());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            cholesky_jittered(indef, 1e-8, "indef"),
            Err(Error::NotPositiveDefinite(_))
        ));
    }
}
