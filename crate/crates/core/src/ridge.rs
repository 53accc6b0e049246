//! Ridge regression with an unpenalised treatment coefficient, and the exact
//! conditional bias and variance of its treatment coefficient.
//!
//! With `ρ̂ = X'D / D'D`, `ξ̂ = X − Dρ̂'` and `R = ξ̂'ξ̂`:
//!
//! ```text
//! Bias(α̂_λ | X, D) = ρ̂'[I − (R + λI)⁻¹R] β
//! Var(α̂_λ | X, D)  = σ²[(D'D)⁻¹ + ρ̂'(R + λI)⁻¹R(R + λI)⁻¹ρ̂]
//! ```
//!
//! `R` is formed as `X'X − (D'D)ρ̂ρ̂'`, a rank-one downdate, so the n×n
//! projection onto D is never materialised.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky_full_rank;
use crate::model::Dataset;

/// Everything the closed forms say about α̂_λ for one `(X, D, β, λ, σ²)`.
#[derive(Debug, Clone)]
pub struct RidgeAudit {
    pub alpha_hat: f64,
    pub bias: f64,
    pub variance: f64,
    pub lambda: f64,
    pub rho_hat: DVector<f64>,
    pub r_matrix: DMatrix<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

/// Penalised Gram matrix `[[D'D, D'X], [X'D, X'X + λI]]`.
fn penalized_gram(x: &DMatrix<f64>, d: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let p = x.ncols();
    let xd = x.tr_mul(d);
    let mut m = DMatrix::zeros(p + 1, p + 1);
    m[(0, 0)] = d.dot(d);
    m.view_mut((1, 0), (p, 1)).copy_from(&xd);
    m.view_mut((0, 1), (1, p)).copy_from(&xd.transpose());
    let mut xtx = x.tr_mul(x);
    for j in 0..p {
        xtx[(j, j)] += lambda;
    }
    m.view_mut((1, 1), (p, p)).copy_from(&xtx);
    m
}

/// Treatment coefficient of the ridge fit of `y` on `(d, x)` with penalty `λ` on `x` only.
pub fn ridge_point(data: &Dataset, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let (n, p) = (data.n(), data.p());
    if lambda == 0.0 && p + 1 > n {
        return Err(Error::RankDeficient(format!(
            "lambda = 0 needs p + 1 <= n for a unique least-squares solution (p = {p}, n = {n})"
        )));
    }
    let m = penalized_gram(&data.x, &data.d, lambda);
    let mut rhs = DVector::zeros(p + 1);
    rhs[0] = data.d.dot(&data.y);
    rhs.rows_mut(1, p).copy_from(&data.x.tr_mul(&data.y));
    let chol = cholesky_full_rank(m).ok_or_else(|| {
        Error::RankDeficient(format!(
            "penalised Gram matrix of (d, x) is singular at lambda = {lambda}; \
             d or some control column is (nearly) collinear with the others"
        ))
    })?;
    Ok(chol.solve(&rhs)[0])
}

struct Partial {
    dd: f64,
    rho: DVector<f64>,
    r: DMatrix<f64>,
}

fn partial_out(x: &DMatrix<f64>, d: &DVector<f64>) -> Result<Partial> {
    let dd = d.dot(d);
    if !(dd > 0.0) {
        return Err(Error::DegenerateData(
            "treatment has zero variation (D'D = 0)".into(),
        ));
    }
    let xd = x.tr_mul(d);
    let rho = &xd / dd;
    let mut r = x.tr_mul(x);
    r.ger(-dd, &rho, &rho, 1.0);
    let r = (&r + r.transpose()) * 0.5;
    Ok(Partial { dd, rho, r })
}

/// `(R + λI)⁻¹` applied to the columns of `rhs`.
fn solve_shifted(r: &DMatrix<f64>, lambda: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = r.clone();
    for j in 0..s.nrows() {
        s[(j, j)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(s).ok_or_else(|| {
        Error::RankDeficient(format!(
            "S = R + lambda I is singular at lambda = {lambda}; controls are collinear after partialling out d"
        ))
    })?;
    Ok(chol.solve(rhs))
}

/// Exact conditional bias and variance of α̂_λ.
pub fn ridge_bias(
    x: &DMatrix<f64>,
    d: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
    sigma_eps2: f64,
) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    if beta.len() != x.ncols() {
        return Err(Error::Dimension {
            what: "beta",
            expected: x.ncols(),
            got: beta.len(),
        });
    }
    let part = partial_out(x, d)?;
    let p = x.ncols();
    let mut rhs = DMatrix::zeros(p, 2);
    rhs.set_column(0, &(&part.r * beta));
    rhs.set_column(1, &part.rho);
    let sol = solve_shifted(&part.r, lambda, &rhs)?;
    // bias = ρ̂'β − ρ̂'S⁻¹Rβ
    let bias = part.rho.dot(beta) - part.rho.dot(&sol.column(0));
    // variance term ρ̂'S⁻¹ R S⁻¹ρ̂ = w'Rw with w = S⁻¹ρ̂
    let w = sol.column(1).into_owned();
    let quad = w.dot(&(&part.r * &w));
    let variance = sigma_eps2 * (1.0 / part.dd + quad);
    Ok((bias, variance))
}

/// Top row blocks `(M¹¹, M¹²)` of the inverse penalised Gram matrix:
/// `M¹² = −ρ̂'(R + λI)⁻¹`, `M¹¹ = (D'D)⁻¹ − M¹²ρ̂`.
pub fn partitioned_blocks(
    x: &DMatrix<f64>,
    d: &DVector<f64>,
    lambda: f64,
) -> Result<(f64, DVector<f64>)> {
    check_lambda(lambda)?;
    let part = partial_out(x, d)?;
    let rho_mat = DMatrix::from_column_slice(part.rho.len(), 1, part.rho.as_slice());
    let w = solve_shifted(&part.r, lambda, &rho_mat)?;
    let m12 = -w.column(0).into_owned();
    let m11 = 1.0 / part.dd - m12.dot(&part.rho);
    Ok((m11, m12))
}

/// Point estimate plus closed-form bias/variance at the supplied truth.
pub fn ridge_audit(
    data: &Dataset,
    beta: &DVector<f64>,
    lambda: f64,
    sigma_eps2: f64,
) -> Result<RidgeAudit> {
    let alpha_hat = ridge_point(data, lambda)?;
    let (bias, variance) = ridge_bias(&data.x, &data.d, beta, lambda, sigma_eps2)?;
    let part = partial_out(&data.x, &data.d)?;
    Ok(RidgeAudit {
        alpha_hat,
        bias,
        variance,
        lambda,
        rho_hat: part.rho,
        r_matrix: part.r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{std_normal, stream_rng};

    fn random_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = stream_rng(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| std_normal(&mut rng));
        let d = DVector::from_fn(n, |i, _| x.row(i).sum() * 0.3 + std_normal(&mut rng));
        let y = DVector::from_fn(n, |i, _| 1.5 * d[i] + x[(i, 0)] + std_normal(&mut rng));
        Dataset::new(y, d, x).unwrap().centered()
    }

    /// Independent route: Gaussian elimination with partial pivoting on the full system.
    fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        a.clone().lu().solve(b).unwrap()
    }

    #[test]
    fn lambda_zero_equals_ols() {
        let data = random_data(40, 5, 1);
        let design = crate::linalg::prepend_column(&data.d, &data.x);
        let ols = dense_solve(&design.tr_mul(&design), &design.tr_mul(&data.y));
        assert!((ridge_point(&data, 0.0).unwrap() - ols[0]).abs() < 1e-10);
    }

    #[test]
    fn huge_lambda_gives_simple_regression() {
        let data = random_data(40, 5, 2);
        let simple = data.d.dot(&data.y) / data.d.dot(&data.d);
        assert!((ridge_point(&data, 1e12).unwrap() - simple).abs() < 1e-8);
    }

    #[test]
    fn small_instance_matches_dense_solve() {
        let data = random_data(6, 2, 3);
        let lambda = 0.7;
        let m = penalized_gram(&data.x, &data.d, lambda);
        // oracle assembled independently of penalized_gram
        let mut full = DMatrix::zeros(3, 3);
        let cols = [
            data.d.clone(),
            data.x.column(0).into_owned(),
            data.x.column(1).into_owned(),
        ];
        for i in 0..3 {
            for j in 0..3 {
                full[(i, j)] = cols[i].dot(&cols[j]) + if i == j && i > 0 { lambda } else { 0.0 };
            }
        }
        assert!((&m - &full).abs().max() < 1e-12);
        let rhs = DVector::from_fn(3, |i, _| cols[i].dot(&data.y));
        let oracle = dense_solve(&full, &rhs)[0];
        assert!(
            (ridge_point(&data, lambda).unwrap() - oracle).abs() < 1e-10 * oracle.abs().max(1.0)
        );
    }

    #[test]
    fn lambda_zero_rank_errors() {
        let data = random_data(5, 6, 4);
        assert!(matches!(
            ridge_point(&data, 0.0),
            Err(Error::RankDeficient(_))
        ));
        assert!(ridge_point(&data, 1.0).is_ok());
        let mut bad = random_data(10, 2, 4);
        let c0 = bad.x.column(0).into_owned();
        bad.x.set_column(1, &c0);
        assert!(matches!(
            ridge_point(&bad, 0.0),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn bias_and_variance_at_lambda_zero() {
        let data = random_data(30, 4, 5);
        let beta = DVector::from_vec(vec![0.5, -0.2, 0.1, 0.3]);
        let (bias, var) = ridge_bias(&data.x, &data.d, &beta, 0.0, 2.0).unwrap();
        assert!(bias.abs() < 1e-10);
        let part = partial_out(&data.x, &data.d).unwrap();
        let rinv_rho = part.r.clone().lu().solve(&part.rho).unwrap();
        let expected = 2.0 * (1.0 / part.dd + part.rho.dot(&rinv_rho));
        assert!((var - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn zero_beta_zero_bias_and_zero_d_errors() {
        let data = random_data(30, 4, 6);
        for lambda in [0.0, 0.5, 10.0, 1e4] {
            let (b, v) = ridge_bias(&data.x, &data.d, &DVector::zeros(4), lambda, 1.0).unwrap();
            assert_eq!(b, 0.0);
            assert!(v >= 1.0 / data.d.dot(&data.d));
        }
        assert!(matches!(
            ridge_bias(&data.x, &DVector::zeros(30), &DVector::zeros(4), 1.0, 1.0),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn bias_continuous_in_lambda() {
        let data = random_data(30, 4, 7);
        let beta = DVector::from_vec(vec![1.0, -0.5, 0.2, 0.8]);
        let grid: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05).collect();
        let biases: Vec<f64> = grid
            .iter()
            .map(|&l| ridge_bias(&data.x, &data.d, &beta, l, 1.0).unwrap().0)
            .collect();
        assert!(biases[0].abs() < 1e-10);
        let max_jump = biases
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        assert!(max_jump < 0.05, "{max_jump}");
    }

    #[test]
    fn partitioned_identity_and_dense_inverse() {
        let data = random_data(8, 3, 8);
        for lambda in [0.0, 0.3, 5.0] {
            let (m11, m12) = partitioned_blocks(&data.x, &data.d, lambda).unwrap();
            // dense inverse oracle of M
            let m = penalized_gram(&data.x, &data.d, lambda);
            let inv = m.clone().try_inverse().unwrap();
            assert!((inv[(0, 0)] - m11).abs() < 1e-10 * m11.abs().max(1.0));
            for j in 0..3 {
                assert!((inv[(0, j + 1)] - m12[j]).abs() < 1e-10);
            }
            // [M¹¹ M¹²] · (first column of M) = 1
            let top = m11 * m[(0, 0)] + m12.dot(&m.view((1, 0), (3, 1)).column(0));
            assert!((top - 1.0).abs() < 1e-10);
            // [M¹¹ M¹²]·G = [1, ρ̂' + M¹²R] with the unpenalised Gram G
            let part = partial_out(&data.x, &data.d).unwrap();
            let g = penalized_gram(&data.x, &data.d, 0.0);
            let mut row = DVector::zeros(4);
            row[0] = m11;
            row.rows_mut(1, 3).copy_from(&m12);
            let lhs = g.tr_mul(&row);
            let rhs_tail = &part.rho + part.r.tr_mul(&m12);
            assert!((lhs[0] - 1.0).abs() < 1e-10);
            for j in 0..3 {
                assert!((lhs[j + 1] - rhs_tail[j]).abs() < 1e-10);
            }
        }
        let (_, m12) = partitioned_blocks(&data.x, &data.d, 1e12).unwrap();
        assert!(m12.amax() < 1e-10);
    }
}
