//! Bayesian double machine learning: a Gibbs sampler for the bivariate
//! reduced-form system
//!
//! ```text
//! [Y D] = X [δ γ] + [U V],   (U_i, V_i) ~ N(0, Σ)
//! Σ ~ IW(ν₀, Σ₀),   δ ~ N(0, I/τ_δ),   γ ~ N(0, I/τ_γ)
//! ```
//!
//! with the treatment effect recovered per draw as `α = Σ₁₂ / Σ₂₂`. The
//! hierarchical variant adds `σ_δ² = 1/τ_δ ~ IG(a, b)` and the same for
//! `σ_γ²`.
//!
//! The coefficient conditional `vec(B) | Σ` has precision
//! `Σ⁻¹ ⊗ X'X + V₀⁻¹`. Writing `X'X = QΛQ'` and `B̃ = Q'B`, every row of `B̃`
//! is an independent bivariate normal with precision `λ_j Σ⁻¹ + diag(τ_δ, τ_γ)`,
//! so the default solver draws a sweep in O(p) once the eigen-decomposition
//! is in hand. The dense 2p×2p Cholesky route is available as
//! [`SurSolver::Dense`].

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::bayes_lm::ChainSettings;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, sym_eigen_canonical, CHOLESKY_JITTER};
use crate::model::{Cov2, Dataset};
use crate::rng::{chi_square, inv_gamma, std_normal, stream_rng, SimRng};
use crate::stats::{quantile_sorted, sorted_copy, split_rhat};

/// Prior scale on the reduced-form coefficients used by the basic variant: N(0, 5²).
pub const BASIC_COEF_SD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurPrior {
    pub nu0: f64,
    pub sigma0: Cov2,
    /// Prior precision of δ; the starting value when hierarchical.
    pub tau_delta: f64,
    /// Prior precision of γ; the starting value when hierarchical.
    pub tau_gamma: f64,
    pub hierarchical: bool,
    pub hyper_shape: f64,
    pub hyper_rate: f64,
}

/// Reduced-form error scale `diag(var y, var d)`.
fn empirical_scale(data: &Dataset) -> Result<Cov2> {
    let var = |v: &DVector<f64>| {
        let m = v.mean();
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len().max(2) - 1) as f64
    };
    Cov2::diagonal(var(&data.y), var(&data.d))
        .map_err(|_| Error::DegenerateData("outcome or treatment has zero variance".into()))
}

impl SurPrior {
    /// Fixed N(0, 5²) coefficient priors, `ν₀ = 4`, `Σ₀ = diag(var y, var d)`.
    pub fn basic(data: &Dataset) -> Result<Self> {
        let tau = 1.0 / (BASIC_COEF_SD * BASIC_COEF_SD);
        Ok(SurPrior {
            nu0: 4.0,
            sigma0: empirical_scale(data)?,
            tau_delta: tau,
            tau_gamma: tau,
            hierarchical: false,
            hyper_shape: 2.0,
            hyper_rate: 2.0,
        })
    }

    /// As [`SurPrior::basic`] with IG(2, 2) hyperpriors on both coefficient variances.
    pub fn hierarchical(data: &Dataset) -> Result<Self> {
        Ok(SurPrior {
            hierarchical: true,
            tau_delta: 1.0,
            tau_gamma: 1.0,
            ..Self::basic(data)?
        })
    }

    /// `τ = 0` is accepted as the flat limit; it needs a full-rank `X'X`.
    pub fn validate(&self) -> Result<()> {
        if !(self.nu0 > 1.0) {
            return Err(Error::invalid(format!(
                "nu0 must exceed 1, got {}",
                self.nu0
            )));
        }
        if !(self.tau_delta >= 0.0 && self.tau_gamma >= 0.0)
            || !self.tau_delta.is_finite()
            || !self.tau_gamma.is_finite()
        {
            return Err(Error::invalid("prior precisions must be finite and >= 0"));
        }
        if self.hierarchical && !(self.hyper_shape > 0.0 && self.hyper_rate > 0.0) {
            return Err(Error::invalid("hyperprior shape and rate must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SurSolver {
    #[default]
    Spectral,
    Dense,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SurOptions {
    pub chain: ChainSettings,
    pub solver: SurSolver,
    /// Keep every retained `B` draw (p×2 each).
    pub store_b: bool,
}

#[derive(Debug, Clone)]
pub struct SurDraws {
    pub alpha: Vec<f64>,
    pub sigma: Vec<Cov2>,
    /// Retained coefficient draws `[δ γ]`, when requested.
    pub b: Option<Vec<DMatrix<f64>>>,
    /// Posterior mean of `[δ γ]`.
    pub b_mean: DMatrix<f64>,
    /// `(τ_δ, τ_γ)` draws, hierarchical variant only.
    pub precision: Option<Vec<(f64, f64)>>,
}

impl SurDraws {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Sufficient statistics of the data in the eigenbasis of `X'X`.
struct SurStats {
    n: usize,
    lambda: DVector<f64>,
    q: DMatrix<f64>,
    /// `Q'X'W`, p×2.
    f: DMatrix<f64>,
    xtx: DMatrix<f64>,
    xtw: DMatrix<f64>,
    wtw: Matrix2<f64>,
}

impl SurStats {
    fn new(data: &Dataset) -> Self {
        let w = data.outcomes();
        let xtx = data.x.tr_mul(&data.x);
        let (lambda, q) = sym_eigen_canonical(&xtx);
        let lambda = lambda.map(|v| v.max(0.0));
        let xtw = data.x.tr_mul(&w);
        let f = q.tr_mul(&xtw);
        let wtw_d = w.tr_mul(&w);
        let wtw = Matrix2::new(wtw_d[(0, 0)], wtw_d[(0, 1)], wtw_d[(1, 0)], wtw_d[(1, 1)]);
        SurStats {
            n: data.n(),
            lambda,
            q,
            f,
            xtx,
            xtw,
            wtw,
        }
    }

    fn p(&self) -> usize {
        self.lambda.len()
    }

    /// Row `j` of the conditional in the rotated basis: `(mean, precision)`.
    fn row_moments(
        &self,
        j: usize,
        sinv: &Matrix2<f64>,
        taus: (f64, f64),
    ) -> (Vector2<f64>, Matrix2<f64>) {
        let mut prec = sinv * self.lambda[j];
        prec[(0, 0)] += taus.0;
        prec[(1, 1)] += taus.1;
        let rhs = sinv * Vector2::new(self.f[(j, 0)], self.f[(j, 1)]);
        (rhs, prec)
    }

    /// One rotated draw `B̃`; returns p×2.
    fn draw_rotated(
        &self,
        rng: &mut SimRng,
        sigma: &Cov2,
        taus: (f64, f64),
        out: &mut DMatrix<f64>,
    ) -> Result<()> {
        let sinv = sigma.inverse_matrix();
        for j in 0..self.p() {
            let (rhs, prec) = self.row_moments(j, &sinv, taus);
            let l = chol2(&prec)?;
            let mean = chol2_solve(&l, &rhs);
            let z = Vector2::new(std_normal(rng), std_normal(rng));
            // L' x = z  gives  x ~ N(0, P⁻¹)
            let x1 = z[1] / l[(1, 1)];
            let x0 = (z[0] - l[(1, 0)] * x1) / l[(0, 0)];
            out[(j, 0)] = mean[0] + x0;
            out[(j, 1)] = mean[1] + x1;
        }
        Ok(())
    }

    /// `Σ₀ + (W − XB)'(W − XB)` from the rotated coefficients.
    fn scale_rotated(&self, sigma0: &Cov2, bt: &DMatrix<f64>) -> Matrix2<f64> {
        let mut s = sigma0.to_matrix() + self.wtw;
        for j in 0..self.p() {
            let (b0, b1) = (bt[(j, 0)], bt[(j, 1)]);
            let (f0, f1) = (self.f[(j, 0)], self.f[(j, 1)]);
            let l = self.lambda[j];
            s[(0, 0)] += -2.0 * b0 * f0 + l * b0 * b0;
            s[(1, 1)] += -2.0 * b1 * f1 + l * b1 * b1;
            s[(0, 1)] += -b0 * f1 - f0 * b1 + l * b0 * b1;
        }
        s[(1, 0)] = s[(0, 1)];
        s
    }
}

/// Lower Cholesky factor of a 2×2 SPD matrix, with one jitter retry.
fn chol2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    for jitter in [0.0, CHOLESKY_JITTER] {
        let a = m[(0, 0)] + jitter;
        if !(a > 0.0) {
            continue;
        }
        let l00 = a.sqrt();
        let l10 = m[(1, 0)] / l00;
        let r = m[(1, 1)] + jitter - l10 * l10;
        if r > 0.0 && r.is_finite() {
            return Ok(Matrix2::new(l00, 0.0, l10, r.sqrt()));
        }
    }
    Err(Error::NotPositiveDefinite(
        "coefficient conditional precision".into(),
    ))
}

fn chol2_solve(l: &Matrix2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
    let y0 = b[0] / l[(0, 0)];
    let y1 = (b[1] - l[(1, 0)] * y0) / l[(1, 1)];
    let x1 = y1 / l[(1, 1)];
    let x0 = (y0 - l[(1, 0)] * x1) / l[(0, 0)];
    Vector2::new(x0, x1)
}

/// Draw from the 2×2 inverse-Wishart `IW(ν, S)` via the Bartlett
/// decomposition of `S⁻¹`.
pub fn inverse_wishart2(rng: &mut SimRng, nu: f64, scale: &Cov2) -> Result<Cov2> {
    if !(nu > 1.0) {
        return Err(Error::invalid(format!(
            "inverse-Wishart df must exceed 1, got {nu}"
        )));
    }
    let l = chol2(&scale.inverse_matrix())?;
    let a11 = chi_square(rng, nu).sqrt();
    let a22 = chi_square(rng, nu - 1.0).sqrt();
    let a21 = std_normal(rng);
    let a = Matrix2::new(a11, 0.0, a21, a22);
    let la = l * a;
    let wishart = la * la.transpose();
    let inv = wishart
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite("Wishart draw".into()))?;
    Cov2::new(inv[(0, 0)], 0.5 * (inv[(0, 1)] + inv[(1, 0)]), inv[(1, 1)])
}

fn cov_from_scale(m: &Matrix2<f64>) -> Result<Cov2> {
    let sym = |m: &Matrix2<f64>| Cov2::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    sym(m).or_else(|_| {
        let mut j = *m;
        j[(0, 0)] += CHOLESKY_JITTER;
        j[(1, 1)] += CHOLESKY_JITTER;
        sym(&j).map_err(|_| Error::NotPositiveDefinite("inverse-Wishart posterior scale".into()))
    })
}

/// Conditional moments of `B | Σ`: the mean `B_n` (p×2) and the covariance
/// `V_n` of `vec(B_n) = [δ; γ]` (2p×2p).
pub fn b_conditional_moments(
    data: &Dataset,
    sigma: &Cov2,
    prior: &SurPrior,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let st = SurStats::new(data);
    let p = st.p();
    let sinv = sigma.inverse_matrix();
    let taus = (prior.tau_delta, prior.tau_gamma);
    let mut mean_t = DMatrix::zeros(p, 2);
    let mut covs = Vec::with_capacity(p);
    for j in 0..p {
        let (rhs, prec) = st.row_moments(j, &sinv, taus);
        let l = chol2(&prec)?;
        let m = chol2_solve(&l, &rhs);
        mean_t[(j, 0)] = m[0];
        mean_t[(j, 1)] = m[1];
        let inv = prec.try_inverse().ok_or_else(|| {
            Error::NotPositiveDefinite("coefficient conditional precision".into())
        })?;
        covs.push(inv);
    }
    let mean = &st.q * mean_t;
    let mut v = DMatrix::zeros(2 * p, 2 * p);
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..p {
                for k in 0..p {
                    let mut s = 0.0;
                    for (j, c) in covs.iter().enumerate() {
                        s += st.q[(i, j)] * st.q[(k, j)] * c[(a, b)];
                    }
                    v[(a * p + i, b * p + k)] = s;
                }
            }
        }
    }
    Ok((mean, v))
}

/// One exact draw of `B | Σ` (p×2, columns `[δ γ]`).
pub fn cond_b_given_sigma(
    data: &Dataset,
    sigma: &Cov2,
    prior: &SurPrior,
    rng: &mut SimRng,
) -> Result<DMatrix<f64>> {
    let st = SurStats::new(data);
    let mut bt = DMatrix::zeros(st.p(), 2);
    st.draw_rotated(rng, sigma, (prior.tau_delta, prior.tau_gamma), &mut bt)?;
    Ok(&st.q * bt)
}

/// Parameters `(ν_n, Σ_n)` of the inverse-Wishart conditional `Σ | B`.
pub fn sigma_posterior_params(
    data: &Dataset,
    b: &DMatrix<f64>,
    prior: &SurPrior,
) -> Result<(f64, Cov2)> {
    if b.nrows() != data.p() || b.ncols() != 2 {
        return Err(Error::Dimension {
            what: "coefficient matrix rows",
            expected: data.p(),
            got: b.nrows(),
        });
    }
    let resid = data.outcomes() - &data.x * b;
    let sscp = resid.tr_mul(&resid);
    let s = prior.sigma0.to_matrix()
        + Matrix2::new(sscp[(0, 0)], sscp[(0, 1)], sscp[(1, 0)], sscp[(1, 1)]);
    Ok((prior.nu0 + data.n() as f64, cov_from_scale(&s)?))
}

/// One exact draw of `Σ | B ~ IW(ν₀ + n, Σ₀ + (W − XB)'(W − XB))`.
pub fn cond_sigma_given_b(
    data: &Dataset,
    b: &DMatrix<f64>,
    prior: &SurPrior,
    rng: &mut SimRng,
) -> Result<Cov2> {
    let (nu, s) = sigma_posterior_params(data, b, prior)?;
    inverse_wishart2(rng, nu, &s)
}

/// Sampler with default options on the centered data.
pub fn bdml_fit(
    data: &Dataset,
    prior: &SurPrior,
    chain: ChainSettings,
    seed: u64,
) -> Result<SurDraws> {
    bdml_fit_with(
        data,
        prior,
        &SurOptions {
            chain,
            ..Default::default()
        },
        seed,
    )
}

/// Full entry point. The data are centered first, so no intercepts are needed.
pub fn bdml_fit_with(
    data: &Dataset,
    prior: &SurPrior,
    opts: &SurOptions,
    seed: u64,
) -> Result<SurDraws> {
    bdml_chain(data, prior, opts, seed, 0)
}

/// Several independent chains (streams `0..chains` of `seed`) and the split-R̂ of α.
pub fn bdml_fit_chains(
    data: &Dataset,
    prior: &SurPrior,
    opts: &SurOptions,
    chains: usize,
    seed: u64,
) -> Result<(Vec<SurDraws>, f64)> {
    if chains == 0 {
        return Err(Error::invalid("need at least one chain"));
    }
    let runs = (0..chains as u64)
        .map(|c| bdml_chain(data, prior, opts, seed, c))
        .collect::<Result<Vec<_>>>()?;
    let alphas: Vec<Vec<f64>> = runs.iter().map(|r| r.alpha.clone()).collect();
    let rhat = split_rhat(&alphas);
    Ok((runs, rhat))
}

fn bdml_chain(
    data: &Dataset,
    prior: &SurPrior,
    opts: &SurOptions,
    seed: u64,
    stream: u64,
) -> Result<SurDraws> {
    opts.chain.validate()?;
    prior.validate()?;
    if data.n() < 3 {
        return Err(Error::invalid(format!(
            "need n >= 3 observations, got {}",
            data.n()
        )));
    }
    let data = data.centered();
    let st = SurStats::new(&data);
    let (n, p) = (st.n, st.p());
    let max_lambda = st.lambda.iter().copied().fold(0.0_f64, f64::max);
    if (prior.tau_delta == 0.0 || prior.tau_gamma == 0.0)
        && !prior.hierarchical
        && st.lambda.iter().any(|&l| l <= 1e-12 * max_lambda)
    {
        return Err(Error::RankDeficient(
            "flat coefficient prior needs a full-rank X'X".into(),
        ));
    }

    let mut rng = stream_rng(seed, stream);
    let retained = opts.chain.retained();
    let mut alpha = Vec::with_capacity(retained);
    let mut sigmas = Vec::with_capacity(retained);
    let mut b_store = opts.store_b.then(|| Vec::with_capacity(retained));
    let mut prec_store = prior.hierarchical.then(|| Vec::with_capacity(retained));
    let mut bt = DMatrix::zeros(p, 2);
    let mut bt_sum = DMatrix::<f64>::zeros(p, 2);
    let mut b_dense_sum = DMatrix::<f64>::zeros(p, 2);

    let init = st.wtw / n as f64;
    let mut sigma = cov_from_scale(&init).or_else(|_| Ok::<_, Error>(prior.sigma0))?;
    let mut taus = (prior.tau_delta, prior.tau_gamma);

    for it in 0..opts.chain.iters {
        let b_dense = match opts.solver {
            SurSolver::Spectral => {
                st.draw_rotated(&mut rng, &sigma, taus, &mut bt)?;
                None
            }
            SurSolver::Dense => {
                let b = dense_draw(&st, &mut rng, &sigma, taus)?;
                bt = st.q.tr_mul(&b);
                Some(b)
            }
        };
        let scale = cov_from_scale(&st.scale_rotated(&prior.sigma0, &bt))?;
        sigma = inverse_wishart2(&mut rng, prior.nu0 + n as f64, &scale)?;
        if prior.hierarchical {
            let ssd: f64 = bt.column(0).norm_squared();
            let ssg: f64 = bt.column(1).norm_squared();
            let half_p = 0.5 * p as f64;
            taus = (
                1.0 / inv_gamma(
                    &mut rng,
                    prior.hyper_shape + half_p,
                    prior.hyper_rate + 0.5 * ssd,
                ),
                1.0 / inv_gamma(
                    &mut rng,
                    prior.hyper_shape + half_p,
                    prior.hyper_rate + 0.5 * ssg,
                ),
            );
        }
        if it >= opts.chain.burnin {
            alpha.push(sigma.s12() / sigma.s22());
            sigmas.push(sigma);
            match &b_dense {
                Some(b) => b_dense_sum += b,
                None => bt_sum += &bt,
            }
            if let Some(store) = b_store.as_mut() {
                store.push(b_dense.clone().unwrap_or_else(|| &st.q * &bt));
            }
            if let Some(ps) = prec_store.as_mut() {
                ps.push(taus);
            }
        }
    }
    let b_mean = match opts.solver {
        SurSolver::Spectral => &st.q * bt_sum / retained as f64,
        SurSolver::Dense => b_dense_sum / retained as f64,
    };
    Ok(SurDraws {
        alpha,
        sigma: sigmas,
        b: b_store,
        b_mean,
        precision: prec_store,
    })
}

/// Dense route: assemble and factor the full 2p×2p conditional precision.
fn dense_draw(
    st: &SurStats,
    rng: &mut SimRng,
    sigma: &Cov2,
    taus: (f64, f64),
) -> Result<DMatrix<f64>> {
    let p = st.p();
    let sinv = sigma.inverse_matrix();
    let mut prec = DMatrix::zeros(2 * p, 2 * p);
    for a in 0..2 {
        for b in 0..2 {
            prec.view_mut((a * p, b * p), (p, p))
                .copy_from(&(&st.xtx * sinv[(a, b)]));
        }
    }
    for i in 0..p {
        prec[(i, i)] += taus.0;
        prec[(p + i, p + i)] += taus.1;
    }
    // vec(X'W Σ⁻¹)
    let rhs_m = &st.xtw * DMatrix::from_fn(2, 2, |r, c| sinv[(r, c)]);
    let rhs = DVector::from_iterator(2 * p, rhs_m.iter().copied());
    let chol = cholesky_jittered(prec, CHOLESKY_JITTER, "SUR coefficient precision")?;
    let mean = chol.solve(&rhs);
    let z = DVector::from_fn(2 * p, |_, _| std_normal(rng));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NotPositiveDefinite("SUR Cholesky factor".into()))?;
    let v = mean + noise;
    Ok(DMatrix::from_column_slice(p, 2, v.as_slice()))
}

/// Posterior mean of α and the equal-tailed interval at `level`.
pub fn alpha_summary(draws: &SurDraws, level: f64) -> Result<(f64, (f64, f64))> {
    summarize_draws(&draws.alpha, level)
}

/// Mean and equal-tailed interval of a draw vector; quantiles by linear
/// interpolation between order statistics.
pub fn summarize_draws(xs: &[f64], level: f64) -> Result<(f64, (f64, f64))> {
    if xs.is_empty() {
        return Err(Error::invalid("no draws to summarize"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let s = sorted_copy(xs);
    let tail = 0.5 * (1.0 - level);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    Ok((
        mean,
        (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail)),
    ))
}
