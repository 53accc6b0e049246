//! Gibbs sampler for a single-equation Gaussian linear regression
//!
//! ```text
//! y = Zb_Z + Xb_X + e,   e ~ N(0, σ² I)
//! b_Z flat,   b_X ~ N(0, σ_b² I),   σ² ~ IG(a, s) (Jeffreys: a = s = 0)
//! σ_b² fixed, or ~ IG(a_b, s_b) (Jeffreys: a_b = s_b = 0)
//! ```
//!
//! where `Z` are the unpenalised columns of the design (treatment, plug-in
//! regressors) and `X` the penalised controls. The coefficient block is drawn
//! jointly each sweep. The default solver works in the eigenbasis of
//! `X'M_Z X`, where the conditional precision of the penalised block is
//! diagonal for every `(σ², σ_b²)`, so a sweep costs O(width) after a one-off
//! eigen-decomposition. A dense Cholesky solver of the full precision is kept
//! as an independent route.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_full_rank, cholesky_jittered, select_columns, sym_eigen_canonical, CHOLESKY_JITTER,
};
use crate::rng::{inv_gamma, std_normal, stream_rng, SimRng};

/// Prior on the penalised coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CoefPrior {
    /// Every column unpenalised.
    Flat,
    /// `b_X ~ N(0, I / precision)`.
    Fixed { precision: f64 },
    /// `b_X ~ N(0, σ_b² I)` with `σ_b² ~ IG(shape, scale)`; `(0, 0)` is the Jeffreys prior.
    Hyper { shape: f64, scale: f64 },
}

/// Prior on the residual variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoisePrior {
    Known {
        variance: f64,
    },
    /// `σ² ~ IG(shape, scale)`; `(0, 0)` is the Jeffreys prior.
    InverseGamma {
        shape: f64,
        scale: f64,
    },
}

impl NoisePrior {
    pub const JEFFREYS: NoisePrior = NoisePrior::InverseGamma {
        shape: 0.0,
        scale: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmPrior {
    /// Design columns with a flat prior.
    pub unpenalized: Vec<usize>,
    pub coef: CoefPrior,
    pub noise: NoisePrior,
}

impl LmPrior {
    /// Ridge prior with a Jeffreys hyperprior on the penalised columns and a
    /// Jeffreys prior on σ².
    pub fn ridge_jeffreys(unpenalized: Vec<usize>) -> Self {
        LmPrior {
            unpenalized,
            coef: CoefPrior::Hyper {
                shape: 0.0,
                scale: 0.0,
            },
            noise: NoisePrior::JEFFREYS,
        }
    }

    /// Flat prior on every coefficient, Jeffreys on σ².
    pub fn flat() -> Self {
        LmPrior {
            unpenalized: Vec::new(),
            coef: CoefPrior::Flat,
            noise: NoisePrior::JEFFREYS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    /// Total sweeps, burn-in included.
    pub iters: usize,
    pub burnin: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        ChainSettings {
            iters: 5000,
            burnin: 1000,
        }
    }
}

impl ChainSettings {
    pub fn new(iters: usize, burnin: usize) -> Result<Self> {
        let c = ChainSettings { iters, burnin };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burnin {
            return Err(Error::invalid(format!(
                "iters ({}) must exceed burnin ({})",
                self.iters, self.burnin
            )));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.iters - self.burnin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    Spectral,
    Dense,
}

/// Which coefficient columns keep their full draw history.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Track {
    #[default]
    All,
    Columns(Vec<usize>),
    None,
}

#[derive(Debug, Clone, Default)]
pub struct LmOptions {
    pub chain: ChainSettings,
    pub solver: Solver,
    pub track: Track,
}

/// Retained draws. `coef` has one row per retained sweep and one column per
/// entry of `tracked` (original design indices).
#[derive(Debug, Clone)]
pub struct LmDraws {
    pub coef: DMatrix<f64>,
    pub tracked: Vec<usize>,
    /// Posterior mean of every coefficient, accumulated over all retained sweeps.
    pub coef_mean: DVector<f64>,
    pub noise_var: Vec<f64>,
    pub coef_var: Option<Vec<f64>>,
}

impl LmDraws {
    pub fn len(&self) -> usize {
        self.noise_var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise_var.is_empty()
    }

    /// Draw history of design column `col`, if tracked.
    pub fn column(&self, col: usize) -> Option<Vec<f64>> {
        let k = self.tracked.iter().position(|&c| c == col)?;
        Some(self.coef.column(k).iter().copied().collect())
    }
}

/// Column-wise posterior mean.
pub fn posterior_mean_coef(draws: &LmDraws) -> DVector<f64> {
    draws.coef_mean.clone()
}

/// Sampler with every default: spectral solver, all columns tracked.
pub fn gibbs_lm(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &LmPrior,
    chain: ChainSettings,
    seed: u64,
) -> Result<LmDraws> {
    gibbs_lm_with(
        y,
        design,
        prior,
        &LmOptions {
            chain,
            ..Default::default()
        },
        seed,
    )
}

/// One draw from `σ² | SSR ~ IG(a + n/2, s + SSR/2)`.
pub fn draw_noise_var(rng: &mut SimRng, prior: &NoisePrior, ssr: f64, n: usize) -> f64 {
    match *prior {
        NoisePrior::Known { variance } => variance,
        NoisePrior::InverseGamma { shape, scale } => {
            inv_gamma(rng, shape + 0.5 * n as f64, scale + 0.5 * ssr.max(0.0))
        }
    }
}

/// Floor for the hyperprior scale when the penalised coefficients are all ~0.
const HYPER_SCALE_FLOOR: f64 = 1e-12;

fn draw_coef_var(rng: &mut SimRng, shape: f64, scale: f64, k: usize, ss: f64) -> f64 {
    let mut post_scale = scale + 0.5 * ss;
    if ss < HYPER_SCALE_FLOOR && post_scale < HYPER_SCALE_FLOOR {
        post_scale = HYPER_SCALE_FLOOR;
    }
    inv_gamma(rng, shape + 0.5 * k as f64, post_scale)
}

fn validate(y: &DVector<f64>, design: &DMatrix<f64>, prior: &LmPrior) -> Result<()> {
    let n = y.len();
    if design.nrows() != n {
        return Err(Error::Dimension {
            what: "design rows",
            expected: n,
            got: design.nrows(),
        });
    }
    if n < 3 {
        return Err(Error::invalid(format!("need n >= 3 observations, got {n}")));
    }
    let width = design.ncols();
    if let Some(&bad) = prior.unpenalized.iter().find(|&&c| c >= width) {
        return Err(Error::invalid(format!(
            "unpenalized column {bad} outside design width {width}"
        )));
    }
    let mut sorted = prior.unpenalized.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != prior.unpenalized.len() {
        return Err(Error::invalid("unpenalized column listed twice"));
    }
    let ybar = y.mean();
    if y.iter().all(|v| (v - ybar).abs() == 0.0) {
        return Err(Error::DegenerateData("outcome has zero variance".into()));
    }
    match prior.coef {
        CoefPrior::Fixed { precision } if !(precision >= 0.0) => {
            return Err(Error::invalid("fixed coefficient precision must be >= 0"));
        }
        CoefPrior::Hyper { shape, scale } if !(shape >= 0.0 && scale >= 0.0) => {
            return Err(Error::invalid("hyperprior shape and scale must be >= 0"));
        }
        _ => {}
    }
    match prior.noise {
        NoisePrior::Known { variance } if !(variance > 0.0) => {
            return Err(Error::invalid("known noise variance must be > 0"));
        }
        NoisePrior::InverseGamma { shape, scale } if !(shape >= 0.0 && scale >= 0.0) => {
            return Err(Error::invalid("noise prior shape and scale must be >= 0"));
        }
        _ => {}
    }
    Ok(())
}

/// Partition of design columns into unpenalised (`z`) and penalised (`x`) blocks.
fn partition(width: usize, prior: &LmPrior) -> (Vec<usize>, Vec<usize>) {
    if matches!(prior.coef, CoefPrior::Flat) {
        return ((0..width).collect(), Vec::new());
    }
    let z: Vec<usize> = prior.unpenalized.clone();
    let x: Vec<usize> = (0..width).filter(|c| !z.contains(c)).collect();
    (z, x)
}

/// Cholesky of the unpenalised Gram block, rejecting collinear columns.
fn unpenalized_chol(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    cholesky_full_rank(a.clone()).ok_or_else(|| {
        Error::RankDeficient("unpenalized columns are (numerically) collinear".into())
    })
}

struct Recorder {
    tracked: Vec<usize>,
    coef: DMatrix<f64>,
    sum: DVector<f64>,
    noise_var: Vec<f64>,
    coef_var: Option<Vec<f64>>,
    row: usize,
}

impl Recorder {
    fn new(track: &Track, width: usize, retained: usize, hyper: bool) -> Self {
        let tracked = match track {
            Track::All => (0..width).collect(),
            Track::Columns(c) => c.iter().copied().filter(|&j| j < width).collect(),
            Track::None => Vec::new(),
        };
        Recorder {
            coef: DMatrix::zeros(retained, tracked.len()),
            tracked,
            sum: DVector::zeros(width),
            noise_var: Vec::with_capacity(retained),
            coef_var: hyper.then(|| Vec::with_capacity(retained)),
            row: 0,
        }
    }

    fn finish(self) -> LmDraws {
        let n = self.noise_var.len().max(1) as f64;
        LmDraws {
            coef: self.coef,
            tracked: self.tracked,
            coef_mean: self.sum / n,
            noise_var: self.noise_var,
            coef_var: self.coef_var,
        }
    }
}

/// Full sampler entry point.
pub fn gibbs_lm_with(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &LmPrior,
    opts: &LmOptions,
    seed: u64,
) -> Result<LmDraws> {
    opts.chain.validate()?;
    validate(y, design, prior)?;
    match opts.solver {
        Solver::Spectral => run_spectral(y, design, prior, opts, seed),
        Solver::Dense => run_dense(y, design, prior, opts, seed),
    }
}

fn initial_noise_var(prior: &NoisePrior, y: &DVector<f64>) -> f64 {
    match *prior {
        NoisePrior::Known { variance } => variance,
        NoisePrior::InverseGamma { .. } => {
            let m = y.mean();
            (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / y.len() as f64).max(1e-12)
        }
    }
}

fn prior_precision(coef: &CoefPrior, coef_var: f64) -> f64 {
    match *coef {
        CoefPrior::Flat => 0.0,
        CoefPrior::Fixed { precision } => precision,
        CoefPrior::Hyper { .. } => 1.0 / coef_var,
    }
}

fn run_spectral(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &LmPrior,
    opts: &LmOptions,
    seed: u64,
) -> Result<LmDraws> {
    let n = y.len();
    let width = design.ncols();
    let (z_idx, x_idx) = partition(width, prior);
    let (k0, k) = (z_idx.len(), x_idx.len());
    let z = select_columns(design, &z_idx);
    let x = select_columns(design, &x_idx);

    // Profile out the unpenalised block: H = X'M_Z X, h = X'M_Z y.
    let yty = y.dot(y);
    let (a_chol, a_inv_zty, a_inv_c, ymy, h, hmat) = if k0 > 0 {
        let a = z.tr_mul(&z);
        let chol = unpenalized_chol(&a)?;
        let zty = z.tr_mul(y);
        let a_inv_zty = chol.solve(&zty);
        let c = z.tr_mul(&x);
        let a_inv_c = chol.solve(&c);
        let ymy = yty - zty.dot(&a_inv_zty);
        let h = x.tr_mul(y) - a_inv_c.tr_mul(&zty);
        let hmat = x.tr_mul(&x) - c.tr_mul(&a_inv_c);
        (Some(chol), a_inv_zty, a_inv_c, ymy, h, hmat)
    } else {
        (
            None,
            DVector::zeros(0),
            DMatrix::zeros(0, k),
            yty,
            x.tr_mul(y),
            x.tr_mul(&x),
        )
    };
    let (lambda, q) = sym_eigen_canonical(&hmat);
    let lambda = lambda.map(|v| v.max(0.0));
    let lambda_max = lambda.iter().copied().fold(0.0_f64, f64::max);
    let ht = q.tr_mul(&h);
    // b_Z = A⁻¹Z'y − (A⁻¹C Q) c + η
    let kq = &a_inv_c * &q;
    let l_inv_t = a_chol.as_ref().map(|ch| {
        ch.l()
            .transpose()
            .try_inverse()
            .expect("triangular factor invertible")
    });

    let hyper = matches!(prior.coef, CoefPrior::Hyper { .. });
    let retained = opts.chain.retained();
    let mut rec = Recorder::new(&opts.track, width, retained, hyper);
    let track_pen = rec.tracked.iter().any(|j| x_idx.contains(j));

    let mut rng = stream_rng(seed, 0);
    let mut sigma2 = initial_noise_var(&prior.noise, y);
    let mut coef_var = 1.0;
    let mut c = DVector::zeros(k);
    let mut bz = DVector::zeros(k0);
    let mut c_sum = DVector::<f64>::zeros(k);
    let mut bz_sum = DVector::<f64>::zeros(k0);
    let mut eta_z = DVector::zeros(k0);

    for it in 0..opts.chain.iters {
        let tau = prior_precision(&prior.coef, coef_var);
        // penalised block in the eigenbasis
        let mut fit_ss = ymy;
        for j in 0..k {
            let mut prec = lambda[j] / sigma2 + tau;
            if !(prec > 1e-12 * (lambda_max / sigma2).max(tau)) {
                prec += CHOLESKY_JITTER;
                if !(prec > 0.0) || (tau == 0.0 && lambda[j] <= 1e-12 * lambda_max) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "conditional precision of penalised coefficient {j} is singular \
                         (eigenvalue {:e}, prior precision {tau:e})",
                        lambda[j]
                    )));
                }
            }
            let mean = ht[j] / sigma2 / prec;
            c[j] = mean + std_normal(&mut rng) / prec.sqrt();
            fit_ss += -2.0 * ht[j] * c[j] + lambda[j] * c[j] * c[j];
        }
        // unpenalised block given the penalised one
        let mut eta_ss = 0.0;
        if let Some(lit) = &l_inv_t {
            for e in eta_z.iter_mut() {
                *e = std_normal(&mut rng);
                eta_ss += *e * *e;
            }
            let eta = lit * &eta_z * sigma2.sqrt();
            bz.copy_from(&a_inv_zty);
            if k > 0 {
                bz -= &kq * &c;
            }
            bz += eta;
        }
        let ssr = fit_ss.max(0.0) + sigma2 * eta_ss;
        sigma2 = draw_noise_var(&mut rng, &prior.noise, ssr, n);
        if let CoefPrior::Hyper { shape, scale } = prior.coef {
            coef_var = draw_coef_var(&mut rng, shape, scale, k, c.norm_squared());
        }

        if it >= opts.chain.burnin {
            c_sum += &c;
            bz_sum += &bz;
            let bx = if track_pen { Some(&q * &c) } else { None };
            for (col, &j) in rec.tracked.iter().enumerate() {
                let v = if let Some(pos) = z_idx.iter().position(|&zj| zj == j) {
                    bz[pos]
                } else {
                    let pos = x_idx
                        .iter()
                        .position(|&xj| xj == j)
                        .expect("column in a block");
                    bx.as_ref().expect("penalised column tracked")[pos]
                };
                rec.coef[(rec.row, col)] = v;
            }
            rec.row += 1;
            rec.noise_var.push(sigma2);
            if let Some(cv) = rec.coef_var.as_mut() {
                cv.push(coef_var);
            }
        }
    }

    let bx_sum = &q * c_sum;
    for (pos, &j) in z_idx.iter().enumerate() {
        rec.sum[j] = bz_sum[pos];
    }
    for (pos, &j) in x_idx.iter().enumerate() {
        rec.sum[j] = bx_sum[pos];
    }
    Ok(rec.finish())
}

fn run_dense(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &LmPrior,
    opts: &LmOptions,
    seed: u64,
) -> Result<LmDraws> {
    let n = y.len();
    let width = design.ncols();
    let (z_idx, x_idx) = partition(width, prior);
    let k = x_idx.len();
    let gram = design.tr_mul(design);
    let g = design.tr_mul(y);
    let yty = y.dot(y);

    let hyper = matches!(prior.coef, CoefPrior::Hyper { .. });
    let retained = opts.chain.retained();
    let mut rec = Recorder::new(&opts.track, width, retained, hyper);
    let _ = &z_idx;

    let mut rng = stream_rng(seed, 0);
    let mut sigma2 = initial_noise_var(&prior.noise, y);
    let mut coef_var = 1.0;
    let mut z = DVector::zeros(width);

    for it in 0..opts.chain.iters {
        let tau = prior_precision(&prior.coef, coef_var);
        let mut prec = &gram / sigma2;
        for &j in &x_idx {
            prec[(j, j)] += tau;
        }
        let chol = cholesky_jittered(prec, CHOLESKY_JITTER, "conditional coefficient precision")?;
        let mean = chol.solve(&(&g / sigma2));
        for v in z.iter_mut() {
            *v = std_normal(&mut rng);
        }
        let lt = chol.l().transpose();
        let noise = lt
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))?;
        let b = mean + noise;
        let ssr = yty - 2.0 * b.dot(&g) + b.dot(&(&gram * &b));
        sigma2 = draw_noise_var(&mut rng, &prior.noise, ssr, n);
        if let CoefPrior::Hyper { shape, scale } = prior.coef {
            let ss: f64 = x_idx.iter().map(|&j| b[j] * b[j]).sum();
            coef_var = draw_coef_var(&mut rng, shape, scale, k, ss);
        }
        if it >= opts.chain.burnin {
            rec.sum += &b;
            for (col, &j) in rec.tracked.iter().enumerate() {
                rec.coef[(rec.row, col)] = b[j];
            }
            rec.row += 1;
            rec.noise_var.push(sigma2);
            if let Some(cv) = rec.coef_var.as_mut() {
                cv.push(coef_var);
            }
        }
    }
    Ok(rec.finish())
}
