//! Point and interval estimators of α: the two BDML variants, a naive
//! single-equation Bayesian ridge, the two-step Bayesian plug-in methods
//! HCPH and Linero, frequentist double machine learning and plain OLS.
//!
//! Every estimator works on the centered data, so no intercept columns appear.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bayes_lm::{
    gibbs_lm_with, ChainSettings, CoefPrior, LmOptions, LmPrior, NoisePrior, Track,
};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_full_rank, prepend_column};
use crate::model::Dataset;
use crate::rng::{derive_seed, stream_rng};
use crate::stats::{quantile_sorted, sorted_copy};
use crate::sur::{alpha_summary, bdml_fit, bdml_fit_chains, summarize_draws, SurOptions, SurPrior};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "BDML-Basic")]
    BdmlBasic,
    #[serde(rename = "BDML-Hier")]
    BdmlHier,
    #[serde(rename = "Naive")]
    Naive,
    #[serde(rename = "HCPH")]
    Hcph,
    #[serde(rename = "Linero")]
    Linero,
    #[serde(rename = "FDML-Full")]
    FdmlFull,
    #[serde(rename = "FDML-Split")]
    FdmlSplit,
    #[serde(rename = "OLS")]
    Ols,
}

impl Method {
    /// The seven methods of the reference simulation, in table order.
    pub const TABLE: [Method; 7] = [
        Method::BdmlHier,
        Method::BdmlBasic,
        Method::Linero,
        Method::Hcph,
        Method::Naive,
        Method::FdmlFull,
        Method::FdmlSplit,
    ];

    pub const ALL: [Method; 8] = [
        Method::BdmlHier,
        Method::BdmlBasic,
        Method::Linero,
        Method::Hcph,
        Method::Naive,
        Method::FdmlFull,
        Method::FdmlSplit,
        Method::Ols,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::BdmlBasic => "BDML-Basic",
            Method::BdmlHier => "BDML-Hier",
            Method::Naive => "Naive",
            Method::Hcph => "HCPH",
            Method::Linero => "Linero",
            Method::FdmlFull => "FDML-Full",
            Method::FdmlSplit => "FDML-Split",
            Method::Ols => "OLS",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub method: Method,
    pub point: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub level: f64,
    pub diagnostics: BTreeMap<String, Value>,
}

impl EstimateSummary {
    fn new(method: Method, point: f64, (lo, hi): (f64, f64), level: f64) -> Self {
        let mut diagnostics = BTreeMap::new();
        if !(lo <= point && point <= hi) {
            diagnostics.insert("point_outside_interval".into(), Value::Bool(true));
        }
        EstimateSummary {
            method,
            point,
            interval_lo: lo,
            interval_hi: hi,
            level,
            diagnostics,
        }
    }

    fn note(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.into(), value.into());
        self
    }

    pub fn width(&self) -> f64 {
        self.interval_hi - self.interval_lo
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.interval_lo <= truth && truth <= self.interval_hi
    }
}

/// How a first-stage coefficient vector is summarised from its draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRule {
    #[default]
    Mean,
    Median,
}

/// Settings shared by the sampling-based estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub chain: ChainSettings,
    pub level: f64,
    /// Prior on the control coefficients of every single-equation regression.
    pub coef_prior: CoefPrior,
    pub first_stage: PointRule,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            chain: ChainSettings::default(),
            level: 0.95,
            coef_prior: CoefPrior::Hyper {
                shape: 0.0,
                scale: 0.0,
            },
            first_stage: PointRule::Mean,
        }
    }
}

impl FitSettings {
    fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }

    fn lm_prior(&self, unpenalized: Vec<usize>) -> LmPrior {
        LmPrior {
            unpenalized,
            coef: self.coef_prior,
            noise: NoisePrior::JEFFREYS,
        }
    }
}

fn interval_of(draws: &[f64], level: f64) -> (f64, f64) {
    let s = sorted_copy(draws);
    let tail = 0.5 * (1.0 - level);
    (quantile_sorted(&s, tail), quantile_sorted(&s, 1.0 - tail))
}

/// Posterior draws of the coefficient in column `col` of a single-equation fit.
fn lm_column(
    y: &DVector<f64>,
    design: &DMatrix<f64>,
    prior: &LmPrior,
    chain: ChainSettings,
    col: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let opts = LmOptions {
        chain,
        track: Track::Columns(vec![col]),
        ..Default::default()
    };
    let draws = gibbs_lm_with(y, design, prior, &opts, seed)?;
    Ok(draws.column(col).expect("column tracked"))
}

fn summary_from_draws(method: Method, draws: &[f64], settings: &FitSettings) -> EstimateSummary {
    let point = draws.iter().sum::<f64>() / draws.len() as f64;
    EstimateSummary::new(
        method,
        point,
        interval_of(draws, settings.level),
        settings.level,
    )
    .note("iters", settings.chain.iters)
    .note("burnin", settings.chain.burnin)
}

/// BDML with the default basic or hierarchical conjugate prior.
pub fn bdml_estimate(
    data: &Dataset,
    hierarchical: bool,
    settings: &FitSettings,
    seed: u64,
) -> Result<EstimateSummary> {
    settings.validate()?;
    let c = data.centered();
    let prior = if hierarchical {
        SurPrior::hierarchical(&c)?
    } else {
        SurPrior::basic(&c)?
    };
    bdml_estimate_with(&c, &prior, settings, seed)
}

/// BDML under an explicit prior.
pub fn bdml_estimate_with(
    data: &Dataset,
    prior: &SurPrior,
    settings: &FitSettings,
    seed: u64,
) -> Result<EstimateSummary> {
    settings.validate()?;
    let draws = bdml_fit(data, prior, settings.chain, seed)?;
    let (point, ci) = alpha_summary(&draws, settings.level)?;
    let method = if prior.hierarchical {
        Method::BdmlHier
    } else {
        Method::BdmlBasic
    };
    Ok(EstimateSummary::new(method, point, ci, settings.level)
        .note("iters", settings.chain.iters)
        .note("burnin", settings.chain.burnin)
        .note("nu0", prior.nu0))
}

/// BDML from `chains` independent chains with pooled draws and the split-R̂ of α.
pub fn bdml_estimate_chains(
    data: &Dataset,
    hierarchical: bool,
    settings: &FitSettings,
    chains: usize,
    seed: u64,
) -> Result<EstimateSummary> {
    settings.validate()?;
    let c = data.centered();
    let prior = if hierarchical {
        SurPrior::hierarchical(&c)?
    } else {
        SurPrior::basic(&c)?
    };
    let opts = SurOptions {
        chain: settings.chain,
        ..Default::default()
    };
    let (runs, rhat) = bdml_fit_chains(&c, &prior, &opts, chains, seed)?;
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.alpha.iter().copied()).collect();
    let (point, ci) = summarize_draws(&pooled, settings.level)?;
    let method = if hierarchical {
        Method::BdmlHier
    } else {
        Method::BdmlBasic
    };
    let mut s = EstimateSummary::new(method, point, ci, settings.level)
        .note("iters", settings.chain.iters)
        .note("burnin", settings.chain.burnin)
        .note("nu0", prior.nu0)
        .note("chains", chains);
    if rhat.is_finite() {
        s = s.note("rhat", rhat);
    }
    Ok(s)
}

/// Single-equation regression of y on `[d, x]`, α unpenalised.
pub fn naive_fit(data: &Dataset, settings: &FitSettings, seed: u64) -> Result<EstimateSummary> {
    settings.validate()?;
    let c = data.centered();
    let design = prepend_column(&c.d, &c.x);
    let draws = lm_column(
        &c.y,
        &design,
        &settings.lm_prior(vec![0]),
        settings.chain,
        0,
        seed,
    )?;
    Ok(summary_from_draws(Method::Naive, &draws, settings))
}

/// First-stage Bayesian ridge of d on x; the posterior mean (or median) of γ.
pub fn first_stage_gamma(
    data: &Dataset,
    settings: &FitSettings,
    seed: u64,
) -> Result<DVector<f64>> {
    let c = data.centered();
    bayes_coef(&c.d, &c.x, settings, seed)
}

fn bayes_coef(
    target: &DVector<f64>,
    x: &DMatrix<f64>,
    settings: &FitSettings,
    seed: u64,
) -> Result<DVector<f64>> {
    let track = match settings.first_stage {
        PointRule::Mean => Track::None,
        PointRule::Median => Track::All,
    };
    let opts = LmOptions {
        chain: settings.chain,
        track,
        ..Default::default()
    };
    let draws = gibbs_lm_with(target, x, &settings.lm_prior(vec![]), &opts, seed)?;
    Ok(match settings.first_stage {
        PointRule::Mean => draws.coef_mean,
        PointRule::Median => DVector::from_iterator(
            x.ncols(),
            (0..x.ncols())
                .map(|j| quantile_sorted(&sorted_copy(&draws.column(j).expect("tracked")), 0.5)),
        ),
    })
}

/// HCPH: first-stage γ̂, then y on `[d − Xγ̂, x]`.
pub fn hcph_fit(data: &Dataset, settings: &FitSettings, seed: u64) -> Result<EstimateSummary> {
    settings.validate()?;
    let gamma = first_stage_gamma(data, settings, derive_seed(&[seed, 1]))?;
    hcph_fit_with_gamma(data, &gamma, settings, derive_seed(&[seed, 2]))
}

/// HCPH's second stage for a given first-stage coefficient vector.
pub fn hcph_fit_with_gamma(
    data: &Dataset,
    gamma: &DVector<f64>,
    settings: &FitSettings,
    seed: u64,
) -> Result<EstimateSummary> {
    settings.validate()?;
    check_gamma(data, gamma)?;
    let c = data.centered();
    let v_hat = &c.d - &c.x * gamma;
    let design = prepend_column(&v_hat, &c.x);
    let draws = lm_column(
        &c.y,
        &design,
        &settings.lm_prior(vec![0]),
        settings.chain,
        0,
        seed,
    )?;
    Ok(summary_from_draws(Method::Hcph, &draws, settings))
}

fn check_gamma(data: &Dataset, gamma: &DVector<f64>) -> Result<()> {
    if gamma.len() != data.p() {
        return Err(Error::Dimension {
            what: "first-stage coefficients",
            expected: data.p(),
            got: gamma.len(),
        });
    }
    Ok(())
}

/// Linero: first-stage γ̂, then y on `[d, Xγ̂, x]` with α and κ unpenalised.
pub fn linero_fit(data: &Dataset, settings: &FitSettings, seed: u64) -> Result<EstimateSummary> {
    settings.validate()?;
    linero_prior_check(settings)?;
    let gamma = first_stage_gamma(data, settings, derive_seed(&[seed, 1]))?;
    linero_fit_with_gamma(data, &gamma, settings, derive_seed(&[seed, 2]))
}

fn linero_prior_check(settings: &FitSettings) -> Result<()> {
    if matches!(settings.coef_prior, CoefPrior::Flat) {
        return Err(Error::invalid(
            "Linero requires a ridge prior on the controls: D̂_i = X_iγ̂ is perfectly collinear with X_i",
        ));
    }
    Ok(())
}

/// Linero's second stage for a given first-stage coefficient vector. A
/// numerically zero `Xγ̂` leaves κ unidentified; the column is then dropped
/// and the fit reduces to the naive regression.
pub fn linero_fit_with_gamma(
    data: &Dataset,
    gamma: &DVector<f64>,
    settings: &FitSettings,
    seed: u64,
) -> Result<EstimateSummary> {
    settings.validate()?;
    linero_prior_check(settings)?;
    check_gamma(data, gamma)?;
    let c = data.centered();
    let d_hat = &c.x * gamma;
    let identified = d_hat.norm_squared() > 1e-12 * c.d.norm_squared().max(f64::MIN_POSITIVE);
    let (design, unpenalized) = if identified {
        let inner = prepend_column(&d_hat, &c.x);
        (prepend_column(&c.d, &inner), vec![0, 1])
    } else {
        (prepend_column(&c.d, &c.x), vec![0])
    };
    let draws = lm_column(
        &c.y,
        &design,
        &settings.lm_prior(unpenalized),
        settings.chain,
        0,
        seed,
    )?;
    Ok(summary_from_draws(Method::Linero, &draws, settings).note("kappa_identified", identified))
}

/// How FDML estimates its first-stage regressions of y and d on x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstStage {
    /// Posterior means of Bayesian ridge regressions.
    Bayes,
    /// Closed-form ridge with the given λ; `λ = 0` is OLS.
    Ridge { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSplit {
    Full,
    /// Random halves; first stages on one half, the final regression on the
    /// other. `swap` exchanges the roles of the two halves.
    Half {
        seed: u64,
        swap: bool,
    },
    /// Both orientations of the split, residuals pooled before the final
    /// regression. Exploratory; not part of the reference comparison.
    CrossFit {
        seed: u64,
    },
}

fn ridge_coef(target: &DVector<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("ridge lambda must be >= 0"));
    }
    if lambda == 0.0 && x.ncols() >= x.nrows() {
        return Err(Error::RankDeficient(format!(
            "no unique least-squares first stage with p = {} >= n = {}",
            x.ncols(),
            x.nrows()
        )));
    }
    let mut g = x.tr_mul(x);
    for j in 0..g.nrows() {
        g[(j, j)] += lambda;
    }
    let chol = cholesky_full_rank(g)
        .ok_or_else(|| Error::RankDeficient("first-stage Gram matrix is singular".into()))?;
    Ok(chol.solve(&x.tr_mul(target)))
}

fn first_stages(
    train: &Dataset,
    first: FirstStage,
    settings: &FitSettings,
    seed: u64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    match first {
        FirstStage::Bayes => Ok((
            bayes_coef(&train.y, &train.x, settings, derive_seed(&[seed, 1]))?,
            bayes_coef(&train.d, &train.x, settings, derive_seed(&[seed, 2]))?,
        )),
        FirstStage::Ridge { lambda } => Ok((
            ridge_coef(&train.y, &train.x, lambda)?,
            ridge_coef(&train.d, &train.x, lambda)?,
        )),
    }
}

/// Residual-on-residual OLS without intercept, with its t interval on
/// `m − 1` degrees of freedom.
fn residual_regression(ry: &[f64], rd: &[f64], level: f64) -> Result<(f64, (f64, f64), f64)> {
    let m = ry.len();
    if m < 3 {
        return Err(Error::DegenerateData(format!(
            "final regression needs >= 3 rows, got {m}"
        )));
    }
    let sdd: f64 = rd.iter().map(|v| v * v).sum();
    let scale: f64 = ry.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if !(sdd > 1e-14 * scale) {
        return Err(Error::DegenerateData(
            "treatment residuals have zero variance".into(),
        ));
    }
    let alpha = ry.iter().zip(rd).map(|(a, b)| a * b).sum::<f64>() / sdd;
    let df = (m - 1) as f64;
    let s2 = ry
        .iter()
        .zip(rd)
        .map(|(a, b)| (a - alpha * b).powi(2))
        .sum::<f64>()
        / df;
    let se = (s2 / sdd).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .inverse_cdf(0.5 + 0.5 * level);
    Ok((alpha, (alpha - t * se, alpha + t * se), se))
}

fn residuals(data: &Dataset, delta: &DVector<f64>, gamma: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let ry = &data.y - &data.x * delta;
    let rd = &data.d - &data.x * gamma;
    (ry.iter().copied().collect(), rd.iter().copied().collect())
}

fn halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 0));
    let cut = n / 2;
    let (mut a, mut b) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Frisch–Waugh style double machine learning.
pub fn fdml_fit(
    data: &Dataset,
    first: FirstStage,
    split: SampleSplit,
    settings: &FitSettings,
    seed: u64,
) -> Result<EstimateSummary> {
    settings.validate()?;
    let c = data.centered();
    let (method, (ry, rd)) = match split {
        SampleSplit::Full => {
            let (delta, gamma) = first_stages(&c, first, settings, seed)?;
            (Method::FdmlFull, residuals(&c, &delta, &gamma))
        }
        SampleSplit::Half {
            seed: split_seed,
            swap,
        } => {
            let (a, b) = halves(c.n(), split_seed);
            let (train, test) = if swap { (b, a) } else { (a, b) };
            let (delta, gamma) = first_stages(&c.rows(&train), first, settings, seed)?;
            (Method::FdmlSplit, residuals(&c.rows(&test), &delta, &gamma))
        }
        SampleSplit::CrossFit { seed: split_seed } => {
            let (a, b) = halves(c.n(), split_seed);
            let (da, ga) = first_stages(&c.rows(&a), first, settings, derive_seed(&[seed, 10]))?;
            let (db, gb) = first_stages(&c.rows(&b), first, settings, derive_seed(&[seed, 11]))?;
            let (mut ry, mut rd) = residuals(&c.rows(&b), &da, &ga);
            let (ry2, rd2) = residuals(&c.rows(&a), &db, &gb);
            ry.extend(ry2);
            rd.extend(rd2);
            (Method::FdmlSplit, (ry, rd))
        }
    };
    let (point, ci, se) = residual_regression(&ry, &rd, settings.level)?;
    let mut out = EstimateSummary::new(method, point, ci, settings.level)
        .note("se", se)
        .note("final_rows", ry.len());
    match first {
        FirstStage::Bayes => {
            out = out
                .note("iters", settings.chain.iters)
                .note("burnin", settings.chain.burnin);
        }
        FirstStage::Ridge { lambda } => out = out.note("lambda", lambda),
    }
    match split {
        SampleSplit::Half { seed, swap } => {
            out = out.note("split_seed", seed.to_string()).note("swap", swap)
        }
        SampleSplit::CrossFit { seed } => {
            out = out
                .note("split_seed", seed.to_string())
                .note("cross_fit", true)
        }
        SampleSplit::Full => {}
    }
    Ok(out)
}

/// Least squares of y on `[d, x]` (centered, so with an intercept), with the
/// classical t interval on `n − p − 2` degrees of freedom.
pub fn ols_fit(data: &Dataset, level: f64) -> Result<EstimateSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let c = data.centered();
    let (n, k) = (c.n(), c.p() + 1);
    if n < k + 2 {
        return Err(Error::RankDeficient(format!(
            "OLS needs n > p + 2 for a residual variance; n = {n}, p = {}",
            c.p()
        )));
    }
    let design = prepend_column(&c.d, &c.x);
    let chol = cholesky_full_rank(design.tr_mul(&design))
        .ok_or_else(|| Error::RankDeficient("regressors are collinear".into()))?;
    let coef = chol.solve(&design.tr_mul(&c.y));
    let resid = &c.y - &design * &coef;
    let df = (n - k - 1) as f64;
    let s2 = resid.norm_squared() / df;
    let mut e0 = DVector::zeros(k);
    e0[0] = 1.0;
    let v00 = chol.solve(&e0)[0];
    let se = (s2 * v00).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .inverse_cdf(0.5 + 0.5 * level);
    let a = coef[0];
    Ok(
        EstimateSummary::new(Method::Ols, a, (a - t * se, a + t * se), level)
            .note("se", se)
            .note("df", df),
    )
}

/// Dispatch by method with reference settings. `seed` drives every random
/// choice the method makes, including the FDML-Split partition.
pub fn fit_method(
    method: Method,
    data: &Dataset,
    settings: &FitSettings,
    seed: u64,
) -> Result<EstimateSummary> {
    match method {
        Method::BdmlBasic => bdml_estimate(data, false, settings, seed),
        Method::BdmlHier => bdml_estimate(data, true, settings, seed),
        Method::Naive => naive_fit(data, settings, seed),
        Method::Hcph => hcph_fit(data, settings, seed),
        Method::Linero => linero_fit(data, settings, seed),
        Method::FdmlFull => fdml_fit(data, FirstStage::Bayes, SampleSplit::Full, settings, seed),
        Method::FdmlSplit => fdml_fit(
            data,
            FirstStage::Bayes,
            SampleSplit::Half {
                seed: derive_seed(&[seed, 99]),
                swap: false,
            },
            settings,
            seed,
        ),
        Method::Ols => ols_fit(data, settings.level),
    }
}
