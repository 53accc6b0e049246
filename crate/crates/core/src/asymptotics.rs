//! Finite-sample experiments on the large-sample behaviour of the estimators:
//! bias rates of the naive ridge posterior mean against BDML, the common
//! asymptotic variance, and normality of the BDML posterior.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bayes_lm::ChainSettings;
use crate::competitors::{fit_method, FitSettings, Method};
use crate::dgp::{generate_replication, SimDesign};
use crate::error::{Error, Result};
use crate::model::{Cov2, Dataset, StructuralParams};
use crate::ridge::ridge_point;
use crate::rng::{derive_seed, label_hash};
use crate::stats::{ks_statistic, log_log_slope, mean, std_dev, variance};
use crate::sur::{bdml_fit, SurPrior};

/// `(Σ₁₁Σ₂₂ − Σ₁₂²)/Σ₂₂²`, shared by the naive, BDML and FDML estimators.
pub fn asymptotic_variance(sigma: &Cov2) -> f64 {
    sigma.det() / (sigma.s22() * sigma.s22())
}

/// Estimators compared in the rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    /// Ridge posterior mean of α with `λ = τ` (flat on α).
    Naive,
    /// Posterior mean of α under the conjugate prior with `τ_δ = τ_γ = τ`.
    Bdml,
}

impl RateMethod {
    pub fn label(&self) -> &'static str {
        match self {
            RateMethod::Naive => "naive",
            RateMethod::Bdml => "bdml",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCell {
    pub n: usize,
    pub p: usize,
    /// Prior precision (and ridge penalty) `τ = tau_c · p`.
    pub tau_c: f64,
}

/// How the outcome coefficients relate to γ in the rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaDesign {
    /// Fixed `β = −γ/2`, so `γ'β = −‖γ‖²/2`.
    #[default]
    Confounded,
    /// Fixed β orthogonal to γ (`γ'β = 0`).
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateExperiment {
    pub cells: Vec<RateCell>,
    pub reps: usize,
    pub methods: Vec<RateMethod>,
    pub seed: u64,
    #[serde(default = "one")]
    pub sigma_eps: f64,
    #[serde(default)]
    pub beta: BetaDesign,
    #[serde(default = "rate_chain")]
    pub chain: ChainSettings,
}

fn one() -> f64 {
    1.0
}

fn rate_chain() -> ChainSettings {
    ChainSettings {
        iters: 2500,
        burnin: 500,
    }
}

impl RateExperiment {
    /// `n ∈ {200, 400, 800, 1600}`, `p = round(n^{2/3})`, `τ = p`, 200 replications.
    pub fn default_grid(seed: u64) -> Self {
        let cells = [200usize, 400, 800, 1600]
            .iter()
            .map(|&n| RateCell {
                n,
                p: (n as f64).powf(2.0 / 3.0).round() as usize,
                tau_c: 1.0,
            })
            .collect();
        RateExperiment {
            cells,
            reps: 200,
            methods: vec![RateMethod::Naive, RateMethod::Bdml],
            seed,
            sigma_eps: 1.0,
            beta: BetaDesign::Confounded,
            chain: rate_chain(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::invalid("rate experiment grid is empty"));
        }
        if self.reps < 100 {
            return Err(Error::invalid(format!(
                "rate experiment needs reps >= 100, got {}",
                self.reps
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("rate experiment needs at least one method"));
        }
        for c in &self.cells {
            if c.p == 0 || c.n <= c.p + 2 || !(c.tau_c > 0.0) {
                return Err(Error::invalid(format!(
                    "rate cell (n = {}, p = {}, tau_c = {}) needs 0 < p < n - 2 and tau_c > 0",
                    c.n, c.p, c.tau_c
                )));
            }
        }
        self.chain.validate()
    }
}

/// Fixed-coefficient design for one cell.
pub fn rate_design(cell: &RateCell, sigma_eps: f64, beta: BetaDesign, seed: u64) -> SimDesign {
    let mut d = SimDesign::with_size(cell.n, cell.p, sigma_eps);
    d.sigma_beta2 = 0.0;
    d.seed = seed;
    if beta == BetaDesign::Orthogonal {
        let b = 0.5 / (cell.p as f64).sqrt();
        let mut mu: Vec<f64> = (0..cell.p)
            .map(|j| if j % 2 == 0 { b } else { -b })
            .collect();
        if cell.p % 2 == 1 {
            mu[cell.p - 1] = 0.0;
        }
        d.mu_beta = mu;
    }
    d
}

/// Leading-order naive bias `(λ/n) γ'β / Σ₂₂`.
pub fn naive_bias_leading(lambda: f64, n: usize, truth: &StructuralParams) -> f64 {
    lambda / n as f64 * truth.gamma.dot(&truth.beta) / truth.sigma_v2
}

/// Naive bias with the full ridge shrinkage factors at `Σ_X = I`:
/// `c γ'β / (c ‖γ‖² + Σ₂₂ (1 − r c))` with `c = (λ/n)/(1 + λ/n)`, `r = p/n`.
pub fn naive_bias_refined(lambda: f64, n: usize, truth: &StructuralParams) -> f64 {
    let l = lambda / n as f64;
    let c = l / (1.0 + l);
    let r = truth.p() as f64 / n as f64;
    let num = c * truth.gamma.dot(&truth.beta);
    let den = c * truth.gamma.norm_squared() + truth.sigma_v2 * (1.0 - r + r * l / (1.0 + l));
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub method: RateMethod,
    pub mean_bias: f64,
    pub mc_se: f64,
    /// `n · Var(α̂)` over the replications.
    pub nvar: f64,
    /// Leading-order prediction (naive only).
    pub prediction: Option<f64>,
}

/// Paired comparison of `|bias|` in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGap {
    pub n: usize,
    pub p: usize,
    pub naive_abs_bias: f64,
    pub bdml_abs_bias: f64,
    /// `|naive bias| − |BDML bias|`.
    pub gap: f64,
    /// Standard error of `gap` from the paired per-replication errors.
    pub gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub gaps: Vec<RateGap>,
    /// `(method, slope, se)` of `ln |mean bias|` on `ln n`.
    pub slopes: Vec<(RateMethod, f64, f64)>,
}

fn rate_fit(
    method: RateMethod,
    data: &Dataset,
    tau: f64,
    chain: ChainSettings,
    seed: u64,
) -> Result<f64> {
    let c = data.centered();
    match method {
        RateMethod::Naive => ridge_point(&c, tau),
        RateMethod::Bdml => {
            let prior = SurPrior {
                tau_delta: tau,
                tau_gamma: tau,
                ..SurPrior::basic(&c)?
            };
            let draws = bdml_fit(&c, &prior, chain, seed)?;
            Ok(mean(&draws.alpha))
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Runs every (cell, replication) with every method on shared data draws;
/// results are reduced in cell order, independent of `workers`.
pub fn run_rate_experiment(exp: &RateExperiment, workers: usize) -> Result<RateReport> {
    exp.validate()?;
    let pool = pool(workers)?;
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for (ci, cell) in exp.cells.iter().enumerate() {
        let tau = cell.tau_c * cell.p as f64;
        let cell_seed = derive_seed(&[exp.seed, ci as u64, cell.n as u64, cell.p as u64]);
        let design = rate_design(cell, exp.sigma_eps, exp.beta, cell_seed);
        let errs: Vec<Vec<f64>> = pool.install(|| {
            (0..exp.reps as u64)
                .into_par_iter()
                .map(|rep| -> Result<Vec<f64>> {
                    let (data, truth) = generate_replication(&design, rep)?;
                    exp.methods
                        .iter()
                        .map(|&m| {
                            let seed = derive_seed(&[cell_seed, rep, label_hash(m.label())]);
                            rate_fit(m, &data, tau, exp.chain, seed).map(|a| a - truth.alpha)
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let truth = generate_replication(&design, 0)?.1;
        let by_method: Vec<Vec<f64>> = (0..exp.methods.len())
            .map(|k| errs.iter().map(|e| e[k]).collect())
            .collect();
        for (k, &m) in exp.methods.iter().enumerate() {
            let e = &by_method[k];
            rows.push(RateRow {
                n: cell.n,
                p: cell.p,
                tau,
                method: m,
                mean_bias: mean(e),
                mc_se: std_dev(e) / (e.len() as f64).sqrt(),
                nvar: cell.n as f64 * variance(e),
                prediction: (m == RateMethod::Naive)
                    .then(|| naive_bias_leading(tau, cell.n, &truth)),
            });
        }
        let find = |m: RateMethod| exp.methods.iter().position(|&x| x == m);
        if let (Some(a), Some(b)) = (find(RateMethod::Naive), find(RateMethod::Bdml)) {
            let (ea, eb) = (&by_method[a], &by_method[b]);
            let (ma, mb) = (mean(ea), mean(eb));
            let paired: Vec<f64> = ea
                .iter()
                .zip(eb)
                .map(|(x, y)| ma.signum() * x - mb.signum() * y)
                .collect();
            gaps.push(RateGap {
                n: cell.n,
                p: cell.p,
                naive_abs_bias: ma.abs(),
                bdml_abs_bias: mb.abs(),
                gap: ma.abs() - mb.abs(),
                gap_se: std_dev(&paired) / (paired.len() as f64).sqrt(),
            });
        }
    }
    let mut slopes = Vec::new();
    for &m in &exp.methods {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.method == m)
            .map(|r| (r.n as f64, r.mean_bias.abs()))
            .collect();
        if pts.len() >= 3 && pts.iter().all(|&(_, b)| b > 0.0) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let (s, se) = log_log_slope(&x, &y);
            slopes.push((m, s, se));
        }
    }
    Ok(RateReport { rows, gaps, slopes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NVarRow {
    pub method: Method,
    /// `n · Var(α̂)` across replications.
    pub nvar: f64,
    /// Standard error of `nvar` under normality, `nvar · sqrt(2/(reps − 1))`.
    pub se: f64,
    pub target: f64,
    pub mean_point: f64,
}

/// `n · Var(α̂)` of each method over `reps` draws of `design`, compared with
/// the asymptotic variance of the design's reduced form.
pub fn nvar_experiment(
    design: &SimDesign,
    methods: &[Method],
    reps: usize,
    settings: &FitSettings,
    workers: usize,
) -> Result<Vec<NVarRow>> {
    if reps < 2 {
        return Err(Error::invalid("n·Var experiment needs reps >= 2"));
    }
    let pool = pool(workers)?;
    let points: Vec<Vec<f64>> = pool.install(|| {
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| -> Result<Vec<f64>> {
                let (data, _) = generate_replication(design, rep)?;
                methods
                    .iter()
                    .map(|&m| {
                        let seed = derive_seed(&[design.seed, rep, label_hash(m.label())]);
                        fit_method(m, &data, settings, seed).map(|e| e.point)
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let truth = generate_replication(design, 0)?.1;
    let target = truth.sigma_eps2 / truth.sigma_v2;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let xs: Vec<f64> = points.iter().map(|v| v[k]).collect();
            let nvar = design.n as f64 * variance(&xs);
            NVarRow {
                method: m,
                nvar,
                se: nvar * (2.0 / (reps as f64 - 1.0)).sqrt(),
                target,
                mean_point: mean(&xs),
            }
        })
        .collect())
}

/// Minimum number of draws accepted by the normality diagnostics.
pub const MIN_BVM_DRAWS: usize = 500;

/// KS distances above this are flagged as non-normal.
pub const BVM_FLAG_KS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvmResult {
    pub ks: f64,
    pub center: f64,
    pub scale: f64,
    pub flagged: bool,
}

/// KS distance between `(draw − center)/scale` and the standard normal.
/// `center` and `scale` default to the draws' mean and standard deviation.
pub fn bvm_diagnostic(draws: &[f64], center: Option<f64>, scale: Option<f64>) -> Result<BvmResult> {
    if draws.len() < MIN_BVM_DRAWS {
        return Err(Error::invalid(format!(
            "normality diagnostic needs at least {MIN_BVM_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    let center = center.unwrap_or_else(|| mean(draws));
    let scale = scale.unwrap_or_else(|| std_dev(draws));
    if !(scale > 0.0) {
        return Err(Error::invalid(
            "normality diagnostic needs a positive scale",
        ));
    }
    let z: Vec<f64> = draws.iter().map(|a| (a - center) / scale).collect();
    let normal = Normal::standard();
    let ks = ks_statistic(&z, |x| normal.cdf(x));
    Ok(BvmResult {
        ks,
        center,
        scale,
        flagged: ks > BVM_FLAG_KS,
    })
}

/// Which error variance normalises the oracle information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BvmNorm {
    /// Information `Σ V_i² / (n σ_ε²)`.
    #[default]
    EpsVar,
    /// Information `Σ V_i² / (n σ_V²)`.
    VVar,
}

/// Normal limit centred at the infeasible oracle `α* + Σ ε_i V_i / Σ V_i²`
/// with variance `σ² / Σ V_i²`, computed from the true structural parameters.
pub fn bvm_oracle_normal(
    data: &Dataset,
    truth: &StructuralParams,
    norm: BvmNorm,
) -> Result<(f64, f64)> {
    let v = &data.d - &data.x * &truth.gamma;
    let eps = &data.y - &data.d * truth.alpha - &data.x * &truth.beta;
    let svv = v.norm_squared();
    if !(svv > 0.0) {
        return Err(Error::DegenerateData(
            "treatment errors are all zero".into(),
        ));
    }
    let center = truth.alpha + eps.dot(&v) / svv;
    let s2 = match norm {
        BvmNorm::EpsVar => truth.sigma_eps2,
        BvmNorm::VVar => truth.sigma_v2,
    };
    Ok((center, (s2 / svv).sqrt()))
}

pub fn bvm_oracle_diagnostic(
    draws: &[f64],
    data: &Dataset,
    truth: &StructuralParams,
    norm: BvmNorm,
) -> Result<BvmResult> {
    let (c, s) = bvm_oracle_normal(data, truth, norm)?;
    bvm_diagnostic(draws, Some(c), Some(s))
}
