//! What the priors imply before any data arrive: the Student-t prior on α
//! induced by an inverse-Wishart prior on Σ, the prior distribution of the
//! confounding (selection) bias under the naive and BDML priors, and the
//! signal-to-noise ratio implied by a coefficient precision.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::Cov2;
use crate::rng::{inv_gamma, std_normal, stream_rng};
use crate::stats::{log_log_slope, std_dev};
use crate::sur::inverse_wishart2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TPriorParams {
    pub location: f64,
    pub scale: f64,
    pub df: f64,
}

impl TPriorParams {
    pub fn new(location: f64, scale: f64, df: f64) -> Result<Self> {
        if !(scale > 0.0 && df > 0.0) || !location.is_finite() {
            return Err(Error::invalid(format!(
                "t prior needs scale > 0 and df > 0 (scale {scale}, df {df})"
            )));
        }
        Ok(TPriorParams {
            location,
            scale,
            df,
        })
    }

    fn dist(&self) -> StudentsT {
        StudentsT::new(self.location, self.scale, self.df).expect("validated parameters")
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist().cdf(x)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        self.dist().inverse_cdf(q)
    }
}

/// Marginal prior of `α = Σ₁₂/Σ₂₂` when `Σ ~ IW(ν₀, Σ₀)`:
/// location `Σ₀,₁₂/Σ₀,₂₂`, scale `|Σ₀|^{1/2}/(√ν₀ Σ₀,₂₂)`, `ν₀` degrees of freedom.
pub fn induced_alpha_prior(nu0: f64, sigma0: &Cov2) -> Result<TPriorParams> {
    if !(nu0 > 0.0) {
        return Err(Error::invalid(format!("nu0 must be > 0, got {nu0}")));
    }
    TPriorParams::new(
        sigma0.s12() / sigma0.s22(),
        sigma0.det().sqrt() / (nu0.sqrt() * sigma0.s22()),
        nu0,
    )
}

/// Monte Carlo draws of `Σ₁₂/Σ₂₂` under `Σ ~ IW(ν₀, Σ₀)`.
pub fn sample_alpha_prior(nu0: f64, sigma0: &Cov2, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..draws)
        .map(|_| inverse_wishart2(&mut rng, nu0, sigma0).map(|s| s.s12() / s.s22()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SbModel {
    /// Independent normal priors on the structural β and γ.
    Naive,
    /// Inverse-Wishart prior on the reduced-form Σ plus a normal prior on γ.
    Bdml,
}

/// Covariance of the controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaXSpec {
    Identity,
    /// Diagonal with the given variances; recycled if shorter than p.
    Diagonal(Vec<f64>),
}

impl SigmaXSpec {
    fn diagonal(&self, p: usize) -> Result<DVector<f64>> {
        match self {
            SigmaXSpec::Identity => Ok(DVector::from_element(p, 1.0)),
            SigmaXSpec::Diagonal(v) => {
                if v.is_empty() || v.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::invalid("diagonal Sigma_X needs positive entries"));
                }
                Ok(DVector::from_fn(p, |j, _| v[j % v.len()]))
            }
        }
    }
}

/// Prior settings for the selection-bias audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbPrior {
    /// Naive: precision of β. BDML: unused.
    pub tau_beta: f64,
    pub tau_gamma: f64,
    pub nu0: f64,
    pub sigma0: Cov2,
}

impl SbPrior {
    /// Precisions `τ = p`, `ν₀ = 4`, `Σ₀ = I₂`.
    pub fn reference(p: usize) -> Self {
        SbPrior {
            tau_beta: p as f64,
            tau_gamma: p as f64,
            nu0: 4.0,
            sigma0: Cov2::identity(),
        }
    }
}

/// Minimum number of Monte Carlo draws accepted by [`prior_selection_bias`].
pub const MIN_SB_DRAWS: usize = 1000;

/// Prior draws of the selection bias.
///
/// Naive: `γ'Σ_Xβ/(Σ₂₂ + γ'Σ_Xγ)` with β, γ from their normal priors and Σ₂₂
/// from the marginal of the inverse-Wishart noise prior, `IG((ν₀ − 1)/2, Σ₀,₂₂/2)`.
/// BDML: `Σ₁₂/(Σ₂₂ + γ'Σ_Xγ)` with Σ from the inverse-Wishart prior.
///
/// The noise draws use stream 0 and the coefficient draws stream 1 of
/// `seed`, so runs at different `p` share their noise draws.
pub fn prior_selection_bias(
    model: SbModel,
    prior: &SbPrior,
    p: usize,
    sigma_x: &SigmaXSpec,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if draws < MIN_SB_DRAWS {
        return Err(Error::invalid(format!(
            "need at least {MIN_SB_DRAWS} draws, got {draws}"
        )));
    }
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    if !(prior.tau_gamma > 0.0) || (model == SbModel::Naive && !(prior.tau_beta > 0.0)) {
        return Err(Error::invalid("prior precisions must be > 0"));
    }
    if !(prior.nu0 > 1.0) {
        return Err(Error::invalid("nu0 must exceed 1"));
    }
    let lam = sigma_x.diagonal(p)?;
    let mut noise_rng = stream_rng(seed, 0);
    let mut coef_rng = stream_rng(seed, 1);
    let (sg, sb) = (1.0 / prior.tau_gamma.sqrt(), 1.0 / prior.tau_beta.sqrt());
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        match model {
            SbModel::Naive => {
                let s22 = inv_gamma(
                    &mut noise_rng,
                    0.5 * (prior.nu0 - 1.0),
                    0.5 * prior.sigma0.s22(),
                );
                let (mut gxb, mut gxg) = (0.0, 0.0);
                for &l in lam.iter() {
                    let g = sg * std_normal(&mut coef_rng);
                    let b = sb * std_normal(&mut coef_rng);
                    gxb += g * l * b;
                    gxg += g * l * g;
                }
                out.push(gxb / (s22 + gxg));
            }
            SbModel::Bdml => {
                let s = inverse_wishart2(&mut noise_rng, prior.nu0, &prior.sigma0)?;
                let gxg: f64 = lam
                    .iter()
                    .map(|&l| {
                        let g = sg * std_normal(&mut coef_rng);
                        g * l * g
                    })
                    .sum();
                out.push(s.s12() / (s.s22() + gxg));
            }
        }
    }
    Ok(out)
}

/// Selection-bias dispersion at each `p`, with the prior precisions re-scaled
/// to `τ = p` at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbScaling {
    pub model: SbModel,
    pub p: Vec<usize>,
    pub sd: Vec<f64>,
    /// Log-log slope of `sd` on `p` and its standard error.
    pub slope: f64,
    pub slope_se: f64,
}

pub fn sb_dispersion_scaling(
    model: SbModel,
    ps: &[usize],
    nu0: f64,
    sigma0: &Cov2,
    draws: usize,
    seed: u64,
) -> Result<SbScaling> {
    if ps.len() < 2 {
        return Err(Error::invalid("need at least two p values"));
    }
    let sd = ps
        .iter()
        .map(|&p| {
            let prior = SbPrior {
                nu0,
                sigma0: *sigma0,
                ..SbPrior::reference(p)
            };
            prior_selection_bias(model, &prior, p, &SigmaXSpec::Identity, draws, seed)
                .map(|s| std_dev(&s))
        })
        .collect::<Result<Vec<_>>>()?;
    let pf: Vec<f64> = ps.iter().map(|&p| p as f64).collect();
    let (slope, slope_se) = log_log_slope(&pf, &sd);
    Ok(SbScaling {
        model,
        p: ps.to_vec(),
        sd,
        slope,
        slope_se,
    })
}

/// Limit signal-to-noise ratio `p μ₁ / (τ σ²)` of a regression whose `p`
/// coefficients have prior precision `τ` and whose controls have average
/// eigenvalue `μ₁`, and the implied `R² = SNR/(1 + SNR)`.
pub fn prior_snr_r2(tau: f64, p: usize, noise_var: f64, mu1: f64) -> Result<(f64, f64)> {
    if !(tau > 0.0 && noise_var > 0.0 && mu1 > 0.0) || p == 0 {
        return Err(Error::invalid(
            "prior_snr_r2 needs tau, noise_var, mu1 > 0 and p >= 1",
        ));
    }
    let snr = p as f64 * mu1 / (tau * noise_var);
    Ok((snr, snr / (1.0 + snr)))
}
