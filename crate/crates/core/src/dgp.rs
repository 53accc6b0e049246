//! Simulation design: Gaussian controls, independent structural errors and a
//! fresh outcome-coefficient vector per replication.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, StructuralParams};
use crate::rng::{std_normal, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    pub gamma: Vec<f64>,
    pub mu_beta: Vec<f64>,
    pub sigma_beta2: f64,
    pub sigma_eps: f64,
    /// Standard deviation of the treatment error V; the reference design fixes it at 1.
    #[serde(default = "one")]
    pub sigma_v: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SimDesign {
    /// Reference design: α = 2, γ = ι/√p, μ_β = −γ/2, σ_β² = 1/p, n = 200, p = 100.
    pub fn default_design(sigma_eps: f64) -> Self {
        Self::with_size(200, 100, sigma_eps)
    }

    /// The reference constants at a different `(n, p)`.
    pub fn with_size(n: usize, p: usize, sigma_eps: f64) -> Self {
        let g = 1.0 / (p as f64).sqrt();
        SimDesign {
            n,
            p,
            alpha: 2.0,
            gamma: vec![g; p],
            mu_beta: vec![-0.5 * g; p],
            sigma_beta2: 1.0 / p as f64,
            sigma_eps,
            sigma_v: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("design needs n > 0 and p > 0"));
        }
        if self.gamma.len() != self.p {
            return Err(Error::Dimension {
                what: "design gamma",
                expected: self.p,
                got: self.gamma.len(),
            });
        }
        if self.mu_beta.len() != self.p {
            return Err(Error::Dimension {
                what: "design mu_beta",
                expected: self.p,
                got: self.mu_beta.len(),
            });
        }
        if !(self.sigma_eps > 0.0) || !(self.sigma_v > 0.0) {
            return Err(Error::invalid("design error scales must be positive"));
        }
        if !(self.sigma_beta2 >= 0.0) {
            return Err(Error::invalid("sigma_beta2 must be non-negative"));
        }
        Ok(())
    }
}

/// One draw from the design using stream 0 of `design.seed`.
pub fn generate(design: &SimDesign) -> Result<(Dataset, StructuralParams)> {
    generate_replication(design, 0)
}

/// Replication `rep` of the design: stream `rep` of `design.seed`.
///
/// Draw order is fixed: X row by row, then (ε_i, V_i) pairs, then β.
pub fn generate_replication(design: &SimDesign, rep: u64) -> Result<(Dataset, StructuralParams)> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let mut rng = stream_rng(design.seed, rep);

    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            x[(i, j)] = std_normal(&mut rng);
        }
    }
    let mut eps = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    for i in 0..n {
        eps[i] = design.sigma_eps * std_normal(&mut rng);
        v[i] = design.sigma_v * std_normal(&mut rng);
    }
    let sb = design.sigma_beta2.sqrt();
    let beta = DVector::from_iterator(
        p,
        design
            .mu_beta
            .iter()
            .map(|&m| m + sb * std_normal(&mut rng)),
    );
    let gamma = DVector::from_vec(design.gamma.clone());

    let d = &x * &gamma + v;
    let y = &d * design.alpha + &x * &beta + eps;
    let truth = StructuralParams::new(
        design.alpha,
        beta,
        gamma,
        design.sigma_eps * design.sigma_eps,
        design.sigma_v * design.sigma_v,
    )?;
    Ok((Dataset::new(y, d, x)?, truth))
}
