//! Structural and reduced-form parameterisations of the linear partially linear model.
//!
//! Structural form:
//!
//! ```text
//! Y = αD + Xβ + ε,   D = Xγ + V,   Cov(ε, V) = 0
//! ```
//!
//! Reduced form (both outcomes regressed on X only):
//!
//! ```text
//! Y = Xδ + U,  D = Xγ + V,   δ = αγ + β,   U = ε + αV
//! Σ = Var(U, V) = [[σ_ε² + α²σ_V², ασ_V²], [ασ_V², σ_V²]]
//! ```
//!
//! so the causal effect is the regression coefficient of U on V, `α = σ_UV / σ_V²`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot threshold for the 2×2 Cholesky positive-definiteness test.
pub const PD_PIVOT_TOL: f64 = 1e-10;

/// Symmetric positive-definite 2×2 covariance of `(U, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Cov2Repr", into = "Cov2Repr")]
pub struct Cov2 {
    s11: f64,
    s12: f64,
    s22: f64,
}

#[derive(Serialize, Deserialize)]
struct Cov2Repr {
    s11: f64,
    s12: f64,
    s22: f64,
}

impl TryFrom<Cov2Repr> for Cov2 {
    type Error = Error;
    fn try_from(r: Cov2Repr) -> Result<Self> {
        Cov2::new(r.s11, r.s12, r.s22)
    }
}

impl From<Cov2> for Cov2Repr {
    fn from(c: Cov2) -> Self {
        Cov2Repr {
            s11: c.s11,
            s12: c.s12,
            s22: c.s22,
        }
    }
}

impl Cov2 {
    /// Validated constructor. Rejects non-finite entries and matrices whose
    /// Cholesky pivots fall below `PD_PIVOT_TOL` relative to their diagonal.
    pub fn new(s11: f64, s12: f64, s22: f64) -> Result<Self> {
        if !(s11.is_finite() && s12.is_finite() && s22.is_finite()) {
            return Err(Error::NotPositiveDefinite(format!(
                "non-finite covariance [{s11}, {s12}; {s12}, {s22}]"
            )));
        }
        if s11 <= 0.0 || s22 <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "non-positive variance in [{s11}, {s12}; {s12}, {s22}]"
            )));
        }
        let pivot2 = s22 - s12 * s12 / s11;
        if pivot2 <= PD_PIVOT_TOL * s22 {
            return Err(Error::NotPositiveDefinite(format!(
                "second Cholesky pivot {pivot2:e} of [{s11}, {s12}; {s12}, {s22}] below tolerance"
            )));
        }
        Ok(Cov2 { s11, s12, s22 })
    }

    pub fn identity() -> Self {
        Cov2 {
            s11: 1.0,
            s12: 0.0,
            s22: 1.0,
        }
    }

    pub fn diagonal(s11: f64, s22: f64) -> Result<Self> {
        Cov2::new(s11, 0.0, s22)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Result<Self> {
        Cov2::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    #[inline]
    pub fn s11(&self) -> f64 {
        self.s11
    }
    #[inline]
    pub fn s12(&self) -> f64 {
        self.s12
    }
    #[inline]
    pub fn s22(&self) -> f64 {
        self.s22
    }

    pub fn det(&self) -> f64 {
        self.s11 * self.s22 - self.s12 * self.s12
    }

    /// Schur complement `s11 - s12² / s22`, the conditional variance of U given V.
    pub fn conditional_var(&self) -> f64 {
        self.s11 - self.s12 * self.s12 / self.s22
    }

    /// `σ_UV / σ_V²`.
    pub fn alpha(&self) -> f64 {
        self.s12 / self.s22
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.s11, self.s12, self.s12, self.s22)
    }

    pub fn inverse_matrix(&self) -> Matrix2<f64> {
        let det = self.det();
        Matrix2::new(
            self.s22 / det,
            -self.s12 / det,
            -self.s12 / det,
            self.s11 / det,
        )
    }
}

/// Parameters of the structural model.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub sigma_eps2: f64,
    pub sigma_v2: f64,
}

impl StructuralParams {
    pub fn new(
        alpha: f64,
        beta: DVector<f64>,
        gamma: DVector<f64>,
        sigma_eps2: f64,
        sigma_v2: f64,
    ) -> Result<Self> {
        if beta.len() != gamma.len() {
            return Err(Error::Dimension {
                what: "gamma",
                expected: beta.len(),
                got: gamma.len(),
            });
        }
        if !(sigma_eps2 > 0.0) || !(sigma_v2 > 0.0) {
            return Err(Error::invalid(format!(
                "structural variances must be positive (sigma_eps2={sigma_eps2}, sigma_v2={sigma_v2})"
            )));
        }
        Ok(StructuralParams {
            alpha,
            beta,
            gamma,
            sigma_eps2,
            sigma_v2,
        })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

/// Parameters of the bivariate reduced-form regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedForm {
    pub delta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub sigma: Cov2,
}

impl ReducedForm {
    pub fn new(delta: DVector<f64>, gamma: DVector<f64>, sigma: Cov2) -> Result<Self> {
        if delta.len() != gamma.len() {
            return Err(Error::Dimension {
                what: "gamma",
                expected: delta.len(),
                got: gamma.len(),
            });
        }
        Ok(ReducedForm {
            delta,
            gamma,
            sigma,
        })
    }
}

pub fn structural_to_reduced(sp: &StructuralParams) -> ReducedForm {
    let a = sp.alpha;
    let delta = &sp.gamma * a + &sp.beta;
    let sigma = Cov2 {
        s11: sp.sigma_eps2 + a * a * sp.sigma_v2,
        s12: a * sp.sigma_v2,
        s22: sp.sigma_v2,
    };
    ReducedForm {
        delta,
        gamma: sp.gamma.clone(),
        sigma,
    }
}

/// `α = s12 / s22`.
pub fn alpha_from_sigma(sigma: &Cov2) -> Result<f64> {
    if !(sigma.s22 > 0.0) {
        return Err(Error::invalid(format!(
            "s22 = {} must be positive",
            sigma.s22
        )));
    }
    Ok(sigma.s12 / sigma.s22)
}

pub fn reduced_to_structural(rf: &ReducedForm) -> StructuralParams {
    let alpha = rf.sigma.alpha();
    StructuralParams {
        alpha,
        beta: &rf.delta - &rf.gamma * alpha,
        gamma: rf.gamma.clone(),
        sigma_eps2: rf.sigma.conditional_var(),
        sigma_v2: rf.sigma.s22,
    }
}

/// Observed outcome, treatment and controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub d: DVector<f64>,
    pub x: DMatrix<f64>,
    /// Whether `y`, `d` and every column of `x` have been de-meaned.
    pub centered: bool,
}

impl Dataset {
    pub fn new(y: DVector<f64>, d: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if d.len() != n {
            return Err(Error::Dimension {
                what: "treatment length",
                expected: n,
                got: d.len(),
            });
        }
        if x.nrows() != n {
            return Err(Error::Dimension {
                what: "control rows",
                expected: n,
                got: x.nrows(),
            });
        }
        Ok(Dataset {
            y,
            d,
            x,
            centered: false,
        })
    }

    /// Copy with every variable de-meaned; idempotent.
    pub fn centered(&self) -> Dataset {
        if self.centered {
            return self.clone();
        }
        let n = self.n() as f64;
        let mut x = self.x.clone();
        for mut col in x.column_iter_mut() {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
        }
        Dataset {
            y: self.y.add_scalar(-self.y.sum() / n),
            d: self.d.add_scalar(-self.d.sum() / n),
            x,
            centered: true,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `idx` in order; keeps the centering flag of the parent.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        let d = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.d[i]));
        let x = DMatrix::from_fn(idx.len(), self.p(), |r, c| self.x[(idx[r], c)]);
        Dataset {
            y,
            d,
            x,
            centered: self.centered,
        }
    }

    /// n×2 outcome matrix `W = [y d]`.
    pub fn outcomes(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n(), 2);
        w.set_column(0, &self.y);
        w.set_column(1, &self.d);
        w
    }
}
