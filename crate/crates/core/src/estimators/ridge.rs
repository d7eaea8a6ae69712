//! Conditional risk of generalized ridge regression.
//!
//! For `Y = X β0 / √n + ε` with `Cov(ε) = Σ_ε`, the estimator
//! `β̂ = M^{-1} X^T Y / √n` with `M = X^T X / n + λ Γ` has
//! `E[‖β̂ - β0‖² | X] = λ² ‖M^{-1} Γ β0‖² + tr(M^{-1} X^T Σ_ε X M^{-1}) / n²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, same_dim, SymFactor, SymMatrix};

const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RidgeProblem {
    x: DMatrix<f64>,
    gamma: SymMatrix,
    lambda: f64,
    beta0: DVector<f64>,
    sigma_eps: SymMatrix,
}

impl RidgeProblem {
    /// `x` is `n × p`, `gamma` and `beta0` live in dimension `p`, and
    /// `sigma_eps` in dimension `n`.
    pub fn new(
        x: DMatrix<f64>,
        gamma: SymMatrix,
        lambda: f64,
        beta0: DVector<f64>,
        sigma_eps: SymMatrix,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!("design is {n} x {p}")));
        }
        same_dim("penalty", p, gamma.dim())?;
        same_dim("beta0", p, beta0.len())?;
        same_dim("noise covariance", n, sigma_eps.dim())?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("ridge parameter must be positive, got {lambda}")));
        }
        for (m, what) in [(&gamma, "penalty"), (&sigma_eps, "noise covariance")] {
            if !check_psd(m, PSD_TOL) {
                return Err(Error::NotPsd {
                    what,
                    min_eigenvalue: m.min_eigenvalue(),
                });
            }
        }
        Ok(Self {
            x,
            gamma,
            lambda,
            beta0,
            sigma_eps,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeRisk {
    pub bias2: f64,
    pub variance: f64,
    pub total: f64,
    /// `(tr M^{-1} - λ tr(Γ M^{-2})) / n`, reported when `Σ_ε = Id`.
    pub variance_identity: Option<f64>,
}

pub fn ridge_risk(prob: &RidgeProblem) -> Result<RidgeRisk> {
    let n = prob.n() as f64;
    let gram = prob.x.transpose() * &prob.x / n + prob.gamma.as_matrix() * prob.lambda;
    let m = SymMatrix::from_symmetrized(gram)?;
    let factor = SymFactor::new(&m, "X^T X / n + lambda * Gamma")?;

    let shrink = factor.solve(&(prob.gamma.as_matrix() * &prob.beta0));
    let bias2 = prob.lambda * prob.lambda * shrink.norm_squared();

    let k = factor.solve_matrix(&prob.x.transpose());
    let variance = (&k * prob.sigma_eps.as_matrix()).component_mul(&k).sum() / (n * n);

    let variance_identity = prob.sigma_eps.is_identity().then(|| {
        let m_inv = factor.inverse();
        let g_m_inv2 = prob.gamma.as_matrix() * m_inv.as_matrix() * m_inv.as_matrix();
        (m_inv.trace() - prob.lambda * g_m_inv2.trace()) / n
    });
    Ok(RidgeRisk {
        bias2,
        variance,
        total: bias2 + variance,
        variance_identity,
    })
}
