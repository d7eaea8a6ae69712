//! Minimum-variance portfolios built from a shrunken covariance.
//!
//! The plug-in weights `ŵ = (Σ̂ + A)^{-1} V M̂^{-1} U`, with
//! `M̂ = V^T (Σ̂ + A)^{-1} V`, minimize `w^T (Σ̂ + A) w` under `V^T w = U`.
//! Their apparent risk is `U^T M̂^{-1} U`; their true risk is `ŵ^T Σ ŵ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::det_equiv::DetEquivSolution;
use crate::error::{Error, Result};
use crate::linalg::{same_dim, ShrinkagePlan, SymFactor, SymMatrix};

const MAX_CONSTRAINTS: usize = 10;
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    v: DMatrix<f64>,
    u: DVector<f64>,
    sigma: SymMatrix,
    plan: ShrinkagePlan,
}

impl PortfolioProblem {
    pub fn new(v: DMatrix<f64>, u: DVector<f64>, sigma: SymMatrix, plan: ShrinkagePlan) -> Result<Self> {
        let (p, k) = v.shape();
        same_dim("constraint matrix rows", sigma.dim(), p)?;
        same_dim("shrinkage target", p, plan.dim())?;
        same_dim("constraint values", k, u.len())?;
        if k == 0 || k > MAX_CONSTRAINTS {
            return Err(Error::invalid(format!(
                "number of constraints must lie in 1..={MAX_CONSTRAINTS}, got {k}"
            )));
        }
        let gram = SymMatrix::from_symmetrized(v.transpose() * &v)?;
        let spec = gram.spectral();
        if spec.min() <= RANK_TOL * spec.max_abs().max(1.0) {
            return Err(Error::invalid("constraint matrix is not of full column rank"));
        }
        Ok(Self { v, u, sigma, plan })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn plan(&self) -> &ShrinkagePlan {
        &self.plan
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioRisks {
    /// Equivalent of the apparent risk `U^T M̂^{-1} U`.
    pub w_hat_risk_naive: f64,
    /// Equivalent of the true risk `ŵ^T Σ ŵ`.
    pub w_hat_risk_realized: f64,
    /// `U^T (V^T Σ^{-1} V)^{-1} U`.
    pub w_opt_risk: f64,
}

/// Deterministic equivalents of the plug-in portfolio's risks.
///
/// With `M̄ = γ̄ Σ + A` and `M̃ = V^T M̄^{-1} V`, the naive risk is
/// `U^T M̃^{-1} U`. Replacing `(Σ̂ + A)^{-1} Σ (Σ̂ + A)^{-1}` by
/// `(1 + ξ̄) M̄^{-1} Σ M̄^{-1}` in `ŵ^T Σ ŵ` gives the realized risk
/// `(1 + ξ̄) z^T V^T M̄^{-1} Σ M̄^{-1} V z` with `z = M̃^{-1} U`.
pub fn portfolio_risks(prob: &PortfolioProblem, sol: &DetEquivSolution, xi_sigma: f64) -> Result<PortfolioRisks> {
    let m_bar = prob.sigma.scale(sol.gamma_bar).add(prob.plan.target())?;
    let m_bar_factor = SymFactor::new(&m_bar, "gamma * Sigma + A")?;
    let kv = m_bar_factor.solve_matrix(&prob.v);
    let m_tilde = SymMatrix::from_symmetrized(prob.v.transpose() * &kv)?;
    let z = SymFactor::new(&m_tilde, "V^T (gamma * Sigma + A)^{-1} V")?.solve(&prob.u);
    let naive = prob.u.dot(&z);
    let w_bar = &kv * &z;
    let realized = (1.0 + xi_sigma) * prob.sigma.quad_form(&w_bar);

    let sigma_factor = SymFactor::new(&prob.sigma, "Sigma")?;
    let opt_gram = SymMatrix::from_symmetrized(prob.v.transpose() * sigma_factor.solve_matrix(&prob.v))?;
    let w_opt = SymFactor::new(&opt_gram, "V^T Sigma^{-1} V")?.inv_quad_form(&prob.u);
    Ok(PortfolioRisks {
        w_hat_risk_naive: naive,
        w_hat_risk_realized: realized,
        w_opt_risk: w_opt,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginPortfolio {
    pub weights: DVector<f64>,
    /// `U^T M̂^{-1} U`.
    pub naive_risk: f64,
}

/// Plug-in weights for a covariance estimate `cov`, shrunk by the plan's
/// target.
pub fn plugin_portfolio(
    cov: &SymMatrix,
    plan: &ShrinkagePlan,
    v: &DMatrix<f64>,
    u: &DVector<f64>,
) -> Result<PluginPortfolio> {
    same_dim("covariance estimate", plan.dim(), cov.dim())?;
    same_dim("constraint matrix rows", cov.dim(), v.nrows())?;
    same_dim("constraint values", v.ncols(), u.len())?;
    let m = cov.add(plan.target())?;
    let kv = SymFactor::new(&m, "Sigma_hat + A")?.solve_matrix(v);
    let m_hat = SymMatrix::from_symmetrized(v.transpose() * &kv)?;
    let z = SymFactor::new(&m_hat, "V^T (Sigma_hat + A)^{-1} V")?.solve(u);
    Ok(PluginPortfolio {
        naive_risk: u.dot(&z),
        weights: kv * z,
    })
}
