use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data_gen::DesignSample;
use crate::error::{Error, Result};
use crate::linalg::{check_psd, same_dim, ShrinkagePlan, SymFactor, SymMatrix};

const UNIT_TOL: f64 = 1e-12;

/// Empirical quadratic forms of one sample.
///
/// With `M = S + A`, `u = X^T D α / √n` and `Σ_ε` the optional noise
/// covariance: `f = x^T M^{-1} x`, `g = u^T M^{-1} u`, `h = u^T M^{-1} x`,
/// `F = x^T M^{-1} Σ_ε M^{-1} x`, `G = u^T M^{-1} Σ_ε M^{-1} u`,
/// `H = u^T M^{-1} Σ_ε M^{-1} x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormValues {
    pub f: f64,
    pub g: f64,
    pub h: f64,
    #[serde(rename = "F")]
    pub big_f: Option<f64>,
    #[serde(rename = "G")]
    pub big_g: Option<f64>,
    #[serde(rename = "H")]
    pub big_h: Option<f64>,
    /// Set when `x` was rescaled to unit norm.
    pub x_renormalized: bool,
    /// Set when `α` was rescaled to unit norm.
    pub alpha_renormalized: bool,
}

/// Returns `v / ‖v‖` and whether rescaling was needed.
pub fn normalize(v: &DVector<f64>, what: &str) -> Result<(DVector<f64>, bool)> {
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid(format!("{what} must be a finite nonzero vector")));
    }
    if (norm - 1.0).abs() <= UNIT_TOL {
        Ok((v.clone(), false))
    } else {
        Ok((v / norm, true))
    }
}

/// A sample together with one factorization of `M = S + A`.
#[derive(Debug, Clone)]
pub struct Resolvent<'a> {
    sample: &'a DesignSample,
    factor: SymFactor,
}

impl<'a> Resolvent<'a> {
    pub fn new(sample: &'a DesignSample, plan: &ShrinkagePlan) -> Result<Self> {
        same_dim("shrinkage target", sample.p(), plan.dim())?;
        let m = sample.s().add(plan.target())?;
        let factor = SymFactor::new(&m, "S + A")?;
        Ok(Self { sample, factor })
    }

    pub fn sample(&self) -> &DesignSample {
        self.sample
    }

    pub fn factor(&self) -> &SymFactor {
        &self.factor
    }

    /// `M^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(v)
    }

    /// `X^T D α / √n`.
    pub fn signal(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        same_dim("alpha", self.sample.n(), alpha.len())?;
        let weighted = alpha.component_mul(self.sample.radial());
        Ok(self.sample.x().tr_mul(&weighted) / (self.sample.n() as f64).sqrt())
    }

    pub fn forms(
        &self,
        x: &DVector<f64>,
        alpha: &DVector<f64>,
        sigma_eps: Option<&SymMatrix>,
    ) -> Result<FormValues> {
        same_dim("x", self.sample.p(), x.len())?;
        same_dim("alpha", self.sample.n(), alpha.len())?;
        let (x, x_renormalized) = normalize(x, "x")?;
        let (alpha, alpha_renormalized) = normalize(alpha, "alpha")?;
        let u = self.signal(&alpha)?;
        let mx = self.solve(&x);
        let mu = self.solve(&u);
        let (big_f, big_g, big_h) = match sigma_eps {
            Some(se) => {
                same_dim("noise covariance", self.sample.p(), se.dim())?;
                if !check_psd(se, 1e-10) {
                    return Err(Error::NotPsd {
                        what: "noise covariance",
                        min_eigenvalue: se.min_eigenvalue(),
                    });
                }
                let se_mx = se.as_matrix() * &mx;
                (
                    Some(mx.dot(&se_mx)),
                    Some(se.quad_form(&mu)),
                    Some(mu.dot(&se_mx)),
                )
            }
            None => (None, None, None),
        };
        Ok(FormValues {
            f: x.dot(&mx),
            g: u.dot(&mu),
            h: u.dot(&mx),
            big_f,
            big_g,
            big_h,
            x_renormalized,
            alpha_renormalized,
        })
    }

    /// Entry `(i, j)` of `P_R = D X M^{-1} X^T D / n`.
    pub fn projection_entry(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.sample.n();
        if i >= n || j >= n {
            return Err(Error::invalid(format!("index ({i}, {j}) out of range for n = {n}")));
        }
        let xi = self.sample.x().row(i).transpose();
        let xj = self.sample.x().row(j).transpose();
        let r = self.sample.radial();
        Ok(r[i] * r[j] * xi.dot(&self.solve(&xj)) / n as f64)
    }

    /// Empirical `α(A) = tr(Σ M^{-1}) / n`.
    pub fn alpha_empirical(&self, sigma: &SymMatrix) -> Result<f64> {
        same_dim("population covariance", self.sample.p(), sigma.dim())?;
        let k = self.factor.solve_matrix(sigma.as_matrix());
        Ok(k.trace() / self.sample.n() as f64)
    }
}

/// All forms from a single factorization of `S + A`. The noise forms are
/// present iff `sigma_eps` is given.
pub fn empirical_forms(
    sample: &DesignSample,
    plan: &ShrinkagePlan,
    x: &DVector<f64>,
    alpha: &DVector<f64>,
    sigma_eps: Option<&SymMatrix>,
) -> Result<FormValues> {
    Resolvent::new(sample, plan)?.forms(x, alpha, sigma_eps)
}
