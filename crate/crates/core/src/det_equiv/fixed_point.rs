use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, same_dim, Pencil, ShrinkagePlan, SymFactor, SymMatrix};

const DAMPING: f64 = 0.5;
const BISECTION_STEPS: usize = 400;

/// Solution of the coupled system
/// `ᾱ = tr(Σ (A + γ̄ Σ)^{-1}) / n`, `γ̄ = Σ_i R_i² / (1 + R_i² ᾱ) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetEquivSolution {
    pub alpha_bar: f64,
    pub gamma_bar: f64,
    pub xi_bar: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl DetEquivSolution {
    pub fn with_xi(self, xi_bar: f64) -> Self {
        Self {
            xi_bar: Some(xi_bar),
            ..self
        }
    }
}

/// `γ(α) = Σ_i R_i² / (1 + R_i² α) / n`.
pub fn gamma_of_alpha(r: &DVector<f64>, n: usize, alpha: f64) -> f64 {
    r.iter()
        .map(|ri| {
            let r2 = ri * ri;
            r2 / (1.0 + r2 * alpha)
        })
        .sum::<f64>()
        / n as f64
}

fn validate(sigma: &SymMatrix, plan: &ShrinkagePlan, r: &DVector<f64>, n: usize) -> Result<()> {
    same_dim("shrinkage target", sigma.dim(), plan.dim())?;
    same_dim("radial weights", n, r.len())?;
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    if let Some(v) = r.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!("radial weight {v} is not a finite nonnegative number")));
    }
    if !check_psd(sigma, 1e-10) {
        return Err(Error::NotPsd {
            what: "population covariance",
            min_eigenvalue: sigma.min_eigenvalue(),
        });
    }
    Ok(())
}

/// Solves the `(ᾱ, γ̄)` system by damped fixed-point iteration, falling back
/// to bisection on the monotone scalar reduction when the iteration stalls.
///
/// `r` holds the `n` radial weights. The returned `residual` is the larger of
/// the two equation defects; `iterations` counts both phases.
pub fn solve_alpha_gamma(
    sigma: &SymMatrix,
    plan: &ShrinkagePlan,
    r: &DVector<f64>,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<DetEquivSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    validate(sigma, plan, r, n)?;
    let pencil = Pencil::new(sigma, plan.target())?;
    let lambdas: Vec<f64> = pencil.values().iter().map(|l| l.max(0.0)).collect();
    let nf = n as f64;
    let trace_term = |gamma: f64| lambdas.iter().map(|l| l / (1.0 + gamma * l)).sum::<f64>() / nf;
    let phi = |alpha: f64| trace_term(gamma_of_alpha(r, n, alpha));
    let defect = |alpha: f64| (phi(alpha) - alpha).abs();

    let upper = trace_term(0.0);
    let finish = |alpha: f64, iterations: usize| DetEquivSolution {
        alpha_bar: alpha,
        gamma_bar: gamma_of_alpha(r, n, alpha),
        xi_bar: None,
        residual: defect(alpha),
        iterations,
    };
    if upper == 0.0 {
        return Ok(finish(0.0, 0));
    }

    let mut alpha = upper;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = phi(alpha);
        if (next - alpha).abs() <= tol {
            let sol = finish(next, iterations);
            if sol.residual <= tol {
                return Ok(sol);
            }
        }
        alpha = (1.0 - DAMPING) * alpha + DAMPING * next;
    }

    // φ(α) - α changes sign exactly once on (0, upper].
    let (mut lo, mut hi) = (0.0_f64, upper);
    for _ in 0..BISECTION_STEPS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if phi(mid) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
        let best = if defect(lo) < defect(hi) { lo } else { hi };
        if defect(best) <= tol {
            return Ok(finish(best, iterations));
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let best = if defect(lo) < defect(hi) { lo } else { hi };
    let sol = finish(best, iterations);
    Err(Error::NonConvergence {
        iterations,
        alpha: sol.alpha_bar,
        gamma: sol.gamma_bar,
        residual: sol.residual,
    })
}

/// Defect of a candidate `(α, γ)` recomputed through a dense factorization
/// of `A + γ Σ`, independently of the solver's spectral shortcut.
pub fn fixed_point_residual(
    sigma: &SymMatrix,
    plan: &ShrinkagePlan,
    r: &DVector<f64>,
    n: usize,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    validate(sigma, plan, r, n)?;
    let m_bar = plan.target().add(&sigma.scale(gamma))?;
    let factor = SymFactor::new(&m_bar, "A + gamma Sigma")?;
    let trace = factor.solve_matrix(sigma.as_matrix()).trace() / n as f64;
    Ok((trace - alpha)
        .abs()
        .max((gamma_of_alpha(r, n, alpha) - gamma).abs()))
}

fn m_bar_factor(sigma: &SymMatrix, plan: &ShrinkagePlan, sol: &DetEquivSolution) -> Result<SymFactor> {
    same_dim("shrinkage target", sigma.dim(), plan.dim())?;
    let m_bar = plan.target().add(&sigma.scale(sol.gamma_bar))?;
    SymFactor::new(&m_bar, "A + gamma Sigma")
}

/// `x^T (γ̄ Σ + A)^{-1} x`.
pub fn det_equiv_quadform(
    x: &DVector<f64>,
    sigma: &SymMatrix,
    plan: &ShrinkagePlan,
    sol: &DetEquivSolution,
) -> Result<f64> {
    same_dim("x", sigma.dim(), x.len())?;
    Ok(m_bar_factor(sigma, plan, sol)?.inv_quad_form(x))
}

/// Terms of the linear equation for `ξ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiTerms {
    /// `Σ_i R_i⁴ / (1 + R_i² ᾱ)² / n`.
    pub c4: f64,
    /// `tr(Σ M̄^{-1} B M̄^{-1}) / n`.
    pub t_b: f64,
    /// `tr(Σ M̄^{-1} Σ M̄^{-1}) / n`.
    pub t_sigma: f64,
}

impl XiTerms {
    pub fn xi(&self) -> Result<f64> {
        let loop_gain = self.c4 * self.t_sigma;
        if loop_gain >= 1.0 {
            return Err(Error::Unstable {
                c4_t_sigma: loop_gain,
            });
        }
        Ok(self.c4 * self.t_b / (1.0 - loop_gain))
    }
}

pub fn xi_terms(
    sigma: &SymMatrix,
    plan: &ShrinkagePlan,
    b: &SymMatrix,
    r: &DVector<f64>,
    n: usize,
    sol: &DetEquivSolution,
) -> Result<XiTerms> {
    validate(sigma, plan, r, n)?;
    same_dim("sandwich matrix", sigma.dim(), b.dim())?;
    if !check_psd(b, 1e-10) {
        return Err(Error::NotPsd {
            what: "sandwich matrix",
            min_eigenvalue: b.min_eigenvalue(),
        });
    }
    let nf = n as f64;
    let c4 = r
        .iter()
        .map(|ri| {
            let r2 = ri * ri;
            (r2 / (1.0 + r2 * sol.alpha_bar)).powi(2)
        })
        .sum::<f64>()
        / nf;
    let factor = m_bar_factor(sigma, plan, sol)?;
    let k_sigma = factor.solve_matrix(sigma.as_matrix());
    let k_b = factor.solve_matrix(b.as_matrix());
    // tr(P Q) for P = M̄^{-1} Σ, Q = M̄^{-1} C.
    let trace_product = |q: &nalgebra::DMatrix<f64>| k_sigma.component_mul(&q.transpose()).sum() / nf;
    Ok(XiTerms {
        c4,
        t_b: trace_product(&k_b),
        t_sigma: trace_product(&k_sigma),
    })
}

/// `ξ̄ = c₄ T_B / (1 - c₄ T_Σ)`, the solution of `ξ̄ = c₄ (T_B + ξ̄ T_Σ)`.
pub fn solve_xi(
    sigma: &SymMatrix,
    plan: &ShrinkagePlan,
    b: &SymMatrix,
    r: &DVector<f64>,
    n: usize,
    sol: &DetEquivSolution,
) -> Result<f64> {
    xi_terms(sigma, plan, b, r, n, sol)?.xi()
}

/// `y^T (B + ξ̄ Σ) y` with `y = (A + γ̄ Σ)^{-1} x`.
pub fn det_equiv_sandwich(
    x: &DVector<f64>,
    sigma: &SymMatrix,
    plan: &ShrinkagePlan,
    b: &SymMatrix,
    sol: &DetEquivSolution,
    xi_bar: f64,
) -> Result<f64> {
    same_dim("x", sigma.dim(), x.len())?;
    same_dim("sandwich matrix", sigma.dim(), b.dim())?;
    let y = m_bar_factor(sigma, plan, sol)?.solve(x);
    Ok(b.quad_form(&y) + xi_bar * sigma.quad_form(&y))
}

/// `1 - Σ_i α_i² / (1 + ρ R_i² L)`.
pub fn det_equiv_mean_form(alpha: &DVector<f64>, r: &DVector<f64>, rho: f64, l: f64) -> Result<f64> {
    same_dim("radial weights", alpha.len(), r.len())?;
    if !(l >= 0.0) || !(rho >= 0.0) {
        return Err(Error::invalid(format!("need rho, L >= 0, got rho = {rho}, L = {l}")));
    }
    let s: f64 = alpha
        .iter()
        .zip(r.iter())
        .map(|(a, ri)| a * a / (1.0 + rho * ri * ri * l))
        .sum();
    Ok(1.0 - s)
}
