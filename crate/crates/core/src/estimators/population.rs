//! Estimating `v^T (Σ + A)^{-1} v` without observing `Σ`.
//!
//! Since `v^T (S + tA)^{-1} v ≈ v^T (Σ + tA/γ(tA))^{-1} v / γ(tA)`, picking
//! the unique `t₀` with `γ(t₀A) = t₀` turns the observable left side, scaled
//! by `t₀`, into an estimate of the target. `γ(tA)` itself is estimated from
//! leave-one-out quadratic forms that need a single factorization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_gen::DesignSample;
use crate::error::{Error, Result};
use crate::linalg::{same_dim, Pencil, ShrinkagePlan, SymFactor};

const DEGENERATE_TOL: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 200;

/// Estimates of `R_i² α(A)` for every observation:
/// `c_i = q_i / (1 - q_i)` with `q_i = R_i² X_i^T (S + A)^{-1} X_i / n`.
pub fn estimate_ri2_alpha(sample: &DesignSample, plan: &ShrinkagePlan) -> Result<DVector<f64>> {
    same_dim("shrinkage target", sample.p(), plan.dim())?;
    let m = sample.s().add(plan.target())?;
    let factor = SymFactor::new(&m, "S + A")?;
    let xt = sample.x().transpose();
    let solved = factor.solve_matrix(&xt);
    let n = sample.n() as f64;
    let q: Vec<f64> = (0..sample.n())
        .map(|i| {
            let r2 = sample.radial()[i].powi(2);
            r2 * xt.column(i).dot(&solved.column(i)) / n
        })
        .collect();
    leave_one_out(&q)
}

fn leave_one_out(q: &[f64]) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(q.len());
    for (i, qi) in q.iter().enumerate() {
        let d = 1.0 - qi;
        if d <= DEGENERATE_TOL {
            return Err(Error::DegenerateObservation {
                index: i,
                denominator: d,
            });
        }
        out[i] = qi / d;
    }
    Ok(out)
}

/// `γ̂ = (1 - mean_i 1 / (1 + c_i)) / α̂` for `c_i` estimating `R_i² α`.
pub fn estimate_gamma(r2alpha: &DVector<f64>, alpha_hat: f64) -> Result<f64> {
    if !(alpha_hat > 0.0) {
        return Err(Error::invalid(format!("alpha estimate must be positive, got {alpha_hat}")));
    }
    if r2alpha.is_empty() {
        return Err(Error::invalid("no observations"));
    }
    let mean = r2alpha.iter().map(|c| 1.0 / (1.0 + c)).sum::<f64>() / r2alpha.len() as f64;
    Ok((1.0 - mean) / alpha_hat)
}

/// `α̂ = Σ c_i / Σ R_i²`, or `None` when every weight vanishes.
pub fn estimate_alpha(r2alpha: &DVector<f64>, r: &DVector<f64>) -> Result<Option<f64>> {
    same_dim("radial weights", r2alpha.len(), r.len())?;
    let r2: f64 = r.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Ok(None);
    }
    Ok(Some(r2alpha.sum() / r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T0Solution {
    pub t0: f64,
    /// `γ(t₀ A)`.
    pub gamma: f64,
    pub evaluations: usize,
}

/// Finds `t₀` with `γ(t₀A) / t₀ = 1` by bisection in `log t`.
///
/// The bracket is widened geometrically until it straddles the root; more
/// than 60 doublings in total means no root is reachable.
pub fn solve_t0<F>(mut evaluator: F, bracket: (f64, f64), tol: f64) -> Result<T0Solution>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid(format!("bracket ({lo}, {hi}) must satisfy 0 < lo < hi")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut evaluations = 0;
    let mut ratio = |t: f64, evaluations: &mut usize| -> Result<(f64, f64)> {
        *evaluations += 1;
        let g = evaluator(t)?;
        Ok((g / t, g))
    };
    let (mut psi_lo, _) = ratio(lo, &mut evaluations)?;
    let (mut psi_hi, _) = ratio(hi, &mut evaluations)?;
    if psi_lo < psi_hi {
        return Err(Error::NoRoot(format!(
            "gamma(tA)/t increases from {psi_lo} at t = {lo} to {psi_hi} at t = {hi}"
        )));
    }
    let mut doublings = 0;
    while psi_lo < 1.0 {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::NoRoot(format!(
                "gamma(tA)/t = {psi_lo} < 1 down to t = {lo}"
            )));
        }
        hi = lo;
        psi_hi = psi_lo;
        lo /= 2.0;
        psi_lo = ratio(lo, &mut evaluations)?.0;
    }
    while psi_hi > 1.0 {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::NoRoot(format!(
                "gamma(tA)/t = {psi_hi} > 1 up to t = {hi}"
            )));
        }
        lo = hi;
        hi *= 2.0;
        psi_hi = ratio(hi, &mut evaluations)?.0;
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        let (psi, g) = ratio(mid, &mut evaluations)?;
        if (psi - 1.0).abs() <= tol {
            return Ok(T0Solution {
                t0: mid,
                gamma: g,
                evaluations,
            });
        }
        if psi > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoRoot(format!(
        "bisection stalled in [{lo}, {hi}] before reaching tolerance {tol}"
    )))
}

/// `γ̂(tA)` for one sample, evaluated through the simultaneous
/// diagonalization of `(S, A)` so that each `t` costs `O(np)`.
#[derive(Debug, Clone)]
pub struct GammaEvaluator {
    pencil: Pencil,
    /// `R_i² (W^T X_i)_j² / n`.
    weighted_coords: DMatrix<f64>,
    r: DVector<f64>,
}

impl GammaEvaluator {
    pub fn new(sample: &DesignSample, plan: &ShrinkagePlan) -> Result<Self> {
        same_dim("shrinkage target", sample.p(), plan.dim())?;
        let pencil = Pencil::new(sample.s(), plan.target())?;
        let mut z = sample.x() * pencil.basis();
        let n = sample.n() as f64;
        for (i, mut row) in z.row_iter_mut().enumerate() {
            let r2 = sample.radial()[i].powi(2);
            row.apply(|v| *v = *v * *v * r2 / n);
        }
        Ok(Self {
            pencil,
            weighted_coords: z,
            r: sample.radial().clone(),
        })
    }

    /// `c_i(tA)` for every observation.
    pub fn r2alpha(&self, t: f64) -> Result<DVector<f64>> {
        let inv: Vec<f64> = self.pencil.values().iter().map(|l| 1.0 / (l + t)).collect();
        let q: Vec<f64> = self
            .weighted_coords
            .row_iter()
            .map(|row| row.iter().zip(&inv).map(|(z, d)| z * d).sum())
            .collect();
        leave_one_out(&q)
    }

    pub fn gamma(&self, t: f64) -> Result<f64> {
        let c = self.r2alpha(t)?;
        match estimate_alpha(&c, &self.r)? {
            Some(alpha) if alpha > 0.0 => estimate_gamma(&c, alpha),
            _ => Ok(0.0),
        }
    }

    /// `v^T (S + tA)^{-1} v`.
    pub fn quad_form(&self, v: &DVector<f64>, t: f64) -> f64 {
        self.pencil.inv_quad_form(v, t, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationQuadformEstimate {
    /// Estimate of `v^T (Σ + A)^{-1} v`.
    pub value: f64,
    pub t0: f64,
    /// `γ̂(t₀ A)`.
    pub gamma_hat: f64,
    pub evaluations: usize,
    pub v_renormalized: bool,
}

/// `t₀ v^T (S + t₀ A)^{-1} v` for unit `v`.
pub fn estimate_population_quadform(
    v: &DVector<f64>,
    sample: &DesignSample,
    plan: &ShrinkagePlan,
    tol: f64,
) -> Result<PopulationQuadformEstimate> {
    same_dim("v", sample.p(), v.len())?;
    if sample.n() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 observations, got {}",
            sample.n()
        )));
    }
    let (v, v_renormalized) = crate::det_equiv::normalize(v, "v")?;
    let eval = GammaEvaluator::new(sample, plan)?;
    let floor = plan.t_floor();
    let sol = solve_t0(|t| eval.gamma(t), (floor / 100.0, floor * 100.0), tol)?;
    Ok(PopulationQuadformEstimate {
        value: sol.t0 * eval.quad_form(&v, sol.t0),
        t0: sol.t0,
        gamma_hat: sol.gamma,
        evaluations: sol.evaluations,
        v_renormalized,
    })
}
