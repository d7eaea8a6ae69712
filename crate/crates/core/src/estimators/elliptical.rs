//! Discriminant analysis for elliptical data `y = μ_g + R X`.
//!
//! Conditionally on `R`, a projection `y^T v` is Gaussian with spread
//! `R sqrt(v^T Σ v)`, so error rates become mixtures of Gaussian rates over
//! the law of `R`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::same_dim;
use crate::special::normal_cdf;

const MASS_TOL: f64 = 1e-6;

/// Decision of the prior-adjusted rule: `true` assigns `y` to group 2.
///
/// `alpha_p1` is the radial scale of `y`, typically
/// [`radial_scale_estimate`]; `cross_term` is
/// `(μ2 - μ1)^T Σ^{-1} (μ2 + μ1) / 2`.
pub fn elliptical_threshold(
    y: &DVector<f64>,
    sigma_inv_diff: &DVector<f64>,
    alpha_p1: f64,
    pi1: f64,
    pi2: f64,
    cross_term: f64,
) -> bool {
    y.dot(sigma_inv_diff) >= alpha_p1 * (pi1 / pi2).ln() + cross_term
}

/// `‖y - center‖² / tr(Σ)`, which concentrates around `R²` for large `p`.
pub fn radial_scale_estimate(y: &DVector<f64>, center: &DVector<f64>, trace_sigma: f64) -> Result<f64> {
    same_dim("center", y.len(), center.len())?;
    if !(trace_sigma > 0.0) {
        return Err(Error::invalid(format!("trace must be positive, got {trace_sigma}")));
    }
    Ok((y - center).norm_squared() / trace_sigma)
}

/// Law of the radial weight `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialDensity {
    /// Density values on the uniform grid `start + j * step`.
    Grid {
        start: f64,
        step: f64,
        values: Vec<f64>,
    },
    /// Finitely many atoms with probabilities `weights`.
    Atoms { points: Vec<f64>, weights: Vec<f64> },
}

impl RadialDensity {
    pub fn point_mass(r: f64) -> Self {
        RadialDensity::Atoms {
            points: vec![r],
            weights: vec![1.0],
        }
    }

    /// Tabulates `density` on `points` grid nodes of `[start, end]`.
    pub fn tabulate(start: f64, end: f64, points: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 || !(end > start) {
            return Err(Error::invalid("grid needs at least two nodes on a nonempty interval"));
        }
        let step = (end - start) / (points - 1) as f64;
        let values = (0..points).map(|j| density(start + j as f64 * step)).collect();
        Ok(RadialDensity::Grid { start, step, values })
    }

    fn validate(&self) -> Result<()> {
        match self {
            RadialDensity::Grid { start, step, values } => {
                if !(*start >= 0.0) || !(*step > 0.0) || values.len() < 2 {
                    return Err(Error::invalid(
                        "density grid needs start >= 0, step > 0 and at least two nodes",
                    ));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::invalid("density values must be finite and nonnegative"));
                }
            }
            RadialDensity::Atoms { points, weights } => {
                if points.len() != weights.len() || points.is_empty() {
                    return Err(Error::invalid("atoms need matching, nonempty points and weights"));
                }
                if points.iter().any(|r| !(*r >= 0.0) || !r.is_finite())
                    || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
                {
                    return Err(Error::invalid("atoms must be finite and nonnegative"));
                }
            }
        }
        Ok(())
    }

    /// `E φ(R)` together with a quadrature error estimate (zero for atoms).
    pub fn expectation(&self, phi: impl Fn(f64) -> f64) -> Result<Quadrature> {
        self.validate()?;
        match self {
            RadialDensity::Grid { start, step, values } => {
                let mass = composite(values, *step);
                if (mass.value - 1.0).abs() > MASS_TOL {
                    return Err(Error::Unnormalized {
                        integral: mass.value,
                    });
                }
                let integrand: Vec<f64> = values
                    .iter()
                    .enumerate()
                    .map(|(j, f)| if *f == 0.0 { 0.0 } else { f * phi(start + j as f64 * step) })
                    .collect();
                Ok(composite(&integrand, *step))
            }
            RadialDensity::Atoms { points, weights } => {
                let mass: f64 = weights.iter().sum();
                if (mass - 1.0).abs() > MASS_TOL {
                    return Err(Error::Unnormalized { integral: mass });
                }
                let value = points.iter().zip(weights).map(|(r, w)| w * phi(*r)).sum();
                Ok(Quadrature { value, error: 0.0 })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: f64,
    /// Difference between the Simpson and trapezoid values.
    pub error: f64,
}

/// Composite Simpson on uniform nodes, closing with the 3/8 rule when the
/// number of intervals is odd.
fn composite(y: &[f64], h: f64) -> Quadrature {
    let m = y.len() - 1;
    let trapezoid = h * (y.iter().sum::<f64>() - 0.5 * (y[0] + y[m]));
    let simpson = match m {
        1 => trapezoid,
        _ => {
            let even_end = if m.is_multiple_of(2) { m } else { m - 3 };
            let mut acc = 0.0;
            let mut j = 0;
            while j < even_end {
                acc += h / 3.0 * (y[j] + 4.0 * y[j + 1] + y[j + 2]);
                j += 2;
            }
            if m % 2 == 1 {
                acc += 3.0 * h / 8.0 * (y[j] + 3.0 * y[j + 1] + 3.0 * y[j + 2] + y[j + 3]);
            }
            acc
        }
    };
    Quadrature {
        value: simpson,
        error: (simpson - trapezoid).abs(),
    }
}

/// `Φ(a / (σ r))`, extended by its limit at `r = 0`.
fn scaled_cdf(a: f64, sigma: f64, r: f64) -> f64 {
    if r == 0.0 {
        return match a.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    normal_cdf(a / (sigma * r))
}

/// `π1 E Φ((μ1 - t) / (σ R)) + π2 E Φ((t - μ2) / (σ R))`.
pub fn elliptical_misclassification(
    density: &RadialDensity,
    mu1_d: f64,
    mu2_d: f64,
    sigma_d: f64,
    t: f64,
    pi1: f64,
) -> Result<Quadrature> {
    if !(sigma_d > 0.0) {
        return Err(Error::invalid(format!("spread must be positive, got {sigma_d}")));
    }
    let pi2 = 1.0 - pi1;
    density.expectation(|r| {
        pi1 * scaled_cdf(mu1_d - t, sigma_d, r) + pi2 * scaled_cdf(t - mu2_d, sigma_d, r)
    })
}
