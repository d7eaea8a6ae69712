use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{same_dim, SymMatrix};
use crate::special::double_factorial;

/// `E(Y_1^{t_1} ... Y_p^{t_p})` for `Y = exp(Z)`, `Z ~ N(mu_tilde, sigma_tilde)`.
pub fn lognormal_mixed_moment(
    t: &[u32],
    mu_tilde: &DVector<f64>,
    sigma_tilde: &SymMatrix,
) -> Result<f64> {
    same_dim("moment exponents", mu_tilde.len(), t.len())?;
    same_dim("log-normal covariance", mu_tilde.len(), sigma_tilde.dim())?;
    let tv = DVector::from_iterator(t.len(), t.iter().map(|&k| k as f64));
    Ok((tv.dot(mu_tilde) + 0.5 * sigma_tilde.quad_form(&tv)).exp())
}

/// Bound on `b_L(2r)` for a centered log-normal vector with
/// `mu_star = ‖μ̃‖₂` and `sigma_star² = ‖Σ̃‖_op`.
///
/// `K_{2r} (π/2)^{2r} σ*^{2r} exp(2r μ* + (2r σ*)² / 2)` with
/// `K_{2r} = (2r - 1)!!`.
pub fn bound_bl_lognormal(two_r: u32, mu_star: f64, sigma_star: f64) -> Result<f64> {
    if two_r == 0 || !two_r.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "moment order must be a positive even integer, got {two_r}"
        )));
    }
    check_star(mu_star, sigma_star)?;
    let k = two_r as f64;
    let k_moment = double_factorial(two_r as i64 - 1);
    Ok(k_moment
        * (PI / 2.0).powf(k)
        * sigma_star.powf(k)
        * (k * mu_star + 0.5 * (k * sigma_star).powi(2)).exp())
}

/// Bound on `b_Q2(2)` for a centered log-normal vector:
/// `K_2 · 4π² σ*² p exp(4μ* + 8σ*²)` with `K_2 = 1`.
pub fn bound_bq2_lognormal(p: usize, mu_star: f64, sigma_star: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    check_star(mu_star, sigma_star)?;
    Ok(4.0 * PI * PI * sigma_star * sigma_star * p as f64
        * (4.0 * mu_star + 8.0 * sigma_star * sigma_star).exp())
}

fn check_star(mu_star: f64, sigma_star: f64) -> Result<()> {
    if !(mu_star >= 0.0) || !(sigma_star >= 0.0) {
        return Err(Error::invalid(format!(
            "log-normal scale parameters must be nonnegative, got ({mu_star}, {sigma_star})"
        )));
    }
    Ok(())
}

/// Tail assumption on `|X^T v|` for unit `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailBound {
    /// `P(|X^T v| > t) ≤ C exp(-c t^b)`.
    Exponential { c_big: f64, c_small: f64, b: f64 },
    /// Polynomial tail with exponent `b`.
    Polynomial { c_big: f64, b: f64 },
}

/// Moment bound `b_L(k)` implied by a tail assumption.
///
/// Exponential: `(C / c^{k/b}) (k/b) Γ(k/b)`. Polynomial: `C (1 + 1/(b - k - 1))`,
/// which needs `b > k + 1`.
pub fn bound_bl_tail(k: u32, tail: TailBound) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    let kf = k as f64;
    match tail {
        TailBound::Exponential { c_big, c_small, b } => {
            if !(c_big > 0.0 && c_small > 0.0 && b > 0.0) {
                return Err(Error::invalid(format!(
                    "exponential tail needs positive constants, got C={c_big}, c={c_small}, b={b}"
                )));
            }
            let ratio = kf / b;
            Ok(c_big / c_small.powf(ratio) * ratio * libm::tgamma(ratio))
        }
        TailBound::Polynomial { c_big, b } => {
            if !(c_big > 0.0) {
                return Err(Error::invalid(format!("polynomial tail needs C > 0, got {c_big}")));
            }
            if !(b > kf + 1.0) {
                return Err(Error::InfeasibleBound { k, b });
            }
            Ok(c_big * (1.0 + 1.0 / (b - (kf + 1.0))))
        }
    }
}

/// `b_Q2(k) ≤ 3^{k-1} (b_Q1(2k) + 2^k b_Q1(k) tr^{k/2} + b_Q1(2)^k)`, where
/// `trace_m_sigma` bounds `tr(MΣ)` (pass `tr Σ` when `‖M‖_op ≤ 1`).
pub fn bound_bq2_from_bq1(k: u32, bq1: &BTreeMap<u32, f64>, trace_m_sigma: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("moment order must be at least 1"));
    }
    let get = |order: u32| bq1.get(&order).copied().ok_or(Error::MissingMoment(order));
    let high = get(2 * k)?;
    let mid = get(k)?;
    let second = get(2)?;
    let kf = k as f64;
    Ok(3f64.powf(kf - 1.0)
        * (high + 2f64.powf(kf) * mid * trace_m_sigma.max(0.0).powf(kf / 2.0) + second.powf(kf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_gen::{sample_design, DesignDistribution, RadialLaw};
    use crate::linalg::operator_norm;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn mixed_moment_values() {
        let mu = DVector::zeros(3);
        let id = SymMatrix::identity(3);
        assert_eq!(lognormal_mixed_moment(&[0, 0, 0], &mu, &id).unwrap(), 1.0);
        assert_relative_eq!(
            lognormal_mixed_moment(&[1, 0, 0], &mu, &id).unwrap(),
            1.648_721,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            lognormal_mixed_moment(&[2, 0, 0], &mu, &id).unwrap(),
            7.389_056,
            epsilon = 1e-6
        );
        assert!(lognormal_mixed_moment(&[1, 0], &mu, &id).is_err());
    }

    #[test]
    fn mixed_moment_matches_monte_carlo() {
        let mu_tilde = DVector::from_vec(vec![0.1, -0.2]);
        let sigma_tilde = SymMatrix::from_rows(&[vec![0.2, 0.05], vec![0.05, 0.1]]).unwrap();
        let dist =
            DesignDistribution::lognormal_centered(mu_tilde.clone(), sigma_tilde.clone()).unwrap();
        let n = 1_000_000;
        let s = sample_design(&dist, &RadialLaw::constant_one(), &DVector::zeros(2), n, 77)
            .unwrap();
        let means: Vec<f64> = (0..2)
            .map(|j| (mu_tilde[j] + 0.5 * sigma_tilde.get(j, j)).exp())
            .collect();
        for t in [[1u32, 0u32], [1, 1]] {
            let vals: Vec<f64> = s
                .x()
                .row_iter()
                .map(|row| {
                    (0..2)
                        .map(|j| (row[j] + means[j]).powi(t[j] as i32))
                        .product::<f64>()
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let exact = lognormal_mixed_moment(&t, &mu_tilde, &sigma_tilde).unwrap();
            assert!(
                (mean - exact).abs() <= 4.0 * (var / n as f64).sqrt(),
                "t={t:?}: {mean} vs {exact}"
            );
        }
    }

    #[test]
    fn lognormal_linear_bound() {
        assert_eq!(bound_bl_lognormal(2, 0.0, 0.0).unwrap(), 0.0);
        let v = bound_bl_lognormal(2, 0.0, 1.0).unwrap();
        assert_relative_eq!(v, (PI / 2.0).powi(2) * 2f64.exp(), epsilon = 1e-12);
        assert!((v - 18.23).abs() < 0.01);
        assert!(bound_bl_lognormal(3, 0.0, 1.0).is_err());
        assert!(bound_bl_lognormal(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lognormal_linear_bound_dominates_monte_carlo() {
        let p = 5;
        let sigma_star = 0.3;
        let mu_tilde = DVector::zeros(p);
        let dist = DesignDistribution::lognormal_centered(
            mu_tilde,
            SymMatrix::scaled_identity(p, sigma_star * sigma_star),
        )
        .unwrap();
        let s = sample_design(&dist, &RadialLaw::constant_one(), &DVector::zeros(p), 100_000, 4)
            .unwrap();
        let v = DVector::from_vec(vec![0.3, -0.5, 0.1, 0.7, 0.2]).normalize();
        let proj = s.x() * &v;
        let second = proj.iter().map(|z| z * z).sum::<f64>() / proj.len() as f64;
        assert!(second <= bound_bl_lognormal(2, 0.0, sigma_star).unwrap());
    }

    #[test]
    fn lognormal_quadratic_bound() {
        assert_eq!(bound_bq2_lognormal(10, 0.3, 0.0).unwrap(), 0.0);
        let v = bound_bq2_lognormal(100, 0.0, 0.25).unwrap();
        assert_relative_eq!(v, 4.0 * PI * PI * 0.0625 * 100.0 * 0.5f64.exp(), epsilon = 1e-9);
        assert!((v - 406.9).abs() < 0.1);
    }

    #[test]
    fn lognormal_quadratic_bound_dominates_monte_carlo() {
        let p = 20;
        let sigma_star = 0.25;
        let dist = DesignDistribution::lognormal_centered(
            DVector::zeros(p),
            SymMatrix::scaled_identity(p, sigma_star * sigma_star),
        )
        .unwrap();
        let s = sample_design(&dist, &RadialLaw::constant_one(), &DVector::zeros(p), 100_000, 6)
            .unwrap();
        let g = DMatrix::from_fn(p, p, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let m = SymMatrix::from_symmetrized(g.transpose() * g).unwrap();
        let m = m.scale(1.0 / operator_norm(&m));
        let vals: Vec<f64> = s
            .x()
            .row_iter()
            .map(|row| m.quad_form(&row.transpose()))
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(var <= bound_bq2_lognormal(p, 0.0, sigma_star).unwrap());
    }

    #[test]
    fn tail_bounds() {
        let exp = TailBound::Exponential {
            c_big: 1.0,
            c_small: 1.0,
            b: 1.0,
        };
        assert_relative_eq!(bound_bl_tail(2, exp).unwrap(), 2.0, epsilon = 1e-14);
        let poly = TailBound::Polynomial { c_big: 1.0, b: 10.0 };
        assert_relative_eq!(bound_bl_tail(4, poly).unwrap(), 1.2, epsilon = 1e-14);
        let bad = TailBound::Polynomial { c_big: 1.0, b: 5.0 };
        assert!(matches!(bound_bl_tail(4, bad), Err(Error::InfeasibleBound { k: 4, .. })));
        // P(|Z| > t) ≤ 2 exp(-t²/2).
        let gauss = TailBound::Exponential {
            c_big: 2.0,
            c_small: 0.5,
            b: 2.0,
        };
        assert!(bound_bl_tail(2, gauss).unwrap() >= 1.0);
        assert!(bound_bl_tail(4, gauss).unwrap() >= 3.0);
    }

    #[test]
    fn quadratic_from_linear_moments() {
        let zeros: BTreeMap<u32, f64> = [(2, 0.0), (4, 0.0)].into_iter().collect();
        assert_eq!(bound_bq2_from_bq1(2, &zeros, 10.0).unwrap(), 0.0);
        let p = 10.0;
        let bq1: BTreeMap<u32, f64> = [(2, 1.0), (4, 3.0)].into_iter().collect();
        let v = bound_bq2_from_bq1(2, &bq1, p).unwrap();
        assert_relative_eq!(v, 3.0 * (3.0 + 4.0 * p + 1.0));
        // Exact b_Q2(2) for N(0, Id_p) is 2p.
        assert!(v >= 2.0 * p);
        assert!(matches!(
            bound_bq2_from_bq1(3, &bq1, p),
            Err(Error::MissingMoment(6))
        ));
    }
}
