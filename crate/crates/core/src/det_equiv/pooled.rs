//! Mean forms against a pooled, centered covariance estimate.
//!
//! For two groups with `L_k = μ_g + R_k X_k`, the pooled estimate satisfies
//! `Σ̂ + A = M - p̃₁ μ̃₁ μ̃₁^T - p̃₂ μ̃₂ μ̃₂^T` where `M = S + A`, `S` pools
//! `R_k² X_k X_k^T` over both groups with normalization `N₁ + N₂ - 2` and
//! `μ̃_g` is the group mean of `R_k X_k`. Forms against `(Σ̂ + A)^{-1}`
//! therefore follow exactly from forms against `M^{-1}` through two
//! Sherman-Morrison steps.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data_gen::DesignSample;
use crate::error::{Error, Result};
use crate::linalg::{same_dim, ShrinkagePlan, SymFactor, SymMatrix};

const SINGULAR_TOL: f64 = 1e-12;

/// Forms `a^T (Σ̂ + A)^{-1} b` for `a, b ∈ {μ̃₁, μ̃₂, μ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFormSet {
    pub e11: f64,
    pub e12: f64,
    pub e22: f64,
    pub e1mu: f64,
    pub e2mu: f64,
    pub emumu: f64,
}

impl MeanFormSet {
    /// `(μ + μ̃₂ - μ̃₁)^T (Σ̂ + A)^{-1} (μ + μ̃₂ - μ̃₁)`, which equals
    /// `(μ̂₂ - μ̂₁)^T (Σ̂ + A)^{-1} (μ̂₂ - μ̂₁)` when `μ = μ₂ - μ₁`.
    pub fn difference_form(&self) -> f64 {
        self.emumu + 2.0 * (self.e2mu - self.e1mu) + self.e22 - 2.0 * self.e12 + self.e11
    }

    fn minus(&self, other: &MeanFormSet) -> MeanFormSet {
        MeanFormSet {
            e11: self.e11 - other.e11,
            e12: self.e12 - other.e12,
            e22: self.e22 - other.e22,
            e1mu: self.e1mu - other.e1mu,
            e2mu: self.e2mu - other.e2mu,
            emumu: self.emumu - other.emumu,
        }
    }
}

/// Exact rank-1-chain values, their large-sample approximations and the gap
/// `exact - approx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledMeanForms {
    pub exact: MeanFormSet,
    pub approx: MeanFormSet,
    pub gap: MeanFormSet,
    /// `μ̃_a^T M^{-1} μ̃_b` and `μ^T M^{-1} μ`.
    pub q11: f64,
    pub q12: f64,
    pub q22: f64,
    pub mm: f64,
}

/// Mean of `R_k X_k` over one group.
pub fn weighted_mean(sample: &DesignSample) -> DVector<f64> {
    sample.x().tr_mul(sample.radial()) / sample.n() as f64
}

/// `S = Σ_k R_k² X_k X_k^T / (N₁ + N₂ - 2)` over both groups.
pub fn pooled_gram(sample1: &DesignSample, sample2: &DesignSample) -> Result<SymMatrix> {
    same_dim("second group", sample1.p(), sample2.p())?;
    let denom = pooled_dof(sample1, sample2)?;
    let m = sample1.s().as_matrix() * sample1.n() as f64 + sample2.s().as_matrix() * sample2.n() as f64;
    SymMatrix::from_symmetrized(m / denom)
}

/// `(N₁ / (N₁ + N₂ - 2), N₂ / (N₁ + N₂ - 2))`, the weights that make `Σ̂` the
/// usual unbiased pooled covariance.
pub fn default_p_tilde(sample1: &DesignSample, sample2: &DesignSample) -> Result<(f64, f64)> {
    let denom = pooled_dof(sample1, sample2)?;
    Ok((sample1.n() as f64 / denom, sample2.n() as f64 / denom))
}

fn pooled_dof(sample1: &DesignSample, sample2: &DesignSample) -> Result<f64> {
    let total = sample1.n() + sample2.n();
    if total < 3 {
        return Err(Error::invalid("pooled covariance needs N1 + N2 >= 3"));
    }
    Ok((total - 2) as f64)
}

/// `μ̂^T (Σ̂ + A)^{-1} μ̂ = q / (1 - q)` for the one-group centering
/// `Σ̂ + A = M - μ̂ μ̂^T`, with `q = μ̂^T M^{-1} μ̂`.
pub fn centered_mean_form(q: f64) -> Result<f64> {
    let d = 1.0 - q;
    if d.abs() <= SINGULAR_TOL {
        return Err(Error::Singular {
            what: "centered mean form",
            denominator: d,
        });
    }
    Ok(q / d)
}

pub fn pooled_mean_forms(
    sample1: &DesignSample,
    sample2: &DesignSample,
    plan: &ShrinkagePlan,
    mu: &DVector<f64>,
    p_tilde: (f64, f64),
) -> Result<PooledMeanForms> {
    same_dim("shrinkage target", sample1.p(), plan.dim())?;
    same_dim("mean vector", sample1.p(), mu.len())?;
    let s = pooled_gram(sample1, sample2)?;
    let factor = SymFactor::new(&s.add(plan.target())?, "S + A")?;
    let m1 = weighted_mean(sample1);
    let m2 = weighted_mean(sample2);
    let w1 = factor.solve(&m1);
    let w2 = factor.solve(&m2);
    let wmu = factor.solve(mu);
    let (pt1, pt2) = p_tilde;

    let q11 = m1.dot(&w1);
    let q12 = m2.dot(&w1);
    let q22 = m2.dot(&w2);
    let qm1 = mu.dot(&w1);
    let qm2 = mu.dot(&w2);
    let mm = mu.dot(&wmu);

    let d1 = nonsingular(1.0 - pt1 * q11, "first mean downdate")?;
    // Forms against M₁ = M - p̃₁ μ̃₁ μ̃₁^T.
    let r11 = q11 / d1;
    let r12 = q12 / d1;
    let r22 = q22 + pt1 * q12 * q12 / d1;
    let r1m = qm1 / d1;
    let r2m = qm2 + pt1 * q12 * qm1 / d1;
    let rmm = mm + pt1 * qm1 * qm1 / d1;

    let d2 = nonsingular(1.0 - pt2 * r22, "second mean downdate")?;
    let exact = MeanFormSet {
        e11: r11 + pt2 * r12 * r12 / d2,
        e12: r12 / d2,
        e22: r22 / d2,
        e1mu: r1m + pt2 * r12 * r2m / d2,
        e2mu: r2m / d2,
        emumu: rmm + pt2 * r2m * r2m / d2,
    };

    let a1 = nonsingular(1.0 - pt1 * q11, "first mean approximation")?;
    let a2 = nonsingular(1.0 - pt2 * q22, "second mean approximation")?;
    let approx = MeanFormSet {
        e11: q11 / a1,
        e12: 0.0,
        e22: q22 / a2,
        e1mu: 0.0,
        e2mu: 0.0,
        emumu: mm,
    };
    Ok(PooledMeanForms {
        gap: exact.minus(&approx),
        exact,
        approx,
        q11,
        q12,
        q22,
        mm,
    })
}

fn nonsingular(d: f64, what: &'static str) -> Result<f64> {
    if d.abs() <= SINGULAR_TOL {
        return Err(Error::Singular {
            what,
            denominator: d,
        });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_gen::{sample_design, DesignDistribution, RadialLaw};
    use crate::linalg::test_util::random_psd;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn group(n: usize, p: usize, law: &RadialLaw, seed: u64) -> DesignSample {
        let dist = DesignDistribution::gaussian(random_psd(p, seed).add(&SymMatrix::identity(p)).unwrap()).unwrap();
        sample_design(&dist, law, &DVector::zeros(p), n, seed + 1000).unwrap()
    }

    /// Σ̂ + A assembled from centered observations.
    fn direct_inverse(s1: &DesignSample, s2: &DesignSample, a: &SymMatrix) -> DMatrix<f64> {
        let p = s1.p();
        let mut acc = DMatrix::zeros(p, p);
        for s in [s1, s2] {
            let obs = s.observations();
            let mean = obs.row_mean();
            for row in obs.row_iter() {
                let c = row - &mean;
                acc += c.transpose() * &c;
            }
        }
        let denom = (s1.n() + s2.n() - 2) as f64;
        (acc / denom + a.as_matrix()).try_inverse().unwrap()
    }

    #[test]
    fn zero_second_mean_gives_zero_cross_forms() {
        let p = 4;
        let s1 = group(9, p, &RadialLaw::constant_one(), 1);
        let s2 = group(7, p, &RadialLaw::Constant { value: 0.0 }, 2);
        let plan = ShrinkagePlan::scaled_identity(p, 0.5).unwrap();
        let mu = DVector::from_element(p, 0.5);
        let out = pooled_mean_forms(&s1, &s2, &plan, &mu, default_p_tilde(&s1, &s2).unwrap()).unwrap();
        assert_eq!(out.exact.e12, 0.0);
        assert_eq!(out.exact.e22, 0.0);
        assert_eq!(out.exact.e2mu, 0.0);
    }

    #[test]
    fn centered_identity_matches_direct_inverse() {
        let p = 5;
        let s = group(20, p, &RadialLaw::InverseGamma { shape: 4.0 }, 3);
        let plan = ShrinkagePlan::scaled_identity(p, 0.3).unwrap();
        let mu_hat = weighted_mean(&s);
        let m = s.s().add(plan.target()).unwrap();
        let q = SymFactor::new(&m, "M").unwrap().inv_quad_form(&mu_hat);
        let centered = m.as_matrix() - &mu_hat * mu_hat.transpose();
        let direct = mu_hat.dot(&(centered.try_inverse().unwrap() * &mu_hat));
        let chain = centered_mean_form(q).unwrap();
        assert!((chain - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        assert!((chain - (1.0 / (1.0 - q) - 1.0)).abs() < 1e-15);
        assert!(centered_mean_form(1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn chains_match_direct_inverse(seed in 0u64..100_000, n1 in 2usize..25, n2 in 2usize..25, p in 1usize..8) {
            let law = RadialLaw::Pareto { index: 3.0 };
            let s1 = group(n1, p, &law, seed);
            let s2 = group(n2, p, &law, seed + 7);
            let a = random_psd(p, seed + 3).add(&SymMatrix::scaled_identity(p, 0.2)).unwrap();
            let plan = ShrinkagePlan::new(a.clone(), 0.2).unwrap();
            let mu = DVector::from_fn(p, |i, _| 0.3 * i as f64 - 0.4);
            let out = pooled_mean_forms(&s1, &s2, &plan, &mu, default_p_tilde(&s1, &s2).unwrap()).unwrap();
            let inv = direct_inverse(&s1, &s2, &a);
            let m1 = weighted_mean(&s1);
            let m2 = weighted_mean(&s2);
            let form = |u: &DVector<f64>, v: &DVector<f64>| u.dot(&(&inv * v));
            let pairs = [
                (out.exact.e11, form(&m1, &m1)),
                (out.exact.e12, form(&m1, &m2)),
                (out.exact.e22, form(&m2, &m2)),
                (out.exact.e1mu, form(&m1, &mu)),
                (out.exact.e2mu, form(&m2, &mu)),
                (out.exact.emumu, form(&mu, &mu)),
            ];
            let scale = pairs.iter().map(|(_, d)| d.abs()).fold(1.0, f64::max);
            for (chain, direct) in pairs {
                prop_assert!((chain - direct).abs() <= 1e-9 * scale, "{} vs {}", chain, direct);
            }
            let delta = &mu + &m2 - &m1;
            prop_assert!((out.exact.difference_form() - form(&delta, &delta)).abs() <= 1e-9 * scale);
        }
    }
}
