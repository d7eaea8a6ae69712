//! Structural bounds with their unspecified constants set to one.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::data_gen::{ConcentrationConstants, DesignSample};
use crate::error::{Error, Result};
use crate::linalg::{ShrinkagePlan, SymFactor, SymMatrix};

/// `(Σ_i s_i)^{k/2} + Σ_i m_i`, where `s_i` bounds `E[(W - W_i)² | F]` and
/// `m_i` bounds `E|W - W_i|^k`.
pub fn generalized_efron_stein_bound(k: u32, per_index_sq: &[f64], per_index_k: &[f64]) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid(format!("moment order must be at least 2, got {k}")));
    }
    if per_index_sq.len() != per_index_k.len() {
        return Err(Error::DimensionMismatch {
            what: "per-index moment bounds",
            expected: per_index_sq.len(),
            actual: per_index_k.len(),
        });
    }
    if per_index_sq.iter().chain(per_index_k).any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("per-index bounds must be nonnegative"));
    }
    let sq: f64 = per_index_sq.iter().sum();
    Ok(sq.powf(k as f64 / 2.0) + per_index_k.iter().sum::<f64>())
}

/// Bound on `E|f - E f|^k` for `f = x^T (S + A)^{-1} x` with `A ⪰ t Id`:
/// `t^{-2k} [(Σ_i min(R_i⁴ b_L(4) / n², t²))^{k/2} + Σ_i min(R_i^{2k} b_L(2k) / n^k, t^k)]`.
pub fn theorem_variance_bound_f(
    r: &DVector<f64>,
    t: f64,
    constants: &ConcentrationConstants,
    k: u32,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid(format!("moment order must be at least 2, got {k}")));
    }
    if !(t > 0.0) {
        return Err(Error::invalid(format!("lower bound t must be positive, got {t}")));
    }
    let n = r.len() as f64;
    let bl4 = constants.bl(4)?;
    let bl2k = constants.bl(2 * k)?;
    let kf = k as f64;
    let mut sq = 0.0;
    let mut high = 0.0;
    for ri in r.iter() {
        let r2 = ri * ri;
        sq += (r2 * r2 * bl4 / (n * n)).min(t * t);
        high += (r2.powf(kf) * bl2k / n.powf(kf)).min(t.powf(kf));
    }
    Ok((sq.powf(kf / 2.0) + high) / t.powf(2.0 * kf))
}

/// `(1/p) Σ_i min((K |z| / v³) (R_i² / n) (b_X + b_Y), 2 / v)` with `K = 1`,
/// where `b_X, b_Y` are the `b_Q2(1)` constants of the two laws.
pub fn stieltjes_bound(r: &DVector<f64>, p: usize, z: Complex64, bq2_x: f64, bq2_y: f64) -> Result<f64> {
    let v = z.im;
    if !(v > 0.0) {
        return Err(Error::invalid(format!("Im(z) must be positive, got {v}")));
    }
    let n = r.len() as f64;
    let lead = z.norm() / v.powi(3) * (bq2_x + bq2_y) / n;
    let cap = 2.0 / v;
    Ok(r.iter().map(|ri| (lead * ri * ri).min(cap)).sum::<f64>() / p as f64)
}

/// `(1/p) Σ_j 1 / (λ_j - z)` over the eigenvalues of `S + A`.
pub fn stieltjes_transform(s: &SymMatrix, plan: &ShrinkagePlan, z: Complex64) -> Result<Complex64> {
    let m = s.add(plan.target())?;
    let values = m.eigenvalues();
    let p = values.len() as f64;
    Ok(values.iter().map(|l| 1.0 / (Complex64::new(*l, 0.0) - z)).sum::<Complex64>() / p)
}

/// `(f - f_(i))²` for every `i`, where `f_(i)` drops observation `i` from
/// `S` while keeping the `1/n` normalization. Uses one dense inverse per
/// index, so it is meant for small `n`.
pub fn leave_one_out_squared_differences(
    sample: &DesignSample,
    plan: &ShrinkagePlan,
    x: &DVector<f64>,
) -> Result<Vec<f64>> {
    let n = sample.n() as f64;
    let full = SymFactor::new(&sample.s().add(plan.target())?, "S + A")?.inv_quad_form(x);
    (0..sample.n())
        .map(|i| {
            let xi = sample.x().row(i).transpose() * sample.radial()[i];
            let drop = SymMatrix::from_symmetrized(&xi * xi.transpose() / n)?;
            let m = sample.s().sub(&drop)?.add(plan.target())?;
            let loo = SymFactor::new(&m, "S_i + A")?.inv_quad_form(x);
            Ok((full - loo).powi(2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::data_gen::{sample_design, ConstantsProvenance, DesignDistribution, RadialLaw};
    use crate::mc_harness::stats::Estimate;

    #[test]
    fn efron_stein_examples() {
        assert_eq!(generalized_efron_stein_bound(2, &[0.0; 5], &[0.0; 5]).unwrap(), 0.0);
        let sq = vec![1e-4; 100];
        let k4 = vec![1e-8; 100];
        let b = generalized_efron_stein_bound(4, &sq, &k4).unwrap();
        assert!((b - 1.01e-4).abs() < 1e-16);
        let b2 = generalized_efron_stein_bound(2, &[0.1, 0.2], &[0.3, 0.4]).unwrap();
        assert!((b2 - 1.0).abs() < 1e-15);
        assert!(generalized_efron_stein_bound(1, &[0.1], &[0.1]).is_err());
    }

    fn constants_with_bl4(v: f64) -> ConcentrationConstants {
        let bl: BTreeMap<u32, f64> = [(4, v)].into_iter().collect();
        ConcentrationConstants::new(bl, BTreeMap::new(), ConstantsProvenance::AnalyticBound).unwrap()
    }

    #[test]
    fn theorem_bound_examples() {
        let c = constants_with_bl4(3.0);
        let b = theorem_variance_bound_f(&DVector::from_element(100, 1.0), 1.0, &c, 2).unwrap();
        assert!((b - 0.06).abs() < 1e-15);
        assert_eq!(theorem_variance_bound_f(&DVector::zeros(50), 1.0, &c, 2).unwrap(), 0.0);
        assert!(matches!(
            theorem_variance_bound_f(&DVector::zeros(5), 1.0, &c, 3),
            Err(Error::MissingMoment(6))
        ));
    }

    #[test]
    fn stieltjes_of_zero_sample() {
        let a = SymMatrix::from_diagonal(&[0.5, 1.0, 3.0]);
        let plan = ShrinkagePlan::from_target(a).unwrap();
        let z = Complex64::new(0.3, 0.7);
        let m = stieltjes_transform(&SymMatrix::zeros(3), &plan, z).unwrap();
        let expected = [0.5, 1.0, 3.0]
            .iter()
            .map(|a| 1.0 / (Complex64::new(*a, 0.0) - z))
            .sum::<Complex64>()
            / 3.0;
        assert!((m - expected).norm() < 1e-15);
        assert!(m.norm() <= 1.0 / z.im);
    }

    #[test]
    fn stieltjes_bound_caps_each_term() {
        let r = DVector::from_vec(vec![1.0, 100.0]);
        let z = Complex64::new(0.0, 1.0);
        let b = stieltjes_bound(&r, 4, z, 1.0, 1.0).unwrap();
        assert!((b - (1.0 + 2.0) / 4.0).abs() < 1e-15);
        assert!(stieltjes_bound(&r, 4, Complex64::new(1.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn efron_stein_dominates_small_instances() {
        let (n, p) = (12, 4);
        let dist = DesignDistribution::gaussian(SymMatrix::identity(p)).unwrap();
        let plan = ShrinkagePlan::scaled_identity(p, 0.5).unwrap();
        let x = DVector::from_element(p, 0.5);
        let reps = 2000;
        let mut values = Vec::with_capacity(reps);
        let mut per_index = vec![0.0; n];
        for seed in 0..reps as u64 {
            let s = sample_design(&dist, &RadialLaw::constant_one(), &DVector::zeros(p), n, seed).unwrap();
            values.push(SymFactor::new(&s.s().add(plan.target()).unwrap(), "m").unwrap().inv_quad_form(&x));
            for (acc, d) in per_index.iter_mut().zip(leave_one_out_squared_differences(&s, &plan, &x).unwrap()) {
                *acc += d / reps as f64;
            }
        }
        let var = Estimate::from_values(&values).unwrap().variance;
        let bound = generalized_efron_stein_bound(2, &per_index, &per_index).unwrap();
        assert!(var <= bound, "{var} vs {bound}");
        assert!(var <= per_index.iter().sum::<f64>());
    }
}
