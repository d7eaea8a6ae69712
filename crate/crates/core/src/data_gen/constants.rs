use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{bound_bl_lognormal, bound_bq2_lognormal, DesignDistribution};
use crate::error::{Error, Result};
use crate::linalg::{operator_norm, SymMatrix};
use crate::rng::StreamKey;
use crate::special::gaussian_abs_moment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsProvenance {
    AnalyticBound,
    MonteCarloEstimate,
}

/// Moment bounds `b_L(k)` on `E|X^T v|^k` and `b_Q2(k)` on
/// `E|X^T M X - tr(MΣ)|^k`, uniform over unit `v` and `‖M‖_op ≤ 1`.
///
/// Construction replaces `b_L(k)` by `min(b_L(k), sqrt(b_L(2k)))` whenever
/// both are present, which is always a valid bound by Cauchy-Schwarz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConstants {
    bl: BTreeMap<u32, f64>,
    bq2: BTreeMap<u32, f64>,
    provenance: ConstantsProvenance,
}

impl ConcentrationConstants {
    pub fn new(
        bl: BTreeMap<u32, f64>,
        bq2: BTreeMap<u32, f64>,
        provenance: ConstantsProvenance,
    ) -> Result<Self> {
        for (k, v) in bl.iter().chain(bq2.iter()) {
            if !(*v >= 0.0) {
                return Err(Error::invalid(format!("moment bound of order {k} is {v}")));
            }
        }
        let mut bl = bl;
        let keys: Vec<u32> = bl.keys().copied().collect();
        // Descending order lets tightened high moments feed lower ones.
        for k in keys.into_iter().rev() {
            if let Some(&high) = bl.get(&(2 * k)) {
                let entry = bl.get_mut(&k).expect("key present");
                *entry = entry.min(high.sqrt());
            }
        }
        Ok(Self { bl, bq2, provenance })
    }

    /// Exact values for `N(0, Σ)`: `b_L(k) = ‖Σ‖^{k/2} E|Z|^k` for
    /// `k = 1..=max_k` and `b_Q2(2) = 2 tr(Σ²)`, `b_Q2(1) = sqrt(b_Q2(2))`.
    pub fn gaussian(sigma: &SymMatrix, max_k: u32) -> Result<Self> {
        let norm = operator_norm(sigma);
        let bl = (1..=max_k)
            .map(|k| (k, norm.powf(k as f64 / 2.0) * gaussian_abs_moment(k as f64)))
            .collect();
        let tr_sq = sigma.as_matrix().component_mul(sigma.as_matrix()).sum();
        let bq2 = [(1, (2.0 * tr_sq).sqrt()), (2, 2.0 * tr_sq)]
            .into_iter()
            .collect();
        Self::new(bl, bq2, ConstantsProvenance::AnalyticBound)
    }

    /// Log-normal bounds for the even orders `2, 4, ..., max_two_r` and
    /// `b_Q2(1), b_Q2(2)`.
    pub fn lognormal(p: usize, mu_star: f64, sigma_star: f64, max_two_r: u32) -> Result<Self> {
        let mut bl = BTreeMap::new();
        for two_r in (2..=max_two_r).step_by(2) {
            bl.insert(two_r, bound_bl_lognormal(two_r, mu_star, sigma_star)?);
        }
        let q2 = bound_bq2_lognormal(p, mu_star, sigma_star)?;
        let bq2 = [(1, q2.sqrt()), (2, q2)].into_iter().collect();
        Self::new(bl, bq2, ConstantsProvenance::AnalyticBound)
    }

    /// Monte Carlo estimates of `b_L(k)` (max over `directions` random unit
    /// vectors and the coordinate axes) and `b_Q2(1), b_Q2(2)` with `M = Id`.
    pub fn monte_carlo(
        dist: &DesignDistribution,
        orders: &[u32],
        draws: usize,
        directions: usize,
        key: StreamKey,
    ) -> Result<Self> {
        if draws < 2 {
            return Err(Error::invalid("need at least two draws"));
        }
        let p = dist.dim();
        let x = dist.sample_rows(draws, key);
        let mut dirs: Vec<DVector<f64>> = (0..p)
            .map(|j| DVector::from_fn(p, |i, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let g = DesignDistribution::gaussian(SymMatrix::identity(p))?
            .sample_rows(directions, key.channel(7));
        dirs.extend(g.row_iter().map(|r| r.transpose().normalize()));
        let mut bl = BTreeMap::new();
        for &k in orders {
            let mut best = 0.0_f64;
            for v in &dirs {
                let proj = &x * v;
                let m = proj.iter().map(|z| z.abs().powi(k as i32)).sum::<f64>() / draws as f64;
                best = best.max(m);
            }
            bl.insert(k, best);
        }
        let trace = dist.sigma_eff().trace();
        let dev: Vec<f64> = x.row_iter().map(|r| r.norm_squared() - trace).collect();
        let q1 = dev.iter().map(|d| d.abs()).sum::<f64>() / draws as f64;
        let q2 = dev.iter().map(|d| d * d).sum::<f64>() / draws as f64;
        let bq2 = [(1, q1), (2, q2)].into_iter().collect();
        Self::new(bl, bq2, ConstantsProvenance::MonteCarloEstimate)
    }

    pub fn bl(&self, k: u32) -> Result<f64> {
        self.bl.get(&k).copied().ok_or(Error::MissingMoment(k))
    }

    pub fn bq2(&self, k: u32) -> Result<f64> {
        self.bq2.get(&k).copied().ok_or(Error::MissingMoment(k))
    }

    pub fn provenance(&self) -> ConstantsProvenance {
        self.provenance
    }

    pub fn bl_map(&self) -> &BTreeMap<u32, f64> {
        &self.bl
    }

    pub fn bq2_map(&self) -> &BTreeMap<u32, f64> {
        &self.bq2
    }
}
