//! Regularized discriminant analysis with `Σ̃ = (1 - w) Σ̂ + w A`.
//!
//! Writing `Σ̃ = (1 - w) (Σ̂ + A_w)` with `A_w = w A / (1 - w)` puts the rule
//! in the deterministic-equivalent setting with `R ≡ 1` and
//! `n = N1 + N2 - 2`. The damping `γ`, the derivatives `ξ(A_w, A_w)` and
//! `ξ(A_w, Σ)`, and from them the spread of `y^T d`, are all recovered from
//! observable traces of `M = Σ̂ + A_w`. One simultaneous diagonalization of
//! `(Σ̂, A)` serves the whole grid.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lda::{lda_misclassification, LdaStats};
use crate::error::{Error, Result};
use crate::linalg::{same_dim, Pencil, SymMatrix};

const GAP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdaRow {
    pub w: f64,
    pub t_corrected: f64,
    pub t_naive: f64,
    pub mu1_d: f64,
    pub mu2_d: f64,
    pub sigma2_d: f64,
    /// Predicted error of the corrected threshold.
    pub predicted_error: f64,
    /// Predicted error of the naive threshold.
    pub predicted_error_naive: f64,
    /// Error the raw plug-in quantities would suggest for the naive threshold.
    pub plugin_error: f64,
    pub gamma_hat: f64,
    pub xi_target: f64,
    pub xi_sigma: f64,
}

/// Evaluates corrected and plug-in quantities at every `w` of the grid.
pub fn rda_sweep(stats: &LdaStats, target: &SymMatrix, w_grid: &[f64]) -> Result<Vec<RdaRow>> {
    same_dim("regularization target", stats.p(), target.dim())?;
    if let Some(w) = w_grid.iter().find(|w| !(**w >= 0.0 && **w < 1.0)) {
        return Err(Error::invalid(format!("regularization weight {w} is outside [0, 1)")));
    }
    let sweep = Sweep::new(stats, target)?;
    w_grid.par_iter().map(|&w| sweep.row(w)).collect()
}

/// `d = Σ̃^{-1} (μ̂2 - μ̂1)` at weight `w`.
pub fn rda_direction(stats: &LdaStats, target: &SymMatrix, w: f64) -> Result<DVector<f64>> {
    same_dim("regularization target", stats.p(), target.dim())?;
    let sigma_tilde = stats
        .sigma_hat()
        .scale(1.0 - w)
        .add(&target.scale(w))?;
    let factor = crate::linalg::SymFactor::new(&sigma_tilde, "regularized covariance")?;
    Ok(factor.solve(&stats.mean_difference()))
}

struct Sweep<'a> {
    stats: &'a LdaStats,
    lambda: DVector<f64>,
    delta: DVector<f64>,
    mean1: DVector<f64>,
    mean2: DVector<f64>,
}

impl<'a> Sweep<'a> {
    fn new(stats: &'a LdaStats, target: &SymMatrix) -> Result<Self> {
        let pencil = Pencil::new(stats.sigma_hat(), target)?;
        Ok(Self {
            stats,
            lambda: pencil.values().clone(),
            delta: pencil.coords(&stats.mean_difference()),
            mean1: pencil.coords(stats.muhat1()),
            mean2: pencil.coords(stats.muhat2()),
        })
    }

    fn row(&self, w: f64) -> Result<RdaRow> {
        let c = w / (1.0 - w);
        let inv: Vec<f64> = self.lambda.iter().map(|l| l + c).collect();
        if let Some(m) = inv.iter().copied().find(|v| !(*v > 0.0)) {
            return Err(Error::Factorization {
                what: "regularized covariance",
                min_eigenvalue: m,
            });
        }
        let inv: Vec<f64> = inv.iter().map(|v| 1.0 / v).collect();
        let stats = self.stats;
        let n = stats.dof() as f64;
        let p = stats.p() as f64;

        let tr_target = c * inv.iter().sum::<f64>();
        let tr_target_sandwich: f64 = c * self
            .lambda
            .iter()
            .zip(&inv)
            .map(|(l, v)| l * v * v)
            .sum::<f64>();
        let o1 = p / n - tr_target / n;
        let o1_prime = -tr_target_sandwich / n;
        if !(o1 < 1.0) {
            return Err(Error::invalid(format!(
                "normalized trace {o1} leaves no damping; increase w or the sample size"
            )));
        }
        let gamma = 1.0 - o1;
        let alpha = o1 / gamma;
        let alpha_prime = o1_prime / (gamma * gamma);
        let xi_target = -gamma * gamma * alpha_prime;
        let denom = gamma - xi_target;
        let t_sigma = (alpha + alpha_prime) / denom;
        let c4_t = gamma * gamma * t_sigma;
        if c4_t >= 1.0 {
            return Err(Error::Unstable { c4_t_sigma: c4_t });
        }
        let xi_sigma = c4_t / (1.0 - c4_t);
        let kappa = (1.0 + xi_sigma) / denom;

        let scale = 1.0 / (1.0 - w);
        let mut sandwich = 0.0;
        let (mut a1, mut a2) = (0.0, 0.0);
        for j in 0..inv.len() {
            let y = self.delta[j];
            sandwich += y * y * self.lambda[j] * inv[j] * inv[j];
            a1 += self.mean1[j] * y * inv[j];
            a2 += self.mean2[j] * y * inv[j];
        }
        let sandwich = sandwich * scale * scale;
        let (a1, a2) = (a1 * scale, a2 * scale);

        let sigma2_d = kappa * sandwich;
        let shift1 = n / stats.n1() as f64 * alpha * scale;
        let shift2 = n / stats.n2() as f64 * alpha * scale;
        let mu1_d = a1 + shift1;
        let mu2_d = a2 - shift2;
        let gap = mu2_d - mu1_d;
        if gap.abs() <= GAP_TOL {
            return Err(Error::IndistinguishableGroups { gap });
        }
        let log_ratio = stats.log_prior_ratio();
        let midpoint = 0.5 * (a1 + a2);
        let t_corrected = midpoint + 0.5 * (shift1 - shift2) + sigma2_d / gap * log_ratio;
        let t_naive = midpoint + log_ratio;
        let sigma_d = sigma2_d.sqrt();
        let pi1 = stats.pi1();
        Ok(RdaRow {
            w,
            t_corrected,
            t_naive,
            mu1_d,
            mu2_d,
            sigma2_d,
            predicted_error: lda_misclassification(mu1_d, mu2_d, sigma_d, t_corrected, pi1),
            predicted_error_naive: lda_misclassification(mu1_d, mu2_d, sigma_d, t_naive, pi1),
            plugin_error: lda_misclassification(a1, a2, sandwich.sqrt(), t_naive, pi1),
            gamma_hat: gamma,
            xi_target,
            xi_sigma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::lda::{gaussian_rule_error, lda_corrections};
    use crate::linalg::test_util::gaussian_matrix;
    use nalgebra::DMatrix;

    fn groups(p: usize, n1: usize, n2: usize, mu2: &DVector<f64>, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let g1 = gaussian_matrix(n1, p, seed);
        let mut g2 = gaussian_matrix(n2, p, seed + 1000);
        for mut row in g2.row_iter_mut() {
            row += mu2.transpose();
        }
        (g1, g2)
    }

    #[test]
    fn zero_weight_matches_lda() {
        let p = 30;
        let mu2 = DVector::from_fn(p, |i, _| if i < 2 { 0.8 } else { 0.0 });
        let (g1, g2) = groups(p, 90, 50, &mu2, 3);
        let stats = LdaStats::from_observations(&g1, &g2, 0.65).unwrap();
        let lda = lda_corrections(&stats).unwrap();
        let row = rda_sweep(&stats, &SymMatrix::identity(p), &[0.0]).unwrap()[0];
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + b.abs());
        assert!(close(row.mu1_d, lda.mu1_d));
        assert!(close(row.mu2_d, lda.mu2_d));
        assert!(close(row.sigma2_d, lda.sigma2_d));
        assert!(close(row.t_corrected, lda.t_star));
        assert!(close(row.t_naive, lda.t_naive));
    }

    #[test]
    fn single_point_grid() {
        let p = 10;
        let mu2 = DVector::from_element(p, 0.3);
        let (g1, g2) = groups(p, 20, 20, &mu2, 5);
        let stats = LdaStats::from_observations(&g1, &g2, 0.5).unwrap();
        let rows = rda_sweep(&stats, &SymMatrix::identity(p), &[0.4]).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rda_sweep(&stats, &SymMatrix::identity(p), &[1.0]).is_err());
    }

    #[test]
    fn sweep_direction_matches_dense_solve() {
        let p = 15;
        let mu2 = DVector::from_element(p, 0.4);
        let (g1, g2) = groups(p, 25, 30, &mu2, 9);
        let stats = LdaStats::from_observations(&g1, &g2, 0.5).unwrap();
        let w = 0.3;
        let row = rda_sweep(&stats, &SymMatrix::identity(p), &[w]).unwrap()[0];
        let d = rda_direction(&stats, &SymMatrix::identity(p), w).unwrap();
        let spread = stats.sigma_hat().quad_form(&d);
        let raw = (stats.muhat1().dot(&d), stats.muhat2().dot(&d));
        let plugin = lda_misclassification(raw.0, raw.1, spread.sqrt(), row.t_naive, 0.5);
        assert!((plugin - row.plugin_error).abs() < 1e-10);
        assert!((0.5 * (raw.0 + raw.1) - row.t_naive).abs() < 1e-10);
    }

    #[test]
    fn predicted_rate_matches_true_rate() {
        let (p, n) = (50, 400);
        let mu1 = DVector::zeros(p);
        let mu2 = DVector::from_fn(p, |i, _| if i == 0 { 1.5 } else { 0.0 });
        let sigma = SymMatrix::identity(p);
        let target = SymMatrix::identity(p);
        let mut gaps = Vec::new();
        for seed in 0..10 {
            let (g1, g2) = groups(p, n, n, &mu2, 100 + seed);
            let stats = LdaStats::from_observations(&g1, &g2, 0.6).unwrap();
            let row = rda_sweep(&stats, &target, &[0.5]).unwrap()[0];
            let d = rda_direction(&stats, &target, 0.5).unwrap();
            let truth = gaussian_rule_error(&d, row.t_corrected, &mu1, &mu2, &sigma, 0.6).unwrap();
            gaps.push(row.predicted_error - truth);
        }
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!(mean_gap.abs() < 0.01, "{gaps:?}");
    }
}
