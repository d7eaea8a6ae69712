//! Two-group linear discriminant analysis with Wishart bias corrections.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, same_dim, SymFactor, SymMatrix};
use crate::special::normal_cdf;

const PSD_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-12;

/// Group means, pooled covariance and priors of a two-group training set.
#[derive(Debug, Clone)]
pub struct LdaStats {
    muhat1: DVector<f64>,
    muhat2: DVector<f64>,
    sigma_hat: SymMatrix,
    n1: usize,
    n2: usize,
    pi1: f64,
}

impl LdaStats {
    pub fn new(
        muhat1: DVector<f64>,
        muhat2: DVector<f64>,
        sigma_hat: SymMatrix,
        n1: usize,
        n2: usize,
        pi1: f64,
    ) -> Result<Self> {
        let p = sigma_hat.dim();
        same_dim("group 1 mean", p, muhat1.len())?;
        same_dim("group 2 mean", p, muhat2.len())?;
        if n1 == 0 || n2 == 0 || n1 + n2 <= 2 {
            return Err(Error::invalid(format!("group sizes {n1} and {n2} are too small")));
        }
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(Error::invalid(format!("prior pi1 must lie in (0, 1), got {pi1}")));
        }
        if !check_psd(&sigma_hat, PSD_TOL) {
            return Err(Error::NotPsd {
                what: "pooled covariance",
                min_eigenvalue: sigma_hat.min_eigenvalue(),
            });
        }
        Ok(Self {
            muhat1,
            muhat2,
            sigma_hat,
            n1,
            n2,
            pi1,
        })
    }

    /// Builds the statistics from row-wise observations of each group. The
    /// covariance pools both groups around their own means with divisor
    /// `N1 + N2 - 2`.
    pub fn from_observations(group1: &DMatrix<f64>, group2: &DMatrix<f64>, pi1: f64) -> Result<Self> {
        if group1.ncols() != group2.ncols() {
            return Err(Error::DimensionMismatch {
                what: "group 2 observations",
                expected: group1.ncols(),
                actual: group2.ncols(),
            });
        }
        if group1.nrows() == 0 || group2.nrows() == 0 {
            return Err(Error::invalid("each group needs at least one observation"));
        }
        let (n1, n2) = (group1.nrows(), group2.nrows());
        let mu1 = group1.row_mean().transpose();
        let mu2 = group2.row_mean().transpose();
        let c1 = center(group1, &mu1);
        let c2 = center(group2, &mu2);
        let dof = (n1 + n2).saturating_sub(2).max(1) as f64;
        let pooled = (c1.transpose() * &c1 + c2.transpose() * &c2) / dof;
        Self::new(mu1, mu2, SymMatrix::from_symmetrized(pooled)?, n1, n2, pi1)
    }

    pub fn muhat1(&self) -> &DVector<f64> {
        &self.muhat1
    }

    pub fn muhat2(&self) -> &DVector<f64> {
        &self.muhat2
    }

    pub fn sigma_hat(&self) -> &SymMatrix {
        &self.sigma_hat
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn p(&self) -> usize {
        self.sigma_hat.dim()
    }

    pub fn pi1(&self) -> f64 {
        self.pi1
    }

    pub fn pi2(&self) -> f64 {
        1.0 - self.pi1
    }

    /// Degrees of freedom of the pooled covariance.
    pub fn dof(&self) -> usize {
        self.n1 + self.n2 - 2
    }

    pub fn rho(&self) -> f64 {
        self.p() as f64 / self.dof() as f64
    }

    /// `μ̂2 - μ̂1`.
    pub fn mean_difference(&self) -> DVector<f64> {
        &self.muhat2 - &self.muhat1
    }

    pub fn log_prior_ratio(&self) -> f64 {
        (self.pi1 / self.pi2()).ln()
    }
}

fn center(obs: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = obs.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaCorrections {
    /// `(μ̂2 - μ̂1)^T Σ̂^{-1} (μ̂2 - μ̂1)`.
    pub quad_form: f64,
    /// Bias-corrected Mahalanobis distance between the groups.
    pub maha_hat: f64,
    pub sigma2_d: f64,
    pub mu1_d: f64,
    pub mu2_d: f64,
    pub t_star: f64,
    pub t_naive: f64,
    /// Discriminant direction `d = Σ̂^{-1} (μ̂2 - μ̂1)`.
    pub direction: Vec<f64>,
}

/// Bias-corrected projections, spread and threshold of the plug-in rule
/// `y^T d ≥ t`.
pub fn lda_corrections(stats: &LdaStats) -> Result<LdaCorrections> {
    let rho = stats.rho();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!(
            "corrections need 0 < p / (N1 + N2 - 2) < 1, got {rho}"
        )));
    }
    let delta = stats.mean_difference();
    let factor = SymFactor::new(&stats.sigma_hat, "pooled covariance")?;
    let d = factor.solve(&delta);
    let q = delta.dot(&d);
    let p = stats.p() as f64;
    let (b1, b2) = (p / stats.n1 as f64, p / stats.n2 as f64);
    let one_minus = 1.0 - rho;
    let maha_hat = one_minus * q - b1 - b2;
    let sigma2_d = (maha_hat + b1 + b2) / one_minus.powi(3);
    let a1 = stats.muhat1.dot(&d);
    let a2 = stats.muhat2.dot(&d);
    let shift1 = b1 / one_minus;
    let shift2 = b2 / one_minus;
    let mu1_d = a1 + shift1;
    let mu2_d = a2 - shift2;
    let gap = mu2_d - mu1_d;
    if gap.abs() <= GAP_TOL {
        return Err(Error::IndistinguishableGroups { gap });
    }
    let log_ratio = stats.log_prior_ratio();
    // Both thresholds share the midpoint expression so that they coincide
    // bit for bit when the corrections and the prior term cancel.
    let midpoint = 0.5 * (a1 + a2);
    let t_star = midpoint + 0.5 * (shift1 - shift2) + sigma2_d / gap * log_ratio;
    let t_naive = midpoint + log_ratio;
    Ok(LdaCorrections {
        quad_form: q,
        maha_hat,
        sigma2_d,
        mu1_d,
        mu2_d,
        t_star,
        t_naive,
        direction: d.iter().copied().collect(),
    })
}

/// `π1 (1 - Φ((t - μ1) / σ)) + π2 Φ((t - μ2) / σ)` for the rule that assigns
/// `y` to group 2 when `y^T d ≥ t`.
pub fn lda_misclassification(mu1_d: f64, mu2_d: f64, sigma_d: f64, t: f64, pi1: f64) -> f64 {
    pi1 * normal_cdf((mu1_d - t) / sigma_d) + (1.0 - pi1) * normal_cdf((t - mu2_d) / sigma_d)
}

/// Exact error rate of the rule `y^T d ≥ t` when group `g` is
/// `N(μ_g, Σ)`.
pub fn gaussian_rule_error(
    direction: &DVector<f64>,
    t: f64,
    mu1: &DVector<f64>,
    mu2: &DVector<f64>,
    sigma: &SymMatrix,
    pi1: f64,
) -> Result<f64> {
    same_dim("direction", sigma.dim(), direction.len())?;
    let spread = sigma.quad_form(direction);
    if !(spread > 0.0) {
        return Err(Error::invalid("direction has zero variance under sigma"));
    }
    Ok(lda_misclassification(
        mu1.dot(direction),
        mu2.dot(direction),
        spread.sqrt(),
        t,
        pi1,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_util::gaussian_matrix;

    fn shifted(rows: usize, p: usize, shift: &DVector<f64>, seed: u64) -> DMatrix<f64> {
        let mut g = gaussian_matrix(rows, p, seed);
        for mut row in g.row_iter_mut() {
            row += shift.transpose();
        }
        g
    }

    #[test]
    fn misclassification_examples() {
        assert!((lda_misclassification(0.3, 0.3, 1.0, 7.0, 0.5) - 0.5).abs() < 1e-15);
        assert!((lda_misclassification(-1.0, 1.0, 1.0, f64::NEG_INFINITY, 0.3) - 0.3).abs() < 1e-15);
        let v = lda_misclassification(-1.0, 1.0, 1.0, 0.0, 0.5);
        assert!((v - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn balanced_groups_keep_naive_threshold() {
        let p = 20;
        let mu2 = DVector::from_fn(p, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let g1 = shifted(60, p, &DVector::zeros(p), 1);
        let g2 = shifted(60, p, &mu2, 2);
        let stats = LdaStats::from_observations(&g1, &g2, 0.5).unwrap();
        let c = lda_corrections(&stats).unwrap();
        assert_eq!(c.t_star, c.t_naive);
        assert!(c.mu1_d < c.mu2_d);
    }

    #[test]
    fn pooled_covariance_matches_definition() {
        let g1 = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 5.0]);
        let g2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 2.0]);
        let stats = LdaStats::from_observations(&g1, &g2, 0.4).unwrap();
        // Group 1 deviations: (-1,-2), (0,-1), (1,3); group 2: (-1,-1), (1,1).
        let expected = [[4.0 / 3.0, 7.0 / 3.0], [7.0 / 3.0, 16.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((stats.sigma_hat().get(i, j) - expected[i][j]).abs() < 1e-14);
            }
        }
        assert_eq!(stats.dof(), 3);
    }

    #[test]
    fn corrections_require_rho_below_one() {
        let g1 = gaussian_matrix(4, 10, 3);
        let g2 = gaussian_matrix(4, 10, 4);
        let stats = LdaStats::from_observations(&g1, &g2, 0.5).unwrap();
        assert!(lda_corrections(&stats).is_err());
    }

    #[test]
    fn small_rho_recovers_mahalanobis() {
        let p = 2;
        let mu2 = DVector::from_vec(vec![1.0, 0.0]);
        let g1 = shifted(10_000, p, &DVector::zeros(p), 5);
        let g2 = shifted(10_000, p, &mu2, 6);
        let stats = LdaStats::from_observations(&g1, &g2, 0.5).unwrap();
        let c = lda_corrections(&stats).unwrap();
        assert!((c.maha_hat - 1.0).abs() < 0.05, "{}", c.maha_hat);
    }

    #[test]
    fn identical_means_are_rejected() {
        // The corrected gap |μ2 - μ1|² - 2p / (N (1 - ρ)) vanishes.
        let (p, n) = (3.0f64, 50.0f64);
        let shift = p / (n * (1.0 - p / (2.0 * n - 2.0)));
        let mu2 = DVector::from_vec(vec![(2.0 * shift).sqrt(), 0.0, 0.0]);
        let stats = LdaStats::new(DVector::zeros(3), mu2, SymMatrix::identity(3), 50, 50, 0.5).unwrap();
        assert!(matches!(
            lda_corrections(&stats),
            Err(Error::IndistinguishableGroups { .. })
        ));
    }

    #[test]
    fn gaussian_rule_error_matches_closed_form() {
        let sigma = SymMatrix::from_diagonal(&[4.0, 1.0]);
        let d = DVector::from_vec(vec![0.5, 0.0]);
        let mu1 = DVector::from_vec(vec![-1.0, 3.0]);
        let mu2 = DVector::from_vec(vec![1.0, -2.0]);
        // Projections ±0.5 with spread 1.
        let e = gaussian_rule_error(&d, 0.0, &mu1, &mu2, &sigma, 0.5).unwrap();
        assert!((e - normal_cdf(-0.5)).abs() < 1e-15);
    }
}
