use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 8;

/// Sum with a fixed binary reduction tree, so the result depends only on
/// the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Unbiased sample variance of the replications.
    pub variance: f64,
    /// `sqrt(variance / replications)`.
    pub se: f64,
    pub replications: usize,
}

impl Estimate {
    pub fn from_values(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least two replications, got {n}")));
        }
        // Shifting by the first value keeps constant inputs exactly constant.
        let shift = xs[0];
        let shifted: Vec<f64> = xs.iter().map(|x| x - shift).collect();
        let mean = shift + pairwise_sum(&shifted) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let variance = pairwise_sum(&dev) / (n - 1) as f64;
        Ok(Self {
            mean,
            variance,
            se: (variance / n as f64).sqrt(),
            replications: n,
        })
    }

    /// Approximate standard error of the sample variance under normality.
    pub fn variance_se(&self) -> f64 {
        self.variance * (2.0 / (self.replications - 1) as f64).sqrt()
    }
}

/// Standard error of the difference of two independent means.
pub fn pooled_se(a: &Estimate, b: &Estimate) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

/// Least-squares slope of `y` on `x` with a 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-sided 97.5% Student quantiles for 1 to 30 degrees of freedom.
const T_QUANTILES: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

fn t_quantile(dof: usize) -> f64 {
    T_QUANTILES.get(dof.wrapping_sub(1)).copied().unwrap_or(1.96)
}

pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "regression responses",
            expected: x.len(),
            actual: y.len(),
        });
    }
    let k = x.len();
    if k < 3 {
        return Err(Error::invalid(format!("slope fit needs at least 3 points, got {k}")));
    }
    let mx = pairwise_sum(x) / k as f64;
    let my = pairwise_sum(y) / k as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("regressors are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let se = (rss / (k - 2) as f64 / sxx).sqrt();
    let half = t_quantile(k - 2) * se;
    Ok(SlopeFit {
        slope,
        intercept,
        ci_low: slope - half,
        ci_high: slope + half,
    })
}
