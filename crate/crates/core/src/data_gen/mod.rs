//! Elliptical data `L_i = μ + R_i X_i`.
//!
//! A [`DesignDistribution`] produces the concentrated vectors `X_i`, a
//! [`RadialLaw`] the nonnegative weights `R_i`. Every distribution caches its
//! effective covariance `Cov(X_i)` so that experiments can check that two
//! laws share second moments before comparing them.

mod bounds;
mod constants;
mod spec;

pub use bounds::{
    bound_bl_lognormal, bound_bl_tail, bound_bq2_from_bq1, bound_bq2_lognormal,
    lognormal_mixed_moment, TailBound,
};
pub use constants::{ConcentrationConstants, ConstantsProvenance};
pub use spec::{DistributionSpec, MatrixSpec, NamedVector, VectorSpec};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, same_dim, SymMatrix};
use crate::rng::StreamKey;
use crate::special::normal_cdf;

const PSD_TOL: f64 = 1e-10;
const CHANNEL_DESIGN: u64 = 0;
const CHANNEL_RADIAL: u64 = 1;

/// Entry law of [`DistributionKind::BoundedIid`], both with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    /// `±1` with equal probability.
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    Uniform,
}

#[derive(Debug, Clone)]
pub enum DistributionKind {
    Gaussian {
        sigma: SymMatrix,
    },
    /// `exp(Z) - E exp(Z)` with `Z ~ N(mu_tilde, sigma_tilde)`.
    LogNormalCentered {
        mu_tilde: DVector<f64>,
        sigma_tilde: SymMatrix,
    },
    /// `Φ(Z) - 1/2` with `Z ~ N(0, correlation)`.
    GaussianCopulaCentered {
        correlation: SymMatrix,
    },
    /// `Γ √p u` with `u` uniform on the unit sphere and `Γ Γ^T = sigma`.
    SphereUniform {
        sigma: SymMatrix,
    },
    /// `Γ ε` with i.i.d. bounded unit-variance entries `ε`.
    BoundedIid {
        sigma: SymMatrix,
        entry: EntryLaw,
    },
}

/// A law for the vectors `X_i`, with cached effective covariance.
#[derive(Debug, Clone)]
pub struct DesignDistribution {
    kind: DistributionKind,
    sigma_eff: SymMatrix,
    root: Option<DMatrix<f64>>,
}

impl DesignDistribution {
    pub fn gaussian(sigma: SymMatrix) -> Result<Self> {
        require_psd(&sigma, "Gaussian covariance")?;
        Ok(Self::with_root(
            DistributionKind::Gaussian {
                sigma: sigma.clone(),
            },
            sigma.clone(),
            &sigma,
        ))
    }

    pub fn lognormal_centered(mu_tilde: DVector<f64>, sigma_tilde: SymMatrix) -> Result<Self> {
        same_dim("log-normal location", sigma_tilde.dim(), mu_tilde.len())?;
        require_psd(&sigma_tilde, "log-normal covariance")?;
        let p = mu_tilde.len();
        let sigma_eff = SymMatrix::from_symmetrized(DMatrix::from_fn(p, p, |i, j| {
            let scale = (mu_tilde[i]
                + mu_tilde[j]
                + 0.5 * (sigma_tilde.get(i, i) + sigma_tilde.get(j, j)))
            .exp();
            scale * sigma_tilde.get(i, j).exp_m1()
        }))?;
        let root_of = sigma_tilde.clone();
        Ok(Self::with_root(
            DistributionKind::LogNormalCentered {
                mu_tilde,
                sigma_tilde,
            },
            sigma_eff,
            &root_of,
        ))
    }

    /// Log-normal with unit-variance coordinates: `Σ̃ = s² · correlation`
    /// and `μ̃_i = -(s² + ln(e^{s²} - 1)) / 2`.
    pub fn lognormal_standardized(log_variance: f64, correlation: SymMatrix) -> Result<Self> {
        if !(log_variance > 0.0) {
            return Err(Error::invalid(format!(
                "log-normal log-variance must be positive, got {log_variance}"
            )));
        }
        require_unit_diagonal(&correlation)?;
        let s2 = log_variance;
        let mu = -(s2 + s2.exp_m1().ln()) / 2.0;
        let p = correlation.dim();
        Self::lognormal_centered(DVector::from_element(p, mu), correlation.scale(s2))
    }

    pub fn gaussian_copula_centered(correlation: SymMatrix) -> Result<Self> {
        require_unit_diagonal(&correlation)?;
        require_psd(&correlation, "copula correlation")?;
        let p = correlation.dim();
        // Cov(Φ(Z_i), Φ(Z_j)) = asin(ρ_ij / 2) / (2π).
        let sigma_eff = SymMatrix::from_symmetrized(DMatrix::from_fn(p, p, |i, j| {
            (correlation.get(i, j) / 2.0).asin() / (2.0 * std::f64::consts::PI)
        }))?;
        let root_of = correlation.clone();
        Ok(Self::with_root(
            DistributionKind::GaussianCopulaCentered { correlation },
            sigma_eff,
            &root_of,
        ))
    }

    pub fn sphere_uniform(sigma: SymMatrix) -> Result<Self> {
        require_psd(&sigma, "sphere covariance")?;
        Ok(Self::with_root(
            DistributionKind::SphereUniform {
                sigma: sigma.clone(),
            },
            sigma.clone(),
            &sigma,
        ))
    }

    pub fn bounded_iid(sigma: SymMatrix, entry: EntryLaw) -> Result<Self> {
        require_psd(&sigma, "bounded-law covariance")?;
        Ok(Self::with_root(
            DistributionKind::BoundedIid {
                sigma: sigma.clone(),
                entry,
            },
            sigma.clone(),
            &sigma,
        ))
    }

    fn with_root(kind: DistributionKind, sigma_eff: SymMatrix, root_of: &SymMatrix) -> Self {
        let root = (!root_of.is_identity()).then(|| root_of.root());
        Self {
            kind,
            sigma_eff,
            root,
        }
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.sigma_eff.dim()
    }

    /// `Cov(X_i)`.
    pub fn sigma_eff(&self) -> &SymMatrix {
        &self.sigma_eff
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DistributionKind::Gaussian { .. } => "gaussian",
            DistributionKind::LogNormalCentered { .. } => "lognormal_centered",
            DistributionKind::GaussianCopulaCentered { .. } => "gaussian_copula_centered",
            DistributionKind::SphereUniform { .. } => "sphere_uniform",
            DistributionKind::BoundedIid { .. } => "bounded_iid",
        }
    }

    /// Draws an `n × p` matrix whose rows are i.i.d. copies of `X`.
    pub fn sample_rows(&self, n: usize, key: StreamKey) -> DMatrix<f64> {
        let p = self.dim();
        let key = key.channel(CHANNEL_DESIGN);
        let mut base = DMatrix::zeros(n, p);
        for i in 0..n {
            let mut rng = key.rng(i as u64);
            match &self.kind {
                DistributionKind::BoundedIid { entry, .. } => {
                    for j in 0..p {
                        base[(i, j)] = match entry {
                            EntryLaw::Rademacher => {
                                if rng.random_bool(0.5) {
                                    1.0
                                } else {
                                    -1.0
                                }
                            }
                            EntryLaw::Uniform => {
                                3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0)
                            }
                        };
                    }
                }
                _ => {
                    for j in 0..p {
                        base[(i, j)] = rng.sample(StandardNormal);
                    }
                }
            }
        }
        if let DistributionKind::SphereUniform { .. } = self.kind {
            let scale = (p as f64).sqrt();
            for mut row in base.row_iter_mut() {
                let norm = row.norm();
                if norm > 0.0 {
                    row *= scale / norm;
                }
            }
        }
        let mut x = match &self.root {
            Some(root) => base * root.transpose(),
            None => base,
        };
        match &self.kind {
            DistributionKind::LogNormalCentered {
                mu_tilde,
                sigma_tilde,
            } => {
                for j in 0..p {
                    let mean = (mu_tilde[j] + 0.5 * sigma_tilde.get(j, j)).exp();
                    for v in x.column_mut(j).iter_mut() {
                        *v = (*v + mu_tilde[j]).exp() - mean;
                    }
                }
            }
            DistributionKind::GaussianCopulaCentered { .. } => {
                x.apply(|v| *v = normal_cdf(*v) - 0.5);
            }
            _ => {}
        }
        x
    }
}

fn require_psd(m: &SymMatrix, what: &'static str) -> Result<()> {
    if !check_psd(m, PSD_TOL) {
        return Err(Error::NotPsd {
            what,
            min_eigenvalue: m.min_eigenvalue(),
        });
    }
    Ok(())
}

fn require_unit_diagonal(m: &SymMatrix) -> Result<()> {
    for i in 0..m.dim() {
        if (m.get(i, i) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "correlation matrix has diagonal entry {} at {i}",
                m.get(i, i)
            )));
        }
    }
    Ok(())
}

/// Law of the radial weights `R_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialLaw {
    /// A fixed vector, whose length must equal `n`.
    Deterministic { values: Vec<f64> },
    /// `R_i ≡ value`.
    Constant { value: f64 },
    /// Pareto with the given tail index, scaled so that `E R² = 1`.
    /// Only moments of order below `index` exist.
    Pareto { index: f64 },
    /// `R²` inverse-gamma with shape `a` and scale `a - 1`, so `E R² = 1`.
    /// Produces multivariate-t-like data.
    InverseGamma { shape: f64 },
}

impl RadialLaw {
    pub fn constant_one() -> Self {
        RadialLaw::Constant { value: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RadialLaw::Deterministic { values } => {
                if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::invalid(format!("radial weight {v} is not a finite nonnegative number")));
                }
            }
            RadialLaw::Constant { value } => {
                if !(*value >= 0.0) || !value.is_finite() {
                    return Err(Error::invalid(format!("radial weight {value} is not a finite nonnegative number")));
                }
            }
            RadialLaw::Pareto { index } => {
                if !(*index > 2.0) {
                    return Err(Error::invalid(format!(
                        "Pareto index must exceed 2 for a finite second moment, got {index}"
                    )));
                }
            }
            RadialLaw::InverseGamma { shape } => {
                if !(*shape > 1.0) {
                    return Err(Error::invalid(format!(
                        "inverse-gamma shape must exceed 1, got {shape}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `E R²` (the empirical mean of `R_i²` for a deterministic vector).
    pub fn second_moment(&self) -> f64 {
        match self {
            RadialLaw::Deterministic { values } => {
                values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64
            }
            RadialLaw::Constant { value } => value * value,
            RadialLaw::Pareto { .. } | RadialLaw::InverseGamma { .. } => 1.0,
        }
    }

    /// True when every draw is exactly zero.
    pub fn is_zero(&self) -> bool {
        match self {
            RadialLaw::Deterministic { values } => values.iter().all(|v| *v == 0.0),
            RadialLaw::Constant { value } => *value == 0.0,
            _ => false,
        }
    }

    pub fn sample(&self, n: usize, key: StreamKey) -> Result<DVector<f64>> {
        self.validate()?;
        let mut rng = key.channel(CHANNEL_RADIAL).rng(0);
        let r = match self {
            RadialLaw::Deterministic { values } => {
                if values.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "deterministic radial vector",
                        expected: n,
                        actual: values.len(),
                    });
                }
                DVector::from_column_slice(values)
            }
            RadialLaw::Constant { value } => DVector::from_element(n, *value),
            RadialLaw::Pareto { index } => {
                let scale = ((index - 2.0) / index).sqrt();
                DVector::from_fn(n, |_, _| {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    scale * u.powf(-1.0 / index)
                })
            }
            RadialLaw::InverseGamma { shape } => {
                let gamma = Gamma::new(*shape, 1.0)
                    .map_err(|e| Error::invalid(format!("inverse-gamma law: {e}")))?;
                let b = shape - 1.0;
                DVector::from_fn(n, |_, _| {
                    let g: f64 = rng.sample(gamma);
                    (b / g).sqrt()
                })
            }
        };
        Ok(r)
    }
}

/// One realized dataset with its cached weighted Gram matrix.
#[derive(Debug, Clone)]
pub struct DesignSample {
    x: DMatrix<f64>,
    r: DVector<f64>,
    mu: DVector<f64>,
    s: SymMatrix,
}

impl DesignSample {
    /// Validates shapes and computes `S = X^T D² X / n`.
    pub fn new(x: DMatrix<f64>, r: DVector<f64>, mu: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::Shape(format!("design must be non-empty, got {n}x{p}")));
        }
        same_dim("radial weights", n, r.len())?;
        same_dim("mean vector", p, mu.len())?;
        if let Some(v) = r.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!("radial weight {v} is negative")));
        }
        let mut weighted = x.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= r[i];
        }
        let s = SymMatrix::from_symmetrized(weighted.tr_mul(&weighted) / n as f64)?;
        Ok(Self { x, r, mu, s })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows are the `X_i^T`.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn radial(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    /// `S = X^T D² X / n`.
    pub fn s(&self) -> &SymMatrix {
        &self.s
    }

    /// `n × p` matrix whose rows are the observations `μ + R_i X_i`.
    pub fn observations(&self) -> DMatrix<f64> {
        let mut obs = self.x.clone();
        for (i, mut row) in obs.row_iter_mut().enumerate() {
            row *= self.r[i];
            row += self.mu.transpose();
        }
        obs
    }
}

/// Draws a sample from the stream of replication 0 under `seed`.
pub fn sample_design(
    dist: &DesignDistribution,
    radial: &RadialLaw,
    mu: &DVector<f64>,
    n: usize,
    seed: u64,
) -> Result<DesignSample> {
    sample_design_keyed(dist, radial, mu, n, StreamKey::new(seed))
}

/// Draws a sample from an explicit stream.
pub fn sample_design_keyed(
    dist: &DesignDistribution,
    radial: &RadialLaw,
    mu: &DVector<f64>,
    n: usize,
    key: StreamKey,
) -> Result<DesignSample> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    same_dim("mean vector", dist.dim(), mu.len())?;
    let r = radial.sample(n, key)?;
    let x = dist.sample_rows(n, key);
    DesignSample::new(x, r, mu.clone())
}
