//! JSON descriptions of matrices, vectors and design distributions.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DesignDistribution, EntryLaw};
use crate::error::{Error, Result};
use crate::linalg::{read_matrix_csv, read_sym_binary, SymMatrix};

fn one() -> f64 {
    1.0
}

/// A `p × p` symmetric matrix described by a formula or by its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixSpec {
    /// `scale · Id`.
    Identity {
        #[serde(default = "one")]
        scale: f64,
    },
    Diagonal { values: Vec<f64> },
    /// Diagonal with entries evenly spaced from `low` to `high`.
    LinearSpectrum { low: f64, high: f64 },
    /// `scale · rho^{|i-j|}`.
    Toeplitz {
        rho: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `base · Id + Σ_k strengths[k] u_k u_k^T` with `u_k` the orthonormal
    /// cosine basis vectors, `u_0` being the normalized all-ones vector.
    Spiked {
        #[serde(default = "one")]
        base: f64,
        strengths: Vec<f64>,
    },
    /// Row-major entries.
    Dense { rows: Vec<Vec<f64>> },
    /// A matrix file; `.bin` is the SYMM binary format, anything else CSV.
    File { path: PathBuf },
}

impl MatrixSpec {
    pub fn build(&self, p: usize) -> Result<SymMatrix> {
        if p == 0 {
            return Err(Error::Shape("matrix dimension must be at least 1".into()));
        }
        let m = match self {
            MatrixSpec::Identity { scale } => SymMatrix::scaled_identity(p, *scale),
            MatrixSpec::Diagonal { values } => {
                check_len("diagonal", p, values.len())?;
                SymMatrix::from_diagonal(values)
            }
            MatrixSpec::LinearSpectrum { low, high } => {
                let values: Vec<f64> = (0..p)
                    .map(|j| {
                        if p == 1 {
                            0.5 * (low + high)
                        } else {
                            low + (high - low) * j as f64 / (p - 1) as f64
                        }
                    })
                    .collect();
                SymMatrix::from_diagonal(&values)
            }
            MatrixSpec::Toeplitz { rho, scale } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::invalid(format!("Toeplitz rho must lie in (-1, 1), got {rho}")));
                }
                SymMatrix::new(DMatrix::from_fn(p, p, |i, j| {
                    scale * rho.powi((i as i32 - j as i32).abs())
                }))?
            }
            MatrixSpec::Spiked { base, strengths } => {
                if strengths.len() > p {
                    return Err(Error::invalid(format!(
                        "{} spikes requested in dimension {p}",
                        strengths.len()
                    )));
                }
                let mut m = DMatrix::identity(p, p) * *base;
                for (k, s) in strengths.iter().enumerate() {
                    let u = cosine_vector(p, k);
                    m += &u * u.transpose() * *s;
                }
                SymMatrix::from_symmetrized(m)?
            }
            MatrixSpec::Dense { rows } => SymMatrix::from_rows(rows)?,
            MatrixSpec::File { path } => {
                let file = File::open(path)?;
                if path.extension().is_some_and(|e| e == "bin") {
                    read_sym_binary(BufReader::new(file))?
                } else {
                    SymMatrix::new(read_matrix_csv(BufReader::new(file))?)?
                }
            }
        };
        check_len("matrix", p, m.dim())?;
        Ok(m)
    }
}

/// `k`-th orthonormal DCT-II basis vector of length `p`.
pub(crate) fn cosine_vector(p: usize, k: usize) -> DVector<f64> {
    let scale = if k == 0 {
        (1.0 / p as f64).sqrt()
    } else {
        (2.0 / p as f64).sqrt()
    };
    DVector::from_fn(p, |i, _| {
        scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / p as f64).cos()
    })
}

/// A length-`p` vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    /// Every entry equal to the value.
    Constant(f64),
    Values(Vec<f64>),
    Named(NamedVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NamedVector {
    /// The standard basis vector `e_index` (zero based).
    Basis { index: usize },
    /// `(1, ..., 1) / √p`.
    Uniform,
}

impl VectorSpec {
    pub fn build(&self, p: usize) -> Result<DVector<f64>> {
        match self {
            VectorSpec::Constant(c) => Ok(DVector::from_element(p, *c)),
            VectorSpec::Values(v) => {
                check_len("vector", p, v.len())?;
                Ok(DVector::from_column_slice(v))
            }
            VectorSpec::Named(NamedVector::Basis { index }) => {
                if *index >= p {
                    return Err(Error::invalid(format!("basis index {index} out of range for p = {p}")));
                }
                Ok(DVector::from_fn(p, |i, _| if i == *index { 1.0 } else { 0.0 }))
            }
            VectorSpec::Named(NamedVector::Uniform) => {
                Ok(DVector::from_element(p, 1.0 / (p as f64).sqrt()))
            }
        }
    }
}

fn default_correlation() -> MatrixSpec {
    MatrixSpec::Identity { scale: 1.0 }
}

/// JSON description of a [`DesignDistribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { sigma: MatrixSpec },
    LogNormalCentered {
        mu_tilde: VectorSpec,
        sigma_tilde: MatrixSpec,
    },
    /// Unit-variance log-normal coordinates with log-scale correlation.
    LogNormalStandardized {
        log_variance: f64,
        #[serde(default = "default_correlation")]
        correlation: MatrixSpec,
    },
    GaussianCopulaCentered {
        #[serde(default = "default_correlation")]
        correlation: MatrixSpec,
    },
    SphereUniform { sigma: MatrixSpec },
    BoundedIid { sigma: MatrixSpec, entry: EntryLaw },
    /// Gaussian with the effective covariance of another distribution.
    GaussianMatching { other: Box<DistributionSpec> },
}

impl DistributionSpec {
    pub fn build(&self, p: usize) -> Result<DesignDistribution> {
        match self {
            DistributionSpec::Gaussian { sigma } => DesignDistribution::gaussian(sigma.build(p)?),
            DistributionSpec::LogNormalCentered {
                mu_tilde,
                sigma_tilde,
            } => DesignDistribution::lognormal_centered(mu_tilde.build(p)?, sigma_tilde.build(p)?),
            DistributionSpec::LogNormalStandardized {
                log_variance,
                correlation,
            } => DesignDistribution::lognormal_standardized(*log_variance, correlation.build(p)?),
            DistributionSpec::GaussianCopulaCentered { correlation } => {
                DesignDistribution::gaussian_copula_centered(correlation.build(p)?)
            }
            DistributionSpec::SphereUniform { sigma } => {
                DesignDistribution::sphere_uniform(sigma.build(p)?)
            }
            DistributionSpec::BoundedIid { sigma, entry } => {
                DesignDistribution::bounded_iid(sigma.build(p)?, *entry)
            }
            DistributionSpec::GaussianMatching { other } => {
                DesignDistribution::gaussian(other.build(p)?.sigma_eff().clone())
            }
        }
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
