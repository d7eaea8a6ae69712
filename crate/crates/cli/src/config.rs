//! JSON configurations, one per command. Every optional field has a
//! default, and [`CommandConfig::resolved`] writes those defaults out so
//! the logged configuration is complete.

use std::path::{Path, PathBuf};

use detequiv::data_gen::{DistributionSpec, MatrixSpec, NamedVector, RadialLaw, VectorSpec};
use detequiv::linalg::ShrinkagePlan;
use detequiv::mc_harness::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::Command;

fn default_radial() -> RadialLaw {
    RadialLaw::constant_one()
}

fn default_tol() -> f64 {
    1e-12
}

fn default_estimate_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

fn default_one() -> f64 {
    1.0
}

fn default_unit_list() -> Vec<f64> {
    vec![1.0]
}

fn default_replications() -> usize {
    1
}

fn default_pi1() -> f64 {
    0.5
}

fn uniform() -> VectorSpec {
    VectorSpec::Named(NamedVector::Uniform)
}

/// Shrinkage plan from a target spec and an optional explicit floor.
pub fn build_plan(target: &MatrixSpec, t_floor: Option<f64>, p: usize) -> Result<ShrinkagePlan> {
    let a = target.build(p)?;
    Ok(match t_floor {
        Some(t) => ShrinkagePlan::new(a, t)?,
        None => ShrinkagePlan::from_target(a)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetEquivConfig {
    pub sigma: MatrixSpec,
    pub target: MatrixSpec,
    /// Lower bound `t` with `A ⪰ t Id`; defaults to the smallest eigenvalue.
    #[serde(default)]
    pub t_floor: Option<f64>,
    #[serde(default = "default_radial")]
    pub radial: RadialLaw,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub x: Option<VectorSpec>,
    /// Middle matrix `B` of the sandwich form; skipped when absent.
    #[serde(default)]
    pub sandwich: Option<MatrixSpec>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub dist: DistributionSpec,
    #[serde(default = "default_radial")]
    pub radial: RadialLaw,
    pub target: MatrixSpec,
    #[serde(default)]
    pub t_floor: Option<f64>,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub v: Option<VectorSpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_estimate_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Two groups of observations, one row per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaConfig {
    pub group1: PathBuf,
    pub group2: PathBuf,
    #[serde(default = "default_pi1")]
    pub pi1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdaConfig {
    pub group1: PathBuf,
    pub group2: PathBuf,
    #[serde(default = "default_pi1")]
    pub pi1: f64,
    pub target: MatrixSpec,
    pub w_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub sigma: MatrixSpec,
    pub target: MatrixSpec,
    pub n: usize,
    pub p: usize,
    /// Constraint vectors, each of length `p`; defaults to the all-ones
    /// budget constraint.
    #[serde(default)]
    pub constraints: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_unit_list")]
    pub u: Vec<f64>,
    /// Multipliers applied to the target, one curve point each.
    #[serde(default = "default_unit_list")]
    pub scales: Vec<f64>,
    /// Gaussian replications for a sampled comparison; 0 skips it.
    #[serde(default)]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSource {
    /// CSV design matrix, `n` rows and `p` columns.
    File { path: PathBuf },
    Sampled {
        dist: DistributionSpec,
        #[serde(default = "default_radial")]
        radial: RadialLaw,
        n: usize,
        p: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeConfig {
    pub design: DesignSource,
    pub penalty: MatrixSpec,
    pub lambdas: Vec<f64>,
    pub beta0: VectorSpec,
    /// `Σ_ε = noise_variance · Id`.
    #[serde(default = "default_one")]
    pub noise_variance: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyKind {
    Replication,
    Concentration,
    Invariance,
    Rate,
    Symmetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub experiment: VerifyKind,
    /// Sample sizes of a rate experiment.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(flatten)]
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CommandConfig {
    DetEquiv(DetEquivConfig),
    Estimate(EstimateConfig),
    Lda(LdaConfig),
    Rda(RdaConfig),
    Portfolio(PortfolioConfig),
    Ridge(RidgeConfig),
    Verify(VerifyConfig),
    Stieltjes(ExperimentConfig),
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

impl CommandConfig {
    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(command, &text, path)
    }

    pub fn parse(command: Command, text: &str, path: &Path) -> Result<Self> {
        Ok(match command {
            Command::Detequiv => CommandConfig::DetEquiv(parse(text, path)?),
            Command::Estimate => CommandConfig::Estimate(parse(text, path)?),
            Command::Lda => CommandConfig::Lda(parse(text, path)?),
            Command::Rda => CommandConfig::Rda(parse(text, path)?),
            Command::Portfolio => CommandConfig::Portfolio(parse(text, path)?),
            Command::Ridge => CommandConfig::Ridge(parse(text, path)?),
            Command::Verify => CommandConfig::Verify(parse(text, path)?),
            Command::Stieltjes => CommandConfig::Stieltjes(parse(text, path)?),
        })
    }

    /// Replaces the configured seed, for commands that draw random data.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            CommandConfig::DetEquiv(c) => c.seed = seed,
            CommandConfig::Estimate(c) => c.seed = seed,
            CommandConfig::Portfolio(c) => c.seed = seed,
            CommandConfig::Ridge(c) => c.seed = seed,
            CommandConfig::Verify(c) => c.config.seed = seed,
            CommandConfig::Stieltjes(c) => c.seed = seed,
            CommandConfig::Lda(_) | CommandConfig::Rda(_) => {}
        }
        self
    }

    /// The configuration with every implicit default made explicit.
    pub fn resolved(mut self) -> Self {
        match &mut self {
            CommandConfig::DetEquiv(c) => {
                c.x.get_or_insert_with(uniform);
            }
            CommandConfig::Estimate(c) => {
                c.v.get_or_insert_with(uniform);
            }
            CommandConfig::Portfolio(c) => {
                let p = c.p;
                c.constraints.get_or_insert_with(|| vec![vec![1.0; p]]);
            }
            CommandConfig::Verify(c) => fill_experiment(&mut c.config),
            CommandConfig::Stieltjes(c) => fill_experiment(c),
            CommandConfig::Lda(_) | CommandConfig::Rda(_) | CommandConfig::Ridge(_) => {}
        }
        self
    }
}

fn fill_experiment(c: &mut ExperimentConfig) {
    c.x.get_or_insert_with(uniform);
    c.alpha.get_or_insert_with(uniform);
    if c.form.needs_noise() {
        c.sigma_eps
            .get_or_insert(MatrixSpec::Identity { scale: 1.0 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled() {
        let text =
            r#"{"sigma": {"kind": "identity"}, "target": {"kind": "identity"}, "n": 10, "p": 3}"#;
        let cfg = CommandConfig::parse(Command::Detequiv, text, Path::new("inline")).unwrap();
        let CommandConfig::DetEquiv(c) = cfg.resolved() else {
            panic!("wrong variant");
        };
        assert_eq!(c.x, Some(uniform()));
        assert_eq!(c.tol, 1e-12);
        assert_eq!(c.radial, RadialLaw::constant_one());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"group1": "a.csv", "group2": "b.csv", "prior": 0.3}"#;
        let err = CommandConfig::parse(Command::Lda, text, Path::new("inline")).unwrap_err();
        assert!(matches!(err, CliError::Config { .. }));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn seed_override_reaches_experiments() {
        let text = r#"{"experiment": "replication", "form": "f", "dist_x": {"kind": "gaussian", "sigma": {"kind": "identity"}},
            "target": {"kind": "identity"}, "n": 10, "p": 3, "replications": 4}"#;
        let cfg = CommandConfig::parse(Command::Verify, text, Path::new("inline"))
            .unwrap()
            .with_seed(42);
        let CommandConfig::Verify(v) = cfg else {
            panic!("wrong variant");
        };
        assert_eq!(v.config.seed, 42);
    }
}
