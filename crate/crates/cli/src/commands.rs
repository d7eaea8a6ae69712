//! Command bodies: each turns a configuration into a report and a table of
//! per-row results.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use detequiv::data_gen::{sample_design_keyed, DesignDistribution, RadialLaw};
use detequiv::det_equiv::{
    det_equiv_quadform, det_equiv_sandwich, normalize, solve_alpha_gamma, solve_xi,
};
use detequiv::estimators::{
    estimate_population_quadform, lda_corrections, plugin_portfolio, portfolio_risks, rda_sweep,
    ridge_risk, LdaCorrections, LdaStats, PortfolioProblem, RdaRow, RidgeProblem,
};
use detequiv::linalg::{read_matrix_csv, SymFactor, SymMatrix};
use detequiv::mc_harness::{
    run_concentration_experiment, run_invariance_experiment, run_rate_experiment,
    run_replication_experiment, run_symmetry_experiment, stieltjes_compare, Estimate,
    ExperimentConfig, ExperimentReport, RateReport, ReplicationRow, StieltjesReport,
    SymmetryReport,
};
use detequiv::rng::StreamKey;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    build_plan, CommandConfig, DesignSource, DetEquivConfig, EstimateConfig, LdaConfig,
    PortfolioConfig, RdaConfig, RidgeConfig, VerifyConfig, VerifyKind,
};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetEquivReport {
    pub alpha_bar: f64,
    pub gamma_bar: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Equivalent of `x^T (S + A)^{-1} x`.
    pub quad_form: f64,
    pub xi_bar: Option<f64>,
    /// Equivalent of `x^T (S + A)^{-1} B (S + A)^{-1} x`.
    pub sandwich: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub replication: usize,
    pub value: f64,
    pub t0: f64,
    pub gamma_hat: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mean: f64,
    /// Present with two or more replications.
    pub se: Option<f64>,
    /// `v^T (E[R²] Σ + A)^{-1} v` for the configured law and unit `v`.
    pub population_value: f64,
    pub relative_error: f64,
    pub rows: Vec<EstimateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaReport {
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
    pub rho: f64,
    #[serde(flatten)]
    pub corrections: LdaCorrections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdaReport {
    pub n1: usize,
    pub n2: usize,
    pub p: usize,
    pub rows: Vec<RdaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioRow {
    pub scale: f64,
    pub naive: f64,
    pub realized: f64,
    pub optimum: f64,
    pub sampled_mean: Option<f64>,
    pub sampled_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioReport {
    pub rows: Vec<PortfolioRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRow {
    pub lambda: f64,
    pub bias2: f64,
    pub variance: f64,
    pub total: f64,
    pub variance_identity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeReport {
    pub n: usize,
    pub p: usize,
    pub rows: Vec<RidgeRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VerifyReport {
    Single(ExperimentReport),
    Rate(RateReport),
    Symmetry(SymmetryReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "result", rename_all = "snake_case")]
pub enum CommandReport {
    Detequiv(DetEquivReport),
    Estimate(EstimateReport),
    Lda(LdaReport),
    Rda(RdaReport),
    Portfolio(PortfolioReport),
    Ridge(RidgeReport),
    Verify(VerifyReport),
    Stieltjes(StieltjesReport),
}

impl CommandReport {
    pub fn name(&self) -> &'static str {
        match self {
            CommandReport::Detequiv(_) => "detequiv",
            CommandReport::Estimate(_) => "estimate",
            CommandReport::Lda(_) => "lda",
            CommandReport::Rda(_) => "rda",
            CommandReport::Portfolio(_) => "portfolio",
            CommandReport::Ridge(_) => "ridge",
            CommandReport::Verify(_) => "verify",
            CommandReport::Stieltjes(_) => "stieltjes",
        }
    }
}

/// Tabular output; cells are already formatted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn cell(v: f64) -> String {
    v.to_string()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

fn key_values(pairs: &[(&str, f64)]) -> Table {
    Table {
        header: vec!["quantity", "value"],
        rows: pairs
            .iter()
            .map(|(k, v)| vec![k.to_string(), cell(*v)])
            .collect(),
    }
}

pub fn execute(config: &CommandConfig) -> Result<(CommandReport, Table)> {
    match config {
        CommandConfig::DetEquiv(c) => det_equiv(c),
        CommandConfig::Estimate(c) => estimate(c),
        CommandConfig::Lda(c) => lda(c),
        CommandConfig::Rda(c) => rda(c),
        CommandConfig::Portfolio(c) => portfolio(c),
        CommandConfig::Ridge(c) => ridge(c),
        CommandConfig::Verify(c) => verify(c),
        CommandConfig::Stieltjes(c) => stieltjes(c),
    }
}

fn det_equiv(c: &DetEquivConfig) -> Result<(CommandReport, Table)> {
    let sigma = c.sigma.build(c.p)?;
    let plan = build_plan(&c.target, c.t_floor, c.p)?;
    let r = c.radial.sample(c.n, StreamKey::new(c.seed))?;
    let x =
        c.x.as_ref()
            .ok_or_else(|| CliError::Invalid("x is unresolved".into()))?
            .build(c.p)?;
    let sol = solve_alpha_gamma(&sigma, &plan, &r, c.n, c.tol, c.max_iter)?;
    let quad_form = det_equiv_quadform(&x, &sigma, &plan, &sol)?;
    let (xi_bar, sandwich) = match &c.sandwich {
        Some(spec) => {
            let b = spec.build(c.p)?;
            let xi = solve_xi(&sigma, &plan, &b, &r, c.n, &sol)?;
            (
                Some(xi),
                Some(det_equiv_sandwich(&x, &sigma, &plan, &b, &sol, xi)?),
            )
        }
        None => (None, None),
    };
    let report = DetEquivReport {
        alpha_bar: sol.alpha_bar,
        gamma_bar: sol.gamma_bar,
        residual: sol.residual,
        iterations: sol.iterations,
        quad_form,
        xi_bar,
        sandwich,
    };
    let mut pairs = vec![
        ("alpha_bar", report.alpha_bar),
        ("gamma_bar", report.gamma_bar),
        ("residual", report.residual),
        ("quad_form", report.quad_form),
    ];
    if let (Some(xi), Some(s)) = (xi_bar, sandwich) {
        pairs.extend([("xi_bar", xi), ("sandwich", s)]);
    }
    Ok((CommandReport::Detequiv(report), key_values(&pairs)))
}

fn estimate(c: &EstimateConfig) -> Result<(CommandReport, Table)> {
    if c.replications == 0 {
        return Err(CliError::Invalid("replications must be at least 1".into()));
    }
    let dist = c.dist.build(c.p)?;
    let plan = build_plan(&c.target, c.t_floor, c.p)?;
    let v =
        c.v.as_ref()
            .ok_or_else(|| CliError::Invalid("v is unresolved".into()))?
            .build(c.p)?;
    let (v, _) = normalize(&v, "v")?;
    let mu = DVector::zeros(c.p);
    let rows = (0..c.replications)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::new(c.seed).replication(rep as u64);
            let sample = sample_design_keyed(&dist, &c.radial, &mu, c.n, key)?;
            let est = estimate_population_quadform(&v, &sample, &plan, c.tol)?;
            Ok(EstimateRow {
                replication: rep,
                value: est.value,
                t0: est.t0,
                gamma_hat: est.gamma_hat,
                evaluations: est.evaluations,
            })
        })
        .collect::<detequiv::Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (mean, se) = if values.len() >= 2 {
        let e = Estimate::from_values(&values)?;
        (e.mean, Some(e.se))
    } else {
        (values[0], None)
    };
    let population = dist
        .sigma_eff()
        .scale(c.radial.second_moment())
        .add(plan.target())?;
    let population_value =
        SymFactor::new(&population, "population covariance plus target")?.inv_quad_form(&v);
    let table = Table {
        header: vec!["replication", "value", "t0", "gamma_hat", "evaluations"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.replication.to_string(),
                    cell(r.value),
                    cell(r.t0),
                    cell(r.gamma_hat),
                    r.evaluations.to_string(),
                ]
            })
            .collect(),
    };
    let report = EstimateReport {
        mean,
        se,
        population_value,
        relative_error: mean / population_value - 1.0,
        rows,
    };
    Ok((CommandReport::Estimate(report), table))
}

fn read_csv(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_matrix_csv(BufReader::new(file))?)
}

fn lda_stats(group1: &Path, group2: &Path, pi1: f64) -> Result<LdaStats> {
    Ok(LdaStats::from_observations(
        &read_csv(group1)?,
        &read_csv(group2)?,
        pi1,
    )?)
}

fn lda(c: &LdaConfig) -> Result<(CommandReport, Table)> {
    let stats = lda_stats(&c.group1, &c.group2, c.pi1)?;
    let corrections = lda_corrections(&stats)?;
    let table = key_values(&[
        ("quad_form", corrections.quad_form),
        ("maha_hat", corrections.maha_hat),
        ("sigma2_d", corrections.sigma2_d),
        ("mu1_d", corrections.mu1_d),
        ("mu2_d", corrections.mu2_d),
        ("t_star", corrections.t_star),
        ("t_naive", corrections.t_naive),
    ]);
    let report = LdaReport {
        n1: stats.n1(),
        n2: stats.n2(),
        p: stats.p(),
        rho: stats.rho(),
        corrections,
    };
    Ok((CommandReport::Lda(report), table))
}

fn rda(c: &RdaConfig) -> Result<(CommandReport, Table)> {
    let stats = lda_stats(&c.group1, &c.group2, c.pi1)?;
    let target = c.target.build(stats.p())?;
    let rows = rda_sweep(&stats, &target, &c.w_grid)?;
    let table = Table {
        header: vec![
            "w",
            "t_corrected",
            "t_naive",
            "mu1_d",
            "mu2_d",
            "sigma2_d",
            "predicted_error",
            "predicted_error_naive",
            "plugin_error",
        ],
        rows: rows
            .iter()
            .map(|r| {
                [
                    r.w,
                    r.t_corrected,
                    r.t_naive,
                    r.mu1_d,
                    r.mu2_d,
                    r.sigma2_d,
                    r.predicted_error,
                    r.predicted_error_naive,
                    r.plugin_error,
                ]
                .map(cell)
                .to_vec()
            })
            .collect(),
    };
    let report = RdaReport {
        n1: stats.n1(),
        n2: stats.n2(),
        p: stats.p(),
        rows,
    };
    Ok((CommandReport::Rda(report), table))
}

fn portfolio(c: &PortfolioConfig) -> Result<(CommandReport, Table)> {
    let sigma = c.sigma.build(c.p)?;
    let base = build_plan(&c.target, None, c.p)?;
    let columns = c
        .constraints
        .as_ref()
        .ok_or_else(|| CliError::Invalid("constraints are unresolved".into()))?;
    if let Some(bad) = columns.iter().find(|col| col.len() != c.p) {
        return Err(CliError::Invalid(format!(
            "constraint vectors must have length p = {}, got {}",
            c.p,
            bad.len()
        )));
    }
    let v = DMatrix::from_fn(c.p, columns.len(), |i, j| columns[j][i]);
    let u = DVector::from_vec(c.u.clone());
    let r = DVector::from_element(c.n, 1.0);
    let dist = DesignDistribution::gaussian(sigma.clone())?;
    let mu = DVector::zeros(c.p);
    let samples: Vec<SymMatrix> = (0..c.replications)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::new(c.seed).replication(rep as u64);
            Ok(
                sample_design_keyed(&dist, &RadialLaw::constant_one(), &mu, c.n, key)?
                    .s()
                    .clone(),
            )
        })
        .collect::<detequiv::Result<_>>()?;

    let mut rows = Vec::with_capacity(c.scales.len());
    for &scale in &c.scales {
        let plan = base.scaled(scale)?;
        let sol = solve_alpha_gamma(&sigma, &plan, &r, c.n, 1e-12, 10_000)?;
        let xi = solve_xi(&sigma, &plan, &sigma, &r, c.n, &sol)?;
        let prob = PortfolioProblem::new(v.clone(), u.clone(), sigma.clone(), plan.clone())?;
        let risks = portfolio_risks(&prob, &sol, xi)?;
        let sampled = samples
            .par_iter()
            .map(|s| Ok(sigma.quad_form(&plugin_portfolio(s, &plan, &v, &u)?.weights)))
            .collect::<detequiv::Result<Vec<f64>>>()?;
        let (sampled_mean, sampled_se) = match sampled.len() {
            0 => (None, None),
            1 => (Some(sampled[0]), None),
            _ => {
                let e = Estimate::from_values(&sampled)?;
                (Some(e.mean), Some(e.se))
            }
        };
        rows.push(PortfolioRow {
            scale,
            naive: risks.w_hat_risk_naive,
            realized: risks.w_hat_risk_realized,
            optimum: risks.w_opt_risk,
            sampled_mean,
            sampled_se,
        });
    }
    let table = Table {
        header: vec![
            "scale",
            "naive",
            "realized",
            "optimum",
            "sampled_mean",
            "sampled_se",
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    cell(r.scale),
                    cell(r.naive),
                    cell(r.realized),
                    cell(r.optimum),
                    opt_cell(r.sampled_mean),
                    opt_cell(r.sampled_se),
                ]
            })
            .collect(),
    };
    Ok((CommandReport::Portfolio(PortfolioReport { rows }), table))
}

fn ridge(c: &RidgeConfig) -> Result<(CommandReport, Table)> {
    let x = match &c.design {
        DesignSource::File { path } => read_csv(path)?,
        DesignSource::Sampled { dist, radial, n, p } => {
            let dist = dist.build(*p)?;
            sample_design_keyed(
                &dist,
                radial,
                &DVector::zeros(*p),
                *n,
                StreamKey::new(c.seed),
            )?
            .observations()
        }
    };
    let (n, p) = x.shape();
    let penalty = c.penalty.build(p)?;
    let beta0 = c.beta0.build(p)?;
    let noise = SymMatrix::scaled_identity(n, c.noise_variance);
    let mut rows = Vec::with_capacity(c.lambdas.len());
    for &lambda in &c.lambdas {
        let prob = RidgeProblem::new(
            x.clone(),
            penalty.clone(),
            lambda,
            beta0.clone(),
            noise.clone(),
        )?;
        let risk = ridge_risk(&prob)?;
        rows.push(RidgeRow {
            lambda,
            bias2: risk.bias2,
            variance: risk.variance,
            total: risk.total,
            variance_identity: risk.variance_identity,
        });
    }
    let table = Table {
        header: vec!["lambda", "bias2", "variance", "total"],
        rows: rows
            .iter()
            .map(|r| [r.lambda, r.bias2, r.variance, r.total].map(cell).to_vec())
            .collect(),
    };
    Ok((CommandReport::Ridge(RidgeReport { n, p, rows }), table))
}

fn replication_table(rows: &[ReplicationRow]) -> Table {
    Table {
        header: vec!["arm", "n", "p", "replication", "value", "value_im"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.arm.clone(),
                    r.n.to_string(),
                    r.p.to_string(),
                    r.replication.to_string(),
                    cell(r.value),
                    opt_cell(r.value_im),
                ]
            })
            .collect(),
    }
}

fn verify(c: &VerifyConfig) -> Result<(CommandReport, Table)> {
    let cfg = &c.config;
    let (report, rows) = match c.experiment {
        VerifyKind::Replication => {
            let out = run_replication_experiment(cfg)?;
            (VerifyReport::Single(out.report), out.rows)
        }
        VerifyKind::Concentration => {
            let out = run_concentration_experiment(cfg)?;
            (VerifyReport::Single(out.report), out.rows)
        }
        VerifyKind::Invariance => {
            let out = run_invariance_experiment(cfg)?;
            (VerifyReport::Single(out.report), out.rows)
        }
        VerifyKind::Rate => {
            let out = run_rate_experiment(cfg, &c.n_grid)?;
            (VerifyReport::Rate(out.report), out.rows)
        }
        VerifyKind::Symmetry => {
            let out = run_symmetry_experiment(cfg)?;
            (VerifyReport::Symmetry(out.report), out.rows)
        }
    };
    Ok((CommandReport::Verify(report), replication_table(&rows)))
}

fn stieltjes(c: &ExperimentConfig) -> Result<(CommandReport, Table)> {
    let out = stieltjes_compare(c)?;
    Ok((
        CommandReport::Stieltjes(out.report),
        replication_table(&out.rows),
    ))
}
