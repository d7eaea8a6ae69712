//! Monte Carlo experiments for the concentration, invariance and
//! convergence-rate properties of the quadratic forms.
//!
//! Replications run in parallel, each drawing from its own
//! [`StreamKey`](crate::rng::StreamKey), and are reduced in replication
//! order with pairwise summation. A configuration and seed therefore
//! determine every reported number bit for bit, whatever the thread count.

mod bounds;
mod stats;

pub use bounds::{
    generalized_efron_stein_bound, leave_one_out_squared_differences, stieltjes_bound,
    stieltjes_transform, theorem_variance_bound_f,
};
pub use stats::{fit_slope, pairwise_sum, pooled_se, Estimate, SlopeFit};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_gen::{
    sample_design_keyed, ConcentrationConstants, DesignDistribution, DistributionKind,
    DistributionSpec, MatrixSpec, RadialLaw, VectorSpec,
};
use crate::det_equiv::{
    det_equiv_quadform, det_equiv_sandwich, normalize, solve_alpha_gamma, solve_xi, Resolvent,
};
use crate::error::{Error, Result};
use crate::linalg::{Pencil, ShrinkagePlan, SymFactor, SymMatrix};
use crate::rng::StreamKey;

const COVARIANCE_MATCH_TOL: f64 = 1e-8;
const FORM_BOUND_SLACK: f64 = 1e-10;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 10_000;
const CONSTANTS_DRAWS: usize = 4000;
const CONSTANTS_DIRECTIONS: usize = 16;
const ARM_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Which quantity a replication reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Form {
    /// `x^T M^{-1} x`.
    #[serde(rename = "f")]
    Resolvent,
    /// `u^T M^{-1} u`.
    #[serde(rename = "g")]
    Signal,
    /// `u^T M^{-1} x`.
    #[serde(rename = "h")]
    Cross,
    /// `x^T M^{-1} Σ_ε M^{-1} x`.
    #[serde(rename = "F")]
    NoiseResolvent,
    /// `u^T M^{-1} Σ_ε M^{-1} u`.
    #[serde(rename = "G")]
    NoiseSignal,
    /// `u^T M^{-1} Σ_ε M^{-1} x`.
    #[serde(rename = "H")]
    NoiseCross,
    /// `tr((S + A - z Id)^{-1}) / p`.
    #[serde(rename = "stieltjes")]
    Stieltjes,
}

impl Form {
    pub fn needs_noise(self) -> bool {
        matches!(self, Form::NoiseResolvent | Form::NoiseSignal | Form::NoiseCross)
    }
}

/// Pass criteria, fixed before any replication runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Multiplier on the (pooled) standard error.
    pub se_multiplier: f64,
    /// Absolute allowance added to the standard-error band.
    pub absolute: f64,
    /// Allowance relative to the magnitude of the reference value.
    pub relative: f64,
    /// Accepted window for `Var(n) / Var(2n)`.
    pub ratio_low: f64,
    pub ratio_high: f64,
    /// Accepted window for the log-log variance slope.
    pub slope_low: f64,
    pub slope_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            se_multiplier: 3.0,
            absolute: 0.0,
            relative: 0.0,
            ratio_low: 1.4,
            ratio_high: 2.9,
            slope_low: -1.35,
            slope_high: -0.65,
        }
    }
}

impl Thresholds {
    fn within(&self, gap: f64, se: f64, reference: f64) -> bool {
        gap <= self.se_multiplier * se + self.absolute + self.relative * reference.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexPoint> for Complex64 {
    fn from(z: ComplexPoint) -> Self {
        Complex64::new(z.re, z.im)
    }
}

fn default_radial() -> RadialLaw {
    RadialLaw::constant_one()
}

/// JSON description of an experiment. Vectors and matrices are given as
/// specs so that the same configuration can be rebuilt at other `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub form: Form,
    pub dist_x: DistributionSpec,
    #[serde(default)]
    pub dist_y: Option<DistributionSpec>,
    #[serde(default = "default_radial")]
    pub radial: RadialLaw,
    /// Shrinkage target `A`.
    pub target: MatrixSpec,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub z: Option<ComplexPoint>,
    /// Defaults to `(1, ..., 1) / √p`.
    #[serde(default)]
    pub x: Option<VectorSpec>,
    /// Defaults to `(1, ..., 1) / √n`.
    #[serde(default)]
    pub alpha: Option<VectorSpec>,
    /// Noise covariance of the `F, G, H` forms; defaults to `Id` for them.
    #[serde(default)]
    pub sigma_eps: Option<MatrixSpec>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::invalid(format!(
                "replications must be at least 2, got {}",
                self.replications
            )));
        }
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid(format!("n and p must be positive, got n = {}, p = {}", self.n, self.p)));
        }
        if let Some(z) = self.z {
            if !(z.im > 0.0) {
                return Err(Error::invalid(format!("Im(z) must be positive, got {}", z.im)));
            }
        }
        if self.form == Form::Stieltjes && self.z.is_none() {
            return Err(Error::invalid("the stieltjes form needs a point z"));
        }
        self.radial.validate()
    }

    /// Builds every object at dimension `(n, p)`.
    pub fn resolve(&self, n: usize, p: usize) -> Result<ResolvedExperiment> {
        self.validate()?;
        let dist_x = self.dist_x.build(p)?;
        let dist_y = self.dist_y.as_ref().map(|d| d.build(p)).transpose()?;
        let plan = ShrinkagePlan::from_target(self.target.build(p)?)?;
        let uniform = VectorSpec::Named(crate::data_gen::NamedVector::Uniform);
        let x = normalize(&self.x.as_ref().unwrap_or(&uniform).build(p)?, "x")?.0;
        let alpha = normalize(&self.alpha.as_ref().unwrap_or(&uniform).build(n)?, "alpha")?.0;
        let sigma_eps = match (&self.sigma_eps, self.form.needs_noise()) {
            (Some(spec), _) => Some(spec.build(p)?),
            (None, true) => Some(SymMatrix::identity(p)),
            (None, false) => None,
        };
        let target_inv_x = SymFactor::new(plan.target(), "shrinkage target")?.inv_quad_form(&x);
        let noise_gain = match &sigma_eps {
            Some(se) => Some(Pencil::new(se, plan.target())?.values().max()),
            None => None,
        };
        Ok(ResolvedExperiment {
            n,
            p,
            dist_x,
            dist_y,
            plan,
            x,
            alpha,
            sigma_eps,
            target_inv_x,
            noise_gain,
        })
    }

    fn rescaled_p(&self, n: usize) -> usize {
        ((self.p as f64 * n as f64 / self.n as f64).round() as usize).max(1)
    }
}

/// An [`ExperimentConfig`] built at one `(n, p)`.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub n: usize,
    pub p: usize,
    pub dist_x: DesignDistribution,
    pub dist_y: Option<DesignDistribution>,
    pub plan: ShrinkagePlan,
    pub x: DVector<f64>,
    pub alpha: DVector<f64>,
    pub sigma_eps: Option<SymMatrix>,
    /// `x^T A^{-1} x`, the deterministic ceiling of `f`.
    target_inv_x: f64,
    /// Largest eigenvalue of `A^{-1/2} Σ_ε A^{-1/2}`.
    noise_gain: Option<f64>,
}

/// Every form of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormRecord {
    pub replication: usize,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    #[serde(rename = "F")]
    pub big_f: Option<f64>,
    #[serde(rename = "G")]
    pub big_g: Option<f64>,
    #[serde(rename = "H")]
    pub big_h: Option<f64>,
    /// Entry `(0, 1)` of `D X M^{-1} X^T D / n`, when `n ≥ 2`.
    pub projection_01: Option<f64>,
    /// Structural bound of the replication's radial draw, when computed.
    pub theorem_bound: Option<f64>,
    /// Number of deterministic form bounds this replication breaks.
    pub violations: u32,
}

impl FormRecord {
    pub fn value(&self, form: Form) -> Result<f64> {
        let missing = || Error::invalid(format!("form {form:?} was not computed"));
        match form {
            Form::Resolvent => Ok(self.f),
            Form::Signal => Ok(self.g),
            Form::Cross => Ok(self.h),
            Form::NoiseResolvent => self.big_f.ok_or_else(missing),
            Form::NoiseSignal => self.big_g.ok_or_else(missing),
            Form::NoiseCross => self.big_h.ok_or_else(missing),
            Form::Stieltjes => Err(missing()),
        }
    }
}

/// One row of the per-replication table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub arm: String,
    pub n: usize,
    pub p: usize,
    pub replication: usize,
    pub value: f64,
    pub value_im: Option<f64>,
}

/// A report together with the per-replication values behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome<R> {
    pub report: R,
    pub rows: Vec<ReplicationRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Replication,
    Concentration,
    Invariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub n_doubled: usize,
    pub p_doubled: usize,
    pub var_doubled: f64,
    /// `Var(n) / Var(2n)`; absent when either variance vanishes.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub form: Form,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub mean_x: Estimate,
    pub mean_y: Option<Estimate>,
    pub var_x: f64,
    pub gap: Option<f64>,
    pub pooled_se: Option<f64>,
    /// Mean over replications of the structural variance bound, with its
    /// unspecified constant set to one.
    pub theorem_bound: Option<f64>,
    pub det_equiv_value: Option<f64>,
    pub scaling: Option<ScalingCheck>,
    pub thresholds: Thresholds,
    pub bound_violations: usize,
    pub pass: bool,
}

fn arm_seed(seed: u64, arm: u64) -> u64 {
    seed.wrapping_add(arm.wrapping_mul(ARM_STRIDE))
}

/// Concentration constants of a law: exact for Gaussian designs, sampled
/// otherwise.
pub fn constants_for(dist: &DesignDistribution, seed: u64) -> Result<ConcentrationConstants> {
    match dist.kind() {
        DistributionKind::Gaussian { .. } => ConcentrationConstants::gaussian(dist.sigma_eff(), 4),
        _ => ConcentrationConstants::monte_carlo(
            dist,
            &[1, 2, 4],
            CONSTANTS_DRAWS,
            CONSTANTS_DIRECTIONS,
            StreamKey::new(seed).channel(11),
        ),
    }
}

fn count_violations(res: &ResolvedExperiment, v: &crate::det_equiv::FormValues) -> u32 {
    let ceiling = res.target_inv_x * (1.0 + FORM_BOUND_SLACK);
    let mut bad = 0;
    bad += u32::from(!(v.g >= -FORM_BOUND_SLACK && v.g <= 1.0 + FORM_BOUND_SLACK));
    bad += u32::from(!(v.f >= 0.0 && v.f <= ceiling));
    bad += u32::from(v.h.abs() > v.f.max(0.0).sqrt() * (1.0 + FORM_BOUND_SLACK) + FORM_BOUND_SLACK);
    if let (Some(big_f), Some(gain)) = (v.big_f, res.noise_gain) {
        bad += u32::from(big_f > gain * ceiling + FORM_BOUND_SLACK);
    }
    bad
}

/// All forms for `reps` replications of one arm.
pub fn replicate_arm(
    res: &ResolvedExperiment,
    dist: &DesignDistribution,
    radial: &RadialLaw,
    seed: u64,
    reps: usize,
    constants: Option<&ConcentrationConstants>,
) -> Result<Vec<FormRecord>> {
    let mu = DVector::zeros(res.p);
    let t = res.plan.t_floor();
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::new(seed).replication(rep as u64);
            let sample = sample_design_keyed(dist, radial, &mu, res.n, key)?;
            let resolvent = Resolvent::new(&sample, &res.plan)?;
            let v = resolvent.forms(&res.x, &res.alpha, res.sigma_eps.as_ref())?;
            let projection_01 = if res.n >= 2 {
                Some(resolvent.projection_entry(0, 1)?)
            } else {
                None
            };
            let theorem_bound = constants
                .map(|c| theorem_variance_bound_f(sample.radial(), t, c, 2))
                .transpose()?;
            Ok(FormRecord {
                replication: rep,
                f: v.f,
                g: v.g,
                h: v.h,
                big_f: v.big_f,
                big_g: v.big_g,
                big_h: v.big_h,
                projection_01,
                theorem_bound,
                violations: count_violations(res, &v),
            })
        })
        .collect()
}

/// All forms for the `X` arm of `cfg` at its own `(n, p)`.
pub fn replicate_forms(cfg: &ExperimentConfig) -> Result<Vec<FormRecord>> {
    let res = cfg.resolve(cfg.n, cfg.p)?;
    replicate_arm(&res, &res.dist_x, &cfg.radial, cfg.seed, cfg.replications, None)
}

/// Deterministic equivalent of `E f` or `E F` under the `X` law, available
/// when the radial weights are not random.
pub fn det_equiv_value(cfg: &ExperimentConfig, res: &ResolvedExperiment, form: Form) -> Result<Option<f64>> {
    if !matches!(cfg.radial, RadialLaw::Constant { .. } | RadialLaw::Deterministic { .. }) {
        return Ok(None);
    }
    let r = cfg.radial.sample(res.n, StreamKey::new(cfg.seed))?;
    let sigma = res.dist_x.sigma_eff();
    let sol = solve_alpha_gamma(sigma, &res.plan, &r, res.n, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER)?;
    match (form, &res.sigma_eps) {
        (Form::Resolvent, _) => Ok(Some(det_equiv_quadform(&res.x, sigma, &res.plan, &sol)?)),
        (Form::NoiseResolvent, Some(b)) => {
            let xi = solve_xi(sigma, &res.plan, b, &r, res.n, &sol)?;
            Ok(Some(det_equiv_sandwich(&res.x, sigma, &res.plan, b, &sol, xi)?))
        }
        _ => Ok(None),
    }
}

fn values(records: &[FormRecord], form: Form) -> Result<Vec<f64>> {
    records.iter().map(|r| r.value(form)).collect()
}

fn rows(arm: &str, res: &ResolvedExperiment, values: &[f64]) -> Vec<ReplicationRow> {
    values
        .iter()
        .enumerate()
        .map(|(replication, v)| ReplicationRow {
            arm: arm.to_string(),
            n: res.n,
            p: res.p,
            replication,
            value: *v,
            value_im: None,
        })
        .collect()
}

fn single_arm(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Vec<ReplicationRow>)> {
    if cfg.form == Form::Stieltjes {
        return Err(Error::invalid("use the stieltjes comparison for the stieltjes form"));
    }
    let res = cfg.resolve(cfg.n, cfg.p)?;
    let constants = if cfg.form == Form::Resolvent {
        Some(constants_for(&res.dist_x, cfg.seed)?)
    } else {
        None
    };
    let records = replicate_arm(&res, &res.dist_x, &cfg.radial, cfg.seed, cfg.replications, constants.as_ref())?;
    let xs = values(&records, cfg.form)?;
    let mean_x = Estimate::from_values(&xs)?;
    let theorem_bound = match constants {
        Some(_) => {
            let b: Vec<f64> = records.iter().filter_map(|r| r.theorem_bound).collect();
            Some(pairwise_sum(&b) / b.len() as f64)
        }
        None => None,
    };
    let report = ExperimentReport {
        experiment: ExperimentKind::Replication,
        form: cfg.form,
        n: res.n,
        p: res.p,
        replications: cfg.replications,
        mean_x,
        mean_y: None,
        var_x: mean_x.variance,
        gap: None,
        pooled_se: None,
        theorem_bound,
        det_equiv_value: det_equiv_value(cfg, &res, cfg.form)?,
        scaling: None,
        thresholds: cfg.thresholds,
        bound_violations: records.iter().map(|r| r.violations as usize).sum(),
        pass: true,
    };
    Ok((report, rows("x", &res, &xs)))
}

/// Mean and variance of one form, compared with its deterministic
/// equivalent when one is available.
pub fn run_replication_experiment(cfg: &ExperimentConfig) -> Result<Outcome<ExperimentReport>> {
    let (mut report, rows) = single_arm(cfg)?;
    report.pass = report.bound_violations == 0
        && report.det_equiv_value.is_none_or(|d| {
            cfg.thresholds
                .within((report.mean_x.mean - d).abs(), report.mean_x.se, d)
        });
    Ok(Outcome { report, rows })
}

/// Variance at `(n, p)` and at `(2n, 2p)`; the ratio should be close to 2
/// for forms whose variance decays like `1/n`.
pub fn run_concentration_experiment(cfg: &ExperimentConfig) -> Result<Outcome<ExperimentReport>> {
    let (mut report, mut all_rows) = single_arm(cfg)?;
    let doubled = ExperimentConfig {
        n: 2 * cfg.n,
        p: 2 * cfg.p,
        seed: arm_seed(cfg.seed, 2),
        ..cfg.clone()
    };
    let (big, big_rows) = single_arm(&doubled)?;
    all_rows.extend(big_rows.into_iter().map(|r| ReplicationRow {
        arm: "x_doubled".into(),
        ..r
    }));
    let (v1, v2) = (report.var_x, big.var_x);
    let degenerate = v1 == 0.0 || v2 == 0.0;
    let ratio = (!degenerate).then(|| v1 / v2);
    let t = &cfg.thresholds;
    report.experiment = ExperimentKind::Concentration;
    report.scaling = Some(ScalingCheck {
        n_doubled: big.n,
        p_doubled: big.p,
        var_doubled: v2,
        ratio,
        degenerate,
    });
    report.bound_violations += big.bound_violations;
    report.pass = match ratio {
        Some(q) => q >= t.ratio_low && q <= t.ratio_high,
        None => v1 == 0.0 && v2 == 0.0,
    };
    Ok(Outcome {
        report,
        rows: all_rows,
    })
}

fn require_matching_covariance(x: &DesignDistribution, y: &DesignDistribution) -> Result<()> {
    let diff = (x.sigma_eff().as_matrix() - y.sigma_eff().as_matrix()).amax();
    if diff > COVARIANCE_MATCH_TOL {
        return Err(Error::CovarianceMismatch { max_diff: diff });
    }
    Ok(())
}

/// Compares the mean of a form under the two laws of `cfg.dist_x` and
/// `cfg.dist_y`, which must share their covariance.
pub fn run_invariance_experiment(cfg: &ExperimentConfig) -> Result<Outcome<ExperimentReport>> {
    if cfg.form == Form::Stieltjes {
        return Err(Error::invalid("use the stieltjes comparison for the stieltjes form"));
    }
    let res = cfg.resolve(cfg.n, cfg.p)?;
    let dist_y = res
        .dist_y
        .as_ref()
        .ok_or_else(|| Error::invalid("invariance experiments need dist_y"))?;
    require_matching_covariance(&res.dist_x, dist_y)?;
    let rec_x = replicate_arm(&res, &res.dist_x, &cfg.radial, cfg.seed, cfg.replications, None)?;
    let rec_y = replicate_arm(&res, dist_y, &cfg.radial, arm_seed(cfg.seed, 1), cfg.replications, None)?;
    let xs = values(&rec_x, cfg.form)?;
    let ys = values(&rec_y, cfg.form)?;
    let mean_x = Estimate::from_values(&xs)?;
    let mean_y = Estimate::from_values(&ys)?;
    let gap = (mean_x.mean - mean_y.mean).abs();
    let se = pooled_se(&mean_x, &mean_y);
    let mut all_rows = rows("x", &res, &xs);
    all_rows.extend(rows("y", &res, &ys));
    let report = ExperimentReport {
        experiment: ExperimentKind::Invariance,
        form: cfg.form,
        n: res.n,
        p: res.p,
        replications: cfg.replications,
        mean_x,
        mean_y: Some(mean_y),
        var_x: mean_x.variance,
        gap: Some(gap),
        pooled_se: Some(se),
        theorem_bound: None,
        det_equiv_value: det_equiv_value(cfg, &res, cfg.form)?,
        scaling: None,
        thresholds: cfg.thresholds,
        bound_violations: rec_x.iter().chain(&rec_y).map(|r| r.violations as usize).sum(),
        pass: cfg.thresholds.within(gap, se, mean_x.mean),
    };
    Ok(Outcome {
        report,
        rows: all_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub variance: f64,
    pub variance_se: f64,
    pub mean_gap: Option<f64>,
    pub mean_gap_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub form: Form,
    pub rows: Vec<RateRow>,
    /// Slope of `log Var` against `log n`.
    pub variance_slope: Option<SlopeFit>,
    /// Slope of `log |E X - E Y|` against `log n`.
    pub gap_slope: Option<SlopeFit>,
    pub degenerate: bool,
    pub thresholds: Thresholds,
    pub pass: bool,
}

/// Variance (and mean gap, when `dist_y` is set) over a grid of sample
/// sizes, with `p / n` held at its configured value.
pub fn run_rate_experiment(cfg: &ExperimentConfig, n_grid: &[usize]) -> Result<Outcome<RateReport>> {
    if n_grid.len() < 3 {
        return Err(Error::invalid(format!(
            "rate experiments need at least 3 sample sizes, got {}",
            n_grid.len()
        )));
    }
    if cfg.form == Form::Stieltjes {
        return Err(Error::invalid("rate experiments take a quadratic form"));
    }
    let mut table = Vec::with_capacity(n_grid.len());
    let mut all_rows = Vec::new();
    for (k, &n) in n_grid.iter().enumerate() {
        let res = cfg.resolve(n, cfg.rescaled_p(n))?;
        let seed = arm_seed(cfg.seed, 10 + 2 * k as u64);
        let xs = values(&replicate_arm(&res, &res.dist_x, &cfg.radial, seed, cfg.replications, None)?, cfg.form)?;
        let ex = Estimate::from_values(&xs)?;
        all_rows.extend(rows("x", &res, &xs));
        let (mean_gap, mean_gap_se) = match &res.dist_y {
            Some(dy) => {
                require_matching_covariance(&res.dist_x, dy)?;
                let ys = values(
                    &replicate_arm(&res, dy, &cfg.radial, arm_seed(cfg.seed, 11 + 2 * k as u64), cfg.replications, None)?,
                    cfg.form,
                )?;
                let ey = Estimate::from_values(&ys)?;
                all_rows.extend(rows("y", &res, &ys));
                (Some((ex.mean - ey.mean).abs()), Some(pooled_se(&ex, &ey)))
            }
            None => (None, None),
        };
        table.push(RateRow {
            n,
            p: res.p,
            variance: ex.variance,
            variance_se: ex.variance_se(),
            mean_gap,
            mean_gap_se,
        });
    }
    let log_n: Vec<f64> = table.iter().map(|r| (r.n as f64).ln()).collect();
    let degenerate = table.iter().any(|r| r.variance <= 0.0);
    let variance_slope = if degenerate {
        None
    } else {
        let y: Vec<f64> = table.iter().map(|r| r.variance.ln()).collect();
        Some(fit_slope(&log_n, &y)?)
    };
    let gaps: Option<Vec<f64>> = table
        .iter()
        .map(|r| r.mean_gap.filter(|g| *g > 0.0).map(f64::ln))
        .collect();
    let gap_slope = gaps.map(|g| fit_slope(&log_n, &g)).transpose()?;
    let t = cfg.thresholds;
    let pass = match variance_slope {
        Some(fit) => fit.slope >= t.slope_low && fit.slope <= t.slope_high,
        None => table.iter().all(|r| r.variance == 0.0),
    };
    Ok(Outcome {
        report: RateReport {
            form: cfg.form,
            rows: table,
            variance_slope,
            gap_slope,
            degenerate,
            thresholds: t,
            pass,
        },
        rows: all_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub cross_form: Estimate,
    pub projection_01: Estimate,
    pub thresholds: Thresholds,
    pub pass_cross_form: bool,
    pub pass_projection: bool,
    pub pass: bool,
}

/// Means of `h` and of an off-diagonal projection entry, both zero for
/// sign-symmetric designs.
pub fn run_symmetry_experiment(cfg: &ExperimentConfig) -> Result<Outcome<SymmetryReport>> {
    if cfg.n < 2 {
        return Err(Error::invalid("symmetry experiments need n >= 2"));
    }
    let res = cfg.resolve(cfg.n, cfg.p)?;
    let records = replicate_arm(&res, &res.dist_x, &cfg.radial, cfg.seed, cfg.replications, None)?;
    let hs: Vec<f64> = records.iter().map(|r| r.h).collect();
    let ps: Vec<f64> = records.iter().filter_map(|r| r.projection_01).collect();
    let cross_form = Estimate::from_values(&hs)?;
    let projection_01 = Estimate::from_values(&ps)?;
    let t = cfg.thresholds;
    let pass_cross_form = t.within(cross_form.mean.abs(), cross_form.se, 0.0);
    let pass_projection = t.within(projection_01.mean.abs(), projection_01.se, 0.0);
    let mut all_rows = rows("h", &res, &hs);
    all_rows.extend(rows("projection_01", &res, &ps));
    Ok(Outcome {
        report: SymmetryReport {
            n: res.n,
            p: res.p,
            replications: cfg.replications,
            cross_form,
            projection_01,
            thresholds: t,
            pass_cross_form,
            pass_projection,
            pass: pass_cross_form && pass_projection,
        },
        rows: all_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StieltjesReport {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub z: ComplexPoint,
    pub mean_x_re: Estimate,
    pub mean_x_im: Estimate,
    pub mean_y_re: Estimate,
    pub mean_y_im: Estimate,
    /// `|E m_X(z) - E m_Y(z)|`.
    pub gap: f64,
    pub pooled_se: f64,
    /// Mean over replications of the structural bound with `K = 1`.
    pub theorem_bound: f64,
    /// Largest `|m(z)| Im(z)` seen; never above one.
    pub max_scaled_modulus: f64,
    pub modulus_violations: usize,
    pub thresholds: Thresholds,
    pub within_bound: bool,
    pub pass: bool,
}

struct StieltjesDraw {
    m: Complex64,
    bound: f64,
}

fn stieltjes_arm(
    res: &ResolvedExperiment,
    dist: &DesignDistribution,
    radial: &RadialLaw,
    seed: u64,
    reps: usize,
    z: Complex64,
    bq2: (f64, f64),
) -> Result<Vec<StieltjesDraw>> {
    let mu = DVector::zeros(res.p);
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let key = StreamKey::new(seed).replication(rep as u64);
            let sample = sample_design_keyed(dist, radial, &mu, res.n, key)?;
            Ok(StieltjesDraw {
                m: stieltjes_transform(sample.s(), &res.plan, z)?,
                bound: stieltjes_bound(sample.radial(), res.p, z, bq2.0, bq2.1)?,
            })
        })
        .collect()
}

/// Compares `E m_X(z)` and `E m_Y(z)` for the Stieltjes transform of
/// `S + A`.
pub fn stieltjes_compare(cfg: &ExperimentConfig) -> Result<Outcome<StieltjesReport>> {
    let zp = cfg
        .z
        .ok_or_else(|| Error::invalid("stieltjes comparison needs a point z"))?;
    let res = cfg.resolve(cfg.n, cfg.p)?;
    let dist_y = res
        .dist_y
        .as_ref()
        .ok_or_else(|| Error::invalid("stieltjes comparison needs dist_y"))?;
    require_matching_covariance(&res.dist_x, dist_y)?;
    let z = Complex64::from(zp);
    let bq2 = (
        constants_for(&res.dist_x, cfg.seed)?.bq2(1)?,
        constants_for(dist_y, arm_seed(cfg.seed, 1))?.bq2(1)?,
    );
    let dx = stieltjes_arm(&res, &res.dist_x, &cfg.radial, cfg.seed, cfg.replications, z, bq2)?;
    let dy = stieltjes_arm(&res, dist_y, &cfg.radial, arm_seed(cfg.seed, 1), cfg.replications, z, bq2)?;
    let part = |d: &[StieltjesDraw], f: fn(&Complex64) -> f64| -> Result<Estimate> {
        Estimate::from_values(&d.iter().map(|s| f(&s.m)).collect::<Vec<_>>())
    };
    let (xr, xi) = (part(&dx, |m| m.re)?, part(&dx, |m| m.im)?);
    let (yr, yi) = (part(&dy, |m| m.re)?, part(&dy, |m| m.im)?);
    let gap = Complex64::new(xr.mean - yr.mean, xi.mean - yi.mean).norm();
    let se = (xr.se.powi(2) + xi.se.powi(2) + yr.se.powi(2) + yi.se.powi(2)).sqrt();
    let bounds: Vec<f64> = dx.iter().map(|d| d.bound).collect();
    let theorem_bound = pairwise_sum(&bounds) / bounds.len() as f64;
    let scaled: Vec<f64> = dx.iter().chain(&dy).map(|d| d.m.norm() * z.im).collect();
    let max_scaled_modulus = scaled.iter().copied().fold(0.0, f64::max);
    let modulus_violations = scaled.iter().filter(|s| **s > 1.0 + 1e-12).count();
    let t = cfg.thresholds;
    let mut all_rows = Vec::with_capacity(2 * cfg.replications);
    for (arm, draws) in [("x", &dx), ("y", &dy)] {
        all_rows.extend(draws.iter().enumerate().map(|(replication, d)| ReplicationRow {
            arm: arm.into(),
            n: res.n,
            p: res.p,
            replication,
            value: d.m.re,
            value_im: Some(d.m.im),
        }));
    }
    Ok(Outcome {
        report: StieltjesReport {
            n: res.n,
            p: res.p,
            replications: cfg.replications,
            z: zp,
            mean_x_re: xr,
            mean_x_im: xi,
            mean_y_re: yr,
            mean_y_im: yi,
            gap,
            pooled_se: se,
            theorem_bound,
            max_scaled_modulus,
            modulus_violations,
            thresholds: t,
            within_bound: gap <= theorem_bound,
            pass: modulus_violations == 0 && t.within(gap, se, Complex64::new(xr.mean, xi.mean).norm()),
        },
        rows: all_rows,
    })
}
