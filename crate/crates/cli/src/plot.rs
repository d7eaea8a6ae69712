//! Tidy plot data with columns `x, y, y_err, series`.

use std::fmt;
use std::str::FromStr;

use detequiv::mc_harness::{ExperimentKind, ExperimentReport, Form, RateReport};
use serde::{Deserialize, Serialize};

use crate::commands::{CommandReport, VerifyReport};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Replication variance against `n` (rate and concentration runs).
    VarianceVsN,
    /// Mean gap between the two laws against `n`.
    InvarianceGap,
    /// Predicted RDA error against the weight `w`.
    RdaCurve,
    /// Risk against the shrinkage scale (portfolio) or `λ` (ridge).
    RiskCurve,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::VarianceVsN,
        PlotKind::InvarianceGap,
        PlotKind::RdaCurve,
        PlotKind::RiskCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::VarianceVsN => "variance_vs_n",
            PlotKind::InvarianceGap => "invariance_gap",
            PlotKind::RdaCurve => "rda_curve",
            PlotKind::RiskCurve => "risk_curve",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Invalid(format!("unknown plot kind {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub x: f64,
    pub y: f64,
    pub y_err: Option<f64>,
    pub series: String,
}

impl PlotRow {
    fn new(x: f64, y: f64, y_err: Option<f64>, series: impl Into<String>) -> Self {
        Self {
            x,
            y,
            y_err,
            series: series.into(),
        }
    }
}

pub const PLOT_HEADER: &str = "x,y,y_err,series";

fn form_name(form: Form) -> String {
    serde_json::to_value(form)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn rate_variance(r: &RateReport) -> Vec<PlotRow> {
    let series = form_name(r.form);
    r.rows
        .iter()
        .map(|row| {
            PlotRow::new(
                row.n as f64,
                row.variance,
                Some(row.variance_se),
                series.clone(),
            )
        })
        .collect()
}

fn rate_gap(r: &RateReport) -> Vec<PlotRow> {
    let series = form_name(r.form);
    r.rows
        .iter()
        .filter_map(|row| {
            row.mean_gap
                .map(|g| PlotRow::new(row.n as f64, g, row.mean_gap_se, series.clone()))
        })
        .collect()
}

fn concentration_variance(r: &ExperimentReport) -> Option<Vec<PlotRow>> {
    let scaling = r.scaling?;
    let series = form_name(r.form);
    let dof = r.replications.saturating_sub(1).max(1) as f64;
    let se = |v: f64| v * (2.0 / dof).sqrt();
    Some(vec![
        PlotRow::new(r.n as f64, r.var_x, Some(se(r.var_x)), series.clone()),
        PlotRow::new(
            scaling.n_doubled as f64,
            scaling.var_doubled,
            Some(se(scaling.var_doubled)),
            series,
        ),
    ])
}

/// Rows of `kind` for `report`, or an error when the kind does not apply.
pub fn plot_rows(report: &CommandReport, kind: PlotKind) -> Result<Vec<PlotRow>> {
    let rows = match (kind, report) {
        (PlotKind::VarianceVsN, CommandReport::Verify(VerifyReport::Rate(r))) => {
            Some(rate_variance(r))
        }
        (PlotKind::VarianceVsN, CommandReport::Verify(VerifyReport::Single(r)))
            if r.experiment == ExperimentKind::Concentration =>
        {
            concentration_variance(r)
        }
        (PlotKind::InvarianceGap, CommandReport::Verify(VerifyReport::Rate(r))) => {
            Some(rate_gap(r))
        }
        (PlotKind::InvarianceGap, CommandReport::Verify(VerifyReport::Single(r)))
            if r.experiment == ExperimentKind::Invariance =>
        {
            r.gap
                .map(|g| vec![PlotRow::new(r.n as f64, g, r.pooled_se, form_name(r.form))])
        }
        (PlotKind::RdaCurve, CommandReport::Rda(r)) => Some(
            r.rows
                .iter()
                .map(|row| PlotRow::new(row.w, row.predicted_error, None, "predicted"))
                .collect(),
        ),
        (PlotKind::RiskCurve, CommandReport::Portfolio(r)) => {
            let mut out = Vec::new();
            for (series, pick) in [
                (
                    "naive",
                    (|row| row.naive) as fn(&crate::commands::PortfolioRow) -> f64,
                ),
                ("realized", |row| row.realized),
                ("optimum", |row| row.optimum),
            ] {
                out.extend(
                    r.rows
                        .iter()
                        .map(|row| PlotRow::new(row.scale, pick(row), None, series)),
                );
            }
            out.extend(r.rows.iter().filter_map(|row| {
                row.sampled_mean
                    .map(|m| PlotRow::new(row.scale, m, row.sampled_se, "sampled"))
            }));
            Some(out)
        }
        (PlotKind::RiskCurve, CommandReport::Ridge(r)) => {
            let mut out = Vec::new();
            for (series, pick) in [
                (
                    "bias2",
                    (|row| row.bias2) as fn(&crate::commands::RidgeRow) -> f64,
                ),
                ("variance", |row| row.variance),
                ("total", |row| row.total),
            ] {
                out.extend(
                    r.rows
                        .iter()
                        .map(|row| PlotRow::new(row.lambda, pick(row), None, series)),
                );
            }
            Some(out)
        }
        _ => None,
    };
    rows.ok_or(CliError::PlotKindMismatch {
        kind: kind.name(),
        report: report.name(),
    })
}

/// Kinds that apply to `report`. The invariance plot is dropped when the
/// report carries no gaps, as for a rate run without a second law.
pub fn applicable_kinds(report: &CommandReport) -> Vec<PlotKind> {
    PlotKind::ALL
        .into_iter()
        .filter(|k| match plot_rows(report, *k) {
            Ok(rows) => *k != PlotKind::InvarianceGap || !rows.is_empty(),
            Err(_) => false,
        })
        .collect()
}

/// CSV body (header included) for `rows`.
pub fn plot_csv(rows: &[PlotRow]) -> String {
    let mut out = String::from(PLOT_HEADER);
    out.push('\n');
    for r in rows {
        let err = r.y_err.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.x, r.y, err, r.series));
    }
    out
}
