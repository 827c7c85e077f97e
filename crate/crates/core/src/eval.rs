//! Regression metrics and cross-fold aggregation.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{STATE_DIM, VARIABLE_NAMES};

pub const ENERGY_NAME: &str = "energy_consumption";

fn check_pair(metric: &'static str, truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::dimension(format!("{metric} inputs"), truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric {
            metric,
            reason: "no values".into(),
        });
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair("rmse", truth, pred)?;
    let sum: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sum / truth.len() as f64).sqrt())
}

pub fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair("r_squared", truth, pred)?;
    if truth.len() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "r_squared",
            reason: "needs at least two values".into(),
        });
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "r_squared",
            reason: "true values are constant".into(),
        });
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// RMSE normalised by the range of the true values.
pub fn nrmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let e = rmse(truth, pred)?;
    let (lo, hi) = extremes(truth);
    if !(hi > lo) {
        return Err(Error::UndefinedMetric {
            metric: "nrmse",
            reason: "true values have zero range".into(),
        });
    }
    Ok(e / (hi - lo))
}

fn extremes(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Metrics for one variable. Undefined metrics are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub variable: String,
    pub r_squared: Option<f64>,
    pub rmse: f64,
    pub nrmse: Option<f64>,
    pub y_min: f64,
    pub y_max: f64,
}

impl VariableMetrics {
    pub fn compute(variable: &str, truth: &[f64], pred: &[f64]) -> Result<Self> {
        let rmse = rmse(truth, pred)?;
        let defined = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric { .. }) => Ok(None),
            Err(e) => Err(e),
        };
        let (y_min, y_max) = extremes(truth);
        Ok(VariableMetrics {
            variable: variable.to_string(),
            r_squared: defined(r_squared(truth, pred))?,
            rmse,
            nrmse: defined(nrmse(truth, pred))?,
            y_min,
            y_max,
        })
    }
}

/// Twelve state variables in table order, then energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variables: Vec<VariableMetrics>,
}

impl MetricsReport {
    /// `true_states` and `pred_states` are `n x 12` in physical units.
    pub fn compute(
        true_states: ArrayView2<f64>,
        pred_states: ArrayView2<f64>,
        measured_energy: &[f64],
        predicted_energy: &[f64],
    ) -> Result<Self> {
        if true_states.dim() != pred_states.dim() || true_states.ncols() != STATE_DIM {
            return Err(Error::dimension(
                "metrics inputs",
                format!("{:?}", true_states.dim()),
                format!("{:?}", pred_states.dim()),
            ));
        }
        let mut variables = Vec::with_capacity(STATE_DIM + 1);
        for (j, name) in VARIABLE_NAMES.iter().enumerate() {
            let t = true_states.column(j).to_vec();
            let p = pred_states.column(j).to_vec();
            variables.push(VariableMetrics::compute(name, &t, &p)?);
        }
        variables.push(VariableMetrics::compute(ENERGY_NAME, measured_energy, predicted_energy)?);
        Ok(MetricsReport { variables })
    }

    pub fn get(&self, variable: &str) -> Option<&VariableMetrics> {
        self.variables.iter().find(|v| v.variable == variable)
    }

    pub fn energy(&self) -> Option<&VariableMetrics> {
        self.get(ENERGY_NAME)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation. `None` for no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variable: String,
    pub r_squared: Option<MeanStd>,
    pub rmse: MeanStd,
    pub nrmse: Option<MeanStd>,
    /// Folds where R² or NRMSE was undefined.
    pub undefined_folds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub folds: usize,
    pub rows: Vec<AggregateRow>,
}

pub fn aggregate_folds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.len() < 2 {
        return Err(Error::Usage(format!(
            "aggregation needs at least 2 fold reports, got {}",
            reports.len()
        )));
    }
    let names: Vec<&str> = reports[0].variables.iter().map(|v| v.variable.as_str()).collect();
    for (i, r) in reports.iter().enumerate() {
        let these: Vec<&str> = r.variables.iter().map(|v| v.variable.as_str()).collect();
        if these != names {
            return Err(Error::dimension(
                format!("variables of fold report {i}"),
                names.join(","),
                these.join(","),
            ));
        }
    }
    let rows = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let cells: Vec<&VariableMetrics> = reports.iter().map(|r| &r.variables[j]).collect();
            let r2: Vec<f64> = cells.iter().filter_map(|c| c.r_squared).collect();
            let nr: Vec<f64> = cells.iter().filter_map(|c| c.nrmse).collect();
            let rm: Vec<f64> = cells.iter().map(|c| c.rmse).collect();
            AggregateRow {
                variable: name.to_string(),
                undefined_folds: (cells.len() - r2.len()).max(cells.len() - nr.len()),
                r_squared: MeanStd::of(&r2),
                rmse: MeanStd::of(&rm).expect("at least two folds"),
                nrmse: MeanStd::of(&nr),
            }
        })
        .collect();
    Ok(AggregateReport {
        folds: reports.len(),
        rows,
    })
}

fn cell(v: Option<MeanStd>, precision: usize) -> String {
    match v {
        Some(m) => format!("{:.p$} ± {:.p$}", m.mean, m.std, p = precision),
        None => "undefined".to_string(),
    }
}

impl AggregateReport {
    pub fn get(&self, variable: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.variable == variable)
    }

    /// Fixed-width table: Variable, R², RMSE, NRMSE.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>18} {:>22} {:>18}", "Variable", "R²", "RMSE", "NRMSE");
        let _ = writeln!(out, "{}", "-".repeat(83));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<22} {:>18} {:>22} {:>18}",
                r.variable,
                cell(r.r_squared, 3),
                cell(Some(r.rmse), 3),
                cell(r.nrmse, 3)
            );
        }
        let _ = writeln!(out, "({} folds, population std)", self.folds);
        out
    }
}
