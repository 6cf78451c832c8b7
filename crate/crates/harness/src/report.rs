//! Deterministic per-scenario report documents.

use serde::Serialize;

use crate::run::RunResult;

#[derive(Debug, Serialize)]
pub struct ReportDoc {
    pub id: String,
    pub passed: bool,
    pub nonlinearity: String,
    pub mass: f64,
    pub nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub richardson_max_relative_deviation: Option<f64>,
    pub truncation_error_bound: f64,
    pub warnings: Vec<String>,
    pub verdicts: VerdictDoc,
    #[serde(rename = "check")]
    pub checks: Vec<CheckDoc>,
    #[serde(rename = "checkpoint")]
    pub checkpoints: Vec<CheckpointDoc>,
}

#[derive(Debug, Serialize)]
pub struct VerdictDoc {
    pub r1: String,
    pub r2: String,
    pub r3: String,
    pub tol_r1: f64,
    pub tol_r2: f64,
    pub tol_r3: f64,
}

#[derive(Debug, Serialize)]
pub struct CheckDoc {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct CheckpointDoc {
    pub t: f64,
    pub x: f64,
    pub dx: f64,
    pub r1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    pub r3: f64,
    pub dx_over_x: f64,
    pub log_x_over_t: f64,
}

impl ReportDoc {
    /// Everything in a run except its wall time, which would break byte
    /// equality between runs.
    pub fn new(r: &RunResult) -> Self {
        let rep = &r.report;
        Self {
            id: r.id.clone(),
            passed: r.passed(),
            nonlinearity: r.solution.meta.nonlinearity_id.clone(),
            mass: r.mass,
            nodes: r.solution.len(),
            richardson_max_relative_deviation: r.richardson,
            truncation_error_bound: r.solution.meta.truncation_error_bound,
            warnings: r.solution.meta.warnings.clone(),
            verdicts: VerdictDoc {
                r1: rep.verdicts.r1.to_string(),
                r2: rep.verdicts.r2.to_string(),
                r3: rep.verdicts.r3.to_string(),
                tol_r1: rep.tolerances.r1,
                tol_r2: rep.tolerances.r2,
                tol_r3: rep.tolerances.r3,
            },
            checks: r
                .checks
                .iter()
                .map(|c| CheckDoc { name: c.name.clone(), passed: c.passed, detail: c.detail.clone() })
                .collect(),
            checkpoints: (0..rep.checkpoints.len())
                .map(|i| CheckpointDoc {
                    t: rep.checkpoints[i],
                    x: rep.x[i],
                    dx: rep.dx[i],
                    r1: rep.r1[i],
                    r2: rep.r2[i],
                    r3: rep.r3[i],
                    dx_over_x: rep.dx_over_x[i],
                    log_x_over_t: rep.log_x_over_t[i],
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reports serialize")
    }
}
