//! Running a whole catalog in parallel and writing its artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use sublinear_fde::asymptotics::{mass_invariance_check, write_report_csv, write_solution_csv};

use crate::catalog::Catalog;
use crate::error::{HarnessError, Result};
use crate::report::ReportDoc;
use crate::run::{run, RunOptions, RunResult};

#[derive(Debug, Serialize)]
pub struct ScenarioSummary {
    pub id: String,
    pub passed: bool,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Serialize)]
pub struct InvarianceSummary {
    pub id: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Default, Serialize)]
pub struct Summary {
    pub passed: bool,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSummary>,
    #[serde(rename = "invariance")]
    pub invariance: Vec<InvarianceSummary>,
}

impl Summary {
    pub fn failure_count(&self) -> usize {
        self.scenarios.iter().filter(|s| !s.passed).count() + self.invariance.iter().filter(|g| !g.passed).count()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summaries serialize")
    }
}

/// Files written for one scenario under `out/<id>/`.
pub fn write_artifacts(out: &Path, r: &RunResult) -> Result<()> {
    let dir = out.join(&r.id);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let report = dir.join("report.toml");
    fs::write(&report, ReportDoc::new(r).to_toml()).map_err(|e| HarnessError::io(&report, e))?;
    let mut csv = Vec::new();
    write_solution_csv(&r.solution, &r.growth, r.mass, &mut csv)?;
    let path = dir.join("solution.csv");
    fs::write(&path, csv).map_err(|e| HarnessError::io(&path, e))?;
    let mut csv = Vec::new();
    write_report_csv(&r.report, &r.growth, &mut csv)?;
    let path = dir.join("checkpoints.csv");
    fs::write(&path, csv).map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

/// Runs every scenario on a pool of `jobs` workers (all cores when 0),
/// writes artifacts under `out` when given, then checks invariance groups.
/// A scenario that errors is reported as failed; the batch continues.
pub fn verify_all(catalog: &Catalog, opts: &RunOptions, jobs: usize, out: Option<&Path>) -> Result<Summary> {
    catalog.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let results: Vec<(ScenarioSummary, Option<RunResult>)> = pool.install(|| {
        catalog
            .scenarios
            .par_iter()
            .map(|s| {
                let outcome = run(s, opts).and_then(|r| {
                    if let Some(out) = out {
                        write_artifacts(out, &r)?;
                    }
                    Ok(r)
                });
                match outcome {
                    Ok(r) => (
                        ScenarioSummary {
                            id: s.id.clone(),
                            passed: r.passed(),
                            failures: r.failures().iter().map(|c| format!("{}: {}", c.name, c.detail)).collect(),
                            error: None,
                            wall_time: r.wall_time,
                        },
                        Some(r),
                    ),
                    Err(e) => (
                        ScenarioSummary {
                            id: s.id.clone(),
                            passed: false,
                            failures: Vec::new(),
                            error: Some(e.to_string()),
                            wall_time: Duration::ZERO,
                        },
                        None,
                    ),
                }
            })
            .collect()
    });
    let mut summary = Summary::default();
    let mut runs = BTreeMap::new();
    for (s, r) in results {
        if let Some(r) = r {
            runs.insert(s.id.clone(), r);
        }
        summary.scenarios.push(s);
    }
    for g in &catalog.invariance {
        let sols: Option<Vec<_>> = g.scenarios.iter().map(|id| runs.get(id).map(|r| &r.solution)).collect();
        let entry = match sols {
            None => InvarianceSummary {
                id: g.id.clone(),
                passed: false,
                max_deviation: None,
                error: Some("a member scenario did not complete".into()),
            },
            Some(sols) => match mass_invariance_check(&sols, g.tol * opts.tol_scale) {
                Ok(c) => InvarianceSummary { id: g.id.clone(), passed: c.pass, max_deviation: Some(c.max_deviation), error: None },
                Err(e) => InvarianceSummary { id: g.id.clone(), passed: false, max_deviation: None, error: Some(e.to_string()) },
            },
        };
        summary.invariance.push(entry);
    }
    summary.passed = summary.failure_count() == 0;
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        let path: PathBuf = out.join("summary.toml");
        fs::write(&path, summary.to_toml()).map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(summary)
}
