use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sublinear_fde::asymptotics::{write_report_csv, write_solution_csv};
use sublinear_fde_harness::verify::write_artifacts;
use sublinear_fde_harness::{builtin_catalog, run, verify_all, Catalog, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "fde-harness", version, about = "Run and verify growth-law scenarios")]
struct Cli {
    /// Scenario catalog; the built-in catalog when omitted.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Directory for reports and CSVs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Uniform factor applied to every tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its checks.
    Run { id: String },
    /// Run every scenario and invariance group.
    VerifyAll,
    /// List scenario ids with the results they cover.
    List,
    /// Report coverage keys no scenario exercises.
    Lint,
    /// Write the full trajectory of a scenario as CSV, to stdout or `--out`.
    ExportCsv { id: String },
    /// Write the checkpoint diagnostics of a scenario as CSV, to stdout or `--out`.
    PlotData { id: String },
}

fn load(cli: &Cli) -> Result<Catalog, HarnessError> {
    match &cli.catalog {
        Some(path) => Catalog::load(path),
        None => builtin_catalog(),
    }
}

fn execute(cli: &Cli) -> Result<bool, HarnessError> {
    let catalog = load(cli)?;
    let opts = RunOptions { tol_scale: cli.tol_scale };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let io = |e: std::io::Error| HarnessError::io(std::path::Path::new("<stdout>"), e);
    match &cli.command {
        Command::Run { id } => {
            let r = run(catalog.scenario(id)?, &opts)?;
            if let Some(dir) = &cli.out {
                write_artifacts(dir, &r)?;
            }
            for c in &r.checks {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io)?;
            }
            let v = &r.report.verdicts;
            writeln!(out, "verdicts: R1 {}, R2 {}, R3 {} ({:.2?})", v.r1, v.r2, v.r3, r.wall_time).map_err(io)?;
            Ok(r.passed())
        }
        Command::VerifyAll => {
            let summary = verify_all(&catalog, &opts, cli.jobs, cli.out.as_deref())?;
            for s in &summary.scenarios {
                let status = if s.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{status} {} ({:.2?})", s.id, s.wall_time).map_err(io)?;
                for f in &s.failures {
                    writeln!(out, "    {f}").map_err(io)?;
                }
                if let Some(e) = &s.error {
                    writeln!(out, "    error: {e}").map_err(io)?;
                }
            }
            for g in &summary.invariance {
                let status = if g.passed { "PASS" } else { "FAIL" };
                let dev = g.max_deviation.map_or(String::new(), |d| format!(" max deviation {d:.3e}"));
                writeln!(out, "{status} invariance {}{dev}", g.id).map_err(io)?;
                if let Some(e) = &g.error {
                    writeln!(out, "    error: {e}").map_err(io)?;
                }
            }
            writeln!(out, "{} failure(s)", summary.failure_count()).map_err(io)?;
            Ok(summary.passed)
        }
        Command::List => {
            for s in &catalog.scenarios {
                writeln!(out, "{:<32} {}", s.id, s.covers.join(", ")).map_err(io)?;
            }
            Ok(true)
        }
        Command::Lint => {
            let missing = catalog.lint()?;
            for key in &missing {
                writeln!(out, "uncovered: {key}").map_err(io)?;
            }
            if missing.is_empty() {
                writeln!(out, "every coverage key has a scenario").map_err(io)?;
                Ok(true)
            } else {
                Err(HarnessError::Config(format!("{} coverage key(s) without a scenario", missing.len())))
            }
        }
        Command::ExportCsv { id } | Command::PlotData { id } => {
            let r = run(catalog.scenario(id)?, &opts)?;
            let mut buf = Vec::new();
            let file = if matches!(cli.command, Command::ExportCsv { .. }) {
                write_solution_csv(&r.solution, &r.growth, r.mass, &mut buf)?;
                "solution.csv"
            } else {
                write_report_csv(&r.report, &r.growth, &mut buf)?;
                "checkpoints.csv"
            };
            match &cli.out {
                Some(dir) => {
                    let dir = dir.join(id);
                    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
                    let path = dir.join(file);
                    std::fs::write(&path, &buf).map_err(|e| HarnessError::io(&path, e))?;
                    writeln!(out, "{}", path.display()).map_err(io)?;
                }
                None => out.write_all(&buf).map_err(io)?,
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
