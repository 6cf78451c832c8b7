use std::fs;
use std::path::Path;
use std::process::Command;

use sublinear_fde::asymptotics::Verdict;
use sublinear_fde_harness::catalog::Expectation;
use sublinear_fde_harness::{builtin_catalog, run, verify_all, Catalog, HarnessError, RunOptions};

fn opts() -> RunOptions {
    RunOptions::default()
}

#[test]
fn builtin_catalog_covers_every_key() {
    let c = builtin_catalog().unwrap();
    assert_eq!(c.lint().unwrap(), Vec::<&str>::new());
}

#[test]
fn empty_catalog_passes_with_empty_summary() {
    let c = Catalog::parse("schema_version = 1").unwrap();
    let s = verify_all(&c, &opts(), 1, None).unwrap();
    assert!(s.passed);
    assert!(s.scenarios.is_empty() && s.invariance.is_empty());
}

#[test]
fn named_scenarios_meet_their_examples() {
    let c = builtin_catalog().unwrap();
    let r = run(c.scenario("ode-degenerate-sqrt").unwrap(), &opts()).unwrap();
    assert!(r.passed(), "{:?}", r.failures());
    let r = run(c.scenario("decreasing-exp-kernel").unwrap(), &opts()).unwrap();
    assert_eq!(r.report.verdicts.r2, Verdict::ConvergesToOne);
    let r = run(c.scenario("minfinity-powerhalf").unwrap(), &opts()).unwrap();
    assert_eq!(r.report.verdicts.r1, Verdict::Diverges);
}

#[test]
fn full_catalog_passes_and_is_deterministic() {
    let c = builtin_catalog().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = verify_all(&c, &opts(), 0, Some(a.path())).unwrap();
    for s in &sa.scenarios {
        assert!(s.passed, "{}: {:?} {:?}", s.id, s.failures, s.error);
    }
    assert!(sa.passed);
    let sb = verify_all(&c, &opts(), 2, Some(b.path())).unwrap();
    assert!(sb.passed);
    let mut compared = 0;
    for s in &c.scenarios {
        for file in ["report.toml", "solution.csv", "checkpoints.csv"] {
            let fa = fs::read(a.path().join(&s.id).join(file)).unwrap();
            let fb = fs::read(b.path().join(&s.id).join(file)).unwrap();
            assert!(fa == fb, "{}/{file} differs between runs", s.id);
            compared += 1;
        }
    }
    assert_eq!(compared, 3 * c.scenarios.len());
    assert_eq!(
        fs::read(a.path().join("summary.toml")).unwrap(),
        fs::read(b.path().join("summary.toml")).unwrap()
    );
}

#[test]
fn one_tampered_tolerance_gives_exactly_one_failure() {
    let mut c = builtin_catalog().unwrap();
    let s = c.scenarios.iter_mut().find(|s| s.id == "delay-atom-sqrt").unwrap();
    for e in &mut s.expectations {
        if let Expectation::FinalRatio { tol, .. } = e {
            *tol = 1e-9;
            break;
        }
    }
    let summary = verify_all(&c, &opts(), 0, None).unwrap();
    assert_eq!(summary.failure_count(), 1);
    let failed: Vec<&str> = summary.scenarios.iter().filter(|s| !s.passed).map(|s| s.id.as_str()).collect();
    assert_eq!(failed, ["delay-atom-sqrt"]);
}

#[test]
fn scenario_errors_do_not_abort_the_batch() {
    let mut c = builtin_catalog().unwrap();
    c.scenarios.retain(|s| s.id == "ode-degenerate-sqrt" || s.id == "volterra-rewrite");
    c.invariance.clear();
    // an atom off the base-step lattice is rejected at solve time
    c.scenarios[1].mu1.as_mut().unwrap().atoms[0][0] = 0.3;
    let summary = verify_all(&c, &opts(), 2, None).unwrap();
    assert!(summary.scenarios[0].passed);
    assert!(summary.scenarios[1].error.as_deref().unwrap().contains("multiple"));
    assert_eq!(summary.failure_count(), 1);
}

#[test]
fn invariance_groups_need_equal_masses() {
    let mut c = builtin_catalog().unwrap();
    c.scenarios.retain(|s| s.id.starts_with("mass-"));
    let s = c.scenarios.iter_mut().find(|s| s.id == "mass-atom-sqrt").unwrap();
    s.mu1.as_mut().unwrap().atoms[0][1] = 0.75;
    let summary = verify_all(&c, &opts(), 0, None).unwrap();
    let g = &summary.invariance[0];
    assert!(!g.passed);
    assert!(g.error.as_deref().unwrap().contains("different total masses"));
}

#[test]
fn tolerance_scale_relaxes_every_tolerance() {
    let mut c = builtin_catalog().unwrap();
    let s = c.scenarios.iter_mut().find(|s| s.id == "delay-atom-sqrt").unwrap();
    s.expectations.retain(|e| matches!(e, Expectation::FinalRatio { .. }));
    s.standard = false;
    for e in &mut s.expectations {
        if let Expectation::FinalRatio { tol, .. } = e {
            *tol = 5e-4;
        }
    }
    let s = c.scenario("delay-atom-sqrt").unwrap();
    assert!(!run(s, &opts()).unwrap().passed());
    assert!(run(s, &RunOptions { tol_scale: 10.0 }).unwrap().passed());
}

#[test]
fn config_errors_name_the_field() {
    let mut c = builtin_catalog().unwrap();
    let s = &mut c.scenarios[0];
    s.mu1.as_mut().unwrap().densities.push(sublinear_fde_harness::catalog::DensitySpec {
        kind: "gamma".into(),
        params: Default::default(),
        scale: 1.0,
        grid: vec![],
        values: vec![],
    });
    let err = run(s, &opts()).unwrap_err();
    assert!(matches!(err, HarnessError::Config(ref m) if m.contains("ode-degenerate-sqrt.mu1") && m.contains("gamma")));
    assert_eq!(err.exit_code(), 2);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fde-harness")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let ok = cli(&["run", "ode-degenerate-sqrt"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("PASS exact-ode"));

    let dir = tempfile::tempdir().unwrap();
    let mut c = builtin_catalog().unwrap();
    c.scenarios.retain(|s| s.id == "ode-degenerate-sqrt");
    c.invariance.clear();
    if let Expectation::ExactOde { tol, .. } = &mut c.scenarios[0].expectations[0] {
        *tol = 1e-12;
    }
    let tampered = dir.path().join("tampered.toml");
    fs::write(&tampered, c.to_toml()).unwrap();
    let fail = cli(&["verify-all", "--catalog", tampered.to_str().unwrap()]);
    assert_eq!(fail.status.code(), Some(1));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "schema_version = 2").unwrap();
    assert_eq!(cli(&["list", "--catalog", broken.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&["run", "no-such-scenario"]).status.code(), Some(2));
    assert_eq!(cli(&["lint"]).status.code(), Some(0));
}

#[test]
fn cli_csv_verbs() {
    let out = cli(&["plot-data", "delay-atom-sqrt"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,dx,F_of_x,ratio_R1,ratio_R2,ratio_R3"));
    assert_eq!(lines.count(), 32);

    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["export-csv", "ode-degenerate-sqrt"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = out.stdout;
    assert_eq!(String::from_utf8(stdout.clone()).unwrap().lines().count(), 10_002);
    let out = cli(&["export-csv", "ode-degenerate-sqrt", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let written = fs::read(Path::new(dir.path()).join("ode-degenerate-sqrt").join("solution.csv")).unwrap();
    assert_eq!(written, stdout);
}
