use sublinear_fde::asymptotics::{checkpoints, growth_report, write_solution_csv, Tolerances, Verdict};
use sublinear_fde::growth::GrowthTransform;
use sublinear_fde::integrator::{solve_fde, solve_ode, HistoryFunction, MeshPlan};
use sublinear_fde::measures::Measure;
use sublinear_fde::nonlinear::{self, Nonlinearity};

fn graded(t_end: f64) -> MeshPlan {
    MeshPlan::graded(0.015625, 32, t_end)
}

fn degenerate(nl: &Nonlinearity, m: f64, t_end: f64) -> sublinear_fde::integrator::Solution {
    let psi = HistoryFunction::constant(0.0, 1.0).unwrap();
    solve_fde(&Measure::atom(0.0, m).unwrap(), &Measure::empty(), nl, &psi, &graded(t_end)).unwrap()
}

#[test]
fn degenerate_equation_tracks_the_ode_and_its_diagnostics() {
    for nl in [nonlinear::power(0.5).unwrap(), nonlinear::exp_decay(1.0).unwrap(), nonlinear::power_log(0.5, 1.0).unwrap()] {
        let sol = degenerate(&nl, 1.0, 1e4);
        let exact = solve_ode(&nl, 1.0, 1.0, &checkpoints(1e4)).unwrap();
        // the graded step grows with t; the relative error peaks early and then decays
        let errs: Vec<f64> = exact
            .times
            .iter()
            .zip(&exact.values)
            .map(|(&t, &y)| (sol.value_at(t).unwrap() / y - 1.0).abs())
            .collect();
        assert!(errs.iter().all(|&e| e < 2e-3), "{}: {errs:?}", nl.id());
        assert!(*errs.last().unwrap() < 1e-4, "{}: {errs:?}", nl.id());
        let gt = GrowthTransform::new(nl.clone());
        let rep = growth_report(&sol, &gt, 1.0, &Tolerances::default()).unwrap();
        assert_eq!(rep.verdicts.r1, Verdict::ConvergesToOne, "{}", nl.id());
        assert_eq!(rep.verdicts.r2, Verdict::ConvergesToOne, "{}", nl.id());
        assert!(*rep.log_x_over_t.last().unwrap() < 1e-2);
    }
}

#[test]
fn r2_convergence_implies_r1_convergence_on_solver_runs() {
    let psi = HistoryFunction::constant(0.0, 2.0).unwrap();
    let kernels = [
        (Measure::exponential(1.0, 1.0).unwrap(), false),
        (Measure::power(1.5, 1.5).unwrap(), false),
        (Measure::atom(2.0, 1.0).unwrap(), true),
    ];
    let nls = [
        nonlinear::power(0.3).unwrap(),
        nonlinear::power(0.7).unwrap(),
        nonlinear::power_log(0.5, 1.0).unwrap(),
        nonlinear::exp_sqrt_log(),
        nonlinear::power_decay(1.0).unwrap(),
    ];
    let mut converged = 0;
    for nl in &nls {
        for (mu, delayed) in &kernels {
            let (mu1, mu2) = if *delayed { (mu.clone(), Measure::empty()) } else { (Measure::empty(), mu.clone()) };
            let sol = solve_fde(&mu1, &mu2, nl, &psi, &graded(1e4)).unwrap();
            let m = sol.meta.mass.finite().unwrap();
            let rep = growth_report(&sol, &GrowthTransform::new(nl.clone()), m, &Tolerances::default()).unwrap();
            if rep.verdicts.r2 == Verdict::ConvergesToOne {
                converged += 1;
                assert_eq!(rep.verdicts.r1, Verdict::ConvergesToOne, "{} against {mu:?}", nl.id());
            }
        }
    }
    assert!(converged >= 10, "only {converged} runs converged in R2");
}

#[test]
fn csv_of_repeated_solves_is_byte_identical() {
    let nl = nonlinear::rv_osc();
    let psi = HistoryFunction::constant(0.0, 1.0).unwrap();
    let mu = Measure::exponential(1.0, 1.0).unwrap();
    let csv = || {
        let sol = solve_fde(&Measure::empty(), &mu, &nl, &psi, &graded(1e3)).unwrap();
        let mut out = Vec::new();
        write_solution_csv(&sol, &GrowthTransform::new(nl.clone()), 1.0, &mut out).unwrap();
        out
    };
    let (a, b) = std::thread::scope(|s| {
        let a = s.spawn(csv);
        let b = s.spawn(csv);
        (a.join().unwrap(), b.join().unwrap())
    });
    assert!(a.len() > 1000);
    assert_eq!(a, b);
}

#[test]
fn larger_mass_grows_faster_with_the_same_limit_law() {
    let nl = nonlinear::power(0.5).unwrap();
    let psi = HistoryFunction::constant(0.0, 1.0).unwrap();
    let run = |scale: f64| {
        let sol = solve_fde(&Measure::empty(), &Measure::exponential(1.0, scale).unwrap(), &nl, &psi, &graded(1e4)).unwrap();
        let rep = growth_report(&sol, &GrowthTransform::new(nl.clone()), scale, &Tolerances::default()).unwrap();
        (sol.final_value(), rep.final_r1())
    };
    let (x1, r1) = run(1.0);
    let (x3, r3) = run(3.0);
    // F(x) = 2(√x − 1) ≈ Mt, so x scales like M²
    assert!((x3 / x1 / 9.0 - 1.0).abs() < 0.01);
    assert!((r1 - 1.0).abs() < 0.02 && (r3 - 1.0).abs() < 0.02);
}
