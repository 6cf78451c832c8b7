//! Running one scenario: build the equation, solve, diagnose, check.

use std::time::{Duration, Instant};

use sublinear_fde::asymptotics::{growth_report, rv1_liapunov_check, GrowthReport, Tolerances, Verdict, VERDICT_WINDOW};
use sublinear_fde::growth::GrowthTransform;
use sublinear_fde::integrator::{
    convert_dde_to_volterra, error_ratio, max_relative_error, richardson_verify, solve_terms, ForcingTerm,
    HistoryFunction, MeshPlan, Solution, Term,
};
use sublinear_fde::measures::{Atom, DensityComponent, Mass, Measure};
use sublinear_fde::nonlinear::{check_fasym, from_registry, Nonlinearity};

use crate::catalog::{DensitySpec, Expectation, HistorySpec, MeasureSpec, NonlinearitySpec, Ratio, Scenario};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Multiplies every tolerance in the catalog.
    pub tol_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { tol_scale: 1.0 }
    }
}

/// One evaluated expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Observed value against the limit, formatted deterministically.
    pub detail: String,
}

#[derive(Debug)]
pub struct RunResult {
    pub id: String,
    /// The growth constant the ratios use.
    pub mass: f64,
    pub report: GrowthReport,
    /// Largest relative deviation from the halved-plan run, when one was made.
    pub richardson: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub wall_time: Duration,
    pub solution: Solution,
    pub growth: GrowthTransform,
}

impl RunResult {
    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn build_nonlinearity(spec: &NonlinearitySpec) -> Result<Nonlinearity> {
    Ok(from_registry(&spec.name, &spec.params)?)
}

fn density(id: &str, spec: &DensitySpec) -> Result<DensityComponent> {
    let param = |key: &str| {
        spec.params.get(key).copied().ok_or_else(|| {
            HarnessError::Config(format!("{id}: density `{}` requires parameter `{key}`", spec.kind))
        })
    };
    let d = match spec.kind.as_str() {
        "exponential" => DensityComponent::exponential(param("theta")?, spec.scale),
        "power" => DensityComponent::power(param("theta")?, spec.scale),
        "tabulated" => DensityComponent::tabulated(spec.grid.clone(), spec.values.clone(), spec.scale),
        other => {
            return Err(HarnessError::Config(format!(
                "{id}: unknown density kind `{other}` (expected exponential, power or tabulated)"
            )))
        }
    };
    d.map_err(|e| HarnessError::Config(format!("{id}: {e}")))
}

pub fn build_measure(id: &str, spec: &MeasureSpec) -> Result<Measure> {
    let atoms = spec.atoms.iter().map(|&[location, mass]| Atom { location, mass }).collect();
    let densities = spec.densities.iter().map(|d| density(id, d)).collect::<Result<Vec<_>>>()?;
    Measure::new(atoms, densities, spec.support_bound).map_err(|e| HarnessError::Config(format!("{id}: {e}")))
}

pub fn build_history(id: &str, spec: &HistorySpec) -> Result<HistoryFunction> {
    let h = match spec {
        HistorySpec::Constant { value } => HistoryFunction::constant(0.0, *value),
        HistorySpec::Tabulated { grid, values } => HistoryFunction::tabulated(grid.clone(), values.clone()),
    };
    h.map_err(|e| HarnessError::Config(format!("{id}.history: {e}")))
}

pub fn build_plan(s: &Scenario) -> MeshPlan {
    let m = &s.mesh;
    let mut plan = if m.graded {
        MeshPlan::graded(m.h0, m.points_per_dyad, s.t_end)
    } else {
        MeshPlan::uniform(m.h0, s.t_end)
    };
    plan.h_max = m.h_max;
    plan.allow_infinite_mass = m.allow_infinite_mass;
    plan
}

/// The equation of a scenario, ready to solve on any plan.
pub struct Problem {
    pub nonlinearity: Nonlinearity,
    pub terms: Vec<Term>,
    pub history: HistoryFunction,
    pub plan: MeshPlan,
}

impl Problem {
    pub fn build(s: &Scenario) -> Result<Self> {
        let nl = build_nonlinearity(&s.nonlinearity)?;
        let mut terms = Vec::new();
        if let Some(mu1) = &s.mu1 {
            let measure = build_measure(&format!("{}.mu1", s.id), mu1)?;
            terms.push(Term { measure, nonlinearity: nl.clone(), lambda: 1.0, reaches_history: true });
        }
        if let Some(mu2) = &s.mu2 {
            let measure = build_measure(&format!("{}.mu2", s.id), mu2)?;
            terms.push(Term { measure, nonlinearity: nl.clone(), lambda: 1.0, reaches_history: false });
        }
        for (i, t) in s.terms.iter().enumerate() {
            let measure = build_measure(&format!("{}.terms[{i}]", s.id), &t.measure)?;
            terms.push(Term {
                reaches_history: measure.support_bound().is_some(),
                measure,
                nonlinearity: build_nonlinearity(&t.nonlinearity)?,
                lambda: t.lambda,
            });
        }
        Ok(Self { nonlinearity: nl, terms, history: build_history(&s.id, &s.history)?, plan: build_plan(s) })
    }

    pub fn solve(&self, plan: &MeshPlan) -> Result<Solution> {
        Ok(solve_terms(&self.terms, None, &self.history, plan)?)
    }
}

fn tolerances(s: &Scenario, scale: f64) -> Tolerances {
    let d = Tolerances::default();
    let o = s.tolerances.unwrap_or(crate::catalog::ToleranceSpec { r1: None, r2: None, r3: None });
    Tolerances {
        r1: o.r1.unwrap_or(d.r1) * scale,
        r2: o.r2.unwrap_or(d.r2) * scale,
        r3: o.r3.unwrap_or(d.r3) * scale,
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

fn outcome(name: impl Into<String>, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail }
}

fn ratio_series(rep: &GrowthReport, ratio: Ratio) -> Vec<Option<f64>> {
    match ratio {
        Ratio::R1 => rep.r1.iter().map(|&v| Some(v)).collect(),
        Ratio::R2 => rep.r2.clone(),
        Ratio::R3 => rep.r3.iter().map(|&v| Some(v)).collect(),
    }
}

fn verdict_of(rep: &GrowthReport, ratio: Ratio) -> Verdict {
    match ratio {
        Ratio::R1 => rep.verdicts.r1,
        Ratio::R2 => rep.verdicts.r2,
        Ratio::R3 => rep.verdicts.r3,
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Runs a scenario and evaluates all its expectations.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<RunResult> {
    s.validate()?;
    if !(opts.tol_scale > 0.0 && opts.tol_scale.is_finite()) {
        return Err(HarnessError::Config(format!("tolerance scale must be positive, got {}", opts.tol_scale)));
    }
    let start = Instant::now();
    let problem = Problem::build(s)?;
    let sol = problem.solve(&problem.plan)?;
    let mass = match (s.mass, sol.meta.mass) {
        (Some(m), _) => m,
        (None, Mass::Finite(m)) => m,
        (None, Mass::Infinite) => {
            return Err(HarnessError::Config(format!("{}.mass: infinite-mass scenarios must set `mass`", s.id)))
        }
    };
    let growth_nl = if s.growth_on_asymptote {
        problem.nonlinearity.asymptote_nonlinearity()?
    } else {
        problem.nonlinearity.clone()
    };
    let growth = GrowthTransform::new(growth_nl);
    let tol = tolerances(s, opts.tol_scale);
    let report = growth_report(&sol, &growth, mass, &tol)?;
    let scale = opts.tol_scale;
    let psi0 = problem.history.eval(0.0);

    let mut halved: Option<Solution> = None;
    let mut richardson = None;
    let mut checks = Vec::new();
    for e in &s.expectations {
        let c = match e {
            Expectation::Verdict { ratio, verdict } => {
                let want = Verdict::parse(verdict).expect("validated");
                let got = verdict_of(&report, *ratio);
                outcome(format!("verdict {}", ratio.as_str()), got == want, format!("{got} (expected {want})"))
            }
            Expectation::FinalRatio { ratio, target, tol } => {
                let name = format!("final {}", ratio.as_str());
                match *ratio_series(&report, *ratio).last().unwrap() {
                    Some(v) => outcome(
                        name,
                        (v - target).abs() <= tol * scale,
                        format!("{} vs {} ± {}", fmt(v), fmt(*target), fmt(tol * scale)),
                    ),
                    None => outcome(name, false, "undefined at T".into()),
                }
            }
            Expectation::Reference { coefficient, exponent, tol } => {
                let v = sol.final_value() / (coefficient * s.t_end.powf(*exponent));
                outcome("reference", (v - 1.0).abs() <= tol * scale, format!("{} vs 1 ± {}", fmt(v), fmt(tol * scale)))
            }
            Expectation::R2TailMin { tol } => match report.r2_tail_min() {
                Some(v) => outcome(
                    "R2 tail minimum",
                    v >= 1.0 - tol * scale,
                    format!("{} ≥ {}", fmt(v), fmt(1.0 - tol * scale)),
                ),
                None => outcome("R2 tail minimum", false, "undefined on the tail".into()),
            },
            Expectation::Increasing { ratio, at, min_final } => {
                let series = ratio_series(&report, *ratio);
                let mut values = Vec::with_capacity(at.len());
                for &t in at {
                    let i = report
                        .checkpoints
                        .iter()
                        .position(|&c| (c - t).abs() <= 1e-9 * t)
                        .ok_or_else(|| HarnessError::Config(format!("{}.expect.increasing: {t} is not a checkpoint", s.id)))?;
                    values.push(series[i]);
                }
                let name = format!("{} increasing", ratio.as_str());
                match values.into_iter().collect::<Option<Vec<f64>>>() {
                    Some(v) => {
                        let ok = v.windows(2).all(|w| w[1] > w[0]) && *v.last().unwrap() >= *min_final;
                        let shown: Vec<String> = v.iter().map(|x| fmt(*x)).collect();
                        outcome(name, ok, format!("[{}], final ≥ {}", shown.join(", "), fmt(*min_final)))
                    }
                    None => outcome(name, false, "undefined at a checkpoint".into()),
                }
            }
            Expectation::Rv1 { alpha, theta, tol } => {
                let c = rv1_liapunov_check(&sol, *alpha, *theta)?;
                let last = *c.values.last().unwrap();
                outcome(
                    "rv1 limit",
                    c.deviation <= tol * scale,
                    format!("{} vs {} (relative deviation {})", fmt(last), fmt(c.target), fmt(c.deviation)),
                )
            }
            Expectation::Liapunov { tol } => {
                let n = report.checkpoints.len();
                let k = n.saturating_sub(VERDICT_WINDOW);
                let rate = &report.dx_over_x[k..];
                let lyap = &report.log_x_over_t[k..];
                let (a, b) = (*rate.last().unwrap(), *lyap.last().unwrap());
                let ok = a <= tol * scale && b <= tol * scale && strictly_decreasing(rate) && strictly_decreasing(lyap);
                outcome("liapunov", ok, format!("x'/x = {}, log x/t = {}, limit {}", fmt(a), fmt(b), fmt(tol * scale)))
            }
            Expectation::ExactOde { tol, halving_ratio } => {
                let ode = GrowthTransform::new(problem.nonlinearity.clone());
                let m = match sol.meta.mass {
                    Mass::Finite(m) => m,
                    Mass::Infinite => return Err(HarnessError::Config(format!("{}: exact-ode needs finite mass", s.id))),
                };
                let f_psi = ode.value(psi0)?;
                let exact = |t: f64| ode.inverse(m * t + f_psi).unwrap_or(f64::NAN);
                let err = max_relative_error(&sol, exact);
                let mut ok = err <= tol * scale;
                let mut detail = format!("max relative error {} ≤ {}", fmt(err), fmt(tol * scale));
                if let Some([lo, hi]) = halving_ratio {
                    let r = error_ratio(&sol, halved_run(&problem, &mut halved)?, exact)?;
                    ok &= r >= *lo && r <= *hi;
                    detail.push_str(&format!("; halving ratio {} in [{}, {}]", fmt(r), fmt(*lo), fmt(*hi)));
                }
                outcome("exact-ode", ok, detail)
            }
            Expectation::Richardson { tol } => {
                let dev = richardson_verify(&sol, halved_run(&problem, &mut halved)?)?.max_relative_deviation;
                richardson = Some(dev);
                outcome("richardson", dev <= tol * scale, format!("{} ≤ {}", fmt(dev), fmt(tol * scale)))
            }
            Expectation::Divergence { factor } => {
                let x = sol.final_value();
                outcome("divergence", x >= factor * psi0, format!("x(T) = {} vs {} · ψ(0)", fmt(x), fmt(*factor)))
            }
            Expectation::VolterraRewrite { tol } => {
                let dev = volterra_deviation(&problem, &sol)?;
                outcome("volterra-rewrite", dev <= tol * scale, format!("{} ≤ {}", fmt(dev), fmt(tol * scale)))
            }
            Expectation::AsymptoteRatio { from, to, samples, tol } => {
                let probes: Vec<f64> = (0..*samples)
                    .map(|i| from * (to / from).powf(i as f64 / (*samples - 1) as f64))
                    .collect();
                let dev = check_fasym(&problem.nonlinearity, &probes)?
                    .into_iter()
                    .map(|r| (r - 1.0).abs())
                    .fold(0.0, f64::max);
                outcome("asymptote-ratio", dev <= tol * scale, format!("{} ≤ {}", fmt(dev), fmt(tol * scale)))
            }
        };
        checks.push(c);
    }
    Ok(RunResult {
        id: s.id.clone(),
        mass,
        report,
        richardson,
        checks,
        wall_time: start.elapsed(),
        solution: sol,
        growth,
    })
}

/// The run on the halved plan, solved at most once per scenario.
fn halved_run<'a>(problem: &Problem, slot: &'a mut Option<Solution>) -> Result<&'a Solution> {
    if slot.is_none() {
        *slot = Some(problem.solve(&problem.plan.halved())?);
    }
    Ok(slot.as_ref().expect("just filled"))
}

/// Largest relative gap between the delay form and its forced Volterra rewrite.
fn volterra_deviation(problem: &Problem, sol: &Solution) -> Result<f64> {
    let delay = &problem.terms[0];
    let (mu, forcing): (Measure, ForcingTerm) =
        convert_dde_to_volterra(&delay.measure, &delay.nonlinearity, &problem.history)?;
    let mut terms = vec![Term { measure: mu, nonlinearity: delay.nonlinearity.clone(), lambda: 1.0, reaches_history: false }];
    terms.extend(problem.terms[1..].iter().cloned());
    let psi0 = HistoryFunction::constant(0.0, problem.history.eval(0.0))?;
    let rewritten = solve_terms(&terms, Some(&forcing), &psi0, &problem.plan)?;
    let mut dev: f64 = 0.0;
    for (i, &t) in sol.times.iter().enumerate() {
        if let Some(j) = rewritten.index_of(t) {
            dev = dev.max((rewritten.values[j] / sol.values[i] - 1.0).abs());
        }
    }
    Ok(dev)
}
