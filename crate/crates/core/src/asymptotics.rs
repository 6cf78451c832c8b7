//! Diagnostic ratios along a trajectory and their limit verdicts.
//!
//! * `R1 = F(x(t)) / (Mt)`
//! * `R2 = x(t) / F⁻¹(Mt)`
//! * `R3 = log x(t) / log t`
//!
//! together with the exponential-rate diagnostics `x'/x` and `log x / t`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::growth::GrowthTransform;
use crate::integrator::Solution;
use crate::measures::Mass;

/// Checkpoints per decade.
pub const CHECKPOINTS_PER_DECADE: u32 = 8;
/// Trailing checkpoints a verdict looks at.
pub const VERDICT_WINDOW: usize = 4;
/// Decades past `t = 1` a horizon must reach before any verdict other than
/// inconclusive.
pub const MIN_DECADES: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { r1: 0.05, r2: 0.05, r3: 0.10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    ConvergesToOne,
    Diverges,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ConvergesToOne => "converges-to-1",
            Verdict::Diverges => "diverges",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "converges-to-1" => Some(Verdict::ConvergesToOne),
            "diverges" => Some(Verdict::Diverges),
            "inconclusive" => Some(Verdict::Inconclusive),
            _ => None,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `10^{k/8}` for `k ≥ 1` below `t_end`, then `t_end` itself.
pub fn checkpoints(t_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 1;
    loop {
        let t = 10f64.powf(k as f64 / CHECKPOINTS_PER_DECADE as f64);
        if t >= t_end * (1.0 - 1e-9) {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(t_end);
    out
}

/// Verdict from the trailing window of a ratio sequence.
///
/// Converges when the last [`VERDICT_WINDOW`] deviations `|r − 1|` lie within
/// `tol` and do not increase; diverges when they strictly increase and the
/// last exceeds `tol`. Horizons shorter than [`MIN_DECADES`] decades are
/// always inconclusive.
pub fn verdict(times: &[f64], ratios: &[f64], tol: f64) -> Verdict {
    let n = ratios.len();
    if n < VERDICT_WINDOW || times.len() != n || times[n - 1].log10() < MIN_DECADES - 1e-9 {
        return Verdict::Inconclusive;
    }
    let dev: Vec<f64> = ratios[n - VERDICT_WINDOW..].iter().map(|r| (r - 1.0).abs()).collect();
    if dev.iter().any(|d| !d.is_finite()) {
        return Verdict::Inconclusive;
    }
    let within = dev.iter().all(|&d| d <= tol);
    let nonincreasing = dev.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let increasing = dev.windows(2).all(|w| w[1] > w[0]);
    if within && nonincreasing {
        Verdict::ConvergesToOne
    } else if increasing && dev[VERDICT_WINDOW - 1] > tol {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdicts {
    pub r1: Verdict,
    pub r2: Verdict,
    pub r3: Verdict,
}

/// The ratios at logarithmically spaced checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub checkpoints: Vec<f64>,
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
    pub r1: Vec<f64>,
    /// `None` where `F⁻¹(Mt)` is not representable.
    pub r2: Vec<Option<f64>>,
    pub r3: Vec<f64>,
    pub dx_over_x: Vec<f64>,
    pub log_x_over_t: Vec<f64>,
    pub mass: f64,
    pub tolerances: Tolerances,
    pub verdicts: Verdicts,
}

impl GrowthReport {
    fn last<T: Copy>(v: &[T]) -> T {
        *v.last().expect("reports have at least one checkpoint")
    }

    pub fn final_r1(&self) -> f64 {
        Self::last(&self.r1)
    }

    pub fn final_r2(&self) -> Option<f64> {
        Self::last(&self.r2)
    }

    pub fn final_r3(&self) -> f64 {
        Self::last(&self.r3)
    }

    /// Minimum of `R2` over the last decade of checkpoints.
    pub fn r2_tail_min(&self) -> Option<f64> {
        let t_end = Self::last(&self.checkpoints);
        let tail: Vec<f64> = self
            .checkpoints
            .iter()
            .zip(&self.r2)
            .filter(|(t, _)| **t >= t_end / 10.0 * (1.0 - 1e-12))
            .map(|(_, r)| *r)
            .collect::<Option<Vec<_>>>()?;
        tail.into_iter().reduce(f64::min)
    }
}

/// `F(x)/(Mt)`, through `ln F` when `F(x)` overflows.
fn ratio_r1(gt: &GrowthTransform, x: f64, mt: f64) -> Result<f64> {
    let v = gt.value(x)?;
    if v.is_finite() {
        return Ok(v / mt);
    }
    Ok((gt.ln_value(x)? - mt.ln()).exp())
}

/// The diagnostic ratios of `sol` at [`checkpoints`] of its horizon.
///
/// `mass` is the growth constant `M`; pass 1 for infinite-mass runs.
pub fn growth_report(sol: &Solution, gt: &GrowthTransform, mass: f64, tol: &Tolerances) -> Result<GrowthReport> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InvalidArgument(format!("M must be positive, got {mass}")));
    }
    let times: Vec<f64> = checkpoints(sol.t_end()).into_iter().filter(|&t| t >= sol.times[0]).collect();
    let mut rep = GrowthReport {
        checkpoints: times.clone(),
        x: Vec::new(),
        dx: Vec::new(),
        r1: Vec::new(),
        r2: Vec::new(),
        r3: Vec::new(),
        dx_over_x: Vec::new(),
        log_x_over_t: Vec::new(),
        mass,
        tolerances: *tol,
        verdicts: Verdicts { r1: Verdict::Inconclusive, r2: Verdict::Inconclusive, r3: Verdict::Inconclusive },
    };
    for &t in &times {
        let x = sol.value_at(t)?;
        let dx = sol.derivative_at(t)?;
        let mt = mass * t;
        rep.x.push(x);
        rep.dx.push(dx);
        rep.r1.push(ratio_r1(gt, x, mt)?);
        rep.r2.push(match gt.inverse(mt) {
            Ok(y) => Some(x / y),
            Err(Error::Unsupported(_)) => None,
            Err(e) => return Err(e),
        });
        rep.r3.push(x.ln() / t.ln());
        rep.dx_over_x.push(dx / x);
        rep.log_x_over_t.push(x.ln() / t);
    }
    let r2: Option<Vec<f64>> = rep.r2.iter().copied().collect();
    rep.verdicts = Verdicts {
        r1: verdict(&times, &rep.r1, tol.r1),
        r2: r2.map_or(Verdict::Inconclusive, |r| verdict(&times, &r, tol.r2)),
        r3: verdict(&times, &rep.r3, tol.r3),
    };
    Ok(rep)
}

/// Tail estimate of `(log x(t))^{α+1} / ((α+1) t)`, whose limit is `1/θ`
/// for `f ∼ x/(log x)^α` against a power kernel of index `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rv1Check {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub target: f64,
    /// `|value·θ − 1|` at the final checkpoint.
    pub deviation: f64,
}

pub fn rv1_liapunov_check(sol: &Solution, alpha: f64, theta: f64) -> Result<Rv1Check> {
    if !(theta > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("need α, θ > 0, got α = {alpha}, θ = {theta}")));
    }
    let all = checkpoints(sol.t_end());
    let tail = &all[all.len().saturating_sub(VERDICT_WINDOW)..];
    let mut values = Vec::with_capacity(tail.len());
    for &t in tail {
        let x = sol.value_at(t)?;
        values.push(x.ln().powf(alpha + 1.0) / ((alpha + 1.0) * t));
    }
    let last = *values.last().unwrap();
    Ok(Rv1Check { times: tail.to_vec(), values, target: 1.0 / theta, deviation: (last * theta - 1.0).abs() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiminfCheck {
    pub tail_min: f64,
    pub pass: bool,
}

/// `min R2` over the last decade, checked against `1 − tol`.
pub fn liminf_lower_check(sol: &Solution, gt: &GrowthTransform, mass: f64, tol: f64) -> Result<LiminfCheck> {
    let rep = growth_report(sol, gt, mass, &Tolerances::default())?;
    let tail_min = rep
        .r2_tail_min()
        .ok_or_else(|| Error::Unsupported("F⁻¹(Mt) is not representable on the tail".into()))?;
    Ok(LiminfCheck { tail_min, pass: tail_min >= 1.0 - tol })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassInvariance {
    /// `(i, j, x_i(T)/x_j(T))` for `i < j`.
    pub ratios: Vec<(usize, usize, f64)>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Pairwise ratios of final values for runs sharing `f` and `M`.
pub fn mass_invariance_check(sols: &[&Solution], tol: f64) -> Result<MassInvariance> {
    if sols.len() < 2 {
        return Err(Error::Config("mass invariance needs at least two runs".into()));
    }
    let masses: Vec<f64> = sols
        .iter()
        .map(|s| match s.meta.mass {
            Mass::Finite(m) => Ok(m),
            Mass::Infinite => Err(Error::Config("mass invariance needs finite masses".into())),
        })
        .collect::<Result<_>>()?;
    if masses.iter().any(|m| (m - masses[0]).abs() > 1e-12 * masses[0].abs()) {
        return Err(Error::Config(format!("runs have different total masses: {masses:?}")));
    }
    let t_end = sols[0].t_end();
    let mut ratios = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            let r = sols[i].value_at(t_end)? / sols[j].value_at(t_end)?;
            max_deviation = max_deviation.max((r - 1.0).abs());
            ratios.push((i, j, r));
        }
    }
    Ok(MassInvariance { ratios, max_deviation, pass: max_deviation <= tol })
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.16e}"),
        _ => String::new(),
    }
}

pub const CSV_HEADER: &str = "t,x,dx,F_of_x,ratio_R1,ratio_R2,ratio_R3";

/// Writes every mesh node as `t,x,dx,F_of_x,ratio_R1,ratio_R2,ratio_R3`;
/// ratios are blank where undefined (`t ≤ 0`, or `t ≤ 1` for `R3`).
pub fn write_solution_csv(sol: &Solution, gt: &GrowthTransform, mass: f64, out: &mut impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Invariant(format!("writing CSV: {e}"));
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for ((&t, &x), &dx) in sol.times.iter().zip(&sol.values).zip(&sol.derivatives) {
        let fx = gt.value(x).ok();
        let mt = mass * t;
        let (r1, r2) = if t > 0.0 {
            (ratio_r1(gt, x, mt).ok(), gt.inverse(mt).ok().map(|y| x / y))
        } else {
            (None, None)
        };
        let r3 = (t > 1.0).then(|| x.ln() / t.ln());
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell(Some(t)),
            cell(Some(x)),
            cell(Some(dx)),
            cell(fx),
            cell(r1),
            cell(r2),
            cell(r3)
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Writes the checkpoints of a report in the same columns.
pub fn write_report_csv(rep: &GrowthReport, gt: &GrowthTransform, out: &mut impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Invariant(format!("writing CSV: {e}"));
    writeln!(out, "{CSV_HEADER}").map_err(io)?;
    for i in 0..rep.checkpoints.len() {
        let t = rep.checkpoints[i];
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell(Some(t)),
            cell(Some(rep.x[i])),
            cell(Some(rep.dx[i])),
            cell(gt.value(rep.x[i]).ok()),
            cell(Some(rep.r1[i])),
            cell(rep.r2[i]),
            cell((t > 1.0).then_some(rep.r3[i]))
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{solve_ode, SolutionMeta};
    use crate::nonlinear;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn exact_report(nl: nonlinear::Nonlinearity, m: f64, psi0: f64, t_end: f64) -> GrowthReport {
        let sol = solve_ode(&nl, m, psi0, &checkpoints(t_end)).unwrap();
        growth_report(&sol, &GrowthTransform::new(nl), m, &Tolerances::default()).unwrap()
    }

    #[test]
    fn checkpoints_are_eight_per_decade() {
        let c = checkpoints(1e4);
        assert_eq!(c.len(), 32);
        assert_eq!(*c.last().unwrap(), 1e4);
        assert_relative_eq!(c[7], 10.0, max_relative = 1e-15);
        let c = checkpoints(500.0);
        assert_eq!(*c.last().unwrap(), 500.0);
        assert!(c[c.len() - 2] < 500.0);
    }

    #[test]
    fn exact_solutions_converge_in_every_ratio() {
        for nl in [nonlinear::power(0.5).unwrap(), nonlinear::exp_decay(1.0).unwrap(), nonlinear::power_log(0.5, 1.0).unwrap()] {
            let id = nl.id().to_string();
            let rep = exact_report(nl, 1.0, 2.0, 1e8);
            assert_eq!(rep.verdicts.r1, Verdict::ConvergesToOne, "{id}");
            assert_eq!(rep.verdicts.r2, Verdict::ConvergesToOne, "{id}");
            let lyap = &rep.dx_over_x;
            assert!(lyap.windows(2).all(|w| w[1] < w[0]), "{id}");
            assert!(rep.log_x_over_t.last().unwrap() < &1e-3, "{id}");
        }
    }

    #[test]
    fn r3_of_power_solutions_tends_to_the_ode_exponent() {
        // y ∼ (t/2)², log y / log t → 2
        let rep = exact_report(nonlinear::power(0.5).unwrap(), 1.0, 1.0, 1e8);
        assert!((rep.final_r3() - 2.0).abs() < 0.1);
        // R3 → 1 for slowly varying f, whose solutions grow like t up to slowly varying factors
        let rep = exact_report(nonlinear::constant(1.0).unwrap(), 1.0, 1.0, 1e8);
        assert_eq!(rep.verdicts.r3, Verdict::ConvergesToOne);
    }

    #[test]
    fn exact_r1_carries_the_initial_offset() {
        let nl = nonlinear::power(0.5).unwrap();
        let gt = GrowthTransform::new(nl.clone());
        let rep = exact_report(nl, 2.0, 4.0, 1e4);
        for (t, r) in rep.checkpoints.iter().zip(&rep.r1) {
            assert_relative_eq!(*r, 1.0 + gt.value(4.0).unwrap() / (2.0 * t), max_relative = 1e-9);
        }
    }

    #[test]
    fn short_horizons_are_inconclusive() {
        let rep = exact_report(nonlinear::power(0.5).unwrap(), 1.0, 1.0, 500.0);
        assert_eq!(rep.verdicts.r1, Verdict::Inconclusive);
    }

    #[test]
    fn verdict_rules() {
        let t: Vec<f64> = checkpoints(1e4);
        let n = t.len();
        let conv: Vec<f64> = t.iter().map(|t| 1.0 + 1.0 / t).collect();
        assert_eq!(verdict(&t, &conv, 0.05), Verdict::ConvergesToOne);
        let div: Vec<f64> = t.iter().map(|t| t.sqrt()).collect();
        assert_eq!(verdict(&t, &div, 0.05), Verdict::Diverges);
        let mut wobble = conv.clone();
        wobble[n - 2] = 1.02;
        assert_eq!(verdict(&t, &wobble, 0.05), Verdict::Inconclusive);
    }

    #[test]
    fn rv1_check_is_exact_on_closed_form() {
        let (alpha, theta) = (2.0, 2.0);
        let times: Vec<f64> = checkpoints(1e5);
        let x = |t: f64| (((alpha + 1.0) * t / theta).powf(1.0 / (alpha + 1.0))).exp();
        let sol = Solution::new(
            times.clone(),
            times.iter().map(|&t| x(t)).collect(),
            times.iter().map(|_| 0.0).collect(),
            meta(1.0),
        )
        .unwrap();
        let c = rv1_liapunov_check(&sol, alpha, theta).unwrap();
        assert!(c.deviation < 1e-12);
        assert_eq!(c.target, 0.5);
    }

    fn meta(m: f64) -> SolutionMeta {
        SolutionMeta {
            nonlinearity_id: "synthetic".into(),
            term_masses: vec![],
            mass: Mass::Finite(m),
            truncation_horizons: vec![],
            truncation_error_bound: 0.0,
            plan: None,
            warnings: vec![],
            exact: true,
        }
    }

    #[test]
    fn mass_invariance_examples() {
        let nl = nonlinear::power(0.5).unwrap();
        let a = solve_ode(&nl, 1.0, 1.0, &[1.0, 10.0]).unwrap();
        let c = mass_invariance_check(&[&a, &a.clone()], 0.02).unwrap();
        assert_eq!(c.ratios[0].2, 1.0);
        let b = solve_ode(&nl, 2.0, 1.0, &[1.0, 10.0]).unwrap();
        assert!(matches!(mass_invariance_check(&[&a, &b], 0.02), Err(Error::Config(_))));
    }

    #[test]
    fn liminf_check_on_exact_solution() {
        let nl = nonlinear::power(0.5).unwrap();
        let sol = solve_ode(&nl, 1.0, 3.0, &checkpoints(1e4)).unwrap();
        let c = liminf_lower_check(&sol, &GrowthTransform::new(nl), 1.0, 0.0).unwrap();
        assert!(c.pass && c.tail_min >= 1.0);
    }

    #[test]
    fn csv_is_deterministic_with_blanks() {
        let nl = nonlinear::power(0.5).unwrap();
        let sol = solve_ode(&nl, 1.0, 1.0, &[0.0, 1.0, 4.0]).unwrap();
        let gt = GrowthTransform::new(nl);
        let mut a = Vec::new();
        write_solution_csv(&sol, &gt, 1.0, &mut a).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].ends_with(",,,"));
        assert!(lines[2].ends_with(','));
        assert_eq!(lines[3].split(',').count(), 7);
        let mut b = Vec::new();
        write_solution_csv(&sol, &gt, 1.0, &mut b).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn shrinking_tolerance_never_turns_divergence_into_convergence(
            base in proptest::collection::vec(0.0f64..3.0, 32),
            tol in 0.001f64..0.5,
            shrink in 0.01f64..1.0,
        ) {
            let t = checkpoints(1e4);
            let v = verdict(&t, &base, tol);
            let w = verdict(&t, &base, tol * shrink);
            prop_assert!(!(v == Verdict::Diverges && w == Verdict::ConvergesToOne));
            if v == Verdict::Diverges {
                prop_assert_eq!(w, Verdict::Diverges);
            }
        }

        #[test]
        fn r2_convergence_implies_r1_convergence_on_exact_solutions(
            beta in 0.1f64..0.9,
            m in 0.2f64..3.0,
            psi0 in 0.5f64..5.0,
        ) {
            let rep = exact_report(nonlinear::power(beta).unwrap(), m, psi0, 1e6);
            if rep.verdicts.r2 == Verdict::ConvergesToOne {
                prop_assert_eq!(rep.verdicts.r1, Verdict::ConvergesToOne);
            }
        }
    }
}
