//! Predictor–corrector product integration of
//! `x'(t) = Σ_j ∫ μ_j(ds) f_j(x(t − s)) + h(t)`.
//!
//! Each step is Euler predict, evaluate, trapezoid correct, evaluate. The
//! convolution against a density is integrated exactly against the
//! piecewise-linear interpolant of `f(x(·))` on the mesh; atoms read `x` at
//! a mesh node whenever the delay is commensurable with the mesh.

use std::sync::Arc;

use super::exp_kernel::ExpConvolution;
use super::history::HistoryFunction;
use super::mesh::{build_mesh, to_units, Mesh, MeshPlan, OFF_GRID};
use super::solution::{Solution, SolutionMeta};
use crate::error::{Error, Result};
use crate::growth::GrowthTransform;
use crate::measures::{DensityComponent, DensityKind, Mass, Measure};
use crate::nonlinear::{Nonlinearity, RealFn};

/// Share of a density's mass allowed outside its convolution window.
pub const EPS_TAIL: f64 = 1e-6;
/// Subintervals used for a density's overlap with the history.
const HISTORY_PANELS: usize = 256;

/// One convolution `∫ μ(ds) f(x(t − s))` of the right-hand side.
#[derive(Debug, Clone)]
pub struct Term {
    pub measure: Measure,
    pub nonlinearity: Nonlinearity,
    /// Weight `λ` of `f ∼ λφ`; terms with `λ = 0` do not count towards `M`.
    pub lambda: f64,
    /// Integrate over `s ∈ [0, τ]`, reading `ψ` where `t − s < 0`. Otherwise
    /// only `s ∈ [0, t]` contributes.
    pub reaches_history: bool,
}

/// An exogenous forcing `h(t) ≥ 0`, vanishing for `t ≥ τ`.
#[derive(Clone)]
pub struct ForcingTerm {
    tau: f64,
    eval: RealFn,
}

impl std::fmt::Debug for ForcingTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForcingTerm").field("tau", &self.tau).finish()
    }
}

impl ForcingTerm {
    pub fn new(tau: f64, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { tau, eval: Arc::new(h) }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t >= self.tau || t < 0.0 {
            0.0
        } else {
            (self.eval)(t)
        }
    }
}

/// Exact solution `y(t) = F⁻¹(Mt + F(ψ₀))` of `y' = M f(y)` at the checkpoints.
pub fn solve_ode(nl: &Nonlinearity, m: f64, psi0: f64, checkpoints: &[f64]) -> Result<Solution> {
    if !(m > 0.0 && m.is_finite()) || !(psi0 > 0.0 && psi0.is_finite()) {
        return Err(Error::InvalidArgument(format!("need M > 0 and ψ₀ > 0, got M = {m}, ψ₀ = {psi0}")));
    }
    let gt = GrowthTransform::new(nl.clone());
    let f_psi = gt.value(psi0)?;
    let mut times = Vec::with_capacity(checkpoints.len());
    let mut values = Vec::with_capacity(checkpoints.len());
    let mut derivatives = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        let y = if t == 0.0 { psi0 } else { gt.inverse(m * t + f_psi)? };
        times.push(t);
        values.push(y);
        derivatives.push(m * nl.eval_f(y)?);
    }
    let meta = SolutionMeta {
        nonlinearity_id: nl.id().to_string(),
        term_masses: vec![Mass::Finite(m)],
        mass: Mass::Finite(m),
        truncation_horizons: vec![None],
        truncation_error_bound: 0.0,
        plan: None,
        warnings: Vec::new(),
        exact: true,
    };
    Solution::new(times, values, derivatives, meta)
}

/// `x'(t) = ∫_{[0,τ]} μ₁(ds) f(x(t−s)) + ∫_{[0,t]} μ₂(ds) f(x(t−s))`,
/// `x = ψ` on `[−τ, 0]`.
pub fn solve_fde(
    mu1: &Measure,
    mu2: &Measure,
    nl: &Nonlinearity,
    psi: &HistoryFunction,
    plan: &MeshPlan,
) -> Result<Solution> {
    let terms = vec![
        Term { measure: mu1.clone(), nonlinearity: nl.clone(), lambda: 1.0, reaches_history: true },
        Term { measure: mu2.clone(), nonlinearity: nl.clone(), lambda: 1.0, reaches_history: false },
    ];
    solve_terms(&terms, None, psi, plan)
}

/// A term of a several-nonlinearity equation: `f ∼ λφ` against `μ`. The
/// measure reaches into the history exactly when it has a support bound.
#[derive(Debug, Clone)]
pub struct MultiTerm {
    pub measure: Measure,
    pub nonlinearity: Nonlinearity,
    pub lambda: f64,
}

pub fn solve_fde_multi(terms: &[MultiTerm], psi: &HistoryFunction, plan: &MeshPlan) -> Result<Solution> {
    if !terms.iter().any(|t| t.lambda > 0.0) {
        return Err(Error::InvalidArgument("at least one term needs a positive weight".into()));
    }
    let terms: Vec<Term> = terms
        .iter()
        .map(|t| Term {
            measure: t.measure.clone(),
            nonlinearity: t.nonlinearity.clone(),
            lambda: t.lambda,
            reaches_history: t.measure.support_bound().is_some(),
        })
        .collect();
    solve_terms(&terms, None, psi, plan)
}

/// `z'(t) = ∫_{[0,t]} μ(ds) f(z(t−s)) + h(t)`, `z(0) = ψ₀`.
pub fn solve_forced_volterra(
    mu: &Measure,
    nl: &Nonlinearity,
    forcing: &ForcingTerm,
    psi0: f64,
    plan: &MeshPlan,
) -> Result<Solution> {
    let terms = vec![Term { measure: mu.clone(), nonlinearity: nl.clone(), lambda: 1.0, reaches_history: false }];
    solve_terms(&terms, Some(forcing), &HistoryFunction::constant(0.0, psi0)?, plan)
}

/// Rewrites the delay equation with `μ₁` on `[0, τ]` as a forced Volterra
/// equation: `μ = μ₁` restricted to `[0, τ]` and
/// `h(t) = ∫_{(t,τ]} μ₁(ds) f(ψ(t−s))` for `t < τ`.
///
/// The forcing integrates over `(t, τ]` so that an atom at `s = t` is
/// counted once, by the convolution.
pub fn convert_dde_to_volterra(
    mu1: &Measure,
    nl: &Nonlinearity,
    psi: &HistoryFunction,
) -> Result<(Measure, ForcingTerm)> {
    let tau = reach(mu1)?;
    let psi = psi.covering(tau)?;
    let mu = mu1.clone().with_support_bound(tau)?;
    let m = mu.clone();
    let f = nl.clone();
    let h = move |t: f64| {
        let atoms: f64 = m
            .atoms()
            .iter()
            .filter(|a| a.location > t)
            .map(|a| a.mass * f.value(psi.eval(t - a.location)))
            .sum();
        let dens: f64 = m
            .densities()
            .iter()
            .map(|d| {
                crate::quadrature::adaptive_simpson(
                    |s| d.density(s) * f.value(psi.eval(t - s)),
                    t,
                    tau,
                    1e-15,
                    1e-12,
                )
                .unwrap_or(f64::NAN)
            })
            .sum();
        atoms + dens
    };
    Ok((mu, ForcingTerm::new(tau, h)))
}

/// Largest delay of a measure that reads the history.
fn reach(m: &Measure) -> Result<f64> {
    let atoms = m.atoms().iter().filter(|a| a.mass > 0.0).map(|a| a.location).fold(0.0, f64::max);
    match m.support_bound() {
        Some(b) => Ok(b.max(atoms)),
        None if m.densities().iter().all(|d| d.scale == 0.0) => Ok(atoms),
        None => Err(Error::Config(
            "a density that reaches into the history needs a support bound".into(),
        )),
    }
}

enum DensityPath {
    Recursive(ExpConvolution),
    Direct { component: DensityComponent, window: f64 },
}

struct PreparedTerm<'a> {
    term: &'a Term,
    atom_units: Vec<Option<u64>>,
    paths: Vec<DensityPath>,
    /// Density mass beyond the windows.
    tail: f64,
    window: Option<f64>,
    /// `f` at each accepted node.
    fvals: Vec<f64>,
}

impl PreparedTerm<'_> {
    fn f(&self, x: f64) -> f64 {
        self.term.nonlinearity.value(x)
    }
}

fn prepare<'a>(term: &'a Term, plan: &MeshPlan, warnings: &mut Vec<String>) -> Result<PreparedTerm<'a>> {
    let m = &term.measure;
    let atom_units = m.atoms().iter().map(|a| to_units(a.location, plan.h0).ok()).collect();
    let infinite = m.is_infinite();
    if infinite && !plan.allow_infinite_mass {
        return Err(Error::Config(
            "measure has infinite mass; enable the infinite-mass mode in the mesh plan".into(),
        ));
    }
    if infinite {
        warnings.push("infinite mass: convolution window grows with t, cost is quadratic".into());
    }
    let bound = m.support_bound();
    let direct_window = if term.reaches_history || bound.is_some() {
        bound.unwrap_or(0.0)
    } else if infinite {
        f64::INFINITY
    } else {
        let unbounded_direct: Vec<DensityComponent> = m
            .densities()
            .iter()
            .filter(|d| !matches!(d.kind, DensityKind::Exponential { .. }))
            .cloned()
            .collect();
        if unbounded_direct.is_empty() {
            f64::INFINITY
        } else {
            Measure::new(Vec::new(), unbounded_direct, None)?.truncation_horizon(EPS_TAIL)?
        }
    };
    let mut paths = Vec::new();
    let mut tail = 0.0;
    for d in m.densities() {
        match d.kind {
            DensityKind::Exponential { rate } if !term.reaches_history && bound.is_none() => {
                paths.push(DensityPath::Recursive(ExpConvolution::new(rate, d.scale)?));
            }
            _ => {
                if direct_window.is_finite() && bound.is_none() {
                    let single = Measure::new(Vec::new(), vec![d.clone()], None)?;
                    tail += single.tail_mass(direct_window)?;
                }
                paths.push(DensityPath::Direct { component: d.clone(), window: direct_window });
            }
        }
    }
    let window = (direct_window.is_finite() && bound.is_none() && !term.reaches_history
        && paths.iter().any(|p| matches!(p, DensityPath::Direct { .. })))
    .then_some(direct_window);
    Ok(PreparedTerm { term, atom_units, paths, tail, window, fvals: Vec::new() })
}

/// Product-trapezoid integral of `g` over the s-interval `[s_lo, s_hi]`,
/// where `g(s_lo) = g_lo`, `g(s_hi) = g_hi`, clipped to `s < window`.
#[inline]
fn interval(m: &Measure, d: &DensityComponent, s_lo: f64, s_hi: f64, g_lo: f64, g_hi: f64, window: f64) -> f64 {
    let hi = s_hi.min(window);
    if hi <= s_lo {
        return 0.0;
    }
    let (m0, m1) = m.component_moments(d, s_lo, hi);
    if m0 == 0.0 {
        return 0.0;
    }
    g_lo * m0 + (g_hi - g_lo) * m1 / (s_hi - s_lo)
}

struct Engine<'a> {
    terms: Vec<PreparedTerm<'a>>,
    forcing: Option<&'a ForcingTerm>,
    psi: HistoryFunction,
    mesh: Mesh,
    x: Vec<f64>,
    dx: Vec<f64>,
}

/// Parts of the right-hand side at `t_{n+1}` that are affine in
/// `f_j(x_{n+1})`: `known + Σ_j new_weight_j f_j(X)` plus atoms landing
/// inside the newest step.
struct StepRhs {
    known: f64,
    new_weight: Vec<f64>,
    /// `(term, mass, fraction of the step from t_n)` for atoms read inside
    /// the newest interval.
    inside: Vec<(usize, f64, f64)>,
}

impl Engine<'_> {
    fn lookup_f(&self, j: usize, u: f64, upto: usize) -> f64 {
        // linear interpolation of x between accepted nodes
        let times = &self.mesh.times[..upto];
        let i = times.partition_point(|&s| s <= u).clamp(1, upto.max(2) - 1);
        if i >= upto {
            return self.terms[j].fvals[upto - 1];
        }
        let (a, b) = (times[i - 1], times[i]);
        if u == b {
            return self.terms[j].fvals[i];
        }
        if u == a {
            return self.terms[j].fvals[i - 1];
        }
        let x = self.x[i - 1] + (self.x[i] - self.x[i - 1]) * (u - a) / (b - a);
        self.terms[j].f(x)
    }

    /// Right-hand side split at step `n → n+1`.
    fn split(&self, n: usize) -> StepRhs {
        let t = self.mesh.times[n + 1];
        let tn = self.mesh.times[n];
        let h = t - tn;
        let node_units = self.mesh.units[n + 1];
        let mut known = self.forcing.map_or(0.0, |f| f.eval(t));
        let mut new_weight = vec![0.0; self.terms.len()];
        let mut inside = Vec::new();
        for (j, pt) in self.terms.iter().enumerate() {
            let m = &pt.term.measure;
            for (atom, units) in m.atoms().iter().zip(&pt.atom_units) {
                if atom.mass == 0.0 {
                    continue;
                }
                if atom.location == 0.0 {
                    new_weight[j] += atom.mass;
                    continue;
                }
                let u = t - atom.location;
                if let (Some(a), true) = (units, node_units != OFF_GRID) {
                    if *a <= node_units {
                        let target = node_units - a;
                        if let Some(i) = self.mesh.find_units(target, n + 1) {
                            known += atom.mass * pt.fvals[i];
                            continue;
                        }
                    }
                }
                if u > tn {
                    inside.push((j, atom.mass, (u - tn) / h));
                } else if u >= 0.0 {
                    known += atom.mass * self.lookup_f(j, u, n + 1);
                } else if pt.term.reaches_history {
                    known += atom.mass * pt.f(self.psi.eval(u));
                }
            }
            for path in &pt.paths {
                match path {
                    DensityPath::Recursive(c) => {
                        let mut c = c.clone();
                        let (d, wn, wo) = c.weights(h);
                        known += d * c.value() + wo * pt.fvals[n];
                        new_weight[j] += wn;
                    }
                    DensityPath::Direct { component, window } => {
                        let w = *window;
                        // newest interval: s ∈ [0, h], g(0) = f(X), g(h) = f(x_n)
                        let hi = h.min(w);
                        if hi > 0.0 {
                            let (m0, m1) = m.component_moments(component, 0.0, hi);
                            new_weight[j] += m0 - m1 / h;
                            known += m1 / h * pt.fvals[n];
                        }
                        let start = if w.is_finite() {
                            self.mesh.times[..=n].partition_point(|&s| s <= t - w).saturating_sub(1)
                        } else {
                            0
                        };
                        for i in start..n {
                            let s_lo = t - self.mesh.times[i + 1];
                            let s_hi = t - self.mesh.times[i];
                            known += interval(m, component, s_lo, s_hi, pt.fvals[i + 1], pt.fvals[i], w);
                        }
                        if pt.term.reaches_history && t < w {
                            known += self.history_part(pt, component, t, w);
                        }
                    }
                }
            }
        }
        StepRhs { known, new_weight, inside }
    }

    /// `∫_{[t, w]} k(s) f(ψ(t − s)) ds` by product trapezoid.
    fn history_part(&self, pt: &PreparedTerm, d: &DensityComponent, t: f64, w: f64) -> f64 {
        let m = &pt.term.measure;
        let ds = (w - t) / HISTORY_PANELS as f64;
        let mut total = 0.0;
        let mut s_lo = t;
        let mut g_lo = pt.f(self.psi.eval(0.0));
        for k in 1..=HISTORY_PANELS {
            let s_hi = if k == HISTORY_PANELS { w } else { t + ds * k as f64 };
            let g_hi = pt.f(self.psi.eval(t - s_hi));
            total += interval(m, d, s_lo, s_hi, g_lo, g_hi, f64::INFINITY);
            s_lo = s_hi;
            g_lo = g_hi;
        }
        total
    }

    fn eval(&self, rhs: &StepRhs, n: usize, x_new: f64) -> f64 {
        let mut v = rhs.known;
        for (j, pt) in self.terms.iter().enumerate() {
            if rhs.new_weight[j] != 0.0 {
                v += rhs.new_weight[j] * pt.f(x_new);
            }
        }
        for &(j, mass, frac) in &rhs.inside {
            let x = self.x[n] + frac * (x_new - self.x[n]);
            v += mass * self.terms[j].f(x);
        }
        v
    }

    fn initial_rhs(&self) -> f64 {
        let x0 = self.x[0];
        let mut v = self.forcing.map_or(0.0, |f| f.eval(0.0));
        for pt in &self.terms {
            let m = &pt.term.measure;
            for atom in m.atoms() {
                if atom.location == 0.0 {
                    v += atom.mass * pt.f(x0);
                } else if pt.term.reaches_history {
                    v += atom.mass * pt.f(self.psi.eval(-atom.location));
                }
            }
            if pt.term.reaches_history {
                for path in &pt.paths {
                    if let DensityPath::Direct { component, window } = path {
                        v += self.history_part(pt, component, 0.0, *window);
                    }
                }
            }
        }
        v
    }

    fn commit(&mut self, n: usize, x_new: f64) {
        let h = self.mesh.times[n + 1] - self.mesh.times[n];
        for pt in &mut self.terms {
            let f_old = pt.fvals[n];
            let f_new = pt.term.nonlinearity.value(x_new);
            for path in &mut pt.paths {
                if let DensityPath::Recursive(c) = path {
                    c.advance(h, f_old, f_new);
                }
            }
            pt.fvals.push(f_new);
        }
        self.x.push(x_new);
    }
}

fn check_state(t: f64, x: f64, prev: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() && x >= prev {
        Ok(())
    } else {
        Err(Error::NonPositiveState { time: t, value: x })
    }
}

/// Solves the general equation given as a list of terms and an optional
/// forcing.
pub fn solve_terms(
    terms: &[Term],
    forcing: Option<&ForcingTerm>,
    psi: &HistoryFunction,
    plan: &MeshPlan,
) -> Result<Solution> {
    plan.validate()?;
    if terms.is_empty() {
        return Err(Error::InvalidArgument("no terms to integrate".into()));
    }
    let mut warnings = Vec::new();
    let mut tau: f64 = 0.0;
    let mut atoms = Vec::new();
    for term in terms {
        if term.reaches_history {
            tau = tau.max(reach(&term.measure)?);
        }
        if !(term.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("term weight must be nonnegative, got {}", term.lambda)));
        }
        atoms.extend(term.measure.atoms().iter().filter(|a| a.mass > 0.0).map(|a| a.location));
    }
    let psi = psi.covering(tau)?;
    let mesh = build_mesh(plan, &atoms)?;
    let prepared = terms.iter().map(|t| prepare(t, plan, &mut warnings)).collect::<Result<Vec<_>>>()?;

    let term_masses: Vec<Mass> = terms.iter().map(|t| t.measure.total_mass()).collect();
    let mass = terms.iter().zip(&term_masses).filter(|(t, _)| t.lambda > 0.0).try_fold(0.0, |acc, (_, m)| {
        m.finite().map(|v| acc + v)
    });
    let mass = mass.map_or(Mass::Infinite, Mass::Finite);
    let truncation_horizons = prepared.iter().map(|p| p.window).collect();

    let x0 = psi.eval(0.0);
    let mut eng = Engine { terms: prepared, forcing, psi, mesh, x: vec![x0], dx: Vec::new() };
    for pt in &mut eng.terms {
        let f0 = pt.term.nonlinearity.eval_f(x0)?;
        pt.fvals.push(f0);
    }
    let d0 = eng.initial_rhs();
    check_rhs(0.0, d0)?;
    eng.dx.push(d0);

    let mut bound: f64 = 0.0;
    let f_start: Vec<f64> = eng.terms.iter().map(|p| p.fvals[0]).collect();
    for n in 0..eng.mesh.len() - 1 {
        let t = eng.mesh.times[n + 1];
        let h = t - eng.mesh.times[n];
        let rhs = eng.split(n);
        let xn = eng.x[n];
        let x_pred = xn + h * eng.dx[n];
        let d_pred = eng.eval(&rhs, n, x_pred);
        let x_new = xn + 0.5 * h * (eng.dx[n] + d_pred);
        check_state(t, x_new, xn)?;
        let d_new = eng.eval(&rhs, n, x_new);
        check_rhs(t, d_new)?;
        eng.commit(n, x_new);
        eng.dx.push(d_new);
        let mut tail = 0.0;
        for (pt, f0) in eng.terms.iter().zip(&f_start) {
            if pt.tail > 0.0 && pt.window.is_some_and(|w| t > w) {
                tail += pt.tail * f0.max(pt.fvals[n + 1]);
            }
        }
        if tail > 0.0 {
            bound = bound.max(tail / d_new.max(f64::MIN_POSITIVE));
        }
    }

    let meta = SolutionMeta {
        nonlinearity_id: nonlinearity_label(terms),
        term_masses,
        mass,
        truncation_horizons,
        truncation_error_bound: bound,
        plan: Some(plan.clone()),
        warnings,
        exact: false,
    };
    Solution::new(eng.mesh.times, eng.x, eng.dx, meta)
}

fn check_rhs(t: f64, d: f64) -> Result<()> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(Error::Invariant(format!("right-hand side is {d} at t = {t}")))
    }
}

fn nonlinearity_label(terms: &[Term]) -> String {
    let mut ids: Vec<&str> = terms.iter().map(|t| t.nonlinearity.id()).collect();
    ids.dedup();
    ids.join("+")
}
