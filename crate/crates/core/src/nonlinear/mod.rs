//! Nonlinearities `f`, their asymptotes `φ` and the registry of named
//! families used by the scenario catalog.

mod spiky;

pub use spiky::{BaseDerivative, SpikyNonlinearity, SpikySpec};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared real function of one variable.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Shape class of the asymptote `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoteClass {
    /// `φ ∈ C¹`, `φ' > 0` and `φ' → 0`: the smooth sublinear class.
    SmoothSublinear,
    /// `φ` strictly decreasing.
    Decreasing,
    /// Declared asymptote without a shape guarantee.
    Unclassified,
}

#[derive(Clone)]
pub struct Asymptote {
    pub class: AsymptoteClass,
    eval: RealFn,
    /// `φ` coincides with `f`, so `f`'s closed forms also describe `φ`.
    exact: bool,
}

impl Asymptote {
    pub fn new(class: AsymptoteClass, eval: RealFn) -> Self {
        Self { class, eval, exact: false }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }
}

/// Closed forms of `F(x) = ∫_1^x du/f(u)` and its inverse.
#[derive(Clone)]
pub struct ClosedForms {
    pub transform: RealFn,
    pub inverse: RealFn,
    /// `inf F = F(0+)`; `F⁻¹` is defined strictly above it.
    pub infimum: f64,
}

/// The nonlinearity `f` with the metadata the diagnostics need.
#[derive(Clone)]
pub struct Nonlinearity {
    id: String,
    eval: RealFn,
    log_eval: Option<RealFn>,
    asymptote: Option<Asymptote>,
    rv_index: Option<f64>,
    closed_forms: Option<ClosedForms>,
    lower_bound: Option<f64>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("id", &self.id)
            .field("asymptote", &self.asymptote.as_ref().map(|a| a.class))
            .field("rv_index", &self.rv_index)
            .field("closed_forms", &self.closed_forms.is_some())
            .field("lower_bound", &self.lower_bound)
            .finish()
    }
}

impl Nonlinearity {
    pub fn custom(id: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            id: id.into(),
            eval: Arc::new(eval),
            log_eval: None,
            asymptote: None,
            rv_index: None,
            closed_forms: None,
            lower_bound: None,
        }
    }

    pub fn with_asymptote(
        mut self,
        class: AsymptoteClass,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.asymptote = Some(Asymptote::new(class, Arc::new(phi)));
        self
    }

    /// Declares `φ = f`.
    pub fn with_self_asymptote(mut self, class: AsymptoteClass) -> Self {
        self.asymptote = Some(Asymptote { class, eval: self.eval.clone(), exact: true });
        self
    }

    pub fn with_rv_index(mut self, beta: f64) -> Self {
        self.rv_index = Some(beta);
        self
    }

    pub fn with_closed_forms(
        mut self,
        transform: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
        infimum: f64,
    ) -> Self {
        self.closed_forms = Some(ClosedForms {
            transform: Arc::new(transform),
            inverse: Arc::new(inverse),
            infimum,
        });
        self
    }

    pub fn with_lower_bound(mut self, bound: f64) -> Self {
        self.lower_bound = Some(bound);
        self
    }

    /// Supplies `ln f` directly, for nonlinearities whose values underflow.
    pub fn with_log_eval(mut self, log_f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.log_eval = Some(Arc::new(log_f));
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn asymptote(&self) -> Option<&Asymptote> {
        self.asymptote.as_ref()
    }

    pub fn rv_index(&self) -> Option<f64> {
        self.rv_index
    }

    pub fn closed_forms(&self) -> Option<&ClosedForms> {
        self.closed_forms.as_ref()
    }

    pub fn lower_bound(&self) -> Option<f64> {
        self.lower_bound
    }

    /// Unchecked evaluation for hot loops.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// `ln f(x)`.
    pub fn log_value(&self, x: f64) -> f64 {
        match &self.log_eval {
            Some(g) => g(x),
            None => self.value(x).ln(),
        }
    }

    /// Evaluates `f`, rejecting arguments outside `[0, ∞)` and nonpositive
    /// or non-finite results.
    pub fn eval_f(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "nonlinearity `{}` evaluated at {x}",
                self.id
            )));
        }
        let v = self.value(x);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Invariant(format!(
                "nonlinearity `{}` returned {v} at x = {x}; values must be positive",
                self.id
            )))
        }
    }

    /// The asymptote `φ` packaged as a nonlinearity of its own.
    pub fn asymptote_nonlinearity(&self) -> Result<Nonlinearity> {
        let asym = self.asymptote.as_ref().ok_or_else(|| {
            Error::Unsupported(format!("nonlinearity `{}` declares no asymptote", self.id))
        })?;
        Ok(Nonlinearity {
            id: format!("asymptote-of-{}", self.id),
            eval: asym.eval.clone(),
            log_eval: if asym.exact { self.log_eval.clone() } else { None },
            asymptote: Some(Asymptote { class: asym.class, eval: asym.eval.clone(), exact: true }),
            rv_index: self.rv_index,
            closed_forms: if asym.exact { self.closed_forms.clone() } else { None },
            lower_bound: None,
        })
    }

    /// `λ f` for a positive weight.
    pub fn scaled(&self, weight: f64) -> Result<Nonlinearity> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale weight must be positive, got {weight}")));
        }
        let eval = self.eval.clone();
        let mut out = Nonlinearity::custom(format!("{weight}*{}", self.id), move |x| weight * eval(x));
        if let Some(a) = &self.asymptote {
            let phi = a.eval.clone();
            out.asymptote = Some(Asymptote {
                class: a.class,
                eval: Arc::new(move |x| weight * phi(x)),
                exact: a.exact,
            });
        }
        if let Some(cf) = &self.closed_forms {
            let (t, i) = (cf.transform.clone(), cf.inverse.clone());
            out.closed_forms = Some(ClosedForms {
                transform: Arc::new(move |x| t(x) / weight),
                inverse: Arc::new(move |y| i(weight * y)),
                infimum: cf.infimum / weight,
            });
        }
        out.rv_index = self.rv_index;
        out.lower_bound = self.lower_bound.map(|b| b * weight);
        Ok(out)
    }
}

// --- registry ---------------------------------------------------------------

/// `f ≡ c`.
pub fn constant(c: f64) -> Result<Nonlinearity> {
    positive("constant", "c", c)?;
    Ok(Nonlinearity::custom(format!("constant({c})"), move |_| c)
        .with_asymptote(AsymptoteClass::Unclassified, move |_| c)
        .with_rv_index(0.0)
        .with_lower_bound(c)
        .with_closed_forms(move |x| (x - 1.0) / c, move |y| 1.0 + c * y, -1.0 / c))
}

/// `f(x) = x^β`, `0 < β < 1`.
pub fn power(beta: f64) -> Result<Nonlinearity> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("power index must lie in (0, 1), got {beta}")));
    }
    let q = 1.0 - beta;
    Ok(Nonlinearity::custom(format!("power({beta})"), move |x| x.powf(beta))
        .with_self_asymptote(AsymptoteClass::SmoothSublinear)
        .with_rv_index(beta)
        .with_log_eval(move |x| beta * x.ln())
        .with_closed_forms(
            move |x| (x.powf(q) - 1.0) / q,
            move |y| (1.0 + q * y).powf(1.0 / q),
            -1.0 / q,
        ))
}

/// `f(x) = x^β (ln(e + x))^α`, asymptotic to `x^β (log x)^α`.
pub fn power_log(beta: f64, alpha: f64) -> Result<Nonlinearity> {
    if !(beta > 0.0 && beta < 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "power-log needs β in (0, 1) and finite α, got β = {beta}, α = {alpha}"
        )));
    }
    let class = if alpha >= 0.0 { AsymptoteClass::SmoothSublinear } else { AsymptoteClass::Unclassified };
    Ok(Nonlinearity::custom(format!("power-log({beta},{alpha})"), move |x| {
        x.powf(beta) * (std::f64::consts::E + x).ln().powf(alpha)
    })
    .with_self_asymptote(class)
    .with_rv_index(beta))
}

/// `f(x) = (1 + x) / (ln(e + x))^α`, asymptotic to `x / (log x)^α`.
pub fn x_over_log(alpha: f64) -> Result<Nonlinearity> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!("x-over-log needs α in (0, 2], got {alpha}")));
    }
    Ok(Nonlinearity::custom(format!("x-over-log({alpha})"), move |x| {
        (1.0 + x) / (std::f64::consts::E + x).ln().powf(alpha)
    })
    .with_self_asymptote(AsymptoteClass::SmoothSublinear)
    .with_rv_index(1.0))
}

/// `f(x) = e^{-αx}`.
pub fn exp_decay(alpha: f64) -> Result<Nonlinearity> {
    positive("exp-decay", "α", alpha)?;
    let ea = alpha.exp();
    Ok(Nonlinearity::custom(format!("exp-decay({alpha})"), move |x| (-alpha * x).exp())
        .with_self_asymptote(AsymptoteClass::Decreasing)
        .with_log_eval(move |x| -alpha * x)
        .with_closed_forms(
            move |x| ((alpha * x).exp() - ea) / alpha,
            move |y| (ea + alpha * y).ln() / alpha,
            (1.0 - ea) / alpha,
        ))
}

/// `f(x) = (1 + x)^{-β}`, asymptotic to `x^{-β}`.
pub fn power_decay(beta: f64) -> Result<Nonlinearity> {
    positive("power-decay", "β", beta)?;
    let q = beta + 1.0;
    let two_q = 2f64.powf(q);
    Ok(Nonlinearity::custom(format!("power-decay({beta})"), move |x| (1.0 + x).powf(-beta))
        .with_self_asymptote(AsymptoteClass::Decreasing)
        .with_rv_index(-beta)
        .with_log_eval(move |x| -beta * x.ln_1p())
        .with_closed_forms(
            move |x| ((1.0 + x).powf(q) - two_q) / q,
            move |y| (q * y + two_q).powf(1.0 / q) - 1.0,
            (1.0 - two_q) / q,
        ))
}

/// `f(x) = exp(ℓ^{1/3} cos ℓ^{1/3})` with `ℓ = ln(2 + x)`: slowly varying,
/// with `liminf f = 0` and `limsup f = ∞`.
pub fn rv_osc() -> Nonlinearity {
    let log_f = |x: f64| {
        let c = (2.0 + x).ln().cbrt();
        c * c.cos()
    };
    Nonlinearity::custom("rv-osc", move |x| log_f(x).exp()).with_rv_index(0.0).with_log_eval(log_f)
}

/// `f(x) = exp(√ln(e + x))`: slowly varying, increasing, bounded below by `e`.
pub fn exp_sqrt_log() -> Nonlinearity {
    let log_f = |x: f64| (std::f64::consts::E + x).ln().sqrt();
    Nonlinearity::custom("exp-sqrt-log", move |x| log_f(x).exp())
        .with_self_asymptote(AsymptoteClass::SmoothSublinear)
        .with_rv_index(0.0)
        .with_lower_bound(std::f64::consts::E)
        .with_log_eval(log_f)
}

fn positive(family: &str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{family}: {name} must be positive, got {v}")))
    }
}

/// Names accepted by [`from_registry`].
pub const REGISTRY_NAMES: &[&str] = &[
    "constant",
    "power",
    "power-log",
    "x-over-log",
    "exp-decay",
    "power-decay",
    "rv-osc",
    "exp-sqrt-log",
    "spiky",
];

/// Builds a registry member from its name and numeric parameters.
///
/// `spiky` takes `eta_exponent` (`η(x) = (1+x)^{-p}`), `height`, `width_ratio`
/// (`w_n = r^n`) and `f0`.
pub fn from_registry(name: &str, params: &BTreeMap<String, f64>) -> Result<Nonlinearity> {
    let get = |key: &str| -> Result<f64> {
        params.get(key).copied().ok_or_else(|| {
            Error::Config(format!("nonlinearity `{name}` requires parameter `{key}`"))
        })
    };
    let get_or = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    let nl = match name {
        "constant" => constant(get("c")?)?,
        "power" => power(get("beta")?)?,
        "power-log" => power_log(get("beta")?, get("alpha")?)?,
        "x-over-log" => x_over_log(get("alpha")?)?,
        "exp-decay" => exp_decay(get("alpha")?)?,
        "power-decay" => power_decay(get("beta")?)?,
        "rv-osc" => rv_osc(),
        "exp-sqrt-log" => exp_sqrt_log(),
        "spiky" => {
            let height = get_or("height", 1.0);
            let ratio = get_or("width_ratio", 0.25);
            let spec = SpikySpec::new(
                BaseDerivative::ShiftedPower { exponent: get_or("eta_exponent", 0.5) },
                move |_| height,
                move |n| ratio.powi(n as i32),
                get_or("f0", 1.0),
            );
            SpikyNonlinearity::build(spec)?.into_nonlinearity()
        }
        other => {
            return Err(Error::Config(format!(
                "unknown nonlinearity `{other}`; expected one of {REGISTRY_NAMES:?}"
            )))
        }
    };
    Ok(nl)
}

// --- checks -------------------------------------------------------------

/// `f(x)/φ(x)` along the probes.
pub fn check_fasym(nl: &Nonlinearity, probes: &[f64]) -> Result<Vec<f64>> {
    let asym = nl.asymptote().ok_or_else(|| {
        Error::Unsupported(format!("nonlinearity `{}` declares no asymptote", nl.id()))
    })?;
    probes.iter().map(|&x| Ok(nl.eval_f(x)? / asym.eval(x))).collect()
}

/// Result of [`rv_index_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct RvEstimate {
    /// Median over all accepted `(probe, λ)` pairs.
    pub index: f64,
    /// Median over `λ` at each accepted probe, in probe order.
    pub per_probe: Vec<(f64, f64)>,
    /// Probes dropped because some `f(λx)` was not representable.
    pub rejected: Vec<f64>,
    /// The per-probe estimates drift by more than one unit: no finite index.
    pub not_regularly_varying: bool,
}

/// Estimates the index of regular variation as the median of
/// `ln(f(λx)/f(x)) / ln λ`.
pub fn rv_index_estimate(nl: &Nonlinearity, probes: &[f64], lambdas: &[f64]) -> Result<RvEstimate> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0) || *l == 1.0) {
        return Err(Error::InvalidArgument("λ values must be positive and different from 1".into()));
    }
    let mut all = Vec::new();
    let mut per_probe = Vec::new();
    let mut rejected = Vec::new();
    for &x in probes {
        let base = nl.log_value(x);
        let mut here = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            let scaled = nl.log_value(l * x);
            if !(base.is_finite() && scaled.is_finite()) {
                here.clear();
                break;
            }
            here.push((scaled - base) / l.ln());
        }
        if here.is_empty() {
            rejected.push(x);
            continue;
        }
        all.extend_from_slice(&here);
        per_probe.push((x, median(&mut here)));
    }
    if all.is_empty() {
        return Err(Error::Invariant("every probe was rejected".into()));
    }
    let drift = match (per_probe.first(), per_probe.last()) {
        (Some(a), Some(b)) => (b.1 - a.1).abs(),
        _ => 0.0,
    };
    Ok(RvEstimate {
        index: median(&mut all),
        per_probe,
        rejected,
        not_regularly_varying: drift > 1.0,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
