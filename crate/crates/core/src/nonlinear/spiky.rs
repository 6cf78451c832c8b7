//! Nonlinearities built from a prescribed derivative: `f' = η` away from the
//! integers, with a tent of height `h_n` and width `w_n` starting at each
//! integer `n ≥ 1`.

use std::sync::{Arc, RwLock};

use super::{AsymptoteClass, Nonlinearity, RealFn};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, shifted_power_integral};

/// The base derivative `η`, positive and decreasing.
#[derive(Clone)]
pub enum BaseDerivative {
    /// `η(x) = (1 + x)^{-p}`, `p > 0`.
    ShiftedPower { exponent: f64 },
    /// Arbitrary `η`; integrals are computed by adaptive quadrature.
    Custom(RealFn),
}

impl BaseDerivative {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::ShiftedPower { exponent } => (1.0 + x).powf(-exponent),
            Self::Custom(eta) => eta(x),
        }
    }

    /// `∫_a^b η`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::ShiftedPower { exponent } => shifted_power_integral(*exponent, a, b),
            Self::Custom(eta) => {
                adaptive_simpson(|u| eta(u), a, b, 1e-15, 1e-13).unwrap_or(f64::NAN)
            }
        }
    }
}

pub type Sequence = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SpikySpec {
    pub eta: BaseDerivative,
    pub heights: Sequence,
    pub widths: Sequence,
    /// `f(0)`.
    pub f0: f64,
}

impl SpikySpec {
    pub fn new(
        eta: BaseDerivative,
        heights: impl Fn(u64) -> f64 + Send + Sync + 'static,
        widths: impl Fn(u64) -> f64 + Send + Sync + 'static,
        f0: f64,
    ) -> Self {
        Self { eta, heights: Arc::new(heights), widths: Arc::new(widths), f0 }
    }
}

/// Integers checked eagerly at construction.
const EAGER_CHECK: u64 = 100;
const BLOCK: usize = 32;
/// Consecutive negligible spikes after which the integer values are no
/// longer tabulated.
const SATURATION_RUN: usize = 64;

#[derive(Default)]
struct Table {
    /// `values[k] = f(k + 1)`.
    values: Vec<f64>,
    negligible_run: usize,
    /// Past this integer every spike is narrower than the spacing of floats
    /// and adds less than one ulp, so `f = f(n_sat) + ∫η` there.
    saturated_at: Option<u64>,
}

/// The assembled nonlinearity. Values at integers are chained exactly, so
/// `f(n⁻)` and `f(n⁺)` are the same floating point number.
pub struct SpikyNonlinearity {
    spec: SpikySpec,
    table: RwLock<Table>,
}

impl SpikyNonlinearity {
    pub fn build(spec: SpikySpec) -> Result<Arc<Self>> {
        if !(spec.f0 > 0.0 && spec.f0.is_finite()) {
            return Err(Error::Construction(format!("f(0) must be positive, got {}", spec.f0)));
        }
        if let BaseDerivative::ShiftedPower { exponent } = spec.eta {
            if !(exponent > 0.0 && exponent.is_finite()) {
                return Err(Error::Construction(format!("η exponent must be positive, got {exponent}")));
            }
        }
        let mut prev_eta = spec.eta.eval(0.0);
        for n in 1..=EAGER_CHECK {
            let eta = spec.eta.eval(n as f64);
            if !(eta > 0.0 && eta < prev_eta) {
                return Err(Error::Construction(format!("η must be positive and decreasing; η({n}) = {eta}")));
            }
            prev_eta = eta;
            check_spike(&spec, n)?;
        }
        let this = Arc::new(Self { spec, table: RwLock::new(Table::default()) });
        this.integer_value(EAGER_CHECK + 1);
        Ok(this)
    }

    pub fn spec(&self) -> &SpikySpec {
        &self.spec
    }

    /// `φ(x) = ∫_0^x η`.
    pub fn asymptote(&self, x: f64) -> f64 {
        self.spec.eta.integral(0.0, x)
    }

    /// `f(n)` for an integer `n ≥ 1`.
    pub fn integer_value(&self, n: u64) -> f64 {
        assert!(n >= 1, "integer values start at 1");
        {
            let t = self.table.read().expect("spiky table poisoned");
            if let Some(v) = lookup(&t, &self.spec, n) {
                return v;
            }
        }
        let mut t = self.table.write().expect("spiky table poisoned");
        while lookup(&t, &self.spec, n).is_none() {
            self.extend(&mut t);
        }
        lookup(&t, &self.spec, n).unwrap()
    }

    fn extend(&self, t: &mut Table) {
        let target = (t.values.len() / BLOCK + 1) * BLOCK;
        while t.values.len() < target && t.saturated_at.is_none() {
            let next = match t.values.last() {
                None => self.spec.f0 + self.spec.eta.integral(0.0, 1.0),
                Some(&fn_) => {
                    let n = t.values.len() as u64;
                    let v = if check_spike(&self.spec, n).is_ok() {
                        self.local(n, fn_, 1.0)
                    } else {
                        f64::NAN
                    };
                    let w = (self.spec.widths)(n);
                    let smooth = fn_ + self.spec.eta.integral(n as f64, n as f64 + 1.0);
                    if w < f64::EPSILON * n as f64 && v == smooth {
                        t.negligible_run += 1;
                    } else {
                        t.negligible_run = 0;
                    }
                    v
                }
            };
            t.values.push(next);
            if t.negligible_run >= SATURATION_RUN && t.values.len() as u64 > EAGER_CHECK {
                t.saturated_at = Some(t.values.len() as u64);
            }
        }
    }

    /// `f(n + u)` for `u ∈ [0, 1]`, given `f(n)`.
    fn local(&self, n: u64, fn_: f64, u: f64) -> f64 {
        let eta = &self.spec.eta;
        let nf = n as f64;
        let h = (self.spec.heights)(n);
        let w = (self.spec.widths)(n);
        let eta_n = eta.eval(nf);
        if u < 0.5 * w {
            fn_ + u * eta_n + (h - eta_n) / w * u * u
        } else if u <= w {
            let v = u - 0.5 * w;
            let mid = fn_ + 0.25 * w * (eta_n + h);
            mid + h * v + (eta.eval(nf + w) - h) / w * v * v
        } else {
            let end = fn_ + 0.5 * h * w + 0.25 * w * (eta_n + eta.eval(nf + w));
            end + eta.integral(nf + w, nf + u)
        }
    }

    /// `f(n + u)` with the offset `u ∈ [0, 1]` given separately, so that
    /// spikes narrower than the float spacing near `n` stay resolvable.
    pub fn eval_local(&self, n: u64, u: f64) -> f64 {
        if n == 0 {
            return self.spec.f0 + self.spec.eta.integral(0.0, u);
        }
        if let Some(sat) = self.saturation() {
            if n >= sat {
                return self.integer_value(sat) + self.spec.eta.integral(sat as f64, n as f64 + u);
            }
        }
        self.local(n, self.integer_value(n), u)
    }

    pub fn eval(&self, x: f64) -> f64 {
        if !(x >= 0.0) {
            return f64::NAN;
        }
        if x <= 1.0 {
            return self.spec.f0 + self.spec.eta.integral(0.0, x);
        }
        if let Some(sat) = self.saturation() {
            if x >= sat as f64 {
                return self.integer_value(sat) + self.spec.eta.integral(sat as f64, x);
            }
        }
        let n = x.floor();
        self.local(n as u64, self.integer_value(n as u64), x - n)
    }

    fn saturation(&self) -> Option<u64> {
        self.table.read().expect("spiky table poisoned").saturated_at
    }

    /// Wraps the construction as a [`Nonlinearity`] with asymptote `φ`.
    pub fn into_nonlinearity(self: Arc<Self>) -> Nonlinearity {
        let label = match self.spec.eta {
            BaseDerivative::ShiftedPower { exponent } => format!("spiky(eta=(1+x)^-{exponent})"),
            BaseDerivative::Custom(_) => "spiky(custom)".to_string(),
        };
        let f = self.clone();
        let phi = self;
        Nonlinearity::custom(label, move |x| f.eval(x))
            .with_asymptote(AsymptoteClass::SmoothSublinear, move |x| phi.asymptote(x))
    }
}

fn lookup(t: &Table, spec: &SpikySpec, n: u64) -> Option<f64> {
    match t.saturated_at {
        Some(sat) if n > sat => {
            let base = t.values[sat as usize - 1];
            Some(base + spec.eta.integral(sat as f64, n as f64))
        }
        _ => t.values.get(n as usize - 1).copied(),
    }
}

fn check_spike(spec: &SpikySpec, n: u64) -> Result<()> {
    let h = (spec.heights)(n);
    let w = (spec.widths)(n);
    let eta = spec.eta.eval(n as f64);
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Construction(format!("spike width w_{n} = {w} must lie in (0, 1)")));
    }
    if !(h > eta && h.is_finite()) {
        return Err(Error::Construction(format!(
            "spike height h_{n} = {h} must exceed η({n}) = {eta}"
        )));
    }
    Ok(())
}
