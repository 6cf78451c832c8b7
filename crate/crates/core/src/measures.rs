//! Nonnegative Borel measures on the half line, stored as point masses plus
//! density components with closed-form (or exactly integrable) moments.
//!
//! Intervals use the half-open convention `[a, b)` for atom inclusion, so a
//! partition of `[0, S)` never counts an atom twice.

use crate::error::{Error, Result};
use crate::quadrature::expm1_ratio;

/// A point mass `mass · δ_location`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Shape of a density component, before scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    /// `e^{-rate · s}`
    Exponential { rate: f64 },
    /// `(1 + s)^{-(theta + 1)}`; infinite mass on the half line when `theta <= 0`.
    Power { theta: f64 },
    /// Piecewise-linear interpolant of `values` on `grid`, zero outside the grid.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityComponent {
    pub kind: DensityKind,
    pub scale: f64,
}

/// Total mass of a measure: finite, or tagged infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mass {
    Finite(f64),
    Infinite,
}

impl Mass {
    pub fn finite(self) -> Option<f64> {
        match self {
            Mass::Finite(m) => Some(m),
            Mass::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Mass::Infinite)
    }
}

impl DensityComponent {
    pub fn exponential(rate: f64, scale: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Self::checked(DensityKind::Exponential { rate }, scale)
    }

    pub fn power(theta: f64, scale: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "power exponent must be finite, got {theta}"
            )));
        }
        Self::checked(DensityKind::Power { theta }, scale)
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>, scale: f64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidArgument(
                "tabulated density needs at least two grid points and one value per point".into(),
            ));
        }
        if grid[0] < 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "tabulated grid must be nonnegative and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(
                "tabulated density values must be finite and nonnegative".into(),
            ));
        }
        Self::checked(DensityKind::Tabulated { grid, values }, scale)
    }

    fn checked(kind: DensityKind, scale: f64) -> Result<Self> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "density scale must be finite and nonnegative, got {scale}"
            )));
        }
        Ok(Self { kind, scale })
    }

    /// Density value at `s >= 0`.
    pub fn density(&self, s: f64) -> f64 {
        let raw = match &self.kind {
            DensityKind::Exponential { rate } => (-rate * s).exp(),
            DensityKind::Power { theta } => (1.0 + s).powf(-(theta + 1.0)),
            DensityKind::Tabulated { grid, values } => interpolate(grid, values, s),
        };
        self.scale * raw
    }

    /// True when the component has infinite mass on the whole half line.
    pub fn is_infinite(&self) -> bool {
        matches!(self.kind, DensityKind::Power { theta } if theta <= 0.0) && self.scale > 0.0
    }

    /// Mass on `[0, ∞)`, or `None` when infinite.
    fn mass_unbounded(&self) -> Option<f64> {
        if self.is_infinite() {
            return None;
        }
        Some(match &self.kind {
            DensityKind::Exponential { rate } => self.scale / rate,
            DensityKind::Power { theta } => {
                if self.scale == 0.0 {
                    0.0
                } else {
                    self.scale / theta
                }
            }
            DensityKind::Tabulated { grid, .. } => {
                self.moments(grid[0], grid[grid.len() - 1]).0
            }
        })
    }

    /// Mass on `(t, ∞)`, or `None` when infinite.
    fn tail_unbounded(&self, t: f64) -> Option<f64> {
        if self.is_infinite() {
            return None;
        }
        Some(match &self.kind {
            DensityKind::Exponential { rate } => self.scale * (-rate * t).exp() / rate,
            DensityKind::Power { theta } => {
                if self.scale == 0.0 {
                    0.0
                } else {
                    self.scale * (1.0 + t).powf(-theta) / theta
                }
            }
            DensityKind::Tabulated { grid, .. } => {
                let end = grid[grid.len() - 1];
                if t >= end {
                    0.0
                } else {
                    self.moments(t.max(0.0), end).0
                }
            }
        })
    }

    /// Zeroth moment and first moment about `a` of the density on `[a, b]`:
    /// `(∫_a^b k(s) ds, ∫_a^b (s - a) k(s) ds)`.
    ///
    /// These are the product-trapezoid weights: a function linear on
    /// `[a, b]` with endpoint values `g_a, g_b` integrates against the
    /// density to `g_a m0 + (g_b - g_a) m1 / (b - a)`.
    pub fn moments(&self, a: f64, b: f64) -> (f64, f64) {
        debug_assert!(0.0 <= a && a <= b);
        if b <= a || self.scale == 0.0 {
            return (0.0, 0.0);
        }
        let (m0, m1) = match &self.kind {
            DensityKind::Exponential { rate } => exponential_moments(*rate, a, b),
            DensityKind::Power { theta } => power_moments(theta + 1.0, a, b),
            DensityKind::Tabulated { grid, values } => tabulated_moments(grid, values, a, b),
        };
        (self.scale * m0, self.scale * m1)
    }
}

fn interpolate(grid: &[f64], values: &[f64], s: f64) -> f64 {
    let n = grid.len();
    if s < grid[0] || s > grid[n - 1] {
        return 0.0;
    }
    let i = match grid.partition_point(|g| *g <= s) {
        0 => 0,
        i if i >= n => n - 2,
        i => i - 1,
    };
    let w = (s - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + w * (values[i + 1] - values[i])
}

/// `1 - e^{-z}(1 + z)`, with a series where the closed form cancels.
fn first_moment_factor(z: f64) -> f64 {
    if z < 0.1 {
        // Σ_{k>=2} (-1)^k (k-1) z^k / k!
        let mut term = z * z / 2.0;
        let mut sum: f64 = 0.0;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) && k < 40.0 {
            sum += (k - 1.0) * term;
            term *= -z / (k + 1.0);
            k += 1.0;
        }
        sum
    } else {
        -(-z).exp_m1() - z * (-z).exp()
    }
}

fn exponential_moments(rate: f64, a: f64, b: f64) -> (f64, f64) {
    let z = rate * (b - a);
    let decay = (-rate * a).exp();
    let m0 = decay * -(-z).exp_m1() / rate;
    let m1 = decay * first_moment_factor(z) / (rate * rate);
    (m0, m1)
}

/// Moments of `(1+s)^{-p}`; with `A = 1 + a` and `r = (b - a)/A` the first
/// moment is `A^{2-p} ∫_0^r u (1+u)^{-p} du`.
fn power_moments(p: f64, a: f64, b: f64) -> (f64, f64) {
    let base = 1.0 + a;
    let r = (b - a) / base;
    let l = r.ln_1p();
    let m0 = base.powf(1.0 - p) * expm1_ratio(1.0 - p, l);
    let j = if r * p.max(1.0) < 0.1 {
        // Σ_k C(-p, k) r^{k+2} / (k+2); the ratio of successive terms is below 0.1
        let mut coeff = 1.0;
        let mut rk = r * r;
        let mut sum = 0.0;
        let mut k = 0.0;
        loop {
            let term = coeff * rk / (k + 2.0);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || k > 60.0 {
                break;
            }
            coeff *= (-p - k) / (k + 1.0);
            rk *= r;
            k += 1.0;
        }
        sum
    } else {
        expm1_ratio(2.0 - p, l) - expm1_ratio(1.0 - p, l)
    };
    let m1 = base.powf(2.0 - p) * j;
    (m0, m1)
}

fn tabulated_moments(grid: &[f64], values: &[f64], a: f64, b: f64) -> (f64, f64) {
    let n = grid.len();
    let lo = a.max(grid[0]);
    let hi = b.min(grid[n - 1]);
    if hi <= lo {
        return (0.0, 0.0);
    }
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    let first = grid.partition_point(|g| *g <= lo).saturating_sub(1);
    for i in first..n - 1 {
        let c = grid[i].max(lo);
        let d = grid[i + 1].min(hi);
        if d <= c {
            if grid[i] >= hi {
                break;
            }
            continue;
        }
        let slope = (values[i + 1] - values[i]) / (grid[i + 1] - grid[i]);
        let k = |s: f64| values[i] + slope * (s - grid[i]);
        let (kc, kd, km) = (k(c), k(d), k(0.5 * (c + d)));
        m0 += 0.5 * (d - c) * (kc + kd);
        // Simpson is exact for the quadratic (s - a) k(s).
        let mid = 0.5 * (c + d);
        m1 += (d - c) / 6.0 * ((c - a) * kc + 4.0 * (mid - a) * km + (d - a) * kd);
    }
    (m0, m1)
}

/// A nonnegative Borel measure on `[0, ∞)`: atoms plus density components,
/// optionally restricted to `[0, support_bound]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Measure {
    atoms: Vec<Atom>,
    densities: Vec<DensityComponent>,
    support_bound: Option<f64>,
}

impl Measure {
    pub fn new(
        atoms: Vec<Atom>,
        densities: Vec<DensityComponent>,
        support_bound: Option<f64>,
    ) -> Result<Self> {
        if let Some(bound) = support_bound {
            if !(bound >= 0.0 && bound.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "support bound must be finite and nonnegative, got {bound}"
                )));
            }
        }
        for atom in &atoms {
            if !(atom.location >= 0.0 && atom.location.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "atom location must be finite and nonnegative, got {}",
                    atom.location
                )));
            }
            if !(atom.mass >= 0.0 && atom.mass.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "atom mass must be finite and nonnegative, got {}",
                    atom.mass
                )));
            }
            if let Some(bound) = support_bound {
                if atom.location > bound {
                    return Err(Error::InvalidArgument(format!(
                        "atom at {} lies outside the support bound {bound}",
                        atom.location
                    )));
                }
            }
        }
        let mut atoms = atoms;
        atoms.sort_by(|a, b| a.location.total_cmp(&b.location));
        Ok(Self { atoms, densities, support_bound })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// `mass · δ_location` on its own.
    pub fn atom(location: f64, mass: f64) -> Result<Self> {
        Self::new(vec![Atom { location, mass }], Vec::new(), None)
    }

    pub fn exponential(rate: f64, scale: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![DensityComponent::exponential(rate, scale)?], None)
    }

    pub fn power(theta: f64, scale: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![DensityComponent::power(theta, scale)?], None)
    }

    /// Restricts the measure to `[0, bound]`.
    pub fn with_support_bound(self, bound: f64) -> Result<Self> {
        Self::new(self.atoms, self.densities, Some(bound))
    }

    /// Sum of two measures; the support bound is the larger of the two
    /// (absent if either is unbounded).
    pub fn plus(&self, other: &Measure) -> Result<Self> {
        let mixed = || {
            Err(Error::InvalidArgument(
                "cannot add densities restricted to different supports".into(),
            ))
        };
        let bound = match (self.support_bound, other.support_bound) {
            (None, None) => None,
            (Some(_), None) if !self.densities.is_empty() => return mixed(),
            (None, Some(_)) if !other.densities.is_empty() => return mixed(),
            (Some(_), None) | (None, Some(_)) => None,
            (Some(a), Some(b)) if a == b => Some(a),
            (Some(a), Some(b)) => {
                let narrower = if a < b { self } else { other };
                if !narrower.densities.is_empty() {
                    return mixed();
                }
                Some(a.max(b))
            }
        };
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        let mut densities = self.densities.clone();
        densities.extend(other.densities.iter().cloned());
        Self::new(atoms, densities, bound)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn densities(&self) -> &[DensityComponent] {
        &self.densities
    }

    pub fn support_bound(&self) -> Option<f64> {
        self.support_bound
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.iter().all(|a| a.mass == 0.0) && self.densities.iter().all(|d| d.scale == 0.0)
    }

    pub fn is_infinite(&self) -> bool {
        self.total_mass().is_infinite()
    }

    /// Sum of atom masses plus density integrals.
    pub fn total_mass(&self) -> Mass {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass).sum();
        let mut total = atoms;
        for d in &self.densities {
            match self.support_bound {
                Some(bound) => total += d.moments(0.0, bound).0,
                None => match d.mass_unbounded() {
                    Some(m) => total += m,
                    None => return Mass::Infinite,
                },
            }
        }
        Mass::Finite(total)
    }

    /// `μ([t, ∞))`.
    pub fn tail_mass(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let atoms: f64 = self.atoms.iter().filter(|a| a.location >= t).map(|a| a.mass).sum();
        Ok(atoms + self.density_tail(t)?)
    }

    /// `μ((t, ∞))`, the mass left outside a window `[0, t]`.
    fn open_tail(&self, t: f64) -> Result<f64> {
        let atoms: f64 = self.atoms.iter().filter(|a| a.location > t).map(|a| a.mass).sum();
        Ok(atoms + self.density_tail(t)?)
    }

    fn density_tail(&self, t: f64) -> Result<f64> {
        let mut total = 0.0;
        for d in &self.densities {
            total += match self.support_bound {
                Some(bound) if t >= bound => 0.0,
                Some(bound) => d.moments(t, bound).0,
                None => d.tail_unbounded(t).ok_or(Error::InfiniteMass)?,
            };
        }
        Ok(total)
    }

    /// `μ([a, b))`.
    pub fn subinterval_mass(&self, a: f64, b: f64) -> Result<f64> {
        check_time(a)?;
        if !(b >= a) {
            return Err(Error::InvalidArgument(format!(
                "interval end {b} precedes its start {a}"
            )));
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|x| x.location >= a && x.location < b)
            .map(|x| x.mass)
            .sum();
        Ok(atoms + self.density_moments(a, b).0)
    }

    /// Summed density moments on `[a, b]`, clipped to the support bound.
    pub fn density_moments(&self, a: f64, b: f64) -> (f64, f64) {
        self.densities
            .iter()
            .map(|d| self.component_moments(d, a, b))
            .fold((0.0, 0.0), |acc, m| (acc.0 + m.0, acc.1 + m.1))
    }

    /// Moments of one component on `[a, b] ∩ [0, support_bound]`.
    pub fn component_moments(&self, d: &DensityComponent, a: f64, b: f64) -> (f64, f64) {
        let hi = match self.support_bound {
            Some(bound) => b.min(bound),
            None => b,
        };
        if hi <= a {
            return (0.0, 0.0);
        }
        d.moments(a, hi)
    }

    /// Smallest window `S` such that the mass outside `[0, S]` is at most
    /// `eps` times the total mass.
    pub fn truncation_horizon(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail fraction must lie in (0, 1), got {eps}"
            )));
        }
        let total = self.total_mass().finite().ok_or(Error::InfiniteMass)?;
        if total == 0.0 {
            return Ok(0.0);
        }
        let target = eps * total;

        if self.atoms.is_empty() && self.densities.len() == 1 && self.support_bound.is_none() {
            let d = &self.densities[0];
            let closed = match d.kind {
                DensityKind::Exponential { rate } => Some((d.scale / (rate * target)).ln() / rate),
                DensityKind::Power { theta } => {
                    Some((d.scale / (theta * target)).powf(1.0 / theta) - 1.0)
                }
                DensityKind::Tabulated { .. } => None,
            };
            if let Some(s) = closed {
                return Ok(s.max(0.0));
            }
        }

        if self.open_tail(0.0)? <= target {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.open_tail(hi)? > target {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Invariant("tail mass does not decay".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.open_tail(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Land exactly on an atom when the bisection converged onto one.
        if let Some(atom) = self
            .atoms
            .iter()
            .find(|a| (a.location - hi).abs() <= 1e-12 * a.location.max(1.0))
        {
            return Ok(atom.location);
        }
        Ok(hi)
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time argument must be finite and nonnegative, got {t}")))
    }
}
