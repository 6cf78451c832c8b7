use crate::error::{Error, Result};
use crate::nonlinear::RealFn;

#[derive(Clone)]
pub enum HistoryKind {
    Constant(f64),
    Function(RealFn),
    /// Linear interpolation on an increasing grid ending at 0.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

/// The initial function `ψ` on `[−τ, 0]`, strictly positive.
#[derive(Clone)]
pub struct HistoryFunction {
    tau: f64,
    kind: HistoryKind,
}

impl std::fmt::Debug for HistoryFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            HistoryKind::Constant(c) => format!("constant({c})"),
            HistoryKind::Function(_) => "function".into(),
            HistoryKind::Tabulated { grid, .. } => format!("tabulated({} points)", grid.len()),
        };
        f.debug_struct("HistoryFunction").field("tau", &self.tau).field("kind", &kind).finish()
    }
}

/// Sample count used to check positivity of a closed-form history.
const POSITIVITY_SAMPLES: usize = 1024;

impl HistoryFunction {
    pub fn constant(tau: f64, c: f64) -> Result<Self> {
        check_tau(tau)?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("history must be positive, got {c}")));
        }
        Ok(Self { tau, kind: HistoryKind::Constant(c) })
    }

    pub fn function(tau: f64, psi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        check_tau(tau)?;
        for k in 0..=POSITIVITY_SAMPLES {
            let t = -tau * k as f64 / POSITIVITY_SAMPLES as f64;
            let v = psi(t);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("history is {v} at t = {t}")));
            }
        }
        Ok(Self { tau, kind: HistoryKind::Function(std::sync::Arc::new(psi)) })
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.is_empty() {
            return Err(Error::InvalidArgument("history grid and values differ in length".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) || *grid.last().unwrap() != 0.0 {
            return Err(Error::InvalidArgument("history grid must increase to 0".into()));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("history values must be positive".into()));
        }
        let tau = -grid[0];
        Ok(Self { tau, kind: HistoryKind::Tabulated { grid, values } })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kind(&self) -> &HistoryKind {
        &self.kind
    }

    /// `ψ(t)`; arguments outside `[−τ, 0]` are clamped.
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(-self.tau, 0.0);
        match &self.kind {
            HistoryKind::Constant(c) => *c,
            HistoryKind::Function(psi) => psi(t),
            HistoryKind::Tabulated { grid, values } => {
                let i = grid.partition_point(|g| *g <= t);
                if i == 0 {
                    values[0]
                } else if i == grid.len() {
                    values[grid.len() - 1]
                } else {
                    let (a, b) = (grid[i - 1], grid[i]);
                    values[i - 1] + (values[i] - values[i - 1]) * (t - a) / (b - a)
                }
            }
        }
    }

    /// A copy whose domain is widened to `[−tau, 0]`; constant extension
    /// only, other kinds must already cover it.
    pub(crate) fn covering(&self, tau: f64) -> Result<Self> {
        if tau <= self.tau {
            return Ok(self.clone());
        }
        match self.kind {
            HistoryKind::Constant(c) => Self::constant(tau, c),
            _ => Err(Error::Config(format!(
                "history is defined on [-{}, 0] but the delay reaches {tau}",
                self.tau
            ))),
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("history length must be nonnegative, got {tau}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_interpolates_linearly() {
        let h = HistoryFunction::tabulated(vec![-2.0, -1.0, 0.0], vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(h.tau(), 2.0);
        assert_eq!(h.eval(-1.5), 2.0);
        assert_eq!(h.eval(-0.5), 2.5);
        assert_eq!(h.eval(-5.0), 1.0);
    }

    #[test]
    fn nonpositive_histories_are_rejected() {
        assert!(HistoryFunction::constant(1.0, 0.0).is_err());
        assert!(HistoryFunction::function(1.0, |t| 1.0 + 2.0 * t).is_err());
        assert!(HistoryFunction::tabulated(vec![-1.0, 0.0], vec![1.0, -1.0]).is_err());
        assert!(HistoryFunction::function(1.0, |t| 2.0 + t).is_ok());
    }

    #[test]
    fn covering_extends_constants_only() {
        let c = HistoryFunction::constant(0.0, 2.0).unwrap().covering(3.0).unwrap();
        assert_eq!(c.tau(), 3.0);
        let f = HistoryFunction::function(1.0, |t| 2.0 + t).unwrap();
        assert!(matches!(f.covering(2.0), Err(Error::Config(_))));
    }
}
