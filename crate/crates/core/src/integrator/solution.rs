use super::mesh::MeshPlan;
use crate::error::{Error, Result};
use crate::measures::Mass;

/// Run metadata carried alongside the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionMeta {
    pub nonlinearity_id: String,
    /// Mass of each term's measure, in input order.
    pub term_masses: Vec<Mass>,
    /// The growth constant `M`: total mass over the terms that count.
    pub mass: Mass,
    /// Convolution window per term; `None` when untruncated.
    pub truncation_horizons: Vec<Option<f64>>,
    /// Bound on the truncated tail's share of `x'`, maximised over steps.
    pub truncation_error_bound: f64,
    pub plan: Option<MeshPlan>,
    pub warnings: Vec<String>,
    /// Values come from the closed-form ODE solution, not time stepping.
    pub exact: bool,
}

/// A trajectory on the mesh: `x(tₙ)` and `x'(tₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub meta: SolutionMeta,
}

impl Solution {
    pub fn new(times: Vec<f64>, values: Vec<f64>, derivatives: Vec<f64>, meta: SolutionMeta) -> Result<Self> {
        if times.len() != values.len() || times.len() != derivatives.len() || times.is_empty() {
            return Err(Error::InvalidArgument("solution arrays differ in length or are empty".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("solution times must increase".into()));
        }
        let sol = Self { times, values, derivatives, meta };
        sol.check_invariants()?;
        Ok(sol)
    }

    /// `xₙ > 0`, `xₙ` nondecreasing and `x'ₙ ≥ 0`.
    pub fn check_invariants(&self) -> Result<()> {
        for (i, (&x, &d)) in self.values.iter().zip(&self.derivatives).enumerate() {
            if !(x > 0.0 && x.is_finite()) || !(d >= 0.0) {
                return Err(Error::NonPositiveState { time: self.times[i], value: x });
            }
            if i > 0 && x < self.values[i - 1] {
                return Err(Error::Invariant(format!("x decreases at t = {}", self.times[i])));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    fn bracket(&self, t: f64) -> Result<usize> {
        let (t0, t1) = (self.times[0], self.t_end());
        if !(t >= t0 && t <= t1) {
            return Err(Error::InvalidArgument(format!("t = {t} outside the solved range [{t0}, {t1}]")));
        }
        Ok(self.times.partition_point(|&s| s <= t).clamp(1, self.len().max(2) - 1))
    }

    /// `x(t)` by cubic Hermite interpolation of values and derivatives.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if self.len() == 1 {
            return if t == self.times[0] { Ok(self.values[0]) } else { Err(Error::InvalidArgument(format!("t = {t} outside a single-point solution"))) };
        }
        let i = self.bracket(t)?;
        let (a, b) = (self.times[i - 1], self.times[i]);
        if t == b {
            return Ok(self.values[i]);
        }
        let h = b - a;
        let s = (t - a) / h;
        let (ya, yb) = (self.values[i - 1], self.values[i]);
        let (da, db) = (self.derivatives[i - 1] * h, self.derivatives[i] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        Ok((2.0 * s3 - 3.0 * s2 + 1.0) * ya + (s3 - 2.0 * s2 + s) * da + (-2.0 * s3 + 3.0 * s2) * yb + (s3 - s2) * db)
    }

    /// `x'(t)` by linear interpolation of the stored right-hand sides.
    pub fn derivative_at(&self, t: f64) -> Result<f64> {
        if self.len() == 1 {
            return if t == self.times[0] { Ok(self.derivatives[0]) } else { Err(Error::InvalidArgument(format!("t = {t} outside a single-point solution"))) };
        }
        let i = self.bracket(t)?;
        let (a, b) = (self.times[i - 1], self.times[i]);
        let s = (t - a) / (b - a);
        Ok(self.derivatives[i - 1] + s * (self.derivatives[i] - self.derivatives[i - 1]))
    }

    /// Index of the node at `t`, matched to a relative `1e−12`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t * (1.0 - 1e-12) - 1e-300);
        (i < self.len() && (self.times[i] - t).abs() <= 1e-12 * t.abs().max(1e-300)).then_some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SolutionMeta {
        SolutionMeta {
            nonlinearity_id: "test".into(),
            term_masses: vec![],
            mass: Mass::Finite(1.0),
            truncation_horizons: vec![],
            truncation_error_bound: 0.0,
            plan: None,
            warnings: vec![],
            exact: false,
        }
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let p = |t: f64| 1.0 + t + t * t + 0.5 * t * t * t;
        let dp = |t: f64| 1.0 + 2.0 * t + 1.5 * t * t;
        let ts = vec![0.0, 0.5, 2.0];
        let sol = Solution::new(ts.clone(), ts.iter().map(|&t| p(t)).collect(), ts.iter().map(|&t| dp(t)).collect(), meta()).unwrap();
        for t in [0.0, 0.1, 0.5, 1.3, 2.0] {
            assert!((sol.value_at(t).unwrap() - p(t)).abs() < 1e-13);
        }
        assert!(sol.value_at(2.5).is_err());
        assert_eq!(sol.index_of(0.5), Some(1));
        assert_eq!(sol.index_of(0.6), None);
    }

    #[test]
    fn invariants_are_enforced() {
        let bad = Solution::new(vec![0.0, 1.0], vec![1.0, 0.5], vec![0.0, 0.0], meta());
        assert!(matches!(bad, Err(Error::Invariant(_))));
        let bad = Solution::new(vec![0.0, 1.0], vec![1.0, -0.5], vec![0.0, 0.0], meta());
        assert!(matches!(bad, Err(Error::NonPositiveState { .. })));
    }
}
