use super::solution::Solution;
use crate::error::{Error, Result};

/// Pointwise comparison of a solution with its step-halved counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(t, |x_h − x_{h/2}| / |x_{h/2}|)` at every shared node.
    pub deviations: Vec<(f64, f64)>,
    pub max_relative_deviation: f64,
}

/// Relative deviation between `coarse` and `halved` at the nodes they share.
pub fn richardson_verify(coarse: &Solution, halved: &Solution) -> Result<ConvergenceReport> {
    let mut deviations = Vec::new();
    for (i, &t) in coarse.times.iter().enumerate() {
        if let Some(k) = halved.index_of(t) {
            let fine = halved.values[k];
            deviations.push((t, (coarse.values[i] - fine).abs() / fine.abs()));
        }
    }
    if deviations.is_empty() {
        return Err(Error::InvalidArgument("the solutions share no nodes".into()));
    }
    let max_relative_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    Ok(ConvergenceReport { deviations, max_relative_deviation })
}

/// Observed order `log₂(|x_h − x_{h/2}| / |x_{h/2} − x_{h/4}|)` at time `t`.
pub fn estimate_order(coarse: &Solution, mid: &Solution, fine: &Solution, t: f64) -> Result<f64> {
    let at = |s: &Solution| {
        s.index_of(t)
            .map(|i| s.values[i])
            .ok_or_else(|| Error::InvalidArgument(format!("t = {t} is not a node of every solution")))
    };
    let (a, b, c) = (at(coarse)?, at(mid)?, at(fine)?);
    Ok(((a - b).abs() / (b - c).abs()).log2())
}

/// Ratio of the maximum relative errors of `coarse` and `fine` against an
/// exact solution, over the nodes of `coarse`. About 4 for a second-order
/// scheme.
pub fn error_ratio(coarse: &Solution, fine: &Solution, exact: impl Fn(f64) -> f64) -> Result<f64> {
    let err = |s: &Solution, only: &Solution| -> Result<f64> {
        let mut e: f64 = 0.0;
        for &t in &only.times {
            let i = s.index_of(t).ok_or_else(|| Error::InvalidArgument(format!("no node at t = {t}")))?;
            let y = exact(t);
            e = e.max((s.values[i] - y).abs() / y.abs());
        }
        Ok(e)
    };
    Ok(err(coarse, coarse)? / err(fine, coarse)?)
}

/// Maximum relative error against an exact solution over all nodes.
pub fn max_relative_error(sol: &Solution, exact: impl Fn(f64) -> f64) -> f64 {
    sol.times
        .iter()
        .zip(&sol.values)
        .map(|(&t, &x)| {
            let y = exact(t);
            (x - y).abs() / y.abs()
        })
        .fold(0.0, f64::max)
}
