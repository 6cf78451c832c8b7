//! Graded dyadic meshes on integer multiples of a base step.

use crate::error::{Error, Result};

/// Default ratio `t_end / h_max`.
pub const DEFAULT_STEPS_AT_CAP: f64 = 4096.0;
/// Largest number of nodes a plan may produce.
pub const MAX_NODES: usize = 20_000_000;

/// How the time axis is discretised.
///
/// Nodes are integer multiples of `h0`. On a graded plan the step is `h0`
/// on `[0, 2P·h0)` and `2^k·h0` on `[2^k·P·h0, 2^{k+1}·P·h0)`, where `P` is
/// `points_per_dyad`, capped at `h_max` and at the largest power-of-two
/// multiple of `h0` dividing every atom location.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshPlan {
    pub h0: f64,
    pub points_per_dyad: u32,
    pub t_end: f64,
    /// Defaults to `t_end / 4096`; never below `h0`.
    pub h_max: Option<f64>,
    pub graded: bool,
    /// Accept measures of infinite mass; the convolution window then grows
    /// with `t` and the cost is quadratic in the node count.
    pub allow_infinite_mass: bool,
}

impl MeshPlan {
    pub fn uniform(h: f64, t_end: f64) -> Self {
        Self { h0: h, points_per_dyad: 1, t_end, h_max: None, graded: false, allow_infinite_mass: false }
    }

    pub fn graded(h0: f64, points_per_dyad: u32, t_end: f64) -> Self {
        Self { h0, points_per_dyad, t_end, h_max: None, graded: true, allow_infinite_mass: false }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = Some(h_max);
        self
    }

    pub fn allowing_infinite_mass(mut self) -> Self {
        self.allow_infinite_mass = true;
        self
    }

    pub fn effective_h_max(&self) -> f64 {
        self.h_max.unwrap_or(self.t_end / DEFAULT_STEPS_AT_CAP)
    }

    /// The same plan at half the step everywhere. Every node of `self` is a
    /// node of the result, with bitwise-equal time when `h0` is a power of 2.
    pub fn halved(&self) -> Self {
        Self {
            h0: 0.5 * self.h0,
            points_per_dyad: 2 * self.points_per_dyad,
            h_max: Some(0.5 * self.effective_h_max()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(Error::Config(format!("h0 must be positive, got {}", self.h0)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.points_per_dyad == 0 {
            return Err(Error::Config("points_per_dyad must be at least 1".into()));
        }
        if let Some(h) = self.h_max {
            if !(h > 0.0) {
                return Err(Error::Config(format!("h_max must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Marks the final node when `t_end` is not a multiple of `h0`.
pub(crate) const OFF_GRID: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct Mesh {
    /// Node index in units of `h0`; [`OFF_GRID`] for a clipped final node.
    pub(crate) units: Vec<u64>,
    pub times: Vec<f64>,
    pub h0: f64,
}

impl Mesh {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the node at exactly `units·h0`, if there is one among the
    /// first `upto` nodes.
    pub(crate) fn find_units(&self, units: u64, upto: usize) -> Option<usize> {
        self.units[..upto].binary_search(&units).ok()
    }
}

/// Expresses `location` as a whole number of base steps.
pub(crate) fn to_units(location: f64, h0: f64) -> Result<u64> {
    let r = location / h0;
    let k = r.round();
    if (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Config(format!(
            "atom at {location} is not a whole multiple of the base step {h0}"
        )));
    }
    Ok(k as u64)
}

fn largest_power_of_two_at_most(v: f64) -> u64 {
    if v < 2.0 {
        return 1;
    }
    let k = v.log2().floor() as u32;
    let mut p = 1u64 << k.min(62);
    while (p as f64) > v {
        p >>= 1;
    }
    p
}

/// Builds the nodes of `plan`, refining the step so that every atom
/// location is a node offset at every time.
pub fn build_mesh(plan: &MeshPlan, atom_locations: &[f64]) -> Result<Mesh> {
    plan.validate()?;
    let h0 = plan.h0;
    let end_units = plan.t_end / h0;
    if end_units > MAX_NODES as f64 * 1024.0 || end_units > 2f64.powi(52) {
        return Err(Error::Config(format!("t_end / h0 = {end_units:e} is too large")));
    }
    let mut cap = if plan.graded {
        largest_power_of_two_at_most(plan.effective_h_max() / h0)
    } else {
        1
    };
    for &loc in atom_locations {
        let a = to_units(loc, h0)?;
        if a > 0 {
            cap = cap.min(1u64 << a.trailing_zeros());
        }
    }
    let p = plan.points_per_dyad as u64;
    let mut units = vec![0u64];
    let mut times = vec![0.0];
    let mut u = 0u64;
    loop {
        let step = if plan.graded {
            let k = (u / p).max(1).ilog2();
            (1u64 << k).min(cap)
        } else {
            1
        };
        let next = u + step;
        let t = next as f64 * h0;
        if t >= plan.t_end * (1.0 - 1e-12) {
            let exact = (t - plan.t_end).abs() <= 1e-9 * h0;
            units.push(if exact { next } else { OFF_GRID });
            times.push(plan.t_end);
            break;
        }
        units.push(next);
        times.push(t);
        u = next;
        if times.len() > MAX_NODES {
            return Err(Error::Config(format!("plan produces more than {MAX_NODES} nodes")));
        }
    }
    Ok(Mesh { units, times, h0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_mesh_hits_the_end() {
        let m = build_mesh(&MeshPlan::uniform(0.25, 2.0), &[]).unwrap();
        assert_eq!(m.times, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]);
        let m = build_mesh(&MeshPlan::uniform(0.3, 1.0), &[]).unwrap();
        assert_eq!(*m.times.last().unwrap(), 1.0);
        assert_eq!(*m.units.last().unwrap(), OFF_GRID);
    }

    #[test]
    fn graded_steps_double_per_dyad() {
        let plan = MeshPlan::graded(1.0, 4, 1000.0).with_h_max(1000.0);
        let m = build_mesh(&plan, &[]).unwrap();
        let steps: Vec<u64> = m.units.windows(2).take(16).map(|w| w[1] - w[0]).collect();
        assert_eq!(steps, vec![1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 4, 4, 4, 4]);
    }

    #[test]
    fn steps_respect_caps_and_atoms() {
        let h0 = 2f64.powi(-6);
        let plan = MeshPlan::graded(h0, 8, 1e4);
        let m = build_mesh(&plan, &[1.0]).unwrap();
        let max_step = m.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert_eq!(max_step, 1.0);
        // atoms off the lattice are configuration errors
        assert!(matches!(build_mesh(&plan, &[0.3]), Err(Error::Config(_))));
        // an atom at 3/64 forces a uniform step
        let m = build_mesh(&MeshPlan::graded(h0, 8, 10.0), &[3.0 * h0]).unwrap();
        assert!(m.units.windows(2).all(|w| w[1] - w[0] == 1 || w[1] == OFF_GRID));
    }

    #[test]
    fn halved_plan_contains_coarse_nodes() {
        let plan = MeshPlan::graded(2f64.powi(-4), 8, 300.0);
        let coarse = build_mesh(&plan, &[1.0]).unwrap();
        let fine = build_mesh(&plan.halved(), &[1.0]).unwrap();
        assert!(fine.len() > 2 * coarse.len() - 4);
        for &t in &coarse.times {
            assert!(fine.times.binary_search_by(|x| x.total_cmp(&t)).is_ok(), "missing {t}");
        }
    }
}
