//! Scenario catalog: a versioned TOML file of runnable scenarios.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Results of the theory every catalog must exercise; each needs at least
/// one scenario listing it under `covers`.
pub const COVERAGE_KEYS: &[&str] = &[
    "functional-equation",
    "ode-exact-solution",
    "growth-transform",
    "finite-measure",
    "smooth-sublinear",
    "zero-liapunov",
    "increasing-growth-law",
    "condition-l-inverse",
    "power-bounded-sufficient",
    "decreasing-asymptote",
    "infinite-mass",
    "multi-nonlinearity",
    "volterra-rewrite",
    "mass-invariance",
    "rv-beta",
    "rv0-bounded-delay",
    "rv0-bounded-below",
    "rv0-lower-bound",
    "rv0-upper-bound",
    "example-exp-decay",
    "example-power-decay",
    "example-rv-power-log",
    "example-exponential-kernel",
    "example-rv1",
    "example-rv-osc",
    "spiky-construction",
];

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub schema_version: u32,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<Scenario>,
    #[serde(default, rename = "invariance")]
    pub invariance: Vec<InvarianceGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    /// Coverage keys this scenario exercises.
    pub covers: Vec<String>,
    #[serde(default)]
    pub note: String,
    /// Long-horizon finite-mass run that must show a zero exponential rate.
    #[serde(default)]
    pub standard: bool,
    pub t_end: f64,
    /// Nonlinearity of `μ₁` and `μ₂`, and the reference for `F`.
    pub nonlinearity: NonlinearitySpec,
    /// Build `F` on the asymptote `φ` instead of `f`.
    #[serde(default)]
    pub growth_on_asymptote: bool,
    #[serde(default)]
    pub mu1: Option<MeasureSpec>,
    #[serde(default)]
    pub mu2: Option<MeasureSpec>,
    /// Further convolutions, each with its own nonlinearity and weight.
    #[serde(default)]
    pub terms: Vec<TermSpec>,
    /// Growth constant for infinite-mass runs, where `M` is undefined.
    #[serde(default)]
    pub mass: Option<f64>,
    pub history: HistorySpec,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub tolerances: Option<ToleranceSpec>,
    #[serde(default, rename = "expect")]
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    /// `[location, mass]` pairs.
    #[serde(default)]
    pub atoms: Vec<[f64; 2]>,
    #[serde(default)]
    pub densities: Vec<DensitySpec>,
    #[serde(default)]
    pub support_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    /// `exponential`, `power` or `tabulated`.
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub nonlinearity: NonlinearitySpec,
    pub measure: MeasureSpec,
    #[serde(default = "one")]
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HistorySpec {
    Constant { value: f64 },
    /// Piecewise linear through `values` on `grid`, which must cover `[−τ, 0]`.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub h0: f64,
    #[serde(default = "one_u32")]
    pub points_per_dyad: u32,
    #[serde(default)]
    pub graded: bool,
    #[serde(default)]
    pub h_max: Option<f64>,
    #[serde(default)]
    pub allow_infinite_mass: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub r3: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Ratio {
    R1,
    R2,
    R3,
}

impl Ratio {
    pub fn as_str(self) -> &'static str {
        match self {
            Ratio::R1 => "R1",
            Ratio::R2 => "R2",
            Ratio::R3 => "R3",
        }
    }
}

/// A pass/fail condition on a run. Every `tol` is multiplied by the
/// harness tolerance scale; thresholds named otherwise are not.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "check", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Expectation {
    /// The ratio's verdict over the trailing checkpoints.
    Verdict { ratio: Ratio, verdict: String },
    /// `|ratio(T) − target| ≤ tol`.
    FinalRatio {
        ratio: Ratio,
        #[serde(default = "one")]
        target: f64,
        tol: f64,
    },
    /// `|x(T) / (coefficient · T^exponent) − 1| ≤ tol`.
    Reference { coefficient: f64, exponent: f64, tol: f64 },
    /// `min R2` over the last decade is at least `1 − tol`.
    R2TailMin { tol: f64 },
    /// The ratio strictly increases across `at` and ends at least at `min_final`.
    Increasing { ratio: Ratio, at: Vec<f64>, min_final: f64 },
    /// `|(log x)^{α+1} θ / ((α+1) T) − 1| ≤ tol`.
    Rv1 { alpha: f64, theta: f64, tol: f64 },
    /// `x'/x` and `log x / t` at most `tol` at `T` and decreasing across
    /// the last four checkpoints.
    Liapunov { tol: f64 },
    /// Maximum relative error against the closed-form ODE solution, and
    /// optionally the error reduction when the step is halved.
    ExactOde {
        tol: f64,
        #[serde(default)]
        halving_ratio: Option<[f64; 2]>,
    },
    /// Relative deviation from the run on the halved plan.
    Richardson { tol: f64 },
    /// `x(T) ≥ factor · ψ(0)`.
    Divergence {
        #[serde(default = "ten")]
        factor: f64,
    },
    /// Relative deviation from the same equation rewritten as a forced
    /// Volterra equation.
    VolterraRewrite { tol: f64 },
    /// `max |f/φ − 1|` over `samples` points spread geometrically on `[from, to]`.
    AsymptoteRatio { from: f64, to: f64, samples: usize, tol: f64 },
}

impl Expectation {
    pub fn name(&self) -> &'static str {
        match self {
            Expectation::Verdict { .. } => "verdict",
            Expectation::FinalRatio { .. } => "final-ratio",
            Expectation::Reference { .. } => "reference",
            Expectation::R2TailMin { .. } => "r2-tail-min",
            Expectation::Increasing { .. } => "increasing",
            Expectation::Rv1 { .. } => "rv1",
            Expectation::Liapunov { .. } => "liapunov",
            Expectation::ExactOde { .. } => "exact-ode",
            Expectation::Richardson { .. } => "richardson",
            Expectation::Divergence { .. } => "divergence",
            Expectation::VolterraRewrite { .. } => "volterra-rewrite",
            Expectation::AsymptoteRatio { .. } => "asymptote-ratio",
        }
    }
}

/// Scenarios whose final values must agree because they share `f` and `M`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InvarianceGroup {
    pub id: String,
    pub scenarios: Vec<String>,
    pub tol: f64,
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn ten() -> f64 {
    10.0
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Self> {
        let catalog: Catalog = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("catalogs serialize")
    }

    pub fn scenario(&self, id: &str) -> Result<&Scenario> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| HarnessError::Config(format!("no scenario with id `{id}`")))
    }

    /// Structural checks: schema version, unique ids, well-formed fields.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            if !ids.insert(s.id.as_str()) {
                return Err(HarnessError::Config(format!("duplicate scenario id `{}`", s.id)));
            }
            s.validate()?;
        }
        let mut groups = BTreeSet::new();
        for g in &self.invariance {
            if !groups.insert(g.id.as_str()) {
                return Err(HarnessError::Config(format!("duplicate invariance id `{}`", g.id)));
            }
            if g.scenarios.len() < 2 {
                return Err(field(&g.id, "scenarios", "needs at least two scenarios"));
            }
            if !(g.tol > 0.0) {
                return Err(field(&g.id, "tol", "must be positive"));
            }
            for id in &g.scenarios {
                if !ids.contains(id.as_str()) {
                    return Err(field(&g.id, "scenarios", &format!("unknown scenario `{id}`")));
                }
            }
        }
        Ok(())
    }

    /// Coverage lint: the coverage keys no scenario lists. Keys outside
    /// [`COVERAGE_KEYS`] are reported as errors.
    pub fn lint(&self) -> Result<Vec<&'static str>> {
        let mut covered = BTreeSet::new();
        for s in &self.scenarios {
            for key in &s.covers {
                if !COVERAGE_KEYS.contains(&key.as_str()) {
                    return Err(field(&s.id, "covers", &format!("unknown coverage key `{key}`")));
                }
                covered.insert(key.as_str());
            }
        }
        Ok(COVERAGE_KEYS.iter().copied().filter(|k| !covered.contains(k)).collect())
    }
}

fn field(id: &str, name: &str, msg: &str) -> HarnessError {
    HarnessError::Config(format!("{id}.{name}: {msg}"))
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let id = &self.id;
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(field(id, "id", "must be nonempty and use only [A-Za-z0-9_-]"));
        }
        if self.covers.is_empty() {
            return Err(field(id, "covers", "must list at least one coverage key"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(field(id, "t_end", "must be positive and finite"));
        }
        if self.mu1.is_none() && self.mu2.is_none() && self.terms.is_empty() {
            return Err(field(id, "mu1", "a scenario needs at least one of mu1, mu2 or terms"));
        }
        if let Some(m) = self.mass {
            if !(m > 0.0 && m.is_finite()) {
                return Err(field(id, "mass", "must be positive and finite"));
            }
        }
        if let Some(t) = &self.tolerances {
            for (name, v) in [("r1", t.r1), ("r2", t.r2), ("r3", t.r3)] {
                if let Some(v) = v {
                    if !(v > 0.0) {
                        return Err(field(id, &format!("tolerances.{name}"), "must be positive"));
                    }
                }
            }
        }
        for e in &self.expectations {
            let bad = |msg: &str| field(id, &format!("expect.{}", e.name()), msg);
            match e {
                Expectation::Verdict { verdict, .. } => {
                    if sublinear_fde::asymptotics::Verdict::parse(verdict).is_none() {
                        return Err(bad(&format!(
                            "unknown verdict `{verdict}` (expected converges-to-1, diverges or inconclusive)"
                        )));
                    }
                }
                Expectation::FinalRatio { tol, .. }
                | Expectation::Reference { tol, .. }
                | Expectation::R2TailMin { tol }
                | Expectation::Rv1 { tol, .. }
                | Expectation::Liapunov { tol }
                | Expectation::ExactOde { tol, .. }
                | Expectation::Richardson { tol }
                | Expectation::VolterraRewrite { tol }
                | Expectation::AsymptoteRatio { tol, .. } => {
                    if !(*tol > 0.0) {
                        return Err(bad("tol must be positive"));
                    }
                }
                Expectation::Increasing { at, .. } => {
                    if at.len() < 2 || at.iter().any(|&t| !(t > 0.0 && t <= self.t_end)) {
                        return Err(bad("needs at least two times in (0, t_end]"));
                    }
                }
                Expectation::Divergence { factor } => {
                    if !(*factor > 0.0) {
                        return Err(bad("factor must be positive"));
                    }
                }
            }
            if let Expectation::AsymptoteRatio { from, to, samples, .. } = e {
                if !(*from > 0.0 && to > from) || *samples < 2 {
                    return Err(bad("needs 0 < from < to and at least two samples"));
                }
            }
            if let Expectation::ExactOde { .. } = e {
                if !matches!(self.history, HistorySpec::Constant { .. }) {
                    return Err(bad("needs a constant history"));
                }
            }
            if let Expectation::VolterraRewrite { .. } = e {
                if self.mu1.is_none() || !self.terms.is_empty() {
                    return Err(bad("needs mu1 and no extra terms"));
                }
            }
        }
        if self.standard && !self.expectations.iter().any(|e| matches!(e, Expectation::Liapunov { .. })) {
            return Err(field(id, "standard", "standard scenarios need a liapunov expectation"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[[scenario]]
id = "tiny"
covers = ["ode-exact-solution"]
t_end = 1.0
nonlinearity = { name = "power", params = { beta = 0.5 } }
mu1 = { atoms = [[0.0, 1.0]] }
history = { kind = "constant", value = 1.0 }
mesh = { h0 = 0.125 }

[[scenario.expect]]
check = "exact-ode"
tol = 1e-3
"#;

    #[test]
    fn parses_and_roundtrips() {
        let c = Catalog::parse(MINIMAL).unwrap();
        assert_eq!(c.scenarios.len(), 1);
        assert_eq!(c.scenarios[0].expectations[0], Expectation::ExactOde { tol: 1e-3, halving_ratio: None });
        assert_eq!(Catalog::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn empty_catalog_is_valid() {
        let c = Catalog::parse("schema_version = 1").unwrap();
        assert!(c.scenarios.is_empty());
        assert_eq!(c.lint().unwrap().len(), COVERAGE_KEYS.len());
    }

    #[test]
    fn rejections_name_the_field() {
        let wrong_version = MINIMAL.replace("schema_version = 1", "schema_version = 7");
        assert!(Catalog::parse(&wrong_version).unwrap_err().to_string().contains("schema_version"));
        let dup = format!("{MINIMAL}\n{}", &MINIMAL[MINIMAL.find("[[scenario]]").unwrap()..]);
        assert!(Catalog::parse(&dup).unwrap_err().to_string().contains("duplicate"));
        let bad_tol = MINIMAL.replace("tol = 1e-3", "tol = -1.0");
        assert!(Catalog::parse(&bad_tol).unwrap_err().to_string().contains("tiny.expect.exact-ode"));
        let typo = MINIMAL.replace("t_end", "t_ned");
        assert!(matches!(Catalog::parse(&typo), Err(HarnessError::Config(_))));
        let bad_key = MINIMAL.replace("ode-exact-solution", "no-such-result");
        assert!(Catalog::parse(&bad_key).unwrap().lint().is_err());
    }
}
