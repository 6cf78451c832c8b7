//! Scenario catalog, runner and reports for the sublinear growth laws.
//!
//! A catalog is a TOML file of scenarios. Each scenario fixes an equation
//! and a mesh plan, and lists the expectations its run must meet.

// `!(x > 0.0)` rejects NaN along with the values it names.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod error;
pub mod report;
pub mod run;
pub mod verify;

pub use catalog::{Catalog, Expectation, Scenario};
pub use error::{HarnessError, Result};
pub use run::{run, RunOptions, RunResult};
pub use verify::{verify_all, Summary};

/// The catalog shipped with the crate.
pub const BUILTIN_CATALOG: &str = include_str!("../catalog.toml");

pub fn builtin_catalog() -> Result<Catalog> {
    Catalog::parse(BUILTIN_CATALOG)
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
struct BookHarness;
