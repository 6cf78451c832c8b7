//! Time stepping for the convolution equation and its special cases.

mod exp_kernel;
mod history;
mod mesh;
mod richardson;
mod solution;
mod solver;

pub use exp_kernel::ExpConvolution;
pub use history::{HistoryFunction, HistoryKind};
pub use mesh::{build_mesh, Mesh, MeshPlan, DEFAULT_STEPS_AT_CAP, MAX_NODES};
pub use richardson::{error_ratio, estimate_order, max_relative_error, richardson_verify, ConvergenceReport};
pub use solution::{Solution, SolutionMeta};
pub use solver::{
    convert_dde_to_volterra, solve_fde, solve_fde_multi, solve_forced_volterra, solve_ode, solve_terms,
    ForcingTerm, MultiTerm, Term, EPS_TAIL,
};
