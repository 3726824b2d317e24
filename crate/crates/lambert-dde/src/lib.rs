//! Characteristic roots of linear time-delay systems
//! `x'(t) = A x(t) + B x(t - tau)` through the matrix Lambert W function.
//!
//! The crate has three legs:
//!
//! * the **branch method**: solve `W_k(M) exp(W_k(M) + A tau) = tau B` for M
//!   on a chosen branch k, form `S_k = W_k(M)/tau + A`, and read candidate
//!   roots off the eigenvalues of `S_k` ([`solver`]);
//! * **seed construction**: run those steps backwards from a target root
//!   pair to get the branch index and a seed M that puts the solve inside
//!   the right attraction region ([`seeds`]);
//! * an **independent root mapper** that finds every root in a rectangle by
//!   grid search plus argument-principle certification ([`root_map`]), so
//!   branch solves are cross-checked rather than trusted.
//!
//! Running the seeded solves over a full mapped spectrum shows that branch
//! indices and roots do not correspond one-to-one: the principal branch
//! reaches several pairs, and for companion-form systems two branches
//! (k = 0 and k = -1) reach everything when the real root count is even.
//!
//! See the `examples/` directory for one runnable walk-through per
//! capability, and the `lambert-dde` binary for a JSON/CSV front end.

pub mod cli;
pub mod dde;
pub mod error;
pub mod lambert_w;
pub mod matrix_fun;
pub mod report;
pub mod root_map;
pub mod seeds;
pub mod solver;

pub use cli::run_cli;
pub use dde::{example_system_1, example_system_2, CompanionDde, DdeSystem, SystemJson};
pub use error::{Error, Result};
pub use lambert_w::{branch_of, lambert_w, lambert_w_prime, real_branch_select};
pub use matrix_fun::{
    eigen, eigen_2x2, mat_exp, matrix_lambert_w, structured_lambert_w, StructuredM,
};
pub use root_map::{char_derivative, map_roots, Region, RootReport};
pub use seeds::{
    pair_all_roots, real_s_origin_check, seed_conjugate_pair, seed_general_pair, seed_real_pair,
    CaseTag, PairingPlan, SeedRecipe,
};
pub use solver::{
    default_seed, q_from_m, solve_branch, solve_seeded, sweep_branches, SeedProvenance,
    SolveOptions, SolveReport, SweepReport,
};
