//! Elapsed-time (age-structured) neural network model with firing rate
//! `p(s, u) = phi(u) * 1{s > sigma}`.
//!
//! The activity `N(t)` is computed by two routes: the upwind transport
//! scheme in [`transport`] and the integral delay equation in [`activity`].
//! Both resolve the implicit relation `psi(N) = level` with the shared
//! branch machinery of [`activity::LevelSolver`].

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod activity;
pub mod density;
pub mod error;
pub mod format;
pub mod harness;
pub mod model;
pub mod periodic;
pub mod reconstruct;
pub mod roots;
pub mod steady;
pub mod transport;

pub use activity::{evolve_activity, evolve_monotone, window_extrema, ActivityTrace, BranchMode, BranchPolicy, BranchSeed};
pub use density::InitialDensity;
pub use error::{Error, Result};
pub use model::{builtin_model, classify_regime, FiringModel, Regime, RegimeTag};
pub use steady::{initial_activities, steady_profile, steady_states, InitialBranchSet, SteadyStateSet};
pub use transport::{run_pde, AgeGrid, DensityField};
