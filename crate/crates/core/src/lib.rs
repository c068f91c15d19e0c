//! Classical and fractional nonlinear filtering.
//!
//! The crate simulates state/observation processes whose clock is the inverse
//! of a β-stable subordinator, solves the classical Zakai equation and its
//! fractional (Riemann–Liouville memory) counterpart on 1D grids, and provides
//! the independent constructions used to cross-check them: the subordination
//! integral against the inverse-subordinator density, Monte-Carlo
//! Kallianpur–Striebel estimates, and the Kalman–Bucy closed form.
//!
//! Module map:
//!
//! * [`subordinator`]: stable subordinator paths, their inverses, `f_{D_1}` and `g_t(τ)`.
//! * [`fraccalc`]: Riemann–Liouville integral and derivative on uniform grids.
//! * [`models`]: filtering-problem descriptions and the discrete generator/adjoint.
//! * [`sde_sim`]: classical and time-changed path simulation, likelihoods, particle estimates.
//! * [`zakai_classical`]: Crank–Nicolson/Lie-splitting Zakai solver, Kalman–Bucy reference.
//! * [`zakai_fractional`]: memory-form fractional Zakai solver and subordination checks.
//! * [`levy_ext`]: finite-activity jump states and jump observations.
//! * [`checks`]: the built-in acceptance suite.

// `!(a < b)` guards deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod error;
pub mod fraccalc;
pub mod grid;
pub mod levy_ext;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod sde_sim;
pub mod subordinator;
pub mod zakai_classical;
pub mod zakai_fractional;

pub use error::{Error, Result};
pub use fraccalc::GridFunction;
pub use grid::{SpatialGrid, TimeGrid};
pub use levy_ext::{JumpEvent, JumpLikelihoodPath, JumpObservationRecord, JumpStatePath, TestFunction};
pub use models::{Coefficient, InitialLaw, JumpAtom, JumpKind, JumpSpec, ModelSpec};
pub use sde_sim::{Dynamics, LikelihoodPath, ObservationRecord, StatePath};
pub use subordinator::{DensityQuery, InversePath, SubordinatorPath};
pub use zakai_classical::FilterDensityGrid;
pub use zakai_fractional::FractionalFilterGrid;
