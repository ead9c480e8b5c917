//! Hierarchical (Stackelberg-Nash) null controllability for a degenerate
//! parabolic equation with a nonlocal diffusion coefficient.
//!
//! The crate is organized bottom-up: grids and quadrature, the degenerate
//! operator, Carleman weights, forward/backward solvers, the follower Nash
//! equilibrium, the leader's linear null control and the nonlinear driver.

// `!(x > 0.0)` deliberately treats NaN as a failure, and stencil loops read
// several arrays at the same index.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod control;
pub mod error;
pub mod exec;
pub mod extreal;
pub mod grid;
pub mod harness;
pub mod hierarchy;
pub mod laws;
pub mod nash;
pub mod operator;
pub mod quadrature;
pub mod scenario;
pub mod solvers;
pub mod study;
pub mod weights;

pub use error::{Error, ErrorClass, Result};
pub use grid::{Grid, SpaceTimeField};
pub use scenario::{load_scenario, save_scenario, Scenario, ScenarioConfig};
