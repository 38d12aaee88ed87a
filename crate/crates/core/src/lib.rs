//! Projection onto an intersection of polyhedra by an almost-cyclic
//! Dykstra's algorithm with supporting-halfspace QP (SHQP) steps.
//!
//! The best approximation problem asks for the point of
//! `C = C_1 ∩ … ∩ C_m` closest to an anchor `d`, where each `C_i` is an
//! intersection of halfspaces. Dykstra's algorithm is alternating
//! minimization on the Fenchel dual
//!
//! ```text
//! v(y) = ½‖d − x* − Σ y_i‖² + Σ δ*(y_i, C_i − x*)
//! ```
//!
//! and this crate keeps every dual vector `y_i` as nonnegative multipliers
//! over the halfspaces of `C_i`, so support values are exact sums and the
//! dual objective can be evaluated at every sub-step.
//!
//! Module map:
//!
//! - [`geometry`]: halfspaces, support functions, subspaces and Friedrichs angles.
//! - [`qp`]: exact polyhedral projection with KKT multipliers, the warmstart
//!   inner Dykstra loop and the SHQP block minimization.
//! - [`schedule`]: the control maps `s`, `π`, `p` of an almost-cyclic cycle.
//! - [`solver`]: one cycle, the outer loop, and the dual objective.
//! - [`lasso`]: least-squares lasso as a projection onto slabs.
//! - [`oracle`]: slow, independent reference computations.
//! - [`diagnostics`]: rate fitting, decrease bounds and regularity constants.
//! - [`generate`]: random instances with a known projection.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![deny(unsafe_code)]
#![allow(
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod generate;
pub mod geometry;
pub mod lasso;
pub mod linalg;
pub mod oracle;
pub mod qp;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{ExtReal, Halfspace, PolyhedralSet, SubspaceBasis};
pub use qp::{ProjectionResult, ProjectorKind};
pub use schedule::Schedule;
pub use solver::{
    CycleTrace, DualState, Instance, QSelector, ShqpMode, ShqpPolicy, SolveOptions, SolveOutcome, SolveStatus,
    StepRecord, StoppingRule, TraceLevel,
};
