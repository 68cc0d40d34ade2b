//! Joint MAP estimation in linear state-space models with scalar convex
//! losses on inputs and outputs, by Gaussian message passing.
//!
//! Three iterative solvers are provided: [`solvers::irlge_solve`] (primal
//! NUP reweighting), [`solvers::ibffd_solve`] (backward filtering, forward
//! deciding) and [`solvers::iffbdd_solve`] (forward filtering, backward dual
//! deciding). [`oracle`] holds independent dense reference solvers.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gauss;
pub mod io;
pub mod losses;
pub mod oracle;
pub mod solvers;
pub mod ssm;
pub mod verify;

pub use error::{Error, Result};
