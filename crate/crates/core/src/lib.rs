//! Forward-untangled Filippov flows for discontinuous velocity fields.
//!
//! The crate builds Filippov envelopes of a velocity field, approximates the
//! solution funnel of the differential inclusion by a beam of Euler
//! trajectories, and selects one curve per seed by iterated maximization of
//! exponentially weighted tent functionals. The selected flow pushes
//! densities forward and carries the transport equation, which is solved
//! both along characteristics and by an optimally stable Petrov-Galerkin
//! method.
//!
//! Everything here is `no_std` + `alloc`; IO, configuration and the command
//! line live in the `untangled` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;

pub mod density;
pub mod error;
pub mod field;
pub mod filippov;
pub mod funnel;
pub mod galerkin;
mod math;
pub mod select;
pub mod transport;

pub use error::{Error, Result};
pub use math::{dist, dot, lex_cmp, norm};
