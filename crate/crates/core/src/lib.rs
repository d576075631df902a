//! Distributed formation-learning control for a group of heterogeneous
//! 3-DOF autonomous underwater vehicles.
//!
//! The crate is split along the two control layers and the machinery that
//! drives them:
//!
//! * [`graph`]: directed leader/follower topology and its Laplacian.
//! * [`dynamics`]: planar vehicle model and the virtual leader exosystem.
//! * [`estimator`]: cooperative observer of the leader's state and matrix.
//! * [`rbf`]: lattice Gaussian RBF networks and weight consolidation.
//! * [`controller`]: backstepping law with online RBF adaptation, and the
//!   constant-weight replay law.
//! * [`integrate`] and [`sim`]: fixed-step RK4 over the coupled system.
//! * [`analysis`]: metrics computed from recorded traces.
//!
//! Everything here is pure computation on owned buffers. File formats and
//! the command line live in the companion `formation-cli` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod integrate;
pub mod rbf;
pub mod sim;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = core::result::Result<T, E>;
