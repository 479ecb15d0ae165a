//! Recovery of sparse binary connectivity from noisy ensemble-stimulation
//! group tests.
//!
//! Each output neuron is treated as an independent noisy group-testing
//! problem: a test stimulates a set of candidate inputs and the outcome is a
//! noisy logical OR over the true inputs that were hit. Inference relaxes the
//! binary connection and activation variables to `[0, 1]` and solves the
//! resulting entropy-regularised program by dual decomposition, giving
//! closed-form primal updates and projected (optionally Adam-scaled) dual
//! steps.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, parallel
//! orchestration and the command line live in the `gtconn` companion crate,
//! which plugs into the [`exec::Executor`] and [`exec::Clock`] hooks defined
//! here.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod exec;
pub mod likelihood;
pub mod math;
pub mod online;
pub mod rng;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
