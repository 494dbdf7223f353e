//! Decentralized end-to-end network-slicing orchestration.
//!
//! A central ADMM [`coordinator`] enforces per-slice performance agreements by
//! exchanging `z - y` scalars with one DDPG [`agent`] per resource autonomy.
//! Each agent allocates radio, transport and compute capacity to slices inside
//! a simulated queueing [`env`]. [`baselines`] provides the comparison
//! policies and an exact oracle, and [`harness`] wires it all into the
//! coordination loop, parameter sweeps and the `slicelab` command line.

pub mod agent;
pub mod baselines;
pub mod coordinator;
pub mod env;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod regression;

pub use error::{Error, Result};
