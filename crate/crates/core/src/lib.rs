//! Belief filtering for dynamic Bayesian networks that exploits passivity:
//! belief factors whose variables cannot change under the chosen action are
//! not propagated through the transition model.
//!
//! The crate is `no_std` (it needs `alloc`). Thread pools, wall-clock timing
//! and file formats live in the `psbf` companion crate and plug in through
//! [`exec::Executor`] and [`exec::Clock`].

#![no_std]

extern crate alloc;

pub mod belief;
pub mod clustering;
pub mod dbn;
pub mod error;
pub mod exec;
pub mod filter;
pub mod passivity;
pub mod process;
pub mod synth;
pub mod warehouse;

pub use belief::{FactorLayout, FactoredBelief, JointBelief};
pub use clustering::{Clustering, MarginalizedAction};
pub use dbn::{ActionDbn, Cpt, DbnBuilder, Node, VarSpec};
pub use error::{Error, Result};
pub use passivity::{PassivityReport, PassivityVerdict, Status};
pub use process::{NamedClustering, Process};
