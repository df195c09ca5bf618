//! Sparse mean-field control on large sparse graphs.
//!
//! The crate covers the whole pipeline: graph generators and rooted
//! neighborhood extraction ([`graph`]), canonical neighborhood censuses
//! ([`census`]), the epidemic N-agent system ([`env`]), a small reverse-mode
//! autodiff engine with a message-passing encoder ([`autodiff`], [`mpnn`]),
//! hierarchical policies ([`policy`]), actor-critic training ([`rl`]), exact
//! dynamic-programming oracles ([`dp`]) and experiment orchestration
//! ([`studies`]).

pub mod autodiff;
pub mod census;
pub mod config;
pub mod dp;
pub mod env;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod mpnn;
pub mod noise;
pub mod policy;
pub mod rl;
pub mod studies;

pub use error::{Error, Result};
