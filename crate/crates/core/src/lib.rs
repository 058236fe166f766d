//! Quantum walk of a single atom on a one-dimensional lattice, negative
//! measurements on it, and the Leggett-Garg analysis of the resulting
//! correlators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod classical;
pub mod config;
pub mod error;
pub mod eventlog;
pub mod lattice;
pub mod measurement;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod walk;

pub use analysis::{CorrelationReport, Correlators};
pub use config::ProtocolConfig;
pub use error::{Error, Result};
pub use lattice::{
    PositionDistribution, Spin, SpinSite, Walker, WalkerDensity, WalkerState, Window,
};
pub use measurement::{Arm, Branch, EventRecord, QScheme, RemovalProtocol};
pub use rng::StreamSeed;
pub use walk::{CoinParams, WalkSpec};
