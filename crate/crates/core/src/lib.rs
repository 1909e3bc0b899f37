//! Bags and queues built from interfering base objects, with a
//! deterministic interleaving explorer, sequential specifications, and
//! linearizability and strong-linearizability checkers.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod primitives;
pub mod sim;
pub mod slcheck;
pub mod specs;
pub mod stress;

pub use error::{Error, Result};
