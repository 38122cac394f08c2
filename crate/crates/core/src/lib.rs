//! Decentralized input and state estimation with one exchange round per step.
//!
//! Each agent predicts, estimates the unknown input from its own innovation
//! (gated by an observation time window) and performs an input-free
//! information update. Agents then exchange a single packet with their
//! 1-hop neighbors, fuse inputs by fast covariance intersection, fuse states
//! by summing information increments, and optionally diffuse toward their
//! neighbors' predictions.
//!
//! The [`harness`] module drives the two planar tracking scenarios and
//! writes CSV traces and metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod error;
pub mod estimator;
pub mod fusion;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod network;
pub mod node;
pub mod oracle;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
