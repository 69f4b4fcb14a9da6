//! Knapsack solvers used by the schedulers.
//!
//! * [`scalar_knapsack_fptas`]: profit-scaling FPTAS for the 0/1 knapsack.
//! * [`single_block_privacy_knapsack`]: one FPTAS run per RDP order of a block.
//! * [`exact_privacy_knapsack`]: exact branch-and-bound for small instances.

mod exact;
mod fptas;

pub use exact::{exact_privacy_knapsack, ExactLimits, PrivacyKnapsack};
pub use fptas::{scalar_knapsack_fptas, single_block_privacy_knapsack, SingleBlockSolution};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KnapsackError {
    #[error("invalid knapsack instance: {0}")]
    InvalidInstance(String),
    #[error("approximation parameter eta must be > 0, got {0}")]
    InvalidEta(f64),
    #[error("instance is too large for the exact solver: {0}")]
    Intractable(String),
}

/// One-dimensional 0/1 knapsack: pick items maximizing total weight with
/// total demand at most `capacity`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarKnapsack {
    pub demands: Vec<f64>,
    pub weights: Vec<f64>,
    pub capacity: f64,
}

impl ScalarKnapsack {
    pub fn new(demands: Vec<f64>, weights: Vec<f64>, capacity: f64) -> Result<Self, KnapsackError> {
        if demands.len() != weights.len() {
            return Err(KnapsackError::InvalidInstance(format!(
                "{} demands but {} weights",
                demands.len(),
                weights.len()
            )));
        }
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(KnapsackError::InvalidInstance(format!("capacity {capacity}")));
        }
        if demands.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(KnapsackError::InvalidInstance("demands must be finite and >= 0".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(KnapsackError::InvalidInstance("weights must be finite and > 0".into()));
        }
        Ok(Self {
            demands,
            weights,
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }
}

/// Selected item indexes (ascending) and their total weight.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnapsackSolution {
    pub selected: Vec<usize>,
    pub weight: f64,
}
