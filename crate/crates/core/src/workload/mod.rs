//! Workload synthesis: the curve corpus, microbenchmark, trace mapping and
//! the weighted two-category workload, plus the workload file format.
//!
//! Curve sizes are measured as normalized demand: the smallest ratio
//! `ε(α) / c(α)` against the capacity of a reference block with global
//! budget `(10, 1e-7)`, over orders where that capacity is positive. The
//! minimizing order is the curve's best alpha.

mod corpus;
mod format;
mod microbench;
mod trace;
mod weighted;

pub use corpus::{
    build_curve_corpus, build_curve_corpus_with, CorpusCurve, CorpusSpec, CurveCorpus, Mechanism, OUTLIER_THRESHOLD,
    TARGET_ALPHAS,
};
pub use format::{BlockDemand, RequestRecord, TaskRecord, WorkloadFile};
pub use microbench::{generate_microbenchmark, MicrobenchKnobs};
pub use trace::{
    generate_synthetic_trace, map_trace, read_trace, write_trace, MachineClass, SyntheticTraceParams,
    TraceMappingParams, TraceRecord,
};
pub use weighted::{generate_weighted_two_category, WeightedParams, LARGE_WEIGHTS, SMALL_WEIGHTS};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rdp::{block_capacity_curve, AlphaGrid, DpGuarantee, RdpCurve, RdpError};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("no corpus curve has best alpha {0}")]
    EmptyBucket(f64),
    #[error("invalid workload parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("trace record {index}: {reason}")]
    Trace { index: usize, reason: String },
    #[error("workload file: {0}")]
    Format(String),
    #[error(transparent)]
    Rdp(#[from] RdpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> WorkloadError {
    WorkloadError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Global budget of the reference block used to size curves.
pub const REFERENCE_BUDGET: DpGuarantee = DpGuarantee {
    epsilon: 10.0,
    delta: 1e-7,
};

pub fn reference_capacity(grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    block_capacity_curve(REFERENCE_BUDGET, grid)
}

/// `(order index, min_α ε(α)/c(α))` over orders with positive capacity, ties
/// to the smaller order. `None` when no order has capacity.
pub fn normalized_min(curve: &RdpCurve, capacity: &RdpCurve) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (a, (&e, &c)) in curve.epsilons().iter().zip(capacity.epsilons()).enumerate() {
        if c <= 0.0 {
            continue;
        }
        let r = e / c;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((a, r));
        }
    }
    best
}

/// Scales `curve` so its normalized demand is `target`. Scaling is
/// multiplicative, so the best alpha is unchanged.
pub fn rescale_to(curve: &RdpCurve, capacity: &RdpCurve, target: f64) -> Option<RdpCurve> {
    let (_, current) = normalized_min(curve, capacity)?;
    if !(current > 0.0 && current.is_finite()) {
        return None;
    }
    Some(curve.scaled(target / current))
}

/// Discrete Gaussian truncated to `[lo, hi]`: a rounded continuous sample,
/// rejected until it lands in range.
pub fn truncated_discrete_gaussian<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64, lo: i64, hi: i64) -> i64 {
    debug_assert!(lo <= hi);
    if sigma <= 0.0 {
        return (mu.round() as i64).clamp(lo, hi);
    }
    let normal = Normal::new(mu, sigma).expect("sigma is positive");
    for _ in 0..100_000 {
        let x = normal.sample(rng).round();
        if x >= lo as f64 && x <= hi as f64 {
            return x as i64;
        }
    }
    // the range is far in the tail; fall back to the nearest bound
    (mu.round() as i64).clamp(lo, hi)
}
