//! Tasks and their per-block demand.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::BlockId;
use crate::rdp::RdpCurve;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("task {0}: weight must be finite and > 0")]
    InvalidWeight(TaskId),
    #[error("task {0}: requests no block")]
    NoBlocks(TaskId),
    #[error("task {0}: demand curves use different alpha grids")]
    GridMismatch(TaskId),
}

/// Demand curve `d_ij` for every requested block; absent blocks demand zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandVector(BTreeMap<BlockId, RdpCurve>);

impl DemandVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same curve on each of `blocks`.
    pub fn uniform(blocks: impl IntoIterator<Item = BlockId>, curve: &RdpCurve) -> Self {
        Self(blocks.into_iter().map(|b| (b, curve.clone())).collect())
    }

    pub fn insert(&mut self, block: BlockId, curve: RdpCurve) {
        self.0.insert(block, curve);
    }

    pub fn get(&self, block: BlockId) -> Option<&RdpCurve> {
        self.0.get(&block)
    }

    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockId, &RdpCurve)> {
        self.0.iter().map(|(b, c)| (*b, c))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(BlockId, RdpCurve)> for DemandVector {
    fn from_iter<I: IntoIterator<Item = (BlockId, RdpCurve)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// A scheduling request with its block ids resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub weight: f64,
    pub arrival: u64,
    /// Ticks after arrival at which the task is evicted if still pending.
    pub timeout: Option<u64>,
    pub demand: DemandVector,
    pub mechanism: String,
}

impl Task {
    pub fn new(id: TaskId, weight: f64, demand: DemandVector) -> Result<Self, TaskError> {
        let t = Self {
            id,
            weight,
            arrival: 0,
            timeout: None,
            demand,
            mechanism: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_arrival(mut self, arrival: u64) -> Self {
        self.arrival = arrival;
        self
    }

    pub fn with_timeout(mut self, timeout: Option<u64>) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_mechanism(mut self, mechanism: impl Into<String>) -> Self {
        self.mechanism = mechanism.into();
        self
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(TaskError::InvalidWeight(self.id));
        }
        let mut curves = self.demand.iter().map(|(_, c)| c);
        let first = curves.next().ok_or(TaskError::NoBlocks(self.id))?;
        if curves.any(|c| !c.grid().same(first.grid())) {
            return Err(TaskError::GridMismatch(self.id));
        }
        Ok(())
    }

    /// Tick at which the task is evicted, if it has a timeout.
    pub fn deadline(&self) -> Option<u64> {
        self.timeout.map(|t| self.arrival.saturating_add(t))
    }
}

/// Which blocks a submitted task asks for.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockRequest {
    Explicit(DemandVector),
    /// The `count` most recent blocks present at arrival, each with `curve`.
    Latest {
        count: usize,
        curve: RdpCurve,
    },
}

/// A task as submitted, before "most recent blocks" requests are resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub weight: f64,
    pub arrival: u64,
    pub timeout: Option<u64>,
    pub mechanism: String,
    pub request: BlockRequest,
}

impl TaskSpec {
    /// Resolves the request against the blocks present now (ascending ids,
    /// most recent last). Returns `None` if a latest-blocks request finds no
    /// block at all.
    pub fn resolve(&self, present: &[BlockId]) -> Option<Task> {
        let demand = match &self.request {
            BlockRequest::Explicit(d) => d.clone(),
            BlockRequest::Latest { count, curve } => {
                if present.is_empty() {
                    return None;
                }
                let take = (*count).clamp(1, present.len());
                DemandVector::uniform(present[present.len() - take..].iter().copied(), curve)
            }
        };
        Some(Task {
            id: self.id,
            weight: self.weight,
            arrival: self.arrival,
            timeout: self.timeout,
            demand,
            mechanism: self.mechanism.clone(),
        })
    }

    /// Number of blocks requested (the count for latest-blocks requests).
    pub fn block_count(&self) -> usize {
        match &self.request {
            BlockRequest::Explicit(d) => d.len(),
            BlockRequest::Latest { count, .. } => *count,
        }
    }

    /// The demand curve, when the same curve applies to every requested block.
    pub fn uniform_curve(&self) -> Option<&RdpCurve> {
        match &self.request {
            BlockRequest::Latest { curve, .. } => Some(curve),
            BlockRequest::Explicit(d) => {
                let mut it = d.iter().map(|(_, c)| c);
                let first = it.next()?;
                it.all(|c| c == first).then_some(first)
            }
        }
    }
}

impl From<Task> for TaskSpec {
    fn from(t: Task) -> Self {
        Self {
            id: t.id,
            weight: t.weight,
            arrival: t.arrival,
            timeout: t.timeout,
            mechanism: t.mechanism,
            request: BlockRequest::Explicit(t.demand),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdp::AlphaGrid;

    #[test]
    fn validation() {
        let g = AlphaGrid::default();
        let c = RdpCurve::zero(&g);
        let d = DemandVector::uniform([BlockId(0)], &c);
        assert!(Task::new(TaskId(0), 1.0, d.clone()).is_ok());
        assert_eq!(
            Task::new(TaskId(0), 0.0, d.clone()),
            Err(TaskError::InvalidWeight(TaskId(0)))
        );
        assert_eq!(
            Task::new(TaskId(1), 1.0, DemandVector::new()),
            Err(TaskError::NoBlocks(TaskId(1)))
        );
        let mut mixed = d;
        mixed.insert(BlockId(1), RdpCurve::zero(&AlphaGrid::single(2.0).unwrap()));
        assert_eq!(
            Task::new(TaskId(2), 1.0, mixed),
            Err(TaskError::GridMismatch(TaskId(2)))
        );
    }

    #[test]
    fn latest_blocks_resolution() {
        let g = AlphaGrid::default();
        let c = RdpCurve::zero(&g);
        let spec = TaskSpec {
            id: TaskId(3),
            weight: 1.0,
            arrival: 5,
            timeout: Some(2),
            mechanism: "gaussian".into(),
            request: BlockRequest::Latest {
                count: 2,
                curve: c.clone(),
            },
        };
        let ids: Vec<BlockId> = (0..5).map(BlockId).collect();
        let t = spec.resolve(&ids).unwrap();
        assert_eq!(t.demand.blocks().collect::<Vec<_>>(), vec![BlockId(3), BlockId(4)]);
        assert_eq!(t.deadline(), Some(7));
        let short = spec.resolve(&ids[..1]).unwrap();
        assert_eq!(short.demand.len(), 1);
        assert!(spec.resolve(&[]).is_none());
    }
}
