//! Privacy blocks: disjoint data partitions, each guarded by its own RDP
//! privacy filter.
//!
//! A demand is granted on a block iff at least one order stays within the
//! block's (unlocked) budget after adding it. Consumption itself is additive on
//! every order.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rdp::{rdp_to_dp, RdpCurve, RdpError};

/// Relative slack applied to every feasibility comparison.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// `used <= limit`, up to [`FEASIBILITY_RTOL`] of `max(|limit|, 1)`.
#[inline]
pub fn fits(used: f64, limit: f64) -> bool {
    used <= limit + FEASIBILITY_RTOL * limit.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum BlockError {
    #[error("block {block} arrives at tick {arrival}, queried at tick {now}")]
    NotArrived { block: BlockId, arrival: u64, now: u64 },
    #[error("filter of block {0} denies the demand")]
    Denied(BlockId),
    #[error("block {0}: unlock steps must be at least 1")]
    InvalidUnlockSteps(BlockId),
    #[error("batch period must be at least 1 tick")]
    InvalidPeriod,
    #[error(transparent)]
    Rdp(#[from] RdpError),
}

/// Number of scheduling steps a block has witnessed at `now`, counting the
/// current one. `period = None` stands for an infinite batch period.
pub fn steps_witnessed(arrival: u64, now: u64, period: Option<u64>) -> u64 {
    match period {
        None => 1,
        Some(t) => (now - arrival).div_ceil(t).max(1),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub arrival: u64,
    capacity: RdpCurve,
    consumed: RdpCurve,
    unlock_steps: u32,
}

impl Block {
    pub fn new(id: BlockId, arrival: u64, capacity: RdpCurve, unlock_steps: u32) -> Result<Self, BlockError> {
        if unlock_steps == 0 {
            return Err(BlockError::InvalidUnlockSteps(id));
        }
        let consumed = RdpCurve::zero(capacity.grid());
        Ok(Self {
            id,
            arrival,
            capacity,
            consumed,
            unlock_steps,
        })
    }

    pub fn capacity(&self) -> &RdpCurve {
        &self.capacity
    }

    pub fn consumed(&self) -> &RdpCurve {
        &self.consumed
    }

    pub fn unlock_steps(&self) -> u32 {
        self.unlock_steps
    }

    /// Budget released so far: `min(steps, N)/N · ε_jα`, before subtracting
    /// consumption.
    pub fn unlocked_limit(&self, now: u64, period: Option<u64>) -> Result<RdpCurve, BlockError> {
        if now < self.arrival {
            return Err(BlockError::NotArrived {
                block: self.id,
                arrival: self.arrival,
                now,
            });
        }
        if period == Some(0) {
            return Err(BlockError::InvalidPeriod);
        }
        let n = u64::from(self.unlock_steps);
        let steps = steps_witnessed(self.arrival, now, period).min(n);
        if steps == n {
            return Ok(self.capacity.clone());
        }
        Ok(self.capacity.scaled(steps as f64 / n as f64))
    }

    /// Capacity still available to new tasks at `now`: the unlocked budget
    /// minus everything granted so far, floored at zero per order.
    pub fn unlocked_capacity(&self, now: u64, period: Option<u64>) -> Result<RdpCurve, BlockError> {
        let limit = self.unlocked_limit(now, period)?;
        Ok(remaining(&limit, &self.consumed))
    }

    /// Filter check: is there an order where consumption plus `demand` stays
    /// within `limit`?
    pub fn can_grant(&self, demand: &RdpCurve, limit: &RdpCurve) -> bool {
        debug_assert!(demand.grid().same(limit.grid()));
        self.consumed
            .epsilons()
            .iter()
            .zip(demand.epsilons())
            .zip(limit.epsilons())
            .any(|((c, d), l)| fits(c + d, *l))
    }

    /// Adds `demand` on every order after re-checking the filter against
    /// `limit`.
    pub fn consume(&mut self, demand: &RdpCurve, limit: &RdpCurve) -> Result<(), BlockError> {
        if !demand.grid().same(self.capacity.grid()) {
            return Err(RdpError::GridMismatch.into());
        }
        if !self.can_grant(demand, limit) {
            return Err(BlockError::Denied(self.id));
        }
        self.consumed.add_assign(demand);
        Ok(())
    }

    /// Filter safety: some order's consumption is within the full capacity.
    pub fn is_safe(&self) -> bool {
        self.consumed
            .epsilons()
            .iter()
            .zip(self.capacity.epsilons())
            .any(|(c, cap)| fits(*c, *cap))
    }

    /// Traditional-DP epsilon of everything consumed so far at `delta`.
    pub fn consumed_guarantee(&self, delta: f64) -> Result<f64, BlockError> {
        Ok(rdp_to_dp(&self.consumed, delta)?.epsilon)
    }
}

fn remaining(limit: &RdpCurve, consumed: &RdpCurve) -> RdpCurve {
    let eps = limit
        .epsilons()
        .iter()
        .zip(consumed.epsilons())
        .map(|(l, c)| (l - c).max(0.0))
        .collect();
    RdpCurve::from_raw(limit.grid().clone(), eps)
}

/// Per-block budget snapshot a scheduling pass runs against.
///
/// `limits` bound total consumption (the filter check); `remaining` is the
/// normalizing capacity used by efficiency metrics.
#[derive(Clone, Debug, Default)]
pub struct Availability {
    pub limits: BTreeMap<BlockId, RdpCurve>,
    pub remaining: BTreeMap<BlockId, RdpCurve>,
}

impl Availability {
    /// Fully unlocked budgets (offline setting).
    pub fn full(blocks: &BTreeMap<BlockId, Block>) -> Self {
        let mut out = Self::default();
        for (id, b) in blocks {
            out.remaining.insert(*id, remaining(&b.capacity, &b.consumed));
            out.limits.insert(*id, b.capacity.clone());
        }
        out
    }

    /// Budgets unlocked at scheduling instant `now`.
    pub fn unlocked(blocks: &BTreeMap<BlockId, Block>, now: u64, period: Option<u64>) -> Result<Self, BlockError> {
        let mut out = Self::default();
        for (id, b) in blocks {
            let limit = b.unlocked_limit(now, period)?;
            out.remaining.insert(*id, remaining(&limit, &b.consumed));
            out.limits.insert(*id, limit);
        }
        Ok(out)
    }

    /// Capacity minus consumption without flooring; negative entries mark
    /// orders that are already over budget.
    pub fn signed_remaining(&self, blocks: &BTreeMap<BlockId, Block>, id: BlockId) -> Option<Vec<f64>> {
        let limit = self.limits.get(&id)?;
        let b = blocks.get(&id)?;
        Some(
            limit
                .epsilons()
                .iter()
                .zip(b.consumed.epsilons())
                .map(|(l, c)| l - c)
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdp::{block_capacity_curve, AlphaGrid, DpGuarantee};
    use proptest::prelude::*;

    fn two_order() -> AlphaGrid {
        AlphaGrid::new(vec![5.0, 64.0]).unwrap()
    }

    fn curve(g: &AlphaGrid, v: &[f64]) -> RdpCurve {
        RdpCurve::new(g.clone(), v.to_vec()).unwrap()
    }

    #[test]
    fn unlocking_schedule() {
        let g = two_order();
        let cap = curve(&g, &[1.0, 2.0]);
        let b = Block::new(BlockId(0), 10, cap.clone(), 10).unwrap();
        // arriving at the scheduling instant counts as the first step
        assert_eq!(b.unlocked_capacity(10, Some(5)).unwrap(), cap.scaled(0.1));
        assert_eq!(b.unlocked_capacity(11, Some(5)).unwrap(), cap.scaled(0.1));
        assert_eq!(b.unlocked_capacity(15, Some(5)).unwrap(), cap.scaled(0.1));
        assert_eq!(b.unlocked_capacity(16, Some(5)).unwrap(), cap.scaled(0.2));
        assert_eq!(b.unlocked_capacity(60, Some(5)).unwrap(), cap);
        assert_eq!(b.unlocked_capacity(1000, Some(5)).unwrap(), cap);
        assert!(matches!(
            b.unlocked_capacity(9, Some(5)),
            Err(BlockError::NotArrived { .. })
        ));
        assert!(Block::new(BlockId(1), 0, cap, 0).is_err());
    }

    #[test]
    fn unlocking_subtracts_prior_grants() {
        let g = two_order();
        let mut b = Block::new(BlockId(0), 0, curve(&g, &[1.0, 1.0]), 2).unwrap();
        let first = b.unlocked_limit(0, Some(1)).unwrap();
        b.consume(&curve(&g, &[0.3, 0.0]), &first).unwrap();
        let avail = b.unlocked_capacity(2, Some(1)).unwrap();
        assert!((avail.get(0) - 0.7).abs() < 1e-12);
        assert_eq!(avail.get(1), 1.0);
    }

    #[test]
    fn unlocking_is_monotone_and_capped() {
        let g = two_order();
        let cap = curve(&g, &[3.0, 4.0]);
        let b = Block::new(BlockId(0), 3, cap.clone(), 7).unwrap();
        let mut prev = RdpCurve::zero(&g);
        for t in 3..80 {
            let now = b.unlocked_capacity(t, Some(4)).unwrap();
            for i in 0..2 {
                assert!(now.get(i) >= prev.get(i));
                assert!(now.get(i) <= cap.get(i));
            }
            prev = now;
        }
    }

    #[test]
    fn infinite_period_unlocks_one_fraction() {
        let g = two_order();
        let cap = curve(&g, &[1.0, 1.0]);
        let b = Block::new(BlockId(0), 0, cap.clone(), 4).unwrap();
        assert_eq!(b.unlocked_limit(100, None).unwrap(), cap.scaled(0.25));
        let one = Block::new(BlockId(0), 0, cap.clone(), 1).unwrap();
        assert_eq!(one.unlocked_limit(100, None).unwrap(), cap);
    }

    #[test]
    fn grant_semantics() {
        let g = two_order();
        let cap = curve(&g, &[1.0, 1.0]);
        let b = Block::new(BlockId(0), 0, cap.clone(), 1).unwrap();
        assert!(b.can_grant(&RdpCurve::zero(&g), &cap));
        assert!(!b.can_grant(&curve(&g, &[1.5, 1.5]), &cap));
        // over budget at α=5 only fits at α=64
        assert!(b.can_grant(&curve(&g, &[1.5, 0.9]), &cap));
        // exact fit passes
        assert!(b.can_grant(&curve(&g, &[1.0, 3.0]), &cap));
    }

    #[test]
    fn consume_is_additive_on_every_order() {
        let g = two_order();
        let cap = curve(&g, &[1.0, 1.0]);
        let mut b = Block::new(BlockId(0), 0, cap.clone(), 1).unwrap();
        b.consume(&RdpCurve::zero(&g), &cap).unwrap();
        assert!(b.consumed().is_zero());
        b.consume(&curve(&g, &[0.4, 2.0]), &cap).unwrap();
        b.consume(&curve(&g, &[0.5, 0.1]), &cap).unwrap();
        assert!((b.consumed().get(0) - 0.9).abs() < 1e-12);
        assert!((b.consumed().get(1) - 2.1).abs() < 1e-12);
        let err = b.consume(&curve(&g, &[0.2, 0.0]), &cap).unwrap_err();
        assert!(matches!(err, BlockError::Denied(BlockId(0))));
        assert!(b.is_safe());
    }

    #[test]
    fn over_budget_order_stays_closed() {
        // Once α=5 is exhausted, a zero demand on it does not reopen it.
        let g = two_order();
        let cap = curve(&g, &[1.0, 1.0]);
        let mut b = Block::new(BlockId(0), 0, cap.clone(), 1).unwrap();
        b.consume(&curve(&g, &[3.0, 0.5]), &cap).unwrap();
        assert!(!b.can_grant(&curve(&g, &[0.0, 0.6]), &cap));
        assert!(b.can_grant(&curve(&g, &[0.0, 0.5]), &cap));
    }

    proptest! {
        #[test]
        fn filter_enforces_global_guarantee(
            demands in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 12), 1..40),
            eps_g in 1.0f64..12.0,
            delta_exp in 5u32..10,
        ) {
            let grid = AlphaGrid::default();
            let delta = 10f64.powi(-(delta_exp as i32));
            let global = DpGuarantee::new(eps_g, delta).unwrap();
            let cap = block_capacity_curve(global, &grid).unwrap();
            let mut b = Block::new(BlockId(0), 0, cap.clone(), 1).unwrap();
            for d in demands {
                let d = RdpCurve::new(grid.clone(), d).unwrap();
                let _ = b.consume(&d, &cap);
                prop_assert!(b.is_safe());
                if !b.consumed().is_zero() {
                    let spent = b.consumed_guarantee(delta).unwrap();
                    prop_assert!(spent <= eps_g * (1.0 + 1e-9));
                }
            }
        }
    }
}
