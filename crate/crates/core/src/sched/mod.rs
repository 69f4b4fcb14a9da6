//! Scheduling policies over privacy blocks.
//!
//! DPK, DPF and FCFS share one greedy loop: sort the pending tasks, then grant
//! each task whose every requested block's filter accepts it, skipping (not
//! stopping at) tasks that do not fit. Optimal solves the batch exactly.
//! When a DPK batch touches a single block, the FPTAS packing at that block's
//! best order replaces the greedy pass if it carries more weight; greedy alone
//! has no constant-factor guarantee.

mod efficiency;

pub use efficiency::{
    area_efficiency, compute_best_alpha, dpf_efficiency, dpk_efficiency, sort_by_efficiency, EfficiencyScore,
};

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{Availability, Block, BlockId};
use crate::knapsack::{
    exact_privacy_knapsack, single_block_privacy_knapsack, ExactLimits, KnapsackError, PrivacyKnapsack,
};
use crate::task::{Task, TaskId};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("block {0} is not in the capacity snapshot")]
    UnknownBlock(BlockId),
    #[error(transparent)]
    Knapsack(#[from] KnapsackError),
}

/// Default DPK approximation parameter.
pub const DEFAULT_ETA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    Dpk {
        #[serde(default = "default_eta")]
        eta: f64,
    },
    Dpf,
    Fcfs,
    Optimal {
        #[serde(default = "default_max_tasks")]
        max_tasks: usize,
        #[serde(default = "default_max_nodes")]
        max_nodes: u64,
    },
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_max_tasks() -> usize {
    ExactLimits::default().max_tasks
}

fn default_max_nodes() -> u64 {
    ExactLimits::default().max_nodes
}

impl Policy {
    pub fn dpk() -> Self {
        Policy::Dpk { eta: DEFAULT_ETA }
    }

    pub fn optimal() -> Self {
        let l = ExactLimits::default();
        Policy::Optimal {
            max_tasks: l.max_tasks,
            max_nodes: l.max_nodes,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Dpk { .. } => "dpk",
            Policy::Dpf => "dpf",
            Policy::Fcfs => "fcfs",
            Policy::Optimal { .. } => "optimal",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Policy::Dpk { eta } if !(eta.is_finite() && *eta > 0.0) => Err(format!("eta must be > 0, got {eta}")),
            Policy::Optimal { max_tasks: 0, .. } => Err("max_tasks must be at least 1".into()),
            _ => Ok(()),
        }
    }

    /// Runs one scheduling pass over `pending`, consuming budget on `blocks`.
    /// Returns granted task ids in grant order. Tasks requesting a block
    /// missing from `avail` are left alone.
    pub fn schedule(
        &self,
        pending: &[&Task],
        blocks: &mut BTreeMap<BlockId, Block>,
        avail: &Availability,
    ) -> Result<Vec<TaskId>, ScheduleError> {
        let eligible: Vec<&Task> = pending
            .iter()
            .copied()
            .filter(|t| {
                t.demand
                    .blocks()
                    .all(|b| avail.limits.contains_key(&b) && blocks.contains_key(&b))
            })
            .collect();
        match self {
            Policy::Optimal { max_tasks, max_nodes } => {
                let limits = ExactLimits {
                    max_tasks: *max_tasks,
                    max_nodes: *max_nodes,
                };
                optimal_allocate(&eligible, blocks, avail, limits)
            }
            Policy::Dpk { eta } => {
                let order = self.order(&eligible, &avail.remaining)?;
                match sole_block(&eligible) {
                    Some(b) => dpk_single_block(&eligible, &order, b, blocks, avail, *eta),
                    None => Ok(greedy_allocate(&order, blocks, avail)),
                }
            }
            _ => {
                let order = self.order(&eligible, &avail.remaining)?;
                Ok(greedy_allocate(&order, blocks, avail))
            }
        }
    }

    /// Greedy scheduling order against the `remaining` capacity snapshot.
    pub fn order<'a>(
        &self,
        tasks: &[&'a Task],
        remaining: &BTreeMap<BlockId, crate::rdp::RdpCurve>,
    ) -> Result<Vec<&'a Task>, ScheduleError> {
        match self {
            Policy::Fcfs => {
                let mut v = tasks.to_vec();
                v.sort_by_key(|t| (t.arrival, t.id));
                Ok(v)
            }
            Policy::Dpf => {
                let scores: Vec<_> = tasks.iter().map(|t| dpf_efficiency(t, remaining)).collect();
                Ok(sort_by_efficiency(tasks, &scores))
            }
            Policy::Dpk { eta } => {
                let best = best_alphas(tasks, remaining, *eta)?;
                let scores = tasks
                    .iter()
                    .map(|t| dpk_efficiency(t, &best, remaining))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(sort_by_efficiency(tasks, &scores))
            }
            Policy::Optimal { .. } => Err(ScheduleError::ContractViolation(
                "the exact solver has no greedy order".into(),
            )),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Best order index of every block some task requests, computed in parallel
/// and collected in block order.
pub fn best_alphas(
    tasks: &[&Task],
    remaining: &BTreeMap<BlockId, crate::rdp::RdpCurve>,
    eta: f64,
) -> Result<BTreeMap<BlockId, usize>, ScheduleError> {
    let mut by_block: BTreeMap<BlockId, Vec<&Task>> = BTreeMap::new();
    for t in tasks {
        for b in t.demand.blocks() {
            by_block.entry(b).or_default().push(t);
        }
    }
    let jobs: Vec<(BlockId, Vec<&Task>)> = by_block.into_iter().collect();
    jobs.par_iter()
        .map(|(b, cands)| {
            let cap = remaining.get(b).ok_or(ScheduleError::UnknownBlock(*b))?;
            Ok((*b, compute_best_alpha(*b, cands, cap, eta)?))
        })
        .collect::<Result<Vec<_>, ScheduleError>>()
        .map(|v| v.into_iter().collect())
}

/// Grants tasks in the given order whenever every requested block's filter
/// accepts the demand; skipped tasks do not stop the scan.
pub fn greedy_allocate(order: &[&Task], blocks: &mut BTreeMap<BlockId, Block>, avail: &Availability) -> Vec<TaskId> {
    let mut granted = Vec::new();
    for t in order {
        if try_grant(t, blocks, avail) {
            granted.push(t.id);
        }
    }
    granted
}

/// All-or-nothing grant of `task` on every block it requests.
pub fn try_grant(task: &Task, blocks: &mut BTreeMap<BlockId, Block>, avail: &Availability) -> bool {
    let ok = task
        .demand
        .iter()
        .all(|(b, d)| match (blocks.get(&b), avail.limits.get(&b)) {
            (Some(block), Some(limit)) => block.can_grant(d, limit),
            _ => false,
        });
    if ok {
        for (b, d) in task.demand.iter() {
            let block = blocks.get_mut(&b).expect("checked");
            block.consume(d, &avail.limits[&b]).expect("grant was checked");
        }
    }
    ok
}

/// The one block every task requests, if the batch touches exactly one.
fn sole_block(tasks: &[&Task]) -> Option<BlockId> {
    let first = tasks.first()?.demand.blocks().next()?;
    tasks
        .iter()
        .all(|t| t.demand.len() == 1 && t.demand.get(first).is_some())
        .then_some(first)
}

fn weight_of(tasks: &[&Task], ids: &[TaskId]) -> f64 {
    tasks.iter().filter(|t| ids.contains(&t.id)).map(|t| t.weight).sum()
}

/// Better of the greedy pass and the FPTAS packing at the best order.
fn dpk_single_block(
    tasks: &[&Task],
    order: &[&Task],
    block: BlockId,
    blocks: &mut BTreeMap<BlockId, Block>,
    avail: &Availability,
    eta: f64,
) -> Result<Vec<TaskId>, ScheduleError> {
    let mut greedy_blocks = blocks.clone();
    let greedy = greedy_allocate(order, &mut greedy_blocks, avail);
    let capacity = avail
        .signed_remaining(blocks, block)
        .ok_or(ScheduleError::UnknownBlock(block))?;
    let demands: Vec<Vec<f64>> = tasks
        .iter()
        .map(|t| t.demand.get(block).expect("sole block").epsilons().to_vec())
        .collect();
    let weights: Vec<f64> = tasks.iter().map(|t| t.weight).collect();
    let sol = single_block_privacy_knapsack(&demands, &weights, &capacity, eta * 2.0 / 3.0)?;
    let packed: Vec<&Task> = order
        .iter()
        .copied()
        .filter(|t| sol.selected.iter().any(|&i| tasks[i].id == t.id))
        .collect();
    let packed_ids: Vec<TaskId> = packed.iter().map(|t| t.id).collect();
    if weight_of(tasks, &packed_ids) > weight_of(tasks, &greedy) {
        let mut packed_blocks = blocks.clone();
        let granted = greedy_allocate(&packed, &mut packed_blocks, avail);
        if granted.len() == packed.len() {
            *blocks = packed_blocks;
            return Ok(granted);
        }
    }
    *blocks = greedy_blocks;
    Ok(greedy)
}

fn optimal_allocate(
    tasks: &[&Task],
    blocks: &mut BTreeMap<BlockId, Block>,
    avail: &Availability,
    limits: ExactLimits,
) -> Result<Vec<TaskId>, ScheduleError> {
    let mut sorted = tasks.to_vec();
    sorted.sort_by_key(|t| (t.arrival, t.id));
    let block_ids: Vec<BlockId> = {
        let mut v: Vec<BlockId> = sorted.iter().flat_map(|t| t.demand.blocks()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let orders = sorted
        .first()
        .and_then(|t| t.demand.iter().next())
        .map_or(0, |(_, c)| c.len());
    let capacities = block_ids
        .iter()
        .map(|b| {
            avail
                .signed_remaining(blocks, *b)
                .ok_or(ScheduleError::UnknownBlock(*b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut demands = Vec::with_capacity(sorted.len());
    let mut requests = Vec::with_capacity(sorted.len());
    for t in &sorted {
        demands.push(
            block_ids
                .iter()
                .map(|b| {
                    t.demand
                        .get(*b)
                        .map_or_else(|| vec![0.0; orders], |c| c.epsilons().to_vec())
                })
                .collect(),
        );
        requests.push(block_ids.iter().map(|b| t.demand.get(*b).is_some()).collect());
    }
    let inst = PrivacyKnapsack {
        weights: sorted.iter().map(|t| t.weight).collect(),
        demands,
        capacities,
        requests,
    };
    let sol = exact_privacy_knapsack(&inst, limits)?;
    let mut granted = Vec::with_capacity(sol.selected.len());
    for i in sol.selected {
        let ok = try_grant(sorted[i], blocks, avail);
        debug_assert!(ok, "exact selection must pass the filters");
        if ok {
            granted.push(sorted[i].id);
        }
    }
    Ok(granted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn run(policy: &Policy, sc: &scenarios::Scenario) -> Vec<TaskId> {
        let mut blocks = sc.blocks.clone();
        let avail = Availability::full(&blocks);
        let refs: Vec<&Task> = sc.tasks.iter().collect();
        policy.schedule(&refs, &mut blocks, &avail).unwrap()
    }

    #[test]
    fn multi_block_example() {
        let sc = scenarios::multi_block_contention();
        assert_eq!(run(&Policy::dpk(), &sc), vec![TaskId(2), TaskId(3), TaskId(4)]);
        assert_eq!(run(&Policy::Dpf, &sc), vec![TaskId(1)]);
        assert_eq!(run(&Policy::optimal(), &sc).len(), 3);
    }

    #[test]
    fn fcfs_depends_on_arrival() {
        let sc = scenarios::multi_block_contention();
        assert_eq!(run(&Policy::Fcfs, &sc), vec![TaskId(1)]);
        let mut late = sc.clone();
        late.tasks[0].arrival = 10;
        assert_eq!(run(&Policy::Fcfs, &late), vec![TaskId(2), TaskId(3), TaskId(4)]);
    }

    #[test]
    fn rdp_orders_example() {
        let sc = scenarios::rdp_orders();
        assert_eq!(run(&Policy::dpk(), &sc).len(), 4);
        assert_eq!(run(&Policy::Dpf, &sc).len(), 2);
        assert_eq!(run(&Policy::optimal(), &sc).len(), 4);
    }

    #[test]
    fn empty_pending_grants_nothing() {
        let sc = scenarios::rdp_orders();
        let mut blocks = sc.blocks.clone();
        let avail = Availability::full(&blocks);
        for p in [Policy::dpk(), Policy::Dpf, Policy::Fcfs, Policy::optimal()] {
            assert!(p.schedule(&[], &mut blocks, &avail).unwrap().is_empty());
        }
    }

    #[test]
    fn single_block_packing_beats_greedy() {
        use crate::rdp::{AlphaGrid, RdpCurve};
        use crate::task::DemandVector;
        // a tiny dense task steals room from two half-capacity tasks
        let grid = AlphaGrid::single(2.0).unwrap();
        let c = |v: f64| RdpCurve::new(grid.clone(), vec![v]).unwrap();
        let task = |id, d, w| Task::new(TaskId(id), w, DemandVector::uniform([BlockId(0)], &c(d))).unwrap();
        let tasks = [task(0, 0.01, 0.03), task(1, 0.5, 1.0), task(2, 0.5, 1.0)];
        let mut blocks = BTreeMap::from([(BlockId(0), Block::new(BlockId(0), 0, c(1.0), 1).unwrap())]);
        let avail = Availability::full(&blocks);
        let refs: Vec<&Task> = tasks.iter().collect();
        assert_eq!(Policy::dpk().order(&refs, &avail.remaining).unwrap()[0].id, TaskId(0));
        let granted = Policy::dpk().schedule(&refs, &mut blocks, &avail).unwrap();
        assert_eq!(granted, vec![TaskId(1), TaskId(2)]);
        assert!(blocks[&BlockId(0)].is_safe());
    }

    #[test]
    fn all_fit_same_grant_set() {
        let mut sc = scenarios::multi_block_contention();
        for b in sc.blocks.values_mut() {
            *b = Block::new(b.id, 0, b.capacity().scaled(10.0), 1).unwrap();
        }
        let mut dpk = run(&Policy::dpk(), &sc);
        let mut fcfs = run(&Policy::Fcfs, &sc);
        dpk.sort();
        fcfs.sort();
        assert_eq!(dpk, fcfs);
        assert_eq!(dpk.len(), 4);
    }

    #[test]
    fn policy_serde() {
        let p: Policy = serde_json::from_str(r#"{"kind":"dpk"}"#).unwrap();
        assert_eq!(p, Policy::dpk());
        let o: Policy = serde_json::from_str(r#"{"kind":"optimal","max_tasks":12}"#).unwrap();
        assert!(matches!(o, Policy::Optimal { max_tasks: 12, .. }));
        assert!(Policy::Dpk { eta: 0.0 }.validate().is_err());
    }
}
