//! Task efficiency metrics and per-block best-alpha selection.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::block::BlockId;
use crate::knapsack::single_block_privacy_knapsack;
use crate::rdp::RdpCurve;
use crate::task::{Task, TaskId};

use super::ScheduleError;

/// `e_i`, larger is scheduled first. `f64::INFINITY` marks tasks that demand
/// nothing on the relevant coordinates; `0.0` marks tasks that cannot fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyScore {
    pub task: TaskId,
    pub score: f64,
}

/// Ratio `d / c` with the conventions shared by the metrics: `0/x = 0`,
/// `d/0 = ∞` for positive `d`.
fn share(d: f64, c: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else if c <= 0.0 {
        f64::INFINITY
    } else {
        d / c
    }
}

fn score(task: &Task, denominator: f64) -> EfficiencyScore {
    let score = if denominator == 0.0 {
        f64::INFINITY
    } else {
        task.weight / denominator
    };
    EfficiencyScore { task: task.id, score }
}

/// DPF metric: weight over dominant share `max_{j,α} d_ijα / c_jα`.
///
/// Orders with zero capacity are skipped unless every order of a block is
/// blocked that way, in which case the task cannot run and scores zero.
pub fn dpf_efficiency(task: &Task, remaining: &BTreeMap<BlockId, RdpCurve>) -> EfficiencyScore {
    let mut dominant = 0.0f64;
    for (block, demand) in task.demand.iter() {
        let Some(cap) = remaining.get(&block) else {
            return EfficiencyScore {
                task: task.id,
                score: 0.0,
            };
        };
        let mut blocked = true;
        for (&d, &c) in demand.epsilons().iter().zip(cap.epsilons()) {
            if c > 0.0 {
                dominant = dominant.max(d / c);
                blocked = false;
            } else if d <= 0.0 {
                blocked = false;
            }
        }
        if blocked {
            return EfficiencyScore {
                task: task.id,
                score: 0.0,
            };
        }
    }
    score(task, dominant)
}

/// Area metric for single-order accounting: `w_i / Σ_j d_ij / c_j`.
pub fn area_efficiency(task: &Task, remaining: &BTreeMap<BlockId, RdpCurve>) -> Result<EfficiencyScore, ScheduleError> {
    let mut total = 0.0;
    for (block, demand) in task.demand.iter() {
        if demand.len() != 1 {
            return Err(ScheduleError::ContractViolation(
                "area efficiency needs a single-order grid; use the DPK metric".into(),
            ));
        }
        let cap = remaining.get(&block).ok_or(ScheduleError::UnknownBlock(block))?;
        total += share(demand.get(0), cap.get(0));
    }
    Ok(score(task, total))
}

/// DPK metric: `w_i / Σ_j d_{ij α̂_j} / c_{j α̂_j}` where `α̂_j` (an order
/// index) is block `j`'s best alpha.
pub fn dpk_efficiency(
    task: &Task,
    best_orders: &BTreeMap<BlockId, usize>,
    remaining: &BTreeMap<BlockId, RdpCurve>,
) -> Result<EfficiencyScore, ScheduleError> {
    let mut total = 0.0;
    for (block, demand) in task.demand.iter() {
        let a = *best_orders.get(&block).ok_or(ScheduleError::UnknownBlock(block))?;
        let cap = remaining.get(&block).ok_or(ScheduleError::UnknownBlock(block))?;
        total += share(demand.get(a), cap.get(a));
    }
    Ok(score(task, total))
}

/// Order index packing the most weight on `block` among `candidates`, with
/// each per-order knapsack solved at approximation `(2/3)·eta`. Without
/// candidates, the order with the most remaining capacity.
pub fn compute_best_alpha(
    block: BlockId,
    candidates: &[&Task],
    remaining: &RdpCurve,
    eta: f64,
) -> Result<usize, ScheduleError> {
    let candidates: Vec<&&Task> = candidates.iter().filter(|t| t.demand.get(block).is_some()).collect();
    if candidates.is_empty() {
        let mut best = 0;
        for (a, &c) in remaining.epsilons().iter().enumerate() {
            if c > remaining.get(best) {
                best = a;
            }
        }
        return Ok(best);
    }
    let demands: Vec<Vec<f64>> = candidates
        .iter()
        .map(|t| t.demand.get(block).expect("filtered").epsilons().to_vec())
        .collect();
    let weights: Vec<f64> = candidates.iter().map(|t| t.weight).collect();
    let sol = single_block_privacy_knapsack(&demands, &weights, remaining.epsilons(), eta * 2.0 / 3.0)?;
    Ok(sol.best_order)
}

/// Scheduling order: score descending, then arrival, then id.
pub fn sort_by_efficiency<'a>(tasks: &[&'a Task], scores: &[EfficiencyScore]) -> Vec<&'a Task> {
    let mut idx: Vec<usize> = (0..tasks.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .score
            .partial_cmp(&scores[a].score)
            .unwrap_or(Ordering::Equal)
            .then(tasks[a].arrival.cmp(&tasks[b].arrival))
            .then(tasks[a].id.cmp(&tasks[b].id))
    });
    idx.into_iter().map(|i| tasks[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdp::AlphaGrid;

    fn single() -> AlphaGrid {
        AlphaGrid::single(2.0).unwrap()
    }

    fn task(id: u64, w: f64, blocks: &[(u64, &[f64])], g: &AlphaGrid) -> Task {
        let d = blocks
            .iter()
            .map(|(b, v)| (BlockId(*b), RdpCurve::new(g.clone(), v.to_vec()).unwrap()))
            .collect();
        Task::new(TaskId(id), w, d).unwrap()
    }

    fn caps(g: &AlphaGrid, blocks: &[(u64, &[f64])]) -> BTreeMap<BlockId, RdpCurve> {
        blocks
            .iter()
            .map(|(b, v)| (BlockId(*b), RdpCurve::new(g.clone(), v.to_vec()).unwrap()))
            .collect()
    }

    #[test]
    fn dpf_basic() {
        let g = single();
        let c = caps(&g, &[(0, &[1.0])]);
        assert_eq!(dpf_efficiency(&task(0, 1.0, &[(0, &[0.5])], &g), &c).score, 2.0);
        let full = task(1, 1.0, &[(0, &[1.0])], &g);
        let half = task(1, 1.0, &[(0, &[0.5])], &g);
        assert_eq!(dpf_efficiency(&half, &c).score, 2.0 * dpf_efficiency(&full, &c).score);
    }

    #[test]
    fn dpf_zero_capacity_conventions() {
        let g = AlphaGrid::new(vec![2.0, 8.0]).unwrap();
        let c = caps(&g, &[(0, &[0.0, 2.0])]);
        // the zero-capacity order is skipped
        assert_eq!(dpf_efficiency(&task(0, 1.0, &[(0, &[5.0, 0.5])], &g), &c).score, 4.0);
        let dead = caps(&g, &[(0, &[0.0, 0.0])]);
        assert_eq!(dpf_efficiency(&task(0, 1.0, &[(0, &[1.0, 1.0])], &g), &dead).score, 0.0);
        assert_eq!(
            dpf_efficiency(&task(0, 1.0, &[(0, &[0.0, 0.0])], &g), &c).score,
            f64::INFINITY
        );
    }

    #[test]
    fn area_metric() {
        let g = single();
        let c = caps(&g, &[(0, &[1.0]), (1, &[1.0]), (2, &[1.0])]);
        let wide = task(1, 1.0, &[(0, &[0.6]), (1, &[0.6]), (2, &[0.6])], &g);
        let narrow = task(2, 1.0, &[(0, &[0.7])], &g);
        assert!((area_efficiency(&wide, &c).unwrap().score - 1.0 / 1.8).abs() < 1e-12);
        assert!((area_efficiency(&narrow, &c).unwrap().score - 1.0 / 0.7).abs() < 1e-12);
        assert_eq!(
            area_efficiency(&task(3, 1.0, &[(1, &[1.0])], &g), &c).unwrap().score,
            1.0
        );
        let halved = caps(&g, &[(0, &[0.5]), (1, &[1.0]), (2, &[1.0])]);
        assert!((area_efficiency(&wide, &halved).unwrap().score - 1.0 / 2.4).abs() < 1e-12);
        let multi = AlphaGrid::new(vec![2.0, 4.0]).unwrap();
        let t = task(4, 1.0, &[(0, &[0.1, 0.1])], &multi);
        assert!(area_efficiency(&t, &caps(&multi, &[(0, &[1.0, 1.0])])).is_err());
    }

    #[test]
    fn dpk_metric_uses_best_order_only() {
        let g = AlphaGrid::new(vec![2.0, 8.0]).unwrap();
        let c = caps(&g, &[(0, &[1.0, 1.0])]);
        let t = task(0, 1.0, &[(0, &[0.5, 1.5])], &g);
        let best = BTreeMap::from([(BlockId(0), 0usize)]);
        assert_eq!(dpk_efficiency(&t, &best, &c).unwrap().score, 2.0);
        let heavy = task(0, 2.0, &[(0, &[0.5, 1.5])], &g);
        assert_eq!(dpk_efficiency(&heavy, &best, &c).unwrap().score, 4.0);
        let nothing = task(1, 1.0, &[(0, &[0.0, 1.0])], &g);
        assert_eq!(dpk_efficiency(&nothing, &best, &c).unwrap().score, f64::INFINITY);
    }

    #[test]
    fn best_alpha_cases() {
        let g = AlphaGrid::new(vec![2.0, 8.0]).unwrap();
        let t = task(0, 1.0, &[(0, &[0.1, 0.1])], &g);
        let cap = RdpCurve::new(g.clone(), vec![0.0, 1.0]).unwrap();
        assert_eq!(compute_best_alpha(BlockId(0), &[&t], &cap, 0.1).unwrap(), 1);
        // no candidates: most remaining capacity
        assert_eq!(compute_best_alpha(BlockId(9), &[&t], &cap, 0.1).unwrap(), 1);
        let s = single();
        let ts = task(0, 1.0, &[(0, &[0.3])], &s);
        let cs = RdpCurve::new(s.clone(), vec![0.0]).unwrap();
        assert_eq!(compute_best_alpha(BlockId(0), &[&ts], &cs, 0.1).unwrap(), 0);
    }
}
