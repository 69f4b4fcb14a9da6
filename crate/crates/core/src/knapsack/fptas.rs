use super::{KnapsackError, KnapsackSolution, ScalarKnapsack};
use crate::block::fits;

/// `(1 − eta)`-approximate 0/1 knapsack by profit scaling.
///
/// Weights are scaled by `K = eta · LB / n`, where `LB` is the better of the
/// ratio-greedy packing and the heaviest fitting item (so `OPT ≤ 2·LB`), and a
/// dynamic program finds the minimum demand for every scaled profit. Runtime is
/// `O(n² / eta)`. Uniform-weight instances are solved exactly by packing the
/// smallest demands first.
pub fn scalar_knapsack_fptas(inst: &ScalarKnapsack, eta: f64) -> Result<KnapsackSolution, KnapsackError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(KnapsackError::InvalidEta(eta));
    }
    Ok(solve(&inst.demands, &inst.weights, inst.capacity, eta))
}

pub(crate) fn solve(demands: &[f64], weights: &[f64], capacity: f64, eta: f64) -> KnapsackSolution {
    let mut selected = Vec::new();
    let mut cand = Vec::new();
    if capacity < 0.0 {
        return KnapsackSolution::default();
    }
    for (i, &d) in demands.iter().enumerate() {
        if d <= 0.0 {
            selected.push(i);
        } else if fits(d, capacity) {
            cand.push(i);
        }
    }

    let total: f64 = cand.iter().map(|&i| demands[i]).sum();
    if cand.is_empty() || fits(total, capacity) {
        selected.extend(cand);
    } else if cand.iter().all(|&i| weights[i] == weights[cand[0]]) {
        let mut by_demand = cand;
        by_demand.sort_by(|&a, &b| demands[a].total_cmp(&demands[b]).then(a.cmp(&b)));
        let mut used = 0.0;
        for i in by_demand {
            if !fits(used + demands[i], capacity) {
                break;
            }
            used += demands[i];
            selected.push(i);
        }
    } else {
        selected.extend(scaled_dp(demands, weights, capacity, eta, &cand));
    }

    selected.sort_unstable();
    let weight = selected.iter().map(|&i| weights[i]).sum();
    KnapsackSolution { selected, weight }
}

fn ratio_order(demands: &[f64], weights: &[f64], cand: &[usize]) -> Vec<usize> {
    let mut order = cand.to_vec();
    order.sort_by(|&a, &b| {
        (weights[b] / demands[b])
            .total_cmp(&(weights[a] / demands[a]))
            .then(a.cmp(&b))
    });
    order
}

fn scaled_dp(demands: &[f64], weights: &[f64], capacity: f64, eta: f64, cand: &[usize]) -> Vec<usize> {
    let order = ratio_order(demands, weights, cand);
    let mut used = 0.0;
    let mut greedy = 0.0;
    for &i in &order {
        if fits(used + demands[i], capacity) {
            used += demands[i];
            greedy += weights[i];
        }
    }
    let heaviest = cand.iter().map(|&i| weights[i]).fold(0.0, f64::max);
    let lower = greedy.max(heaviest);

    let n = cand.len();
    let mut k = eta * lower / n as f64;
    if k < 1.0 && cand.iter().all(|&i| weights[i].fract() == 0.0) {
        // integral weights: unit scaling is exact and no larger
        k = 1.0;
    }
    let profits: Vec<usize> = cand.iter().map(|&i| (weights[i] / k).floor() as usize).collect();
    let bound = ((2.0 * lower / k).ceil() as usize + 1).min(profits.iter().sum());

    let words = bound / 64 + 1;
    let mut min_demand = vec![f64::INFINITY; bound + 1];
    min_demand[0] = 0.0;
    let mut taken = vec![0u64; n * words];
    for (slot, (&i, &p)) in cand.iter().zip(&profits).enumerate() {
        if p == 0 {
            continue;
        }
        let d = demands[i];
        let row = &mut taken[slot * words..(slot + 1) * words];
        for q in (p..=bound).rev() {
            let via = min_demand[q - p] + d;
            if via < min_demand[q] {
                min_demand[q] = via;
                row[q / 64] |= 1 << (q % 64);
            }
        }
    }

    let mut best = (0..=bound).rev().find(|&q| fits(min_demand[q], capacity)).unwrap_or(0);
    let mut chosen = vec![false; n];
    for slot in (0..n).rev() {
        if best == 0 {
            break;
        }
        if taken[slot * words + best / 64] & (1 << (best % 64)) != 0 {
            chosen[slot] = true;
            best -= profits[slot];
        }
    }

    // top up with anything that still fits (items rounded to zero profit)
    let mut used: f64 = (0..n).filter(|&s| chosen[s]).map(|s| demands[cand[s]]).sum();
    let slot_of = |i: usize| cand.binary_search(&i).expect("candidate");
    for &i in &order {
        let s = slot_of(i);
        if !chosen[s] && fits(used + demands[i], capacity) {
            chosen[s] = true;
            used += demands[i];
        }
    }
    (0..n).filter(|&s| chosen[s]).map(|s| cand[s]).collect()
}

/// Per-order approximate optima for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleBlockSolution {
    /// `ŵ_α` for every order index.
    pub per_order: Vec<f64>,
    /// Order index maximizing `ŵ_α`; ties go to the smaller order.
    pub best_order: usize,
    /// Items packed at `best_order`.
    pub selected: Vec<usize>,
}

impl SingleBlockSolution {
    pub fn best_weight(&self) -> f64 {
        self.per_order[self.best_order]
    }
}

/// Single-block privacy knapsack: one FPTAS run per order.
///
/// `demands[i][a]` is item `i`'s demand at order index `a`, `capacity[a]`
/// the block's capacity there.
pub fn single_block_privacy_knapsack(
    demands: &[Vec<f64>],
    weights: &[f64],
    capacity: &[f64],
    eta: f64,
) -> Result<SingleBlockSolution, KnapsackError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(KnapsackError::InvalidEta(eta));
    }
    if capacity.is_empty() {
        return Err(KnapsackError::InvalidInstance("no orders".into()));
    }
    if demands.len() != weights.len() || demands.iter().any(|d| d.len() != capacity.len()) {
        return Err(KnapsackError::InvalidInstance("dimension mismatch".into()));
    }
    let mut per_order = Vec::with_capacity(capacity.len());
    let mut best: Option<(usize, KnapsackSolution)> = None;
    let mut column = vec![0.0; demands.len()];
    for (a, &cap) in capacity.iter().enumerate() {
        for (slot, d) in column.iter_mut().zip(demands) {
            *slot = d[a];
        }
        let sol = solve(&column, weights, cap, eta);
        per_order.push(sol.weight);
        if best.as_ref().is_none_or(|(_, b)| sol.weight > b.weight) {
            best = Some((a, sol));
        }
    }
    let (best_order, sol) = best.expect("at least one order");
    Ok(SingleBlockSolution {
        per_order,
        best_order,
        selected: sol.selected,
    })
}
