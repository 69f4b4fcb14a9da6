use super::{KnapsackError, KnapsackSolution};
use crate::block::fits;

/// Dense privacy-knapsack instance: `demands[i][j][a]` is task `i`'s demand
/// on block `j` at order index `a`; `capacities[j][a]` may be negative to mark
/// orders that are already over budget.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyKnapsack {
    pub weights: Vec<f64>,
    pub demands: Vec<Vec<Vec<f64>>>,
    pub capacities: Vec<Vec<f64>>,
    /// `requests[i][j]`: task `i` asks for block `j`. Blocks a selection does
    /// not touch are unconstrained.
    pub requests: Vec<Vec<bool>>,
}

impl PrivacyKnapsack {
    /// Builds an instance where a task requests exactly the blocks on which it
    /// has some positive demand.
    pub fn new(
        weights: Vec<f64>,
        demands: Vec<Vec<Vec<f64>>>,
        capacities: Vec<Vec<f64>>,
    ) -> Result<Self, KnapsackError> {
        let requests = demands
            .iter()
            .map(|per_block| per_block.iter().map(|d| d.iter().any(|&x| x > 0.0)).collect())
            .collect();
        let inst = Self {
            weights,
            demands,
            capacities,
            requests,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), KnapsackError> {
        let bad = |m: &str| Err(KnapsackError::InvalidInstance(m.to_string()));
        let n = self.weights.len();
        if self.demands.len() != n || self.requests.len() != n {
            return bad("one demand matrix and request row per task");
        }
        let m = self.capacities.len();
        let orders = self.capacities.first().map_or(0, Vec::len);
        if self
            .capacities
            .iter()
            .any(|c| c.len() != orders || c.iter().any(|x| !x.is_finite()))
        {
            return bad("capacities must be finite with one entry per order");
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("weights must be finite and > 0");
        }
        for (d, r) in self.demands.iter().zip(&self.requests) {
            if d.len() != m || r.len() != m {
                return bad("demand rows must cover every block");
            }
            if d.iter()
                .any(|row| row.len() != orders || row.iter().any(|x| !(x.is_finite() && *x >= 0.0)))
            {
                return bad("demands must be finite, >= 0, one per order");
            }
        }
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.weights.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.capacities.len()
    }

    pub fn num_orders(&self) -> usize {
        self.capacities.first().map_or(0, Vec::len)
    }

    /// Does `selection` satisfy "every touched block has an order within
    /// capacity"?
    pub fn is_feasible(&self, selection: &[usize]) -> bool {
        (0..self.num_blocks()).all(|j| {
            if !selection.iter().any(|&i| self.requests[i][j]) {
                return true;
            }
            (0..self.num_orders()).any(|a| {
                let used: f64 = selection.iter().map(|&i| self.demands[i][j][a]).sum();
                fits(used, self.capacities[j][a])
            })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactLimits {
    pub max_tasks: usize,
    pub max_nodes: u64,
}

impl Default for ExactLimits {
    fn default() -> Self {
        Self {
            max_tasks: 20,
            max_nodes: 20_000_000,
        }
    }
}

struct Search<'a> {
    inst: &'a PrivacyKnapsack,
    /// per (block, order): tasks requesting the block, best weight/demand first
    ratio_lists: Vec<Vec<Vec<usize>>>,
    suffix_weight: Vec<f64>,
    used: Vec<Vec<f64>>,
    alive: Vec<Vec<bool>>,
    current: Vec<usize>,
    weight: f64,
    best: Vec<usize>,
    best_weight: f64,
    nodes: u64,
    max_nodes: u64,
}

/// Exact optimum of a privacy knapsack.
///
/// Depth-first branch-and-bound over tasks in index order, include-branch
/// first. Each block keeps the set of orders still within capacity (choosing
/// an order per block lazily); a task can join only if every block it touches
/// keeps at least one live order. The bound at a node is the minimum over
/// blocks of the best fractional-knapsack relaxation among that block's live
/// orders. Among optimal selections the lexicographically smallest index set
/// is returned.
pub fn exact_privacy_knapsack(inst: &PrivacyKnapsack, limits: ExactLimits) -> Result<KnapsackSolution, KnapsackError> {
    inst.validate()?;
    let n = inst.num_tasks();
    if n > limits.max_tasks {
        return Err(KnapsackError::Intractable(format!(
            "{n} tasks exceed the limit of {}",
            limits.max_tasks
        )));
    }
    let (m, orders) = (inst.num_blocks(), inst.num_orders());
    let ratio_lists = (0..m)
        .map(|j| {
            (0..orders)
                .map(|a| {
                    let mut l: Vec<usize> = (0..n).filter(|&i| inst.requests[i][j]).collect();
                    l.sort_by(|&x, &y| {
                        let rx = inst.weights[x] / inst.demands[x][j][a];
                        let ry = inst.weights[y] / inst.demands[y][j][a];
                        ry.total_cmp(&rx).then(x.cmp(&y))
                    });
                    l
                })
                .collect()
        })
        .collect();
    let mut suffix_weight = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_weight[i] = suffix_weight[i + 1] + inst.weights[i];
    }
    let alive = inst
        .capacities
        .iter()
        .map(|caps| caps.iter().map(|&c| fits(0.0, c)).collect())
        .collect();
    let mut s = Search {
        inst,
        ratio_lists,
        suffix_weight,
        used: vec![vec![0.0; orders]; m],
        alive,
        current: Vec::new(),
        weight: 0.0,
        best: Vec::new(),
        best_weight: 0.0,
        nodes: 0,
        max_nodes: limits.max_nodes,
    };
    s.visit(0)?;
    Ok(KnapsackSolution {
        selected: s.best,
        weight: s.best_weight,
    })
}

impl Search<'_> {
    fn tolerance(&self) -> f64 {
        1e-9 * self.best_weight.max(1.0)
    }

    fn visit(&mut self, depth: usize) -> Result<(), KnapsackError> {
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(KnapsackError::Intractable(format!(
                "search exceeded {} nodes",
                self.max_nodes
            )));
        }
        if self.weight > self.best_weight + self.tolerance() {
            self.best_weight = self.weight;
            self.best = self.current.clone();
        }
        if depth == self.inst.num_tasks() {
            return Ok(());
        }
        if self.weight + self.bound(depth) <= self.best_weight + self.tolerance() {
            return Ok(());
        }

        if let Some(saved) = self.try_include(depth) {
            self.current.push(depth);
            self.weight += self.inst.weights[depth];
            let r = self.visit(depth + 1);
            self.weight -= self.inst.weights[depth];
            self.current.pop();
            self.restore(depth, saved);
            r?;
        }
        self.visit(depth + 1)
    }

    /// Upper bound on the weight addable from tasks `depth..`.
    fn bound(&self, depth: usize) -> f64 {
        let inst = self.inst;
        let mut best = self.suffix_weight[depth];
        for j in 0..inst.num_blocks() {
            let mut outside = 0.0;
            let mut any = false;
            for i in depth..inst.num_tasks() {
                if inst.requests[i][j] {
                    any = true;
                } else {
                    outside += inst.weights[i];
                }
            }
            if !any {
                continue;
            }
            let mut block_best = 0.0f64;
            for a in 0..inst.num_orders() {
                if !self.alive[j][a] {
                    continue;
                }
                let mut room = inst.capacities[j][a] - self.used[j][a];
                let mut lp = 0.0;
                for &i in &self.ratio_lists[j][a] {
                    if i < depth {
                        continue;
                    }
                    let d = inst.demands[i][j][a];
                    if d <= room {
                        room -= d;
                        lp += inst.weights[i];
                    } else {
                        lp += inst.weights[i] * (room.max(0.0) / d);
                        // slack for the feasibility tolerance
                        lp += inst.weights[i] * 1e-9;
                        break;
                    }
                }
                block_best = block_best.max(lp);
            }
            best = best.min(outside + block_best);
        }
        best
    }

    /// Adds task `i` if every touched block keeps a live order; returns the
    /// previous alive masks of touched blocks for [`Self::restore`].
    fn try_include(&mut self, i: usize) -> Option<Vec<(usize, Vec<bool>)>> {
        let inst = self.inst;
        let orders = inst.num_orders();
        for j in 0..inst.num_blocks() {
            if !inst.requests[i][j] {
                continue;
            }
            let survives = (0..orders)
                .any(|a| self.alive[j][a] && fits(self.used[j][a] + inst.demands[i][j][a], inst.capacities[j][a]));
            if !survives {
                return None;
            }
        }
        let mut saved = Vec::new();
        for j in 0..inst.num_blocks() {
            if !inst.requests[i][j] {
                continue;
            }
            saved.push((j, self.alive[j].clone()));
            for a in 0..orders {
                self.used[j][a] += inst.demands[i][j][a];
                if !fits(self.used[j][a], inst.capacities[j][a]) {
                    self.alive[j][a] = false;
                }
            }
        }
        Some(saved)
    }

    fn restore(&mut self, i: usize, saved: Vec<(usize, Vec<bool>)>) {
        for (j, mask) in saved {
            for a in 0..self.inst.num_orders() {
                self.used[j][a] -= self.inst.demands[i][j][a];
            }
            self.alive[j] = mask;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_order(weights: &[f64], demands: &[&[f64]], caps: &[f64]) -> PrivacyKnapsack {
        let d = demands
            .iter()
            .map(|row| row.iter().map(|&x| vec![x]).collect())
            .collect();
        PrivacyKnapsack::new(weights.to_vec(), d, caps.iter().map(|&c| vec![c]).collect()).unwrap()
    }

    #[test]
    fn everything_fits() {
        let inst = single_order(&[1.0, 2.0, 3.0], &[&[0.1, 0.2], &[0.3, 0.0], &[0.0, 0.5]], &[1.0, 1.0]);
        let sol = exact_privacy_knapsack(&inst, ExactLimits::default()).unwrap();
        assert_eq!(sol.selected, vec![0, 1, 2]);
        assert_eq!(sol.weight, 6.0);
    }

    #[test]
    fn multi_block_contention() {
        // one wide task against three narrow ones
        let inst = single_order(
            &[1.0; 4],
            &[&[0.6, 0.6, 0.6], &[0.7, 0.0, 0.0], &[0.0, 0.7, 0.0], &[0.0, 0.0, 0.7]],
            &[1.0, 1.0, 1.0],
        );
        let sol = exact_privacy_knapsack(&inst, ExactLimits::default()).unwrap();
        assert_eq!(sol.selected, vec![1, 2, 3]);
    }

    #[test]
    fn lexicographic_tie_break() {
        let inst = single_order(&[1.0; 3], &[&[0.6], &[0.6], &[0.6]], &[1.0]);
        let sol = exact_privacy_knapsack(&inst, ExactLimits::default()).unwrap();
        assert_eq!(sol.selected, vec![0]);
    }

    #[test]
    fn existential_order_semantics() {
        // each task fits only at its own order; two of the same kind pack together
        let d = vec![vec![vec![0.5, 1.5]], vec![vec![0.5, 1.5]], vec![vec![1.5, 0.5]]];
        let inst = PrivacyKnapsack::new(vec![1.0; 3], d, vec![vec![1.0, 1.0]]).unwrap();
        let sol = exact_privacy_knapsack(&inst, ExactLimits::default()).unwrap();
        assert_eq!(sol.selected, vec![0, 1]);
        assert!(inst.is_feasible(&sol.selected));
        assert!(!inst.is_feasible(&[0, 2]));
    }

    #[test]
    fn limits_are_enforced() {
        let inst = single_order(&[1.0; 3], &[&[0.1], &[0.1], &[0.1]], &[1.0]);
        let limits = ExactLimits {
            max_tasks: 2,
            ..ExactLimits::default()
        };
        assert!(matches!(
            exact_privacy_knapsack(&inst, limits),
            Err(KnapsackError::Intractable(_))
        ));
        let tiny = ExactLimits {
            max_tasks: 10,
            max_nodes: 1,
        };
        assert!(matches!(
            exact_privacy_knapsack(&inst, tiny),
            Err(KnapsackError::Intractable(_))
        ));
    }

    #[test]
    fn infeasible_tasks_never_selected() {
        let inst = single_order(&[100.0, 1.0], &[&[2.0], &[0.5]], &[1.0]);
        let sol = exact_privacy_knapsack(&inst, ExactLimits::default()).unwrap();
        assert_eq!(sol.selected, vec![1]);
    }
}
