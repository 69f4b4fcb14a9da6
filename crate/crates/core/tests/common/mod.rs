#![allow(dead_code)]

use std::collections::BTreeMap;

use privknap::block::{Block, BlockId};
use privknap::rdp::{AlphaGrid, RdpCurve};
use privknap::task::{DemandVector, Task, TaskId};
use rand::Rng;

pub fn grid_of(orders: usize) -> AlphaGrid {
    AlphaGrid::new((0..orders).map(|a| 2.0 + a as f64).collect()).unwrap()
}

pub fn curve(grid: &AlphaGrid, eps: Vec<f64>) -> RdpCurve {
    RdpCurve::new(grid.clone(), eps).unwrap()
}

pub fn unit_blocks(grid: &AlphaGrid, caps: &[Vec<f64>]) -> BTreeMap<BlockId, Block> {
    caps.iter()
        .enumerate()
        .map(|(j, c)| {
            let id = BlockId(j as u64);
            (id, Block::new(id, 0, curve(grid, c.clone()), 1).unwrap())
        })
        .collect()
}

/// Random multi-block tasks: each task asks for a nonempty random subset of
/// `m` blocks with independent per-order demands.
pub fn random_tasks<R: Rng>(rng: &mut R, grid: &AlphaGrid, n: usize, m: usize, integral_weights: bool) -> Vec<Task> {
    (0..n)
        .map(|i| {
            let mut d = DemandVector::new();
            while d.is_empty() {
                for j in 0..m {
                    if rng.random_bool(0.5) {
                        let eps = (0..grid.len()).map(|_| rng.random_range(0.05..0.8)).collect();
                        d.insert(BlockId(j as u64), curve(grid, eps));
                    }
                }
            }
            let w = if integral_weights {
                rng.random_range(1..=5) as f64
            } else {
                rng.random_range(0.5..3.0)
            };
            Task::new(TaskId(i as u64), w, d).unwrap()
        })
        .collect()
}

/// Exhaustive optimum: every subset, feasible iff each touched block has
/// some order within capacity.
pub fn brute_force_optimum(tasks: &[Task], caps: &BTreeMap<BlockId, Vec<f64>>) -> f64 {
    let n = tasks.len();
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let mut used: BTreeMap<BlockId, Vec<f64>> = BTreeMap::new();
        let mut weight = 0.0;
        for (i, t) in tasks.iter().enumerate() {
            if mask >> i & 1 == 1 {
                weight += t.weight;
                for (b, c) in t.demand.iter() {
                    let u = used.entry(b).or_insert_with(|| vec![0.0; c.len()]);
                    for (x, e) in u.iter_mut().zip(c.epsilons()) {
                        *x += e;
                    }
                }
            }
        }
        let ok = used
            .iter()
            .all(|(b, u)| u.iter().zip(&caps[b]).any(|(x, c)| *x <= c + 1e-9));
        if ok && weight > best {
            best = weight;
        }
    }
    best
}
