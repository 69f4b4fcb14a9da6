//! Small hand-built instances with known outcomes.

use std::collections::BTreeMap;

use crate::block::{Block, BlockId};
use crate::rdp::{AlphaGrid, RdpCurve};
use crate::task::{DemandVector, Task, TaskId};

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub grid: AlphaGrid,
    pub blocks: BTreeMap<BlockId, Block>,
    pub tasks: Vec<Task>,
}

impl Scenario {
    pub fn by_name(name: &str) -> Option<Scenario> {
        match name {
            "multi_block_contention" => Some(multi_block_contention()),
            "rdp_orders" => Some(rdp_orders()),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 2] = ["multi_block_contention", "rdp_orders"];
}

fn curve(grid: &AlphaGrid, eps: &[f64]) -> RdpCurve {
    RdpCurve::new(grid.clone(), eps.to_vec()).expect("valid curve")
}

fn blocks(grid: &AlphaGrid, n: u64, cap: &[f64]) -> BTreeMap<BlockId, Block> {
    (0..n)
        .map(|j| {
            (
                BlockId(j),
                Block::new(BlockId(j), 0, curve(grid, cap), 1).expect("valid block"),
            )
        })
        .collect()
}

fn task(id: u64, demand: Vec<(u64, RdpCurve)>) -> Task {
    let d: DemandVector = demand.into_iter().map(|(b, c)| (BlockId(b), c)).collect();
    Task::new(TaskId(id), 1.0, d).expect("valid task")
}

/// Single order, three unit blocks. T1 asks 0.6 of every block; T2..T4 each
/// ask 0.7 of one block. Dominant-share ordering grants only T1, area
/// ordering grants T2..T4.
pub fn multi_block_contention() -> Scenario {
    let grid = AlphaGrid::single(2.0).expect("valid grid");
    let c = |v| curve(&grid, &[v]);
    let tasks = vec![
        task(1, (0..3).map(|j| (j, c(0.6))).collect()),
        task(2, vec![(0, c(0.7))]),
        task(3, vec![(1, c(0.7))]),
        task(4, vec![(2, c(0.7))]),
    ];
    Scenario {
        name: "multi_block_contention",
        blocks: blocks(&grid, 3, &[1.0]),
        grid,
        tasks,
    }
}

/// Two orders, two unit blocks. Each block gets one balanced task (0.6 at
/// both orders) and two tasks that are cheap at one order only: block 0's at
/// the first order, block 1's at the second. Dominant share grants the two
/// balanced tasks; packing by best order grants the four skewed ones.
pub fn rdp_orders() -> Scenario {
    let grid = AlphaGrid::new(vec![2.0, 8.0]).expect("valid grid");
    let c = |a, b| curve(&grid, &[a, b]);
    let tasks = vec![
        task(1, vec![(0, c(0.6, 0.6))]),
        task(2, vec![(1, c(0.6, 0.6))]),
        task(3, vec![(0, c(0.5, 1.5))]),
        task(4, vec![(1, c(1.5, 0.5))]),
        task(5, vec![(0, c(0.5, 1.5))]),
        task(6, vec![(1, c(1.5, 0.5))]),
    ];
    Scenario {
        name: "rdp_orders",
        blocks: blocks(&grid, 2, &[1.0, 1.0]),
        grid,
        tasks,
    }
}
