//! Discrete-event simulation of online batched scheduling.
//!
//! Time advances in integer ticks. Each tick admits arriving blocks, then
//! arriving tasks, evicts timed-out tasks, and on scheduling ticks runs the
//! policy against the budget unlocked so far.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{Availability, Block, BlockError, BlockId};
use crate::rdp::RdpCurve;
use crate::sched::{Policy, ScheduleError};
use crate::task::{Task, TaskId, TaskSpec};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("budget of block {0} exceeded after a batch")]
    SafetyViolated(BlockId),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// How often the scheduler runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchPeriod {
    /// Every `T` ticks.
    Every(u64),
    /// Once, at the horizon, with budgets fully unlocked.
    Terminal,
}

impl BatchPeriod {
    fn ticks(self) -> Option<u64> {
        match self {
            BatchPeriod::Every(t) => Some(t),
            BatchPeriod::Terminal => None,
        }
    }
}

impl fmt::Display for BatchPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchPeriod::Every(t) => write!(f, "{t}"),
            BatchPeriod::Terminal => f.write_str("terminal"),
        }
    }
}

impl Serialize for BatchPeriod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BatchPeriod::Every(t) => s.serialize_u64(*t),
            BatchPeriod::Terminal => s.serialize_str("terminal"),
        }
    }
}

impl<'de> Deserialize<'de> for BatchPeriod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Ticks(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Ticks(t) => Ok(BatchPeriod::Every(t)),
            Raw::Name(s) if s == "terminal" => Ok(BatchPeriod::Terminal),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "batch period must be a tick count or \"terminal\", got {s:?}"
            ))),
        }
    }
}

/// Block arrival process: `initial` blocks at tick 0, then one every
/// `interval` ticks until `total` blocks exist.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSchedule {
    pub initial: u64,
    pub interval: u64,
    pub total: u64,
    pub capacity: RdpCurve,
    pub unlock_steps: u32,
}

impl BlockSchedule {
    pub fn arrival(&self, index: u64) -> u64 {
        if index < self.initial {
            0
        } else {
            (index - self.initial + 1) * self.interval
        }
    }

    pub fn blocks(&self) -> Result<Vec<Block>, BlockError> {
        (0..self.total)
            .map(|j| Block::new(BlockId(j), self.arrival(j), self.capacity.clone(), self.unlock_steps))
            .collect()
    }

    pub fn last_arrival(&self) -> u64 {
        self.total.checked_sub(1).map_or(0, |j| self.arrival(j))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    pub blocks: BlockSchedule,
    pub period: BatchPeriod,
    /// Last simulated tick; defaults to the last arrival plus `N·T`.
    pub horizon: Option<u64>,
    pub policy: Policy,
    /// Fair-share denominator for reporting.
    pub fair_share: f64,
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.blocks.interval == 0 {
            return bad("block interval must be at least 1 tick".into());
        }
        if self.blocks.unlock_steps == 0 {
            return bad("unlock steps must be at least 1".into());
        }
        if self.period == BatchPeriod::Every(0) {
            return bad("batch period must be at least 1 tick".into());
        }
        if !(self.fair_share.is_finite() && self.fair_share >= 1.0) {
            return bad(format!("fair share denominator must be >= 1, got {}", self.fair_share));
        }
        self.policy.validate().map_err(SimError::InvalidConfig)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Grant {
    pub task: TaskId,
    pub tick: u64,
}

/// History of one run: grants in order, evictions, and final per-block
/// consumption.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScheduleOutcome {
    pub grants: Vec<Grant>,
    pub evicted: Vec<TaskId>,
    pub consumption: BTreeMap<BlockId, RdpCurve>,
}

/// One scheduling step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub tick: u64,
    pub blocks: usize,
    pub pending: usize,
    pub granted: usize,
    pub granted_weight: f64,
    /// Wall clock spent in the scheduler call.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub policy: String,
    pub submitted: usize,
    pub allocated: usize,
    pub allocated_weight: f64,
    pub evicted: usize,
    pub pending: usize,
    /// Scheduling delay of every granted task, in block inter-arrival periods.
    pub delays: Vec<f64>,
    pub fair_share_submitted: usize,
    pub fair_share_allocated: usize,
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl MetricsReport {
    pub fn mean_delay(&self) -> Option<f64> {
        (!self.delays.is_empty()).then(|| self.delays.iter().sum::<f64>() / self.delays.len() as f64)
    }

    /// Nearest-rank percentile, `p` in `[0, 100]`.
    pub fn delay_percentile(&self, p: f64) -> Option<f64> {
        if self.delays.is_empty() {
            return None;
        }
        let mut v = self.delays.clone();
        v.sort_by(f64::total_cmp);
        let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
        Some(v[rank.min(v.len()) - 1])
    }

    /// Share of submitted fair-share tasks that were allocated.
    pub fn fair_share_fraction(&self) -> Option<f64> {
        (self.fair_share_submitted > 0).then(|| self.fair_share_allocated as f64 / self.fair_share_submitted as f64)
    }
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub metrics: MetricsReport,
    pub outcome: ScheduleOutcome,
    pub steps: Vec<StepRecord>,
}

/// Largest over requested blocks of the smallest per-order share `d / c` of
/// the block's full capacity.
pub fn normalized_demand(task: &Task, blocks: &BTreeMap<BlockId, Block>) -> f64 {
    task.demand
        .iter()
        .map(|(b, d)| {
            let Some(block) = blocks.get(&b) else {
                return f64::INFINITY;
            };
            d.epsilons()
                .iter()
                .zip(block.capacity().epsilons())
                .filter_map(|(&d, &c)| if d <= 0.0 { Some(0.0) } else { (c > 0.0).then(|| d / c) })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn check_safety(blocks: &BTreeMap<BlockId, Block>) -> Result<(), SimError> {
    match blocks.values().find(|b| !b.is_safe()) {
        Some(b) => Err(SimError::SafetyViolated(b.id)),
        None => Ok(()),
    }
}

struct Tally {
    weights: BTreeMap<TaskId, f64>,
    fair: BTreeSet<TaskId>,
    submitted: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            weights: BTreeMap::new(),
            fair: BTreeSet::new(),
            submitted: 0,
        }
    }

    fn admit(&mut self, task: &Task, blocks: &BTreeMap<BlockId, Block>, fair_share: f64) {
        self.submitted += 1;
        self.weights.insert(task.id, task.weight);
        if normalized_demand(task, blocks) <= 1.0 / fair_share {
            self.fair.insert(task.id);
        }
    }
}

fn report(
    policy: &Policy,
    tally: &Tally,
    outcome: &ScheduleOutcome,
    arrivals: &BTreeMap<TaskId, u64>,
    interval: u64,
    pending: usize,
    runtime_secs: f64,
) -> MetricsReport {
    let delays = outcome
        .grants
        .iter()
        .map(|g| (g.tick - arrivals[&g.task]) as f64 / interval as f64)
        .collect();
    MetricsReport {
        policy: policy.name().to_string(),
        submitted: tally.submitted,
        allocated: outcome.grants.len(),
        allocated_weight: outcome.grants.iter().map(|g| tally.weights[&g.task]).sum(),
        evicted: outcome.evicted.len(),
        pending,
        delays,
        fair_share_submitted: tally.fair.len(),
        fair_share_allocated: outcome.grants.iter().filter(|g| tally.fair.contains(&g.task)).count(),
        runtime_secs,
    }
}

/// Single pass over a fixed workload with fully unlocked budgets. Grants are
/// stamped with the task's own arrival, so delays are zero.
pub fn run_offline(
    tasks: &[Task],
    mut blocks: BTreeMap<BlockId, Block>,
    policy: &Policy,
    fair_share: f64,
) -> Result<SimResult, SimError> {
    policy.validate().map_err(SimError::InvalidConfig)?;
    let mut tally = Tally::new();
    for t in tasks {
        tally.admit(t, &blocks, fair_share);
    }
    let avail = Availability::full(&blocks);
    let refs: Vec<&Task> = tasks.iter().collect();
    let start = Instant::now();
    let granted = policy.schedule(&refs, &mut blocks, &avail)?;
    let runtime_secs = start.elapsed().as_secs_f64();
    check_safety(&blocks)?;

    let arrivals: BTreeMap<TaskId, u64> = tasks.iter().map(|t| (t.id, t.arrival)).collect();
    let weights: f64 = granted.iter().map(|id| tally.weights[id]).sum();
    let outcome = ScheduleOutcome {
        grants: granted
            .iter()
            .map(|&id| Grant {
                task: id,
                tick: arrivals[&id],
            })
            .collect(),
        evicted: Vec::new(),
        consumption: blocks.iter().map(|(id, b)| (*id, b.consumed().clone())).collect(),
    };
    let step = StepRecord {
        tick: tasks.iter().map(|t| t.arrival).max().unwrap_or(0),
        blocks: blocks.len(),
        pending: tasks.len(),
        granted: granted.len(),
        granted_weight: weights,
        runtime_secs,
    };
    let metrics = report(
        policy,
        &tally,
        &outcome,
        &arrivals,
        1,
        tasks.len() - granted.len(),
        runtime_secs,
    );
    Ok(SimResult {
        metrics,
        outcome,
        steps: vec![step],
    })
}

/// Online run over `specs`, which need not be sorted.
pub fn run_online(config: &OnlineConfig, specs: &[TaskSpec]) -> Result<SimResult, SimError> {
    config.validate()?;
    let mut incoming = specs.to_vec();
    incoming.sort_by_key(|s| (s.arrival, s.id));
    let mut future_blocks = config.blocks.blocks()?;
    future_blocks.reverse();

    let n = u64::from(config.blocks.unlock_steps);
    let last_arrival = incoming
        .last()
        .map_or(0, |s| s.arrival)
        .max(config.blocks.last_arrival());
    let horizon = config.horizon.unwrap_or(match config.period {
        BatchPeriod::Every(t) => (last_arrival + n * t).div_ceil(t) * t,
        BatchPeriod::Terminal => last_arrival,
    });

    let mut blocks: BTreeMap<BlockId, Block> = BTreeMap::new();
    let mut present: Vec<BlockId> = Vec::new();
    let mut unresolved: Vec<TaskSpec> = Vec::new();
    let mut pending: Vec<Task> = Vec::new();
    let mut arrivals = BTreeMap::new();
    let mut tally = Tally::new();
    let mut outcome = ScheduleOutcome::default();
    let mut steps = Vec::new();
    let mut runtime = 0.0;
    let mut next_spec = 0;

    for tick in 0..=horizon {
        while future_blocks.last().is_some_and(|b| b.arrival <= tick) {
            let b = future_blocks.pop().expect("checked");
            present.push(b.id);
            blocks.insert(b.id, b);
        }
        while next_spec < incoming.len() && incoming[next_spec].arrival <= tick {
            unresolved.push(incoming[next_spec].clone());
            next_spec += 1;
        }
        if !unresolved.is_empty() && !present.is_empty() {
            for spec in unresolved.drain(..) {
                let task = spec.resolve(&present).expect("blocks are present");
                arrivals.insert(task.id, task.arrival);
                tally.admit(&task, &blocks, config.fair_share);
                pending.push(task);
            }
        }
        pending.retain(|t| {
            let expired = t.deadline().is_some_and(|d| tick >= d);
            if expired {
                outcome.evicted.push(t.id);
            }
            !expired
        });

        let due = match config.period {
            BatchPeriod::Every(t) => tick % t == 0,
            BatchPeriod::Terminal => tick == horizon,
        };
        if !due {
            continue;
        }
        let avail = match config.period.ticks() {
            Some(_) => Availability::unlocked(&blocks, tick, config.period.ticks())?,
            None => Availability::full(&blocks),
        };
        let refs: Vec<&Task> = pending.iter().collect();
        let start = Instant::now();
        let granted = config.policy.schedule(&refs, &mut blocks, &avail)?;
        let elapsed = start.elapsed().as_secs_f64();
        runtime += elapsed;
        check_safety(&blocks)?;

        let granted_set: BTreeSet<TaskId> = granted.iter().copied().collect();
        let granted_weight = pending
            .iter()
            .filter(|t| granted_set.contains(&t.id))
            .map(|t| t.weight)
            .sum();
        steps.push(StepRecord {
            tick,
            blocks: blocks.len(),
            pending: pending.len(),
            granted: granted.len(),
            granted_weight,
            runtime_secs: elapsed,
        });
        outcome.grants.extend(granted.iter().map(|&task| Grant { task, tick }));
        pending.retain(|t| !granted_set.contains(&t.id));
    }

    outcome.consumption = blocks.iter().map(|(id, b)| (*id, b.consumed().clone())).collect();
    let left = pending.len() + unresolved.len() + (incoming.len() - next_spec);
    let metrics = report(
        &config.policy,
        &tally,
        &outcome,
        &arrivals,
        config.blocks.interval,
        left,
        runtime,
    );
    Ok(SimResult {
        metrics,
        outcome,
        steps,
    })
}
