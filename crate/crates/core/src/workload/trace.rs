use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::task::{BlockRequest, TaskId, TaskSpec};

use super::{invalid, reference_capacity, rescale_to, CurveCorpus, Mechanism, WorkloadError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MachineClass {
    Cpu,
    Gpu,
}

impl MachineClass {
    /// Mechanisms a task of this class may use.
    pub fn menu(self) -> &'static [Mechanism] {
        match self {
            MachineClass::Cpu => &[Mechanism::Laplace, Mechanism::Gaussian, Mechanism::SubsampledLaplace],
            MachineClass::Gpu => &[Mechanism::SubsampledGaussian, Mechanism::Gaussian],
        }
    }
}

/// One row of a cluster trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp: u64,
    pub machine_class: MachineClass,
    pub memory_gb_hours: f64,
    pub network_bytes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceMappingParams {
    /// Normalized demand `= eps_slope · memory_gb_hours + eps_intercept`.
    pub eps_slope: f64,
    pub eps_intercept: f64,
    /// Block count `= floor(blocks_slope · network_bytes + blocks_intercept)`, at least 1.
    pub blocks_slope: f64,
    pub blocks_intercept: f64,
    /// Tasks needing more blocks are dropped.
    pub max_blocks: u64,
    /// Tasks whose normalized demand falls outside are dropped.
    pub eps_lower: f64,
    pub eps_upper: f64,
    /// Records outside `[window_start, window_end)` are ignored.
    pub window_start: u64,
    pub window_end: Option<u64>,
    /// Timestamp units per simulator tick.
    pub time_scale: u64,
    /// Ticks after arrival at which a pending task is evicted.
    pub timeout: Option<u64>,
}

impl Default for TraceMappingParams {
    fn default() -> Self {
        Self {
            eps_slope: 0.01,
            eps_intercept: 0.001,
            blocks_slope: 1e-9,
            blocks_intercept: 1.0,
            max_blocks: 100,
            eps_lower: 0.001,
            eps_upper: 1.0,
            window_start: 0,
            window_end: None,
            time_scale: 1,
            timeout: None,
        }
    }
}

impl TraceMappingParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.eps_slope > 0.0 && self.eps_slope.is_finite()) {
            return Err(invalid("eps_slope", "must be > 0"));
        }
        if !(self.blocks_slope > 0.0 && self.blocks_slope.is_finite()) {
            return Err(invalid("blocks_slope", "must be > 0"));
        }
        if !(self.eps_lower > 0.0 && self.eps_lower <= self.eps_upper) {
            return Err(invalid("eps_lower", "bounds must satisfy 0 < eps_lower <= eps_upper"));
        }
        if self.max_blocks == 0 {
            return Err(invalid("max_blocks", "must be at least 1"));
        }
        if self.time_scale == 0 {
            return Err(invalid("time_scale", "must be at least 1"));
        }
        if self.window_end.is_some_and(|e| e <= self.window_start) {
            return Err(invalid("window_end", "must be after window_start"));
        }
        Ok(())
    }
}

/// Reads a CSV trace with header `timestamp,machine_class,memory_gb_hours,network_bytes`.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, WorkloadError> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| WorkloadError::Trace {
                index,
                reason: e.to_string(),
            })
        })
        .collect()
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), WorkloadError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Maps trace records to tasks requesting the most recent blocks.
pub fn map_trace(
    records: &[TraceRecord],
    params: &TraceMappingParams,
    corpus: &CurveCorpus,
    seed: u64,
) -> Result<Vec<TaskSpec>, WorkloadError> {
    params.validate()?;
    let capacity = reference_capacity(&corpus.grid)?;
    let menus: Vec<(MachineClass, Vec<Vec<usize>>)> = [MachineClass::Cpu, MachineClass::Gpu]
        .into_iter()
        .map(|c| (c, c.menu().iter().map(|&m| corpus.of_mechanism(m)).collect()))
        .collect();
    for (class, menu) in &menus {
        if let Some(i) = menu.iter().position(Vec::is_empty) {
            return Err(invalid(
                "corpus",
                format!("no {} curve for {class:?} tasks", class.menu()[i].name()),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].timestamp, i));
    let mut out = Vec::new();
    for i in order {
        let r = &records[i];
        if !(r.memory_gb_hours.is_finite() && r.memory_gb_hours >= 0.0) {
            return Err(WorkloadError::Trace {
                index: i,
                reason: format!("memory_gb_hours {} must be >= 0", r.memory_gb_hours),
            });
        }
        if !(r.network_bytes.is_finite() && r.network_bytes >= 0.0) {
            return Err(WorkloadError::Trace {
                index: i,
                reason: format!("network_bytes {} must be >= 0", r.network_bytes),
            });
        }
        if r.timestamp < params.window_start || params.window_end.is_some_and(|e| r.timestamp >= e) {
            continue;
        }
        let eps = params.eps_slope * r.memory_gb_hours + params.eps_intercept;
        let blocks = (params.blocks_slope * r.network_bytes + params.blocks_intercept)
            .floor()
            .max(1.0);
        // draw before filtering so a record's mechanism does not depend on its neighbours being kept
        let menu = &menus[usize::from(r.machine_class == MachineClass::Gpu)].1;
        let family = rng.random_range(0..menu.len());
        let pick = menu[family][rng.random_range(0..menu[family].len())];
        if eps < params.eps_lower || eps > params.eps_upper || blocks > params.max_blocks as f64 {
            continue;
        }
        let entry = &corpus.curves[pick];
        let curve = rescale_to(&entry.curve, &capacity, eps).expect("corpus curves have positive demand");
        out.push(TaskSpec {
            id: TaskId(out.len() as u64),
            weight: 1.0,
            arrival: (r.timestamp - params.window_start) / params.time_scale,
            timeout: params.timeout,
            mechanism: entry.mechanism.name().to_string(),
            request: BlockRequest::Latest {
                count: blocks as usize,
                curve,
            },
        });
    }
    Ok(out)
}

/// Heavy-tailed synthetic trace resembling a shared ML cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTraceParams {
    pub records: usize,
    /// Timestamps are uniform in `[0, span)`.
    pub span: u64,
    pub gpu_fraction: f64,
    /// Log-normal parameters (of the underlying normal).
    pub memory_mu: f64,
    pub memory_sigma: f64,
    pub network_mu: f64,
    pub network_sigma: f64,
}

impl Default for SyntheticTraceParams {
    fn default() -> Self {
        Self {
            records: 1000,
            span: 100,
            gpu_fraction: 0.3,
            memory_mu: 0.5,
            memory_sigma: 1.5,
            network_mu: 20.0,
            network_sigma: 1.5,
        }
    }
}

pub fn generate_synthetic_trace(params: &SyntheticTraceParams, seed: u64) -> Result<Vec<TraceRecord>, WorkloadError> {
    if params.span == 0 {
        return Err(invalid("span", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&params.gpu_fraction) {
        return Err(invalid("gpu_fraction", "must be in [0, 1]"));
    }
    let memory =
        LogNormal::new(params.memory_mu, params.memory_sigma).map_err(|e| invalid("memory_sigma", e.to_string()))?;
    let network =
        LogNormal::new(params.network_mu, params.network_sigma).map_err(|e| invalid("network_sigma", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<TraceRecord> = (0..params.records)
        .map(|_| TraceRecord {
            timestamp: rng.random_range(0..params.span),
            machine_class: if rng.random_bool(params.gpu_fraction) {
                MachineClass::Gpu
            } else {
                MachineClass::Cpu
            },
            memory_gb_hours: memory.sample(&mut rng),
            network_bytes: network.sample(&mut rng).floor(),
        })
        .collect();
    out.sort_by_key(|r| r.timestamp);
    Ok(out)
}
