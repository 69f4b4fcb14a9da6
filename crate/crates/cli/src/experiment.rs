use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anyhow::{bail, Context, Result};
use privknap::block::{Block, BlockId};
use privknap::knapsack::KnapsackError;
use privknap::rdp::AlphaGrid;
use privknap::scenarios::Scenario;
use privknap::sched::{Policy, ScheduleError};
use privknap::sim::{run_offline, run_online, BlockSchedule, MetricsReport, OnlineConfig, SimError, SimResult};
use privknap::task::{Task, TaskSpec};
use privknap::workload::{
    build_curve_corpus, generate_microbenchmark, generate_synthetic_trace, generate_weighted_two_category, map_trace,
    read_trace, CurveCorpus, MicrobenchKnobs, WorkloadFile,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode, WorkloadSpec};

/// A generated workload: either task specs for the configured block stream,
/// or a scenario carrying its own blocks.
pub enum Workload {
    Specs { grid: AlphaGrid, specs: Vec<TaskSpec> },
    Scenario(Scenario),
}

impl Workload {
    pub fn len(&self) -> usize {
        match self {
            Workload::Specs { specs, .. } => specs.len(),
            Workload::Scenario(s) => s.tasks.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn corpus(grid: &AlphaGrid, cache: &OnceLock<CurveCorpus>) -> Result<CurveCorpus> {
    if let Some(c) = cache.get() {
        if c.grid.same(grid) {
            return Ok(c.clone());
        }
    }
    let c = build_curve_corpus(grid).context("building the curve corpus")?;
    let _ = cache.set(c.clone());
    Ok(c)
}

/// Builds the workload of `cfg` for `seed`.
pub fn build_workload(cfg: &ExperimentConfig, seed: u64) -> Result<Workload> {
    static CORPUS: OnceLock<CurveCorpus> = OnceLock::new();
    let grid = cfg.grid()?;
    let specs = match &cfg.workload {
        WorkloadSpec::Microbenchmark {
            task_count,
            mu_blocks,
            sigma_blocks,
            sigma_alpha,
            eps_min,
        } => {
            let knobs = MicrobenchKnobs {
                task_count: *task_count,
                blocks: cfg.blocks.count,
                mu_blocks: *mu_blocks,
                sigma_blocks: *sigma_blocks,
                sigma_alpha: *sigma_alpha,
                eps_min: *eps_min,
                seed,
            };
            generate_microbenchmark(&knobs, &corpus(&grid, &CORPUS)?)?
        }
        WorkloadSpec::SyntheticTrace { trace, mapping } => {
            let records = generate_synthetic_trace(trace, seed)?;
            map_trace(&records, mapping, &corpus(&grid, &CORPUS)?, seed)?
        }
        WorkloadSpec::Trace { path, mapping } => {
            let records = read_trace(path).with_context(|| format!("reading trace {}", path.display()))?;
            map_trace(&records, mapping, &corpus(&grid, &CORPUS)?, seed)?
        }
        WorkloadSpec::Weighted { params } => generate_weighted_two_category(params, &grid, seed)?,
        WorkloadSpec::File { path } => {
            let file = WorkloadFile::read(path).with_context(|| format!("reading workload {}", path.display()))?;
            let (g, specs) = file.to_specs()?;
            if !g.same(&grid) {
                bail!(
                    "workload {} uses alphas {:?}, config uses {:?}",
                    path.display(),
                    g.orders(),
                    grid.orders()
                );
            }
            specs
        }
        WorkloadSpec::Scenario { name } => {
            let s = Scenario::by_name(name).with_context(|| format!("unknown scenario {name}"))?;
            return Ok(Workload::Scenario(s));
        }
    };
    Ok(Workload::Specs { grid, specs })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Skipped,
    Error,
}

/// Outcome of one (scheduler, seed) cell.
#[derive(Clone, Debug)]
pub struct Cell {
    pub scheduler: String,
    pub seed: u64,
    pub status: CellStatus,
    pub message: Option<String>,
    pub result: Option<SimResult>,
    /// Mean scheduler runtime over repetitions.
    pub runtime_secs: f64,
}

impl CellStatus {
    pub fn name(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped => "skipped",
            CellStatus::Error => "error",
        }
    }
}

fn is_intractable(e: &SimError) -> bool {
    matches!(
        e,
        SimError::Schedule(ScheduleError::Knapsack(KnapsackError::Intractable(_)))
    )
}

/// Runs one policy over a prepared workload.
pub fn simulate(cfg: &ExperimentConfig, workload: &Workload, policy: &Policy) -> Result<SimResult, SimError> {
    let fair = |n: u64| cfg.simulation.fair_share.unwrap_or(n as f64);
    match workload {
        Workload::Scenario(s) => run_offline(&s.tasks, s.blocks.clone(), policy, fair(s.blocks.len() as u64)),
        Workload::Specs { grid, specs } => {
            let capacity = cfg
                .blocks
                .capacity(grid)
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            match cfg.simulation.mode {
                Mode::Offline => {
                    let blocks: BTreeMap<BlockId, Block> = (0..cfg.blocks.count)
                        .map(|j| Block::new(BlockId(j), 0, capacity.clone(), 1).map(|b| (BlockId(j), b)))
                        .collect::<Result<_, _>>()?;
                    let present: Vec<BlockId> = blocks.keys().copied().collect();
                    let tasks: Vec<Task> = specs.iter().filter_map(|s| s.resolve(&present)).collect();
                    run_offline(&tasks, blocks, policy, fair(cfg.blocks.count))
                }
                Mode::Online => {
                    let online = OnlineConfig {
                        blocks: BlockSchedule {
                            initial: cfg.blocks.initial,
                            interval: cfg.blocks.interval,
                            total: cfg.blocks.count,
                            capacity,
                            unlock_steps: cfg.blocks.unlock_steps,
                        },
                        period: cfg.simulation.period,
                        horizon: cfg.simulation.horizon,
                        policy: policy.clone(),
                        fair_share: fair(cfg.blocks.count),
                    };
                    run_online(&online, specs)
                }
            }
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, workload: &Result<Workload, String>, policy: &Policy, seed: u64) -> Cell {
    let mut cell = Cell {
        scheduler: policy.name().to_string(),
        seed,
        status: CellStatus::Error,
        message: None,
        result: None,
        runtime_secs: 0.0,
    };
    let workload = match workload {
        Ok(w) => w,
        Err(e) => {
            cell.message = Some(e.clone());
            return cell;
        }
    };
    let mut runtime = 0.0;
    for _ in 0..cfg.repetitions {
        match simulate(cfg, workload, policy) {
            Ok(r) => {
                runtime += r.metrics.runtime_secs;
                if let Some(prev) = &cell.result {
                    if prev.outcome != r.outcome {
                        cell.message = Some("repetitions disagree".into());
                        cell.result = None;
                        return cell;
                    }
                } else {
                    cell.result = Some(r);
                }
            }
            Err(e) if is_intractable(&e) => {
                cell.status = CellStatus::Skipped;
                cell.message = Some(e.to_string());
                return cell;
            }
            Err(e) => {
                cell.message = Some(e.to_string());
                return cell;
            }
        }
    }
    cell.status = CellStatus::Ok;
    cell.runtime_secs = runtime / cfg.repetitions as f64;
    cell
}

/// Every cell of `cfg`, in (seed, scheduler) config order. Cells run in
/// parallel; each simulation is single-threaded apart from the schedulers'
/// own per-block work.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let work = || -> Vec<Cell> {
        cfg.seeds
            .par_iter()
            .flat_map_iter(|&seed| {
                let workload = build_workload(cfg, seed).map_err(|e| format!("{e:#}"));
                cfg.schedulers
                    .iter()
                    .map(|p| run_cell(cfg, &workload, p, seed))
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    match cfg.threads()? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One line of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheduler: String,
    pub workload: String,
    pub seed: u64,
    pub status: CellStatus,
    pub submitted: String,
    pub allocated: String,
    pub allocated_weight: String,
    pub evicted: String,
    pub mean_delay: String,
    pub median_delay: String,
    pub p95_delay: String,
    pub fair_share_fraction: String,
}

impl ResultRow {
    /// Field values in [`RESULT_HEADER`] order.
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.scheduler.clone(),
            self.workload.clone(),
            self.seed.to_string(),
            self.status.name().to_string(),
            self.submitted.clone(),
            self.allocated.clone(),
            self.allocated_weight.clone(),
            self.evicted.clone(),
            self.mean_delay.clone(),
            self.median_delay.clone(),
            self.p95_delay.clone(),
            self.fair_share_fraction.clone(),
        ]
    }

    pub fn new(workload: &str, cell: &Cell) -> Self {
        let m: Option<&MetricsReport> = cell.result.as_ref().map(|r| &r.metrics);
        let s = |f: &dyn Fn(&MetricsReport) -> String| m.map(f).unwrap_or_default();
        Self {
            scheduler: cell.scheduler.clone(),
            workload: workload.to_string(),
            seed: cell.seed,
            status: cell.status,
            submitted: s(&|m| m.submitted.to_string()),
            allocated: s(&|m| m.allocated.to_string()),
            allocated_weight: s(&|m| m.allocated_weight.to_string()),
            evicted: s(&|m| m.evicted.to_string()),
            mean_delay: s(&|m| fmt_opt(m.mean_delay())),
            median_delay: s(&|m| fmt_opt(m.delay_percentile(50.0))),
            p95_delay: s(&|m| fmt_opt(m.delay_percentile(95.0))),
            fair_share_fraction: s(&|m| fmt_opt(m.fair_share_fraction())),
        }
    }
}

#[derive(Serialize)]
struct RuntimeRow<'a> {
    scheduler: &'a str,
    workload: &'a str,
    seed: u64,
    repetitions: u32,
    runtime_secs: f64,
}

#[derive(Serialize)]
struct StepRow<'a> {
    scheduler: &'a str,
    seed: u64,
    tick: u64,
    blocks: usize,
    pending: usize,
    granted: usize,
    granted_weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub scheduler: String,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchedulerSummary {
    pub scheduler: String,
    pub cells: usize,
    pub mean_allocated: Option<f64>,
    pub mean_allocated_weight: Option<f64>,
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub version: String,
    pub config_sha256: String,
    pub workload: String,
    pub errored: usize,
    pub skipped: usize,
    pub cells: Vec<CellSummary>,
    pub schedulers: Vec<SchedulerSummary>,
}

impl RunSummary {
    pub fn new(cfg: &ExperimentConfig, cells: &[Cell]) -> Self {
        let mut schedulers: Vec<SchedulerSummary> = Vec::new();
        for p in &cfg.schedulers {
            if schedulers.iter().any(|s| s.scheduler == p.name()) {
                continue;
            }
            let done: Vec<&MetricsReport> = cells
                .iter()
                .filter(|c| c.scheduler == p.name())
                .filter_map(|c| c.result.as_ref().map(|r| &r.metrics))
                .collect();
            let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
                (!done.is_empty()).then(|| done.iter().map(|m| f(m)).sum::<f64>() / done.len() as f64)
            };
            schedulers.push(SchedulerSummary {
                scheduler: p.name().to_string(),
                cells: done.len(),
                mean_allocated: mean(&|m| m.allocated as f64),
                mean_allocated_weight: mean(&|m| m.allocated_weight),
            });
        }
        Self {
            name: cfg.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: cfg.hash(),
            workload: cfg.workload.kind().to_string(),
            errored: cells.iter().filter(|c| c.status == CellStatus::Error).count(),
            skipped: cells.iter().filter(|c| c.status == CellStatus::Skipped).count(),
            cells: cells
                .iter()
                .map(|c| CellSummary {
                    scheduler: c.scheduler.clone(),
                    seed: c.seed,
                    status: c.status,
                    message: c.message.clone(),
                })
                .collect(),
            schedulers,
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a crash never leaves a partial file under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub const RESULT_HEADER: [&str; 12] = [
    "scheduler",
    "workload",
    "seed",
    "status",
    "submitted",
    "allocated",
    "allocated_weight",
    "evicted",
    "mean_delay",
    "median_delay",
    "p95_delay",
    "fair_share_fraction",
];

/// Files written by one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn failed(&self) -> bool {
        self.summary.errored > 0
    }
}

/// Runs every cell of `cfg` and writes `results.csv`, `runtime.csv`,
/// `steps.csv` and `summary.json` into `dir`. Everything except
/// `runtime.csv` is a pure function of the config.
pub fn run_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let cells = run_cells(cfg)?;
    let rows: Vec<ResultRow> = cells.iter().map(|c| ResultRow::new(&cfg.name, c)).collect();
    let runtime: Vec<RuntimeRow> = cells
        .iter()
        .filter(|c| c.status == CellStatus::Ok)
        .map(|c| RuntimeRow {
            scheduler: &c.scheduler,
            workload: &cfg.name,
            seed: c.seed,
            repetitions: cfg.repetitions,
            runtime_secs: c.runtime_secs,
        })
        .collect();
    let steps: Vec<StepRow> = cells
        .iter()
        .filter_map(|c| c.result.as_ref().map(|r| (c, r)))
        .flat_map(|(c, r)| {
            r.steps.iter().map(move |s| StepRow {
                scheduler: &c.scheduler,
                seed: c.seed,
                tick: s.tick,
                blocks: s.blocks,
                pending: s.pending,
                granted: s.granted,
                granted_weight: s.granted_weight,
            })
        })
        .collect();
    let summary = RunSummary::new(cfg, &cells);

    write_atomic(&dir.join("results.csv"), &to_csv(&rows, &RESULT_HEADER)?)?;
    write_atomic(
        &dir.join("runtime.csv"),
        &to_csv(
            &runtime,
            &["scheduler", "workload", "seed", "repetitions", "runtime_secs"],
        )?,
    )?;
    write_atomic(
        &dir.join("steps.csv"),
        &to_csv(
            &steps,
            &[
                "scheduler",
                "seed",
                "tick",
                "blocks",
                "pending",
                "granted",
                "granted_weight",
            ],
        )?,
    )?;
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_atomic(&dir.join("summary.json"), &json)?;
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        rows,
        summary,
    })
}

/// [`run_experiment_in`] at the config's output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_experiment_in(cfg, &cfg.output_dir())
}
