use std::path::{Path, PathBuf};

use privknap::rdp::{block_capacity_curve, AlphaGrid, DpGuarantee, RdpCurve};
use privknap::scenarios::Scenario;
use privknap::sched::Policy;
use privknap::sim::BatchPeriod;
use privknap::workload::{SyntheticTraceParams, TraceMappingParams, WeightedParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const OUTPUT_DIR_ENV: &str = "PRIVKNAP_OUTPUT_DIR";
pub const THREADS_ENV: &str = "PRIVKNAP_THREADS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

/// One experiment: a workload, a block stream, and the schedulers to compare
/// on it, once per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Runs per cell; allocations must agree, runtimes are averaged.
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// RDP orders; defaults to the standard grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    pub schedulers: Vec<Policy>,
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub blocks: BlockSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_repetitions() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    /// Offline microbenchmark over `blocks.count` blocks.
    Microbenchmark {
        #[serde(default = "default_task_count")]
        task_count: usize,
        #[serde(default = "default_mu_blocks")]
        mu_blocks: u64,
        #[serde(default)]
        sigma_blocks: f64,
        #[serde(default)]
        sigma_alpha: f64,
        #[serde(default = "default_eps_min")]
        eps_min: f64,
    },
    /// A generated cluster trace run through the trace mapping.
    SyntheticTrace {
        #[serde(default)]
        trace: SyntheticTraceParams,
        #[serde(default)]
        mapping: TraceMappingParams,
    },
    /// A trace CSV on disk run through the trace mapping.
    Trace {
        path: PathBuf,
        #[serde(default)]
        mapping: TraceMappingParams,
    },
    Weighted {
        #[serde(default)]
        params: WeightedParams,
    },
    /// A workload JSON file; seeds do not change it.
    File { path: PathBuf },
    /// A built-in instance with its own blocks.
    Scenario { name: String },
}

fn default_task_count() -> usize {
    300
}

fn default_mu_blocks() -> u64 {
    10
}

fn default_eps_min() -> f64 {
    0.005
}

impl WorkloadSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            WorkloadSpec::Microbenchmark { .. } => "microbenchmark",
            WorkloadSpec::SyntheticTrace { .. } => "synthetic_trace",
            WorkloadSpec::Trace { .. } => "trace",
            WorkloadSpec::Weighted { .. } => "weighted",
            WorkloadSpec::File { .. } => "file",
            WorkloadSpec::Scenario { .. } => "scenario",
        }
    }
}

/// Block stream. Offline runs use all `count` blocks from the start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockSpec {
    pub count: u64,
    /// Blocks present at tick 0 in online runs.
    pub initial: u64,
    /// Ticks between block arrivals.
    pub interval: u64,
    pub epsilon: f64,
    pub delta: f64,
    /// `N`: scheduling steps until a block is fully unlocked.
    pub unlock_steps: u32,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            count: 20,
            initial: 1,
            interval: 10,
            epsilon: 10.0,
            delta: 1e-7,
            unlock_steps: 1,
        }
    }
}

impl BlockSpec {
    pub fn capacity(&self, grid: &AlphaGrid) -> Result<RdpCurve, ConfigError> {
        let g = DpGuarantee::new(self.epsilon, self.delta).map_err(|e| invalid("blocks", e.to_string()))?;
        block_capacity_curve(g, grid).map_err(|e| invalid("blocks", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Offline,
    Online,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub mode: Mode,
    /// `T`, in ticks, or "terminal".
    pub period: BatchPeriod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// Fair-share denominator; defaults to the block count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fair_share: Option<f64>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            mode: Mode::Offline,
            period: BatchPeriod::Every(1),
            horizon: None,
            fair_share: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML config. Errors name the offending field.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let reason = inner.message().to_string();
            invalid(if path == "." { "config".to_string() } else { path }, reason)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes workload paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        match &mut self.workload {
            WorkloadSpec::Trace { path, .. } | WorkloadSpec::File { path } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<AlphaGrid, ConfigError> {
        match &self.alphas {
            None => Ok(AlphaGrid::default()),
            Some(a) => AlphaGrid::new(a.clone()).map_err(|e| invalid("alphas", e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is needed"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        if self.schedulers.is_empty() {
            return Err(invalid("schedulers", "at least one scheduler is needed"));
        }
        for (i, p) in self.schedulers.iter().enumerate() {
            p.validate().map_err(|r| invalid(format!("schedulers[{i}]"), r))?;
        }
        let grid = self.grid()?;

        let b = &self.blocks;
        if b.count == 0 {
            return Err(invalid("blocks.count", "must be at least 1"));
        }
        if b.interval == 0 {
            return Err(invalid("blocks.interval", "must be at least 1"));
        }
        if b.unlock_steps == 0 {
            return Err(invalid("blocks.unlock_steps", "must be at least 1"));
        }
        if !(b.epsilon.is_finite() && b.epsilon > 0.0) {
            return Err(invalid("blocks.epsilon", "must be > 0"));
        }
        if !(b.delta > 0.0 && b.delta < 1.0) {
            return Err(invalid("blocks.delta", "must be in (0, 1)"));
        }
        b.capacity(&grid)?;

        let s = &self.simulation;
        if s.period == BatchPeriod::Every(0) {
            return Err(invalid("simulation.period", "must be at least 1 tick"));
        }
        if let Some(f) = s.fair_share {
            if !(f.is_finite() && f >= 1.0) {
                return Err(invalid("simulation.fair_share", "must be >= 1"));
            }
        }

        match &self.workload {
            WorkloadSpec::Microbenchmark {
                mu_blocks,
                sigma_blocks,
                sigma_alpha,
                eps_min,
                ..
            } => {
                if *mu_blocks == 0 || *mu_blocks > b.count {
                    return Err(invalid("workload.mu_blocks", format!("must be in [1, {}]", b.count)));
                }
                if !(sigma_blocks.is_finite() && *sigma_blocks >= 0.0) {
                    return Err(invalid("workload.sigma_blocks", "must be >= 0"));
                }
                if !(sigma_alpha.is_finite() && *sigma_alpha >= 0.0) {
                    return Err(invalid("workload.sigma_alpha", "must be >= 0"));
                }
                if !(*eps_min > 0.0 && *eps_min <= 1.0) {
                    return Err(invalid("workload.eps_min", "must be in (0, 1]"));
                }
            }
            WorkloadSpec::SyntheticTrace { mapping, .. } | WorkloadSpec::Trace { mapping, .. } => {
                mapping
                    .validate()
                    .map_err(|e| invalid("workload.mapping", e.to_string()))?;
            }
            WorkloadSpec::Weighted { params } => {
                params
                    .validate()
                    .map_err(|e| invalid("workload.params", e.to_string()))?;
            }
            WorkloadSpec::File { .. } => {}
            WorkloadSpec::Scenario { name } => {
                if Scenario::by_name(name).is_none() {
                    return Err(invalid(
                        "workload.name",
                        format!("unknown scenario {name:?}; known: {}", Scenario::NAMES.join(", ")),
                    ));
                }
                if s.mode != Mode::Offline {
                    return Err(invalid("simulation.mode", "scenarios run offline"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical config, ignoring where results go and how
    /// many threads compute them.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    /// Output directory: the environment override, then the config, then
    /// `results/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(d) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            return PathBuf::from(d);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("results").join(&self.name))
    }

    /// Worker threads: the environment override, then the config.
    pub fn threads(&self) -> Result<Option<usize>, ConfigError> {
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.is_empty() => match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(invalid(THREADS_ENV, format!("{v:?} is not a positive integer"))),
            },
            _ => Ok(self.threads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
name = "basic"
seeds = [0, 1]
schedulers = [{ kind = "dpk", eta = 0.1 }, { kind = "dpf" }, { kind = "optimal" }]

[workload]
kind = "microbenchmark"
task_count = 50
sigma_blocks = 2.0

[blocks]
count = 12
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(cfg.schedulers[0], Policy::Dpk { eta: 0.1 });
        assert_eq!(cfg.schedulers[2], Policy::optimal());
        assert_eq!(cfg.blocks.count, 12);
        assert_eq!(cfg.blocks.epsilon, 10.0);
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let text = BASIC.replace("sigma_blocks = 2.0", "sigma_blocks = 2.0\nsigma_blokcs = 1.0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("workload") && err.contains("sigma_blokcs"), "{err}");
        let err = ExperimentConfig::from_toml(&BASIC.replace("count = 12", "count = 12\nspeed = 3"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("blocks"), "{err}");
    }

    #[test]
    fn semantic_errors_name_their_path() {
        let err = ExperimentConfig::from_toml(&BASIC.replace("count = 12", "count = 5"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("workload.mu_blocks"), "{err}");
        let err = ExperimentConfig::from_toml(&BASIC.replace("eta = 0.1", "eta = -1.0"))
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("schedulers[0]"), "{err}");
        let scen =
            "name = \"s\"\nschedulers = [{ kind = \"dpf\" }]\n[workload]\nkind = \"scenario\"\nname = \"nope\"\n";
        assert!(ExperimentConfig::from_toml(scen)
            .unwrap_err()
            .to_string()
            .starts_with("workload.name"));
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        let h = cfg.hash();
        cfg.output_dir = Some("elsewhere".into());
        cfg.threads = Some(3);
        assert_eq!(cfg.hash(), h);
        cfg.seeds.push(7);
        assert_ne!(cfg.hash(), h);
    }
}
