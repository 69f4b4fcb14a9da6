use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Result};
use privknap::sim::BatchPeriod;

use crate::config::{ExperimentConfig, Mode, WorkloadSpec};
use crate::experiment::{run_experiment_in, write_atomic, RunOutput, RESULT_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    TaskCount,
    BlockCount,
    Period,
    SigmaBlocks,
    SigmaAlpha,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [
        SweepParam::TaskCount,
        SweepParam::BlockCount,
        SweepParam::Period,
        SweepParam::SigmaBlocks,
        SweepParam::SigmaAlpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::TaskCount => "task_count",
            SweepParam::BlockCount => "block_count",
            SweepParam::Period => "T",
            SweepParam::SigmaBlocks => "sigma_blocks",
            SweepParam::SigmaAlpha => "sigma_alpha",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|p| p.name()).collect();
            format!("unknown sweep parameter {s:?}; expected one of {}", names.join(", "))
        })
    }
}

fn parse_count(param: SweepParam, v: &str) -> Result<u64> {
    match v.parse::<u64>() {
        Ok(n) => Ok(n),
        Err(_) => bail!("{param} takes non-negative integers, got {v:?}"),
    }
}

fn parse_sigma(param: SweepParam, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
        _ => bail!("{param} takes non-negative numbers, got {v:?}"),
    }
}

/// `cfg` with `param` set to `value`.
pub fn apply(cfg: &ExperimentConfig, param: SweepParam, value: &str) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match (param, &mut c.workload) {
        (SweepParam::TaskCount, WorkloadSpec::Microbenchmark { task_count, .. }) => {
            *task_count = parse_count(param, value)? as usize;
        }
        (SweepParam::TaskCount, WorkloadSpec::SyntheticTrace { trace, .. }) => {
            trace.records = parse_count(param, value)? as usize;
        }
        (SweepParam::TaskCount, w) => bail!("task_count does not apply to a {} workload", w.kind()),
        (SweepParam::BlockCount, WorkloadSpec::Scenario { .. }) => {
            bail!("block_count does not apply to a scenario workload")
        }
        (SweepParam::BlockCount, _) => c.blocks.count = parse_count(param, value)?,
        (SweepParam::Period, _) => {
            if c.simulation.mode != Mode::Online {
                bail!("T applies to online simulations only");
            }
            c.simulation.period = if value == "terminal" {
                BatchPeriod::Terminal
            } else {
                BatchPeriod::Every(parse_count(param, value)?)
            };
        }
        (SweepParam::SigmaBlocks, WorkloadSpec::Microbenchmark { sigma_blocks, .. }) => {
            *sigma_blocks = parse_sigma(param, value)?;
        }
        (SweepParam::SigmaAlpha, WorkloadSpec::Microbenchmark { sigma_alpha, .. }) => {
            *sigma_alpha = parse_sigma(param, value)?;
        }
        (p, w) => bail!("{p} does not apply to a {} workload", w.kind()),
    }
    c.validate()?;
    Ok(c)
}

/// Result of a sweep: one run per value plus the combined table.
pub struct SweepOutput {
    pub runs: Vec<(String, RunOutput)>,
}

impl SweepOutput {
    pub fn failed(&self) -> bool {
        self.runs.iter().any(|(_, r)| r.failed())
    }
}

/// Runs `cfg` once per value into `dir/<param>=<value>/` and writes the
/// long-format `dir/sweep.csv`.
pub fn sweep_in(cfg: &ExperimentConfig, param: SweepParam, values: &[String], dir: &Path) -> Result<SweepOutput> {
    if values.is_empty() {
        bail!("a sweep needs at least one value");
    }
    let configs: Vec<ExperimentConfig> = values.iter().map(|v| apply(cfg, param, v)).collect::<Result<_>>()?;
    let mut runs = Vec::with_capacity(values.len());
    for (v, c) in values.iter().zip(&configs) {
        let out = run_experiment_in(c, &dir.join(format!("{}={v}", param.name())))?;
        runs.push((v.clone(), out));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["parameter", "value"];
    header.extend(RESULT_HEADER);
    w.write_record(&header)?;
    for (v, out) in &runs {
        for row in &out.rows {
            let mut rec = vec![param.name().to_string(), v.clone()];
            rec.extend(row.fields());
            w.write_record(&rec)?;
        }
    }
    write_atomic(&dir.join("sweep.csv"), &w.into_inner()?)?;
    Ok(SweepOutput { runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            "name = \"m\"\nschedulers = [{ kind = \"dpf\" }]\n[workload]\nkind = \"microbenchmark\"\ntask_count = 10\n",
        )
        .unwrap()
    }

    #[test]
    fn applies_to_matching_workloads_only() {
        let c = apply(&micro(), SweepParam::SigmaBlocks, "3").unwrap();
        assert!(matches!(c.workload, WorkloadSpec::Microbenchmark { sigma_blocks, .. } if sigma_blocks == 3.0));
        assert!(apply(&micro(), SweepParam::Period, "5").is_err());
        assert!(apply(&micro(), SweepParam::SigmaAlpha, "-1").is_err());
        assert_eq!(apply(&micro(), SweepParam::BlockCount, "15").unwrap().blocks.count, 15);
        assert!("T".parse::<SweepParam>().is_ok());
        assert!("eta".parse::<SweepParam>().is_err());
    }
}
