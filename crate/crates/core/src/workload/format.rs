use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::block::BlockId;
use crate::rdp::{AlphaGrid, RdpCurve};
use crate::task::{BlockRequest, DemandVector, TaskId, TaskSpec};

use super::WorkloadError;

/// JSON workload: the alpha grid, then one record per task with its demand
/// tabulated on that grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadFile {
    pub alphas: Vec<f64>,
    pub tasks: Vec<TaskRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub id: u64,
    pub arrival: u64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub mechanism: String,
    pub request: RequestRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RequestRecord {
    /// The `count` most recent blocks at arrival, each charged `epsilons`.
    Latest {
        count: usize,
        epsilons: Vec<f64>,
    },
    Explicit {
        blocks: Vec<BlockDemand>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDemand {
    pub block: u64,
    pub epsilons: Vec<f64>,
}

impl WorkloadFile {
    pub fn from_specs(grid: &AlphaGrid, specs: &[TaskSpec]) -> Self {
        let tasks = specs
            .iter()
            .map(|s| TaskRecord {
                id: s.id.0,
                arrival: s.arrival,
                weight: s.weight,
                timeout: s.timeout,
                mechanism: s.mechanism.clone(),
                request: match &s.request {
                    BlockRequest::Latest { count, curve } => RequestRecord::Latest {
                        count: *count,
                        epsilons: curve.epsilons().to_vec(),
                    },
                    BlockRequest::Explicit(d) => RequestRecord::Explicit {
                        blocks: d
                            .iter()
                            .map(|(b, c)| BlockDemand {
                                block: b.0,
                                epsilons: c.epsilons().to_vec(),
                            })
                            .collect(),
                    },
                },
            })
            .collect();
        Self {
            alphas: grid.orders().to_vec(),
            tasks,
        }
    }

    pub fn to_specs(&self) -> Result<(AlphaGrid, Vec<TaskSpec>), WorkloadError> {
        let grid = AlphaGrid::new(self.alphas.clone())?;
        let curve = |id: u64, eps: &[f64]| {
            RdpCurve::new(grid.clone(), eps.to_vec()).map_err(|e| WorkloadError::Format(format!("task {id}: {e}")))
        };
        let mut seen = std::collections::BTreeSet::new();
        let mut specs = Vec::with_capacity(self.tasks.len());
        for t in &self.tasks {
            if !seen.insert(t.id) {
                return Err(WorkloadError::Format(format!("duplicate task id {}", t.id)));
            }
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(WorkloadError::Format(format!("task {}: weight must be > 0", t.id)));
            }
            let request = match &t.request {
                RequestRecord::Latest { count, epsilons } => {
                    if *count == 0 {
                        return Err(WorkloadError::Format(format!("task {}: count must be >= 1", t.id)));
                    }
                    BlockRequest::Latest {
                        count: *count,
                        curve: curve(t.id, epsilons)?,
                    }
                }
                RequestRecord::Explicit { blocks } => {
                    if blocks.is_empty() {
                        return Err(WorkloadError::Format(format!("task {}: no blocks requested", t.id)));
                    }
                    let mut d = DemandVector::new();
                    for b in blocks {
                        d.insert(BlockId(b.block), curve(t.id, &b.epsilons)?);
                    }
                    BlockRequest::Explicit(d)
                }
            };
            specs.push(TaskSpec {
                id: TaskId(t.id),
                weight: t.weight,
                arrival: t.arrival,
                timeout: t.timeout,
                mechanism: t.mechanism.clone(),
                request,
            });
        }
        Ok((grid, specs))
    }

    pub fn read(path: &Path) -> Result<Self, WorkloadError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn to_json(&self) -> Result<String, WorkloadError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate_weighted_two_category, WeightedParams};

    #[test]
    fn round_trip() {
        let grid = AlphaGrid::default();
        let specs = generate_weighted_two_category(&WeightedParams::default(), &grid, 2).unwrap();
        let file = WorkloadFile::from_specs(&grid, &specs);
        let parsed: WorkloadFile = serde_json::from_str(&file.to_json().unwrap()).unwrap();
        let (g, back) = parsed.to_specs().unwrap();
        assert!(g.same(&grid));
        assert_eq!(back, specs);
    }

    #[test]
    fn rejects_bad_records() {
        let bad = r#"{"alphas":[2.0,4.0],"tasks":[{"id":0,"arrival":0,"weight":1,"request":{"kind":"latest","count":1,"epsilons":[0.1]}}]}"#;
        let f: WorkloadFile = serde_json::from_str(bad).unwrap();
        assert!(f.to_specs().is_err());
        let unknown = r#"{"alphas":[2.0],"tasks":[],"extra":1}"#;
        assert!(serde_json::from_str::<WorkloadFile>(unknown).is_err());
    }
}
