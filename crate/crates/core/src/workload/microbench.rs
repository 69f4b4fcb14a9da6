use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::BlockId;
use crate::task::{BlockRequest, DemandVector, TaskId, TaskSpec};

use super::{
    invalid, normalized_min, reference_capacity, rescale_to, truncated_discrete_gaussian, CurveCorpus, WorkloadError,
    TARGET_ALPHAS,
};

/// Offline microbenchmark knobs. Every task arrives at tick 0 and requests
/// explicit blocks out of `blocks`.
#[derive(Clone, Debug, PartialEq)]
pub struct MicrobenchKnobs {
    pub task_count: usize,
    pub blocks: u64,
    pub mu_blocks: u64,
    pub sigma_blocks: f64,
    pub sigma_alpha: f64,
    /// Target normalized demand of every curve.
    pub eps_min: f64,
    pub seed: u64,
}

impl Default for MicrobenchKnobs {
    fn default() -> Self {
        Self {
            task_count: 300,
            blocks: 20,
            mu_blocks: 10,
            sigma_blocks: 0.0,
            sigma_alpha: 0.0,
            eps_min: 0.005,
            seed: 0,
        }
    }
}

impl MicrobenchKnobs {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.blocks == 0 {
            return Err(invalid("blocks", "at least one block is needed"));
        }
        if self.mu_blocks == 0 {
            return Err(invalid("mu_blocks", "must be at least 1"));
        }
        if !(self.sigma_blocks.is_finite() && self.sigma_blocks >= 0.0) {
            return Err(invalid("sigma_blocks", format!("{} must be >= 0", self.sigma_blocks)));
        }
        if !(self.sigma_alpha.is_finite() && self.sigma_alpha >= 0.0) {
            return Err(invalid("sigma_alpha", format!("{} must be >= 0", self.sigma_alpha)));
        }
        if !(self.eps_min > 0.0 && self.eps_min <= 1.0) {
            return Err(invalid("eps_min", format!("{} must be in (0, 1]", self.eps_min)));
        }
        Ok(())
    }
}

/// Samples microbenchmark tasks. Block counts follow a discrete Gaussian
/// around `mu_blocks`; best alphas follow a discrete Gaussian over the target
/// buckets centered at alpha 5. Curves are rescaled to `eps_min`.
pub fn generate_microbenchmark(knobs: &MicrobenchKnobs, corpus: &CurveCorpus) -> Result<Vec<TaskSpec>, WorkloadError> {
    knobs.validate()?;
    let grid = &corpus.grid;
    let capacity = reference_capacity(grid)?;
    let buckets: Vec<(f64, &[usize])> = TARGET_ALPHAS
        .iter()
        .filter(|&&a| grid.index_of(a).is_some())
        .map(|&a| (a, corpus.bucket(a)))
        .collect();
    if buckets.is_empty() {
        return Err(invalid("alphas", "the grid contains none of the target alphas"));
    }
    if let Some((a, _)) = buckets.iter().find(|(_, b)| b.is_empty()) {
        return Err(WorkloadError::EmptyBucket(*a));
    }
    let center = buckets.iter().position(|(a, _)| *a == 5.0).unwrap_or(0) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(knobs.seed);
    let mut out = Vec::with_capacity(knobs.task_count);
    for i in 0..knobs.task_count {
        let count = truncated_discrete_gaussian(
            &mut rng,
            knobs.mu_blocks as f64,
            knobs.sigma_blocks,
            1,
            knobs.blocks as i64,
        ) as usize;
        let chosen = sample(&mut rng, knobs.blocks as usize, count);
        let (alpha, bucket) = buckets
            [truncated_discrete_gaussian(&mut rng, center, knobs.sigma_alpha, 0, buckets.len() as i64 - 1) as usize];
        let target = grid.index_of(alpha).expect("filtered");

        let mut attempts = 0;
        let curve = loop {
            attempts += 1;
            if attempts > 10_000 {
                return Err(WorkloadError::EmptyBucket(alpha));
            }
            let entry = &corpus.curves[bucket[rng.random_range(0..bucket.len())]];
            let Some(c) = rescale_to(&entry.curve, &capacity, knobs.eps_min) else {
                continue;
            };
            match normalized_min(&c, &capacity) {
                Some((a, v)) if a == target && (v - knobs.eps_min).abs() <= 1e-6 => break (entry, c),
                _ => continue,
            }
        };

        let mut ids: Vec<u64> = chosen.into_iter().map(|b| b as u64).collect();
        ids.sort_unstable();
        let demand: DemandVector = ids.into_iter().map(|b| (BlockId(b), curve.1.clone())).collect();
        out.push(TaskSpec {
            id: TaskId(i as u64),
            weight: 1.0,
            arrival: 0,
            timeout: None,
            mechanism: curve.0.mechanism.name().to_string(),
            request: BlockRequest::Explicit(demand),
        });
    }
    Ok(out)
}
