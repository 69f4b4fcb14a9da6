use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::rdp::{laplace_curve, subsampled_gaussian_curve, AlphaGrid, RdpCurve};
use crate::task::{BlockRequest, TaskId, TaskSpec};

use super::{invalid, reference_capacity, rescale_to, WorkloadError};

pub const LARGE_WEIGHTS: [f64; 4] = [10.0, 50.0, 100.0, 500.0];
pub const SMALL_WEIGHTS: [f64; 4] = [1.0, 5.0, 10.0, 50.0];

/// Two task families: large model-training tasks (composed subsampled
/// Gaussians) and small Laplace statistics, each instantiated from a fixed
/// set of templates. Tasks arrive as a Poisson process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightedParams {
    /// Expected arrivals per tick.
    pub rate: f64,
    /// Arrivals happen in ticks `[0, horizon)`.
    pub horizon: u64,
    pub large_templates: usize,
    pub small_templates: usize,
    /// Normalized demand ranges of the templates.
    pub large_eps: (f64, f64),
    pub small_eps: (f64, f64),
    /// Requested block count ranges (inclusive).
    pub large_blocks: (usize, usize),
    pub small_blocks: (usize, usize),
    pub timeout: Option<u64>,
}

impl Default for WeightedParams {
    fn default() -> Self {
        Self {
            rate: 5.0,
            horizon: 50,
            large_templates: 24,
            small_templates: 18,
            large_eps: (0.05, 0.3),
            small_eps: (0.005, 0.05),
            large_blocks: (5, 20),
            small_blocks: (1, 5),
            timeout: None,
        }
    }
}

impl WeightedParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(invalid("rate", "must be >= 0"));
        }
        if self.large_templates + self.small_templates == 0 {
            return Err(invalid("large_templates", "at least one template is needed"));
        }
        for (name, (lo, hi)) in [("large_eps", self.large_eps), ("small_eps", self.small_eps)] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(invalid(name, "range must satisfy 0 < lo <= hi <= 1"));
            }
        }
        for (name, (lo, hi)) in [("large_blocks", self.large_blocks), ("small_blocks", self.small_blocks)] {
            if !(lo >= 1 && lo <= hi) {
                return Err(invalid(name, "range must satisfy 1 <= lo <= hi"));
            }
        }
        Ok(())
    }
}

struct Template {
    large: bool,
    mechanism: &'static str,
    curve: RdpCurve,
    blocks: usize,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

pub fn generate_weighted_two_category(
    params: &WeightedParams,
    grid: &AlphaGrid,
    seed: u64,
) -> Result<Vec<TaskSpec>, WorkloadError> {
    params.validate()?;
    if params.rate == 0.0 || params.horizon == 0 {
        return Ok(Vec::new());
    }
    let capacity = reference_capacity(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut templates = Vec::with_capacity(params.large_templates + params.small_templates);
    for _ in 0..params.large_templates {
        let sigma = rng.random_range(0.7..2.0);
        let q = [0.001, 0.005, 0.01, 0.05][rng.random_range(0..4)];
        let steps = [100, 1000, 10_000][rng.random_range(0..3)];
        let raw = subsampled_gaussian_curve(sigma, q, steps, grid)?;
        let curve = rescale_to(&raw, &capacity, uniform(&mut rng, params.large_eps))
            .ok_or_else(|| invalid("alphas", "grid has no order with positive reference capacity"))?;
        templates.push(Template {
            large: true,
            mechanism: "subsampled_gaussian",
            curve,
            blocks: rng.random_range(params.large_blocks.0..=params.large_blocks.1),
        });
    }
    for _ in 0..params.small_templates {
        let raw = laplace_curve(rng.random_range(0.1..2.0), grid)?;
        let curve = rescale_to(&raw, &capacity, uniform(&mut rng, params.small_eps))
            .ok_or_else(|| invalid("alphas", "grid has no order with positive reference capacity"))?;
        templates.push(Template {
            large: false,
            mechanism: "laplace",
            curve,
            blocks: rng.random_range(params.small_blocks.0..=params.small_blocks.1),
        });
    }

    let arrivals = Poisson::new(params.rate).map_err(|e| invalid("rate", e.to_string()))?;
    let mut out = Vec::new();
    for tick in 0..params.horizon {
        let k = arrivals.sample(&mut rng) as usize;
        for _ in 0..k {
            let t = &templates[rng.random_range(0..templates.len())];
            let grid_w = if t.large { &LARGE_WEIGHTS } else { &SMALL_WEIGHTS };
            out.push(TaskSpec {
                id: TaskId(out.len() as u64),
                weight: grid_w[rng.random_range(0..grid_w.len())],
                arrival: tick,
                timeout: params.timeout,
                mechanism: t.mechanism.to_string(),
                request: BlockRequest::Latest {
                    count: t.blocks,
                    curve: t.curve.clone(),
                },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_follow_category() {
        let tasks = generate_weighted_two_category(&WeightedParams::default(), &AlphaGrid::default(), 4).unwrap();
        assert!(tasks.len() > 100);
        let mut large = 0;
        for t in &tasks {
            if t.mechanism == "subsampled_gaussian" {
                large += 1;
                assert!(LARGE_WEIGHTS.contains(&t.weight));
            } else {
                assert!(SMALL_WEIGHTS.contains(&t.weight));
            }
        }
        let frac = large as f64 / tasks.len() as f64;
        assert!((frac - 24.0 / 42.0).abs() < 0.1, "{frac}");
    }

    #[test]
    fn zero_rate_is_empty() {
        let p = WeightedParams {
            rate: 0.0,
            ..Default::default()
        };
        assert!(generate_weighted_two_category(&p, &AlphaGrid::default(), 1)
            .unwrap()
            .is_empty());
    }
}
