//! Corpus of RDP curves from common mechanisms, bucketed by best alpha.

use std::collections::{BTreeMap, BTreeSet};

use crate::rdp::{
    compose, gaussian_curve, laplace_curve, subsampled_gaussian_curve, subsampled_laplace_curve, AlphaGrid, RdpCurve,
};

use super::{normalized_min, reference_capacity, WorkloadError};

/// Best alphas every corpus must cover.
pub const TARGET_ALPHAS: [f64; 8] = [3.0, 4.0, 5.0, 6.0, 8.0, 16.0, 32.0, 64.0];

/// Corpus curves whose normalized demand is below this are dropped.
pub const OUTLIER_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mechanism {
    Laplace,
    Gaussian,
    SubsampledLaplace,
    SubsampledGaussian,
    LaplaceGaussian,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Laplace => "laplace",
            Mechanism::Gaussian => "gaussian",
            Mechanism::SubsampledLaplace => "subsampled_laplace",
            Mechanism::SubsampledGaussian => "subsampled_gaussian",
            Mechanism::LaplaceGaussian => "laplace_gaussian",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CorpusCurve {
    pub mechanism: Mechanism,
    /// Human-readable parameters, e.g. `sigma=1.2,q=0.01,steps=100`.
    pub params: String,
    pub curve: RdpCurve,
    /// Grid index of the order minimizing normalized demand.
    pub best_order: usize,
    /// Normalized demand at `best_order`.
    pub normalized: f64,
}

/// Sweep parameters. Each list is a set of sweep points.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub laplace_scales: Vec<f64>,
    pub gaussian_sigmas: Vec<f64>,
    pub subsampled_sigmas: Vec<f64>,
    pub subsampled_laplace_scales: Vec<f64>,
    pub sampling_rates: Vec<f64>,
    pub steps: Vec<u32>,
    pub composition_pairs: usize,
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            laplace_scales: geometric(0.02, 2.0, 60),
            gaussian_sigmas: geometric(0.1, 20.0, 60),
            subsampled_sigmas: geometric(0.5, 8.0, 12),
            subsampled_laplace_scales: geometric(0.05, 5.0, 8),
            sampling_rates: vec![0.001, 0.005, 0.01, 0.05, 0.1, 0.3, 1.0],
            steps: vec![1, 10, 100, 1000, 10_000],
            composition_pairs: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CurveCorpus {
    pub grid: AlphaGrid,
    pub curves: Vec<CorpusCurve>,
    /// Curve indexes per best-order index.
    pub buckets: BTreeMap<usize, Vec<usize>>,
}

impl CurveCorpus {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Curve indexes whose best alpha is `alpha`.
    pub fn bucket(&self, alpha: f64) -> &[usize] {
        self.grid
            .index_of(alpha)
            .and_then(|a| self.buckets.get(&a))
            .map_or(&[], Vec::as_slice)
    }

    pub fn of_mechanism(&self, m: Mechanism) -> Vec<usize> {
        (0..self.curves.len())
            .filter(|&i| self.curves[i].mechanism == m)
            .collect()
    }
}

/// Builds the default corpus on `grid`.
pub fn build_curve_corpus(grid: &AlphaGrid) -> Result<CurveCorpus, WorkloadError> {
    build_curve_corpus_with(grid, &CorpusSpec::default())
}

pub fn build_curve_corpus_with(grid: &AlphaGrid, spec: &CorpusSpec) -> Result<CurveCorpus, WorkloadError> {
    let capacity = reference_capacity(grid)?;
    let mut raw: Vec<(Mechanism, String, RdpCurve)> = Vec::new();
    for &b in &spec.laplace_scales {
        raw.push((Mechanism::Laplace, format!("scale={b:.4}"), laplace_curve(b, grid)?));
    }
    for &s in &spec.gaussian_sigmas {
        raw.push((Mechanism::Gaussian, format!("sigma={s:.4}"), gaussian_curve(s, grid)?));
    }
    for &s in &spec.subsampled_sigmas {
        for &q in &spec.sampling_rates {
            for &k in &spec.steps {
                let c = subsampled_gaussian_curve(s, q, k, grid)?;
                raw.push((
                    Mechanism::SubsampledGaussian,
                    format!("sigma={s:.4},q={q},steps={k}"),
                    c,
                ));
            }
        }
    }
    for &b in &spec.subsampled_laplace_scales {
        for &q in &spec.sampling_rates {
            for &k in &spec.steps {
                let c = subsampled_laplace_curve(b, q, k, grid)?;
                raw.push((Mechanism::SubsampledLaplace, format!("scale={b:.4},q={q},steps={k}"), c));
            }
        }
    }
    let pairs = spec.composition_pairs;
    let lap = geometric(0.05, 5.0, pairs.max(1));
    let gau = geometric(0.3, 10.0, pairs.max(1));
    for &b in lap.iter().take(pairs) {
        for &s in gau.iter().take(pairs) {
            let c = compose(&[laplace_curve(b, grid)?, gaussian_curve(s, grid)?])?;
            raw.push((Mechanism::LaplaceGaussian, format!("scale={b:.4},sigma={s:.4}"), c));
        }
    }

    let mut seen = BTreeSet::new();
    let mut curves = Vec::new();
    for (mechanism, params, curve) in raw {
        // exact duplicates, e.g. q = 1 with one step versus the plain mechanism
        let key: Vec<u64> = curve.epsilons().iter().map(|e| e.to_bits()).collect();
        if !seen.insert(key) {
            continue;
        }
        let Some((best_order, normalized)) = normalized_min(&curve, &capacity) else {
            continue;
        };
        if normalized < OUTLIER_THRESHOLD || !normalized.is_finite() {
            continue;
        }
        curves.push(CorpusCurve {
            mechanism,
            params,
            curve,
            best_order,
            normalized,
        });
    }

    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in curves.iter().enumerate() {
        buckets.entry(c.best_order).or_default().push(i);
    }
    for alpha in TARGET_ALPHAS {
        if let Some(a) = grid.index_of(alpha) {
            if buckets.get(&a).is_none_or(Vec::is_empty) {
                return Err(WorkloadError::EmptyBucket(alpha));
            }
        }
    }
    Ok(CurveCorpus {
        grid: grid.clone(),
        curves,
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corpus_covers_every_bucket() {
        let grid = AlphaGrid::default();
        let corpus = build_curve_corpus(&grid).unwrap();
        assert!(corpus.len() >= 500, "{}", corpus.len());
        for a in TARGET_ALPHAS {
            assert!(!corpus.bucket(a).is_empty(), "alpha {a}");
        }
        for c in &corpus.curves {
            assert!(c.normalized >= OUTLIER_THRESHOLD);
        }
    }

    #[test]
    fn q_one_duplicates_removed() {
        let grid = AlphaGrid::default();
        let spec = CorpusSpec {
            laplace_scales: vec![],
            gaussian_sigmas: vec![1.0],
            subsampled_sigmas: vec![1.0],
            subsampled_laplace_scales: vec![],
            sampling_rates: vec![1.0],
            steps: vec![1],
            composition_pairs: 0,
        };
        // one curve only, so most buckets are empty
        assert!(matches!(
            build_curve_corpus_with(&grid, &spec),
            Err(WorkloadError::EmptyBucket(_))
        ));
        let grid5 = AlphaGrid::single(5.0).unwrap();
        let c = build_curve_corpus_with(&grid5, &spec).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn gaussian_sweep_best_alpha() {
        let grid = AlphaGrid::default();
        let cap = reference_capacity(&grid).unwrap();
        for s in [0.5, 1.0, 5.0, 20.0] {
            let (best, _) = normalized_min(&gaussian_curve(s, &grid).unwrap(), &cap).unwrap();
            assert_eq!(grid.orders()[best], 5.0);
        }
    }
}
