//! Rényi DP curves tabulated on a discrete grid of orders.
//!
//! A [`RdpCurve`] is the unit of both task demand and block capacity. Curves
//! compose additively per order, and any curve can be translated to a
//! traditional `(ε, δ)` guarantee by picking the order that gives the tightest
//! bound.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The orders RDP accountants commonly track.
pub const DEFAULT_ORDERS: [f64; 12] = [1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 16.0, 32.0, 64.0];

#[derive(Debug, Error)]
pub enum RdpError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid alpha grid: {0}")]
    InvalidGrid(String),
    #[error("curves are defined on different alpha grids")]
    GridMismatch,
    #[error("curve has {got} values but the grid has {expected} orders")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid epsilon {value} at alpha {alpha}")]
    InvalidEpsilon { alpha: f64, value: f64 },
    #[error("composed delta {0} is not below 1, the guarantee is vacuous")]
    DeltaOverflow(f64),
    #[error("tabulated curve `{name}`: {reason}")]
    Tabulated { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> RdpError {
    RdpError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Strictly increasing sequence of RDP orders, all greater than one.
///
/// Cloning is cheap; curves built on clones of one grid compare equal.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AlphaGrid(Arc<[f64]>);

impl AlphaGrid {
    pub fn new(orders: Vec<f64>) -> Result<Self, RdpError> {
        if orders.is_empty() {
            return Err(RdpError::InvalidGrid("no orders".into()));
        }
        for &a in &orders {
            if !a.is_finite() || a <= 1.0 {
                return Err(RdpError::InvalidGrid(format!("order {a} is not a finite value > 1")));
            }
        }
        if orders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RdpError::InvalidGrid("orders must be strictly increasing".into()));
        }
        Ok(Self(orders.into()))
    }

    /// Grid with a single order, i.e. traditional DP accounting.
    pub fn single(alpha: f64) -> Result<Self, RdpError> {
        Self::new(vec![alpha])
    }

    pub fn orders(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, alpha: f64) -> Option<usize> {
        self.0.iter().position(|&a| a == alpha)
    }

    /// Fast structural equality.
    pub fn same(&self, other: &AlphaGrid) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0[..] == other.0[..]
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self(DEFAULT_ORDERS.to_vec().into())
    }
}

impl fmt::Debug for AlphaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<f64>> for AlphaGrid {
    type Error = RdpError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        AlphaGrid::new(v)
    }
}

impl From<AlphaGrid> for Vec<f64> {
    fn from(g: AlphaGrid) -> Self {
        g.0.to_vec()
    }
}

/// Privacy loss bound `ε(α)` at every order of one [`AlphaGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct RdpCurve {
    grid: AlphaGrid,
    eps: Vec<f64>,
}

impl RdpCurve {
    pub fn new(grid: AlphaGrid, eps: Vec<f64>) -> Result<Self, RdpError> {
        if eps.len() != grid.len() {
            return Err(RdpError::LengthMismatch {
                expected: grid.len(),
                got: eps.len(),
            });
        }
        for (&alpha, &value) in grid.orders().iter().zip(&eps) {
            if !value.is_finite() || value < 0.0 {
                return Err(RdpError::InvalidEpsilon { alpha, value });
            }
        }
        Ok(Self { grid, eps })
    }

    pub(crate) fn from_raw(grid: AlphaGrid, eps: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), eps.len());
        debug_assert!(eps.iter().all(|e| e.is_finite() && *e >= 0.0));
        Self { grid, eps }
    }

    pub fn zero(grid: &AlphaGrid) -> Self {
        Self::from_raw(grid.clone(), vec![0.0; grid.len()])
    }

    pub fn constant(grid: &AlphaGrid, value: f64) -> Result<Self, RdpError> {
        Self::new(grid.clone(), vec![value; grid.len()])
    }

    pub fn grid(&self) -> &AlphaGrid {
        &self.grid
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.eps[index]
    }

    /// Value at order `alpha`, if the grid contains it.
    pub fn at(&self, alpha: f64) -> Option<f64> {
        self.grid.index_of(alpha).map(|i| self.eps[i])
    }

    /// `(α, ε(α))` pairs in grid order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.orders().iter().copied().zip(self.eps.iter().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.eps.iter().all(|&e| e == 0.0)
    }

    /// Multiplies every order by `factor` (≥ 0).
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(
            factor >= 0.0 && factor.is_finite(),
            "scale factor must be finite and >= 0"
        );
        Self::from_raw(self.grid.clone(), self.eps.iter().map(|e| e * factor).collect())
    }

    /// Pointwise sum with another curve on the same grid.
    pub fn compose_with(&self, other: &RdpCurve) -> Result<Self, RdpError> {
        if !self.grid.same(&other.grid) {
            return Err(RdpError::GridMismatch);
        }
        let eps = self.eps.iter().zip(&other.eps).map(|(a, b)| a + b).collect();
        Ok(Self::from_raw(self.grid.clone(), eps))
    }

    pub(crate) fn add_assign(&mut self, other: &RdpCurve) {
        debug_assert!(self.grid.same(&other.grid));
        for (a, b) in self.eps.iter_mut().zip(&other.eps) {
            *a += b;
        }
    }
}

/// Traditional `(ε, δ)`-DP guarantee.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpGuarantee {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpGuarantee {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, RdpError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid("epsilon", format!("{epsilon} must be > 0")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid("delta", format!("{delta} must be in [0, 1)")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Result of translating an RDP curve to traditional DP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpConversion {
    pub epsilon: f64,
    pub alpha: f64,
}

/// Gaussian mechanism with noise standard deviation `sigma` (sensitivity 1):
/// `ε(α) = α / (2σ²)`.
pub fn gaussian_curve(sigma: f64, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    check_positive("sigma", sigma)?;
    let eps = grid.orders().iter().map(|&a| gaussian_eps(sigma, a)).collect();
    Ok(RdpCurve::from_raw(grid.clone(), eps))
}

/// Laplace mechanism with scale `scale` (sensitivity 1).
pub fn laplace_curve(scale: f64, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    check_positive("scale", scale)?;
    let eps = grid.orders().iter().map(|&a| laplace_eps(scale, a)).collect();
    Ok(RdpCurve::from_raw(grid.clone(), eps))
}

/// Poisson-subsampled Gaussian with sampling rate `q`, composed over `steps`
/// iterations (DP-SGD style).
pub fn subsampled_gaussian_curve(sigma: f64, q: f64, steps: u32, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    check_positive("sigma", sigma)?;
    subsampled_curve(|a| gaussian_eps(sigma, a), q, steps, grid)
}

/// Poisson-subsampled Laplace, composed over `steps` iterations. Uses the
/// same binomial amplification as the Gaussian with the Laplace divergence
/// plugged in; an upper bound, never larger than the unsampled curve.
pub fn subsampled_laplace_curve(scale: f64, q: f64, steps: u32, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    check_positive("scale", scale)?;
    subsampled_curve(|a| laplace_eps(scale, a), q, steps, grid)
}

/// Pointwise sum of curves sharing one grid.
pub fn compose(curves: &[RdpCurve]) -> Result<RdpCurve, RdpError> {
    let (first, rest) = curves
        .split_first()
        .ok_or_else(|| invalid("curves", "cannot compose an empty sequence"))?;
    let mut out = first.clone();
    for c in rest {
        if !out.grid.same(&c.grid) {
            return Err(RdpError::GridMismatch);
        }
        out.add_assign(c);
    }
    Ok(out)
}

/// Tightest `(ε, δ)` translation over the grid:
/// `min_α ε(α) + log(1/δ)/(α − 1)`, ties going to the smaller order.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpConversion, RdpError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} must be in (0, 1)")));
    }
    let penalty = (1.0 / delta).ln();
    let mut best = DpConversion {
        epsilon: f64::INFINITY,
        alpha: f64::NAN,
    };
    for (alpha, eps) in curve.iter() {
        let translated = eps + penalty / (alpha - 1.0);
        if translated < best.epsilon {
            best = DpConversion {
                epsilon: translated,
                alpha,
            };
        }
    }
    Ok(best)
}

/// Basic composition of traditional guarantees.
pub fn basic_dp_compose(guarantees: &[DpGuarantee]) -> Result<DpGuarantee, RdpError> {
    let epsilon = guarantees.iter().map(|g| g.epsilon).sum();
    let delta: f64 = guarantees.iter().map(|g| g.delta).sum();
    if delta >= 1.0 {
        return Err(RdpError::DeltaOverflow(delta));
    }
    Ok(DpGuarantee { epsilon, delta })
}

/// Per-order capacity of a privacy filter that enforces `global` once
/// translated back: `max(0, ε − log(1/δ)/(α − 1))`.
pub fn block_capacity_curve(global: DpGuarantee, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    if !(global.delta > 0.0 && global.delta < 1.0) {
        return Err(invalid("delta", "block capacity needs delta in (0, 1)"));
    }
    check_positive("epsilon", global.epsilon)?;
    let penalty = (1.0 / global.delta).ln();
    let eps = grid
        .orders()
        .iter()
        .map(|&a| (global.epsilon - penalty / (a - 1.0)).max(0.0))
        .collect();
    Ok(RdpCurve::from_raw(grid.clone(), eps))
}

fn check_positive(name: &'static str, v: f64) -> Result<(), RdpError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be finite and > 0")))
    }
}

fn gaussian_eps(sigma: f64, alpha: f64) -> f64 {
    alpha / (2.0 * sigma * sigma)
}

fn laplace_eps(scale: f64, alpha: f64) -> f64 {
    let lhs = (alpha / (2.0 * alpha - 1.0)).ln() + (alpha - 1.0) / scale;
    let rhs = ((alpha - 1.0) / (2.0 * alpha - 1.0)).ln() - alpha / scale;
    (log_add_exp(lhs, rhs) / (alpha - 1.0)).max(0.0)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
}

/// Binomial-expansion bound at integer order `alpha` ≥ 2 for a Poisson
/// subsampled mechanism whose base divergence is `base`.
fn subsampled_integer_eps(base: &impl Fn(f64) -> f64, q: f64, alpha: u64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let terms: Vec<f64> = (0..=alpha)
        .map(|k| {
            let mut t = ln_choose(alpha, k) + (alpha - k) as f64 * l1q + k as f64 * lq;
            if k >= 2 {
                t += (k - 1) as f64 * base(k as f64);
            }
            t
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_moment = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
    (log_moment / (alpha - 1) as f64).max(0.0)
}

fn subsampled_curve(base: impl Fn(f64) -> f64, q: f64, steps: u32, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid("q", format!("{q} must be in (0, 1]")));
    }
    if steps == 0 {
        return Err(invalid("steps", "must be at least 1"));
    }
    let steps_f = steps as f64;
    let eps = grid
        .orders()
        .iter()
        .map(|&alpha| {
            let full = base(alpha);
            let per_step = if q == 1.0 {
                full
            } else {
                let at = |a: u64| subsampled_integer_eps(&base, q, a);
                let interpolated = if alpha <= 2.0 {
                    // ε(1) has no closed form here; monotonicity in α makes ε(2) a valid bound.
                    at(2)
                } else if alpha.fract() == 0.0 {
                    at(alpha as u64)
                } else {
                    let lo = alpha.floor();
                    let (e_lo, e_hi) = (at(lo as u64), at(lo as u64 + 1));
                    e_lo + (alpha - lo) * (e_hi - e_lo)
                };
                interpolated.min(full)
            };
            per_step * steps_f
        })
        .collect();
    Ok(RdpCurve::from_raw(grid.clone(), eps))
}

/// One named curve in a tabulated-curve file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedCurve {
    pub name: String,
    pub orders: Vec<f64>,
    pub epsilons: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedCurveFile {
    pub curves: Vec<TabulatedCurve>,
}

impl TabulatedCurve {
    pub fn from_curve(name: impl Into<String>, curve: &RdpCurve) -> Self {
        Self {
            name: name.into(),
            orders: curve.grid().orders().to_vec(),
            epsilons: curve.epsilons().to_vec(),
        }
    }

    /// Converts to a curve on `grid`; the stored orders must match exactly.
    pub fn to_curve(&self, grid: &AlphaGrid) -> Result<RdpCurve, RdpError> {
        if self.orders[..] != grid.orders()[..] {
            return Err(RdpError::Tabulated {
                name: self.name.clone(),
                reason: format!("orders {:?} do not match grid {:?}", self.orders, grid),
            });
        }
        RdpCurve::new(grid.clone(), self.epsilons.clone()).map_err(|e| RdpError::Tabulated {
            name: self.name.clone(),
            reason: e.to_string(),
        })
    }
}

/// Loads every curve of a tabulated-curve JSON file onto `grid`.
pub fn load_tabulated(path: &Path, grid: &AlphaGrid) -> Result<Vec<(String, RdpCurve)>, RdpError> {
    let file: TabulatedCurveFile = serde_json::from_slice(&std::fs::read(path)?)?;
    file.curves
        .iter()
        .map(|t| Ok((t.name.clone(), t.to_curve(grid)?)))
        .collect()
}
