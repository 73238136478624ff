//! Tweedie dominance between two predictors and convex-order checks.
//!
//! Predictor 2 beats predictor 1 under every Tweedie deviance with ξ ≥ 1 if
//!
//! * E[ψ_ξ(π̂₁)] ≥ E[ψ_ξ(π̂₂)] for every ξ (bias measured on the ψ scale), and
//! * E[Y·1[π̂₁ ≤ t]] ≥ E[Y·1[π̂₂ ≤ t]] for every t ≥ 0 (lower partial moments).
//!
//! Both are checked on finite grids. The lower partial moments are step
//! functions that only jump at observed predictions, so the default t-grid of
//! all distinct predictions is exact. The ξ-grid verdict is only a grid
//! check and is labelled as such.
//!
//! With non-unit exposures every condition is evaluated on expected totals
//! e·π, the quantity the deviance compares with y.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};
use crate::scalar::{cmp_float, mean, sum, NeumaierSum, Scalar};
use crate::tweedie::{mean_deviance, PowerParam};

const REL_SLACK: f64 = 1e-12;

fn slack<T: Scalar>(scale: T) -> T {
    T::lit(REL_SLACK).max(T::epsilon() * T::lit(8.0)) * scale
}

/// Sorted predictions with running response totals, for O(log n) lookups of
/// (1/n) Σ y_i 1[s_i ≤ t].
struct Lpm<T> {
    sorted: Vec<T>,
    prefix: Vec<T>,
    n: T,
}

impl<T: Scalar> Lpm<T> {
    fn new(y: &[T], scores: &[T]) -> Result<Self> {
        check_same_len("lower partial moment", y.len(), scores.len())?;
        if y.is_empty() {
            return Err(Error::Usage("lower partial moment of an empty sample".into()));
        }
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| cmp_float(&scores[a], &scores[b]));
        let mut acc = NeumaierSum::new();
        let mut prefix = vec![T::zero()];
        for &i in &order {
            acc.add(y[i]);
            prefix.push(acc.value());
        }
        Ok(Self {
            sorted: order.iter().map(|&i| scores[i]).collect(),
            prefix,
            n: T::from_count(y.len()),
        })
    }

    fn at(&self, t: T) -> T {
        self.prefix[self.sorted.partition_point(|&s| s <= t)] / self.n
    }
}

/// (1/n) Σ y_i·1[scores_i ≤ t].
pub fn lower_partial_moment<T: Scalar>(y: &[T], scores: &[T], t: T) -> Result<T> {
    check_same_len("lower partial moment", y.len(), scores.len())?;
    if y.is_empty() {
        return Err(Error::Usage("lower partial moment of an empty sample".into()));
    }
    let hits = sum(y.iter().zip(scores).filter(|(_, &s)| s <= t).map(|(&yi, _)| yi));
    Ok(hits / T::from_count(y.len()))
}

/// Lower partial moments over increasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpmCurve<T> {
    pub thresholds: Vec<T>,
    pub values: Vec<T>,
}

fn distinct_sorted<T: Scalar>(values: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut v: Vec<T> = values.into_iter().collect();
    v.sort_by(cmp_float);
    v.dedup();
    v
}

fn check_increasing<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Usage("threshold grid must be strictly increasing".into()));
    }
    Ok(())
}

/// LPM over `grid`, or over the distinct scores (the exact step function)
/// when no grid is given.
pub fn lpm_curve<T: Scalar>(y: &[T], scores: &[T], grid: Option<&[T]>) -> Result<LpmCurve<T>> {
    let lpm = Lpm::new(y, scores)?;
    let thresholds = match grid {
        Some(g) => {
            check_increasing(g)?;
            g.to_vec()
        }
        None => distinct_sorted(scores.iter().copied()),
    };
    let values = thresholds.iter().map(|&t| lpm.at(t)).collect();
    Ok(LpmCurve { thresholds, values })
}

/// Mean of ψ_ξ over the scores.
pub fn psi_mean<T: Scalar>(p: &PowerParam<T>, scores: &[T]) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Usage("psi_mean of an empty sample".into()));
    }
    let mut acc = NeumaierSum::new();
    for &s in scores {
        acc.add(p.psi(s)?);
    }
    Ok(acc.value() / T::from_count(scores.len()))
}

/// {1.0, 1.1, …, 3.0}.
pub fn default_xi_grid<T: Scalar>() -> Vec<PowerParam<T>> {
    (10..=30)
        .map(|k| PowerParam::new(T::from_count(k) / T::lit(10.0)).expect("grid values are >= 1"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport<T> {
    pub xi_grid: Vec<T>,
    /// E[ψ_ξ(π̂₁)] − E[ψ_ξ(π̂₂)] per ξ.
    pub psi_gap: Vec<T>,
    pub thresholds: Vec<T>,
    /// LPM₁(t) − LPM₂(t) per threshold.
    pub lpm_gap: Vec<T>,
    /// D(ξ, π̂₁) − D(ξ, π̂₂) per ξ; nonnegative favours predictor 2.
    pub deviance_gap: Vec<T>,
    /// Verified on `xi_grid` only, hence the serialized name.
    #[serde(rename = "cond1_grid_verified")]
    pub cond1_holds: bool,
    pub cond2_holds: bool,
    pub sufficient: bool,
}

/// Checks whether predictor 2 dominates predictor 1. `t_grid = None` uses
/// every distinct expected total of either predictor.
pub fn check_dominance<T: Scalar>(
    y: &[T],
    exposure: &[T],
    scores1: &[T],
    scores2: &[T],
    xi_grid: &[PowerParam<T>],
    t_grid: Option<&[T]>,
) -> Result<DominanceReport<T>> {
    check_same_len("dominance y/exposure", y.len(), exposure.len())?;
    check_same_len("dominance y/scores1", y.len(), scores1.len())?;
    check_same_len("dominance y/scores2", y.len(), scores2.len())?;
    if xi_grid.is_empty() {
        return Err(Error::Usage("empty power grid".into()));
    }
    let totals = |s: &[T]| -> Vec<T> { s.iter().zip(exposure).map(|(&a, &e)| a * e).collect() };
    let (m1, m2) = (totals(scores1), totals(scores2));

    let mut psi_gap = Vec::with_capacity(xi_grid.len());
    let mut deviance_gap = Vec::with_capacity(xi_grid.len());
    let mut cond1 = true;
    for p in xi_grid {
        let (a, b) = (psi_mean(p, &m1)?, psi_mean(p, &m2)?);
        let gap = a - b;
        cond1 &= gap >= -slack(a.abs().max(b.abs()));
        psi_gap.push(gap);
        deviance_gap.push(mean_deviance(p, y, exposure, scores1)? - mean_deviance(p, y, exposure, scores2)?);
    }

    let thresholds = match t_grid {
        Some(g) => {
            check_increasing(g)?;
            g.to_vec()
        }
        None => distinct_sorted(m1.iter().chain(&m2).copied()),
    };
    let (l1, l2) = (Lpm::new(y, &m1)?, Lpm::new(y, &m2)?);
    let y_bar = mean(y);
    let lpm_gap: Vec<T> = thresholds.iter().map(|&t| l1.at(t) - l2.at(t)).collect();
    let cond2 = lpm_gap.iter().all(|&g| g >= -slack(y_bar));

    Ok(DominanceReport {
        xi_grid: xi_grid.iter().map(PowerParam::xi).collect(),
        psi_gap,
        thresholds,
        lpm_gap,
        deviance_gap,
        cond1_holds: cond1,
        cond2_holds: cond2,
        sufficient: cond1 && cond2,
    })
}

/// E[(V − t)₊] under the empirical distribution of `values`.
pub fn stop_loss<T: Scalar>(values: &[T], t: T) -> T {
    if values.is_empty() {
        return T::zero();
    }
    sum(values.iter().map(|&v| (v - t).max(T::zero()))) / T::from_count(values.len())
}

/// Sorted sample with suffix sums for O(log n) stop-loss evaluation.
struct StopLoss<T> {
    sorted: Vec<T>,
    suffix: Vec<T>,
    n: T,
}

impl<T: Scalar> StopLoss<T> {
    fn new(values: &[T]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(cmp_float);
        let mut suffix = vec![T::zero(); sorted.len() + 1];
        let mut acc = NeumaierSum::new();
        for i in (0..sorted.len()).rev() {
            acc.add(sorted[i]);
            suffix[i] = acc.value();
        }
        Self {
            n: T::from_count(sorted.len()),
            sorted,
            suffix,
        }
    }

    fn at(&self, t: T) -> T {
        let k = self.sorted.partition_point(|&v| v <= t);
        let above = T::from_count(self.sorted.len() - k);
        ((self.suffix[k] - above * t) / self.n).max(T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderReport<T> {
    /// |mean(predictions) − mean(y)|.
    pub mean_gap: T,
    /// max over t of stop_loss(predictions, t) − stop_loss(y, t).
    pub max_violation: T,
    pub t_at_max: T,
}

/// Convex-order diagnostics of predictions against responses. The two
/// samples may differ in size. `t_grid = None` uses every distinct value of
/// either sample; the stop-loss difference is piecewise linear between
/// those points, so its maximum over t ≥ min is attained on that grid.
pub fn convex_order_check<T: Scalar>(predictions: &[T], y: &[T], t_grid: Option<&[T]>) -> Result<ConvexOrderReport<T>> {
    if predictions.is_empty() || y.is_empty() {
        return Err(Error::Usage("convex order check needs two nonempty samples".into()));
    }
    let grid = match t_grid {
        Some(g) => {
            if g.is_empty() {
                return Err(Error::Usage("empty threshold grid".into()));
            }
            g.to_vec()
        }
        None => distinct_sorted(predictions.iter().chain(y).copied()),
    };
    let (sp, sy) = (StopLoss::new(predictions), StopLoss::new(y));
    let mut best = (T::neg_infinity(), grid[0]);
    for &t in &grid {
        let d = sp.at(t) - sy.at(t);
        if d > best.0 {
            best = (d, t);
        }
    }
    Ok(ConvexOrderReport {
        mean_gap: (mean(predictions) - mean(y)).abs(),
        max_violation: best.0,
        t_at_max: best.1,
    })
}
