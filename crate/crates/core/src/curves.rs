//! Portfolio diagnostics: score distribution, concentration curves, quantile
//! sets, bias, empirical Poisson loss, rank correlation and the smoothing
//! parameter sweep.

use serde::{Deserialize, Serialize};

use crate::autocal::{autocalibrate, Bandwidth, CalibrationSpec, Kernel};
use crate::data::Split;
use crate::error::{check_same_len, Error, Result};
use crate::scalar::{cmp_float, mean, sum, NeumaierSum, Scalar};
use crate::tweedie::{mean_deviance, PowerParam};

/// Empirical CDF: distinct sorted values and P[π ≤ value].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf<T> {
    pub values: Vec<T>,
    pub proportions: Vec<T>,
}

impl<T: Scalar> Ecdf<T> {
    pub fn eval(&self, x: T) -> T {
        let k = self.values.partition_point(|&v| v <= x);
        if k == 0 {
            T::zero()
        } else {
            self.proportions[k - 1]
        }
    }
}

fn sorted<T: Scalar>(scores: &[T]) -> Result<Vec<T>> {
    if scores.is_empty() {
        return Err(Error::Usage("empty score vector".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("score vector contains NaN".into()));
    }
    let mut v = scores.to_vec();
    v.sort_by(cmp_float);
    Ok(v)
}

pub fn ecdf<T: Scalar>(scores: &[T]) -> Result<Ecdf<T>> {
    let s = sorted(scores)?;
    let n = T::from_count(s.len());
    let mut values = Vec::new();
    let mut proportions = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        if s.get(i + 1) != Some(&v) {
            values.push(v);
            proportions.push(T::from_count(i + 1) / n);
        }
    }
    Ok(Ecdf { values, proportions })
}

/// Rank ⌈αn⌉ (1-based), with a small guard so that exact products like
/// 0.3·10 are not pushed up by rounding.
fn lower_rank<T: Scalar>(alpha: T, n: usize) -> Result<usize> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::Usage(format!("quantile level must lie in (0, 1], got {alpha}")));
    }
    let r = alpha.as_f64() * n as f64;
    Ok(((r - 1e-9).ceil() as usize).clamp(1, n))
}

fn quantile_sorted<T: Scalar>(s: &[T], alpha: T) -> Result<T> {
    Ok(s[lower_rank(alpha, s.len())? - 1])
}

/// Lower empirical quantile: the order statistic s_(⌈αn⌉).
pub fn quantile<T: Scalar>(scores: &[T], alpha: T) -> Result<T> {
    quantile_sorted(&sorted(scores)?, alpha)
}

/// Values over a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries<T> {
    pub grid: Vec<T>,
    pub values: Vec<T>,
}

/// {0.01, 0.02, …, 1.00}.
pub fn default_alpha_grid<T: Scalar>() -> Vec<T> {
    (1..=100).map(|k| T::from_count(k) / T::lit(100.0)).collect()
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_count(n - 1);
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * T::from_count(i) })
                .collect()
        }
    }
}

fn check_alpha_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Usage("empty alpha grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Usage("alpha grid must be strictly increasing".into()));
    }
    if !(grid[0] > T::zero()) || !(grid[grid.len() - 1] <= T::one()) {
        return Err(Error::Usage("alpha grid must lie in (0, 1]".into()));
    }
    Ok(())
}

/// CC(α) = Σ y_i·1[π_i ≤ q_α] / Σ y_i, with q_α the lower empirical quantile.
/// Pass the true means instead of `y` for the theoretical variant.
pub fn concentration_curve<T: Scalar>(y: &[T], scores: &[T], alpha_grid: &[T]) -> Result<CurveSeries<T>> {
    check_same_len("concentration_curve", y.len(), scores.len())?;
    check_alpha_grid(alpha_grid)?;
    if y.is_empty() {
        return Err(Error::Usage("concentration_curve: empty input".into()));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| cmp_float(&scores[a], &scores[b]));
    let s: Vec<T> = order.iter().map(|&i| scores[i]).collect();
    let mut acc = NeumaierSum::new();
    let mut prefix = vec![T::zero()];
    for &i in &order {
        acc.add(y[i]);
        prefix.push(acc.value());
    }
    let total = prefix[y.len()];
    if !(total > T::zero()) {
        return Err(Error::Degenerate(
            "concentration curve needs a positive response total".into(),
        ));
    }
    let values = alpha_grid
        .iter()
        .map(|&a| {
            let q = quantile_sorted(&s, a)?;
            let count = s.partition_point(|&v| v <= q);
            Ok(prefix[count] / total)
        })
        .collect::<Result<_>>()?;
    Ok(CurveSeries {
        grid: alpha_grid.to_vec(),
        values,
    })
}

/// Central differences inside, one-sided differences at both ends.
pub fn cc_density<T: Scalar>(curve: &CurveSeries<T>) -> Result<CurveSeries<T>> {
    let (a, v) = (&curve.grid, &curve.values);
    check_same_len("cc_density", a.len(), v.len())?;
    let n = a.len();
    if n < 3 {
        return Err(Error::Usage(format!("density needs at least 3 curve points, got {n}")));
    }
    let values = (0..n)
        .map(|i| {
            let (l, r) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            (v[r] - v[l]) / (a[r] - a[l])
        })
        .collect();
    Ok(CurveSeries {
        grid: a.clone(),
        values,
    })
}

/// Rows scored strictly below the α_low quantile and strictly above the
/// α_high quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSets<T> {
    pub alpha_low: T,
    pub alpha_high: T,
    pub lower: Vec<bool>,
    pub upper: Vec<bool>,
}

pub fn quantile_sets<T: Scalar>(scores: &[T], alpha_low: T, alpha_high: T) -> Result<QuantileSets<T>> {
    if !(alpha_low > T::zero() && alpha_low <= alpha_high && alpha_high < T::one()) {
        return Err(Error::Usage(format!(
            "need 0 < alpha_low <= alpha_high < 1, got {alpha_low} and {alpha_high}"
        )));
    }
    let s = sorted(scores)?;
    let (ql, qh) = (quantile_sorted(&s, alpha_low)?, quantile_sorted(&s, alpha_high)?);
    Ok(QuantileSets {
        alpha_low,
        alpha_high,
        lower: scores.iter().map(|&v| v < ql).collect(),
        upper: scores.iter().map(|&v| v > qh).collect(),
    })
}

fn check_outcomes<T: Scalar>(y: &[T], exposure: &[T], scores: &[T]) -> Result<()> {
    check_same_len("y/exposure", y.len(), exposure.len())?;
    check_same_len("y/scores", y.len(), scores.len())?;
    if y.is_empty() {
        return Err(Error::Usage("empty input".into()));
    }
    if exposure.iter().any(|e| !(*e > T::zero())) {
        return Err(Error::Domain("exposures must be positive".into()));
    }
    if scores.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
        return Err(Error::Domain("scores must be positive".into()));
    }
    Ok(())
}

/// (1/n) Σ (e_i·π_i − y_i): positive when the predictor overcharges.
pub fn bias<T: Scalar>(y: &[T], exposure: &[T], scores: &[T]) -> Result<T> {
    check_outcomes(y, exposure, scores)?;
    let total = sum(y.iter().zip(exposure).zip(scores).map(|((&yi, &ei), &si)| ei * si - yi));
    Ok(total / T::from_count(y.len()))
}

/// (1/n) Σ (m_i − y_i ln m_i) with m_i = e_i·π_i.
pub fn empirical_poisson_loss<T: Scalar>(y: &[T], exposure: &[T], scores: &[T]) -> Result<T> {
    check_outcomes(y, exposure, scores)?;
    mean_deviance(&PowerParam::poisson(), y, exposure, scores)
}

/// Ranks 1..n with ties given their average rank.
pub fn average_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| cmp_float(&v[a], &v[b]));
    let mut ranks = vec![T::zero(); v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // positions i..=j share rank (i + j)/2 + 1
        let r = T::from_count(i + j + 2) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_same_len("spearman", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::Usage("spearman needs at least two observations".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Domain("spearman input contains NaN".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let mut sab = NeumaierSum::new();
    let mut saa = NeumaierSum::new();
    let mut sbb = NeumaierSum::new();
    for (&x, &y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - ma, y - mb);
        sab.add(dx * dy);
        saa.add(dx * dx);
        sbb.add(dy * dy);
    }
    if !(saa.value() > T::zero() && sbb.value() > T::zero()) {
        return Err(Error::Degenerate(
            "rank correlation undefined for a constant vector".into(),
        ));
    }
    let r = sab.value() / (saa.value() * sbb.value()).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub alpha0: T,
    pub bias: T,
    pub loss: T,
    pub model: String,
}

/// Validation bias and loss of an uncorrected scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow<T> {
    pub model: String,
    pub bias: T,
    pub loss: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable<T> {
    pub rows: Vec<SweepRow<T>>,
    pub baseline: Vec<BaselineRow<T>>,
}

/// Named per-row scores for the whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScores<T> {
    pub name: String,
    pub scores: Vec<T>,
}

/// For each α₀ and model, corrects validation scores using the smoothing
/// rows, then reports validation bias and Poisson loss.
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep<T: Scalar>(
    y: &[T],
    exposure: &[T],
    models: &[ModelScores<T>],
    split: &Split,
    alpha0_grid: &[T],
    kernel: Kernel,
    alpha1: T,
) -> Result<SweepTable<T>> {
    check_same_len("alpha_sweep y/exposure", y.len(), exposure.len())?;
    split.check(y.len())?;
    for m in models {
        check_same_len(&format!("alpha_sweep scores of {}", m.name), y.len(), m.scores.len())?;
    }
    let pick = |v: &[T], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let (ys, es) = (pick(y, &split.smooth), pick(exposure, &split.smooth));
    let (yv, ev) = (pick(y, &split.validate), pick(exposure, &split.validate));
    let mut baseline = Vec::new();
    let mut rows = Vec::new();
    for m in models {
        let (ss, sv) = (pick(&m.scores, &split.smooth), pick(&m.scores, &split.validate));
        baseline.push(BaselineRow {
            model: m.name.clone(),
            bias: bias(&yv, &ev, &sv)?,
            loss: empirical_poisson_loss(&yv, &ev, &sv)?,
        });
        for &a0 in alpha0_grid {
            let spec = CalibrationSpec::new(kernel, Bandwidth::new(a0, alpha1)?);
            let corrected = autocalibrate(&ss, &ys, &es, &sv, spec)?;
            let corrected = floor_positive(corrected);
            rows.push(SweepRow {
                alpha0: a0,
                bias: bias(&yv, &ev, &corrected)?,
                loss: empirical_poisson_loss(&yv, &ev, &corrected)?,
                model: m.name.clone(),
            });
        }
    }
    Ok(SweepTable { rows, baseline })
}

/// Corrected scores are convex combinations of observed rates and can be
/// zero when a window holds no claims. Losses need strictly positive
/// predictions, so zeros are raised to the smallest positive normal value.
pub fn floor_positive<T: Scalar>(mut v: Vec<T>) -> Vec<T> {
    for x in v.iter_mut() {
        if !(*x > T::zero()) {
            *x = T::min_positive_value();
        }
    }
    v
}
