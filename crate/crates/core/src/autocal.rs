//! Balance correction by local constant regression of the response on the
//! score.
//!
//! For a query score `s`, every smoothing-set anchor `(s_i, y_i, e_i)` gets a
//! kernel weight `ν((s_i − s) / h(s))` and the corrected score solves the
//! intercept-only local likelihood equation
//!
//! ```text
//! Σ ν_i y_i = Σ ν_i e_i · π_BC(s)   ⇒   π_BC(s) = Σ ν_i y_i / Σ ν_i e_i
//! ```
//!
//! The bandwidth is nearest-neighbour based: `h(s) = max(d_(k), α₁)` where
//! `d_(k)` is the k-th smallest distance `|s − s_i|` and `k = max(1,
//! floor(n·α₀))`. With the rectangular kernel the window is the closed
//! interval `[s − h, s + h]`, so the correction balances observed and
//! expected totals inside every window.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::curves::quantile;
use crate::error::{check_same_len, Error, Result};
use crate::scalar::{cmp_float, NeumaierSum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// ν(u) = 1 on [−1, 1].
    #[default]
    Rectangular,
    /// ν(u) = (1 − |u|³)³ on [−1, 1].
    Tricube,
    /// ν(u) = 1 − u² on [−1, 1], unnormalized.
    Epanechnikov,
}

impl Kernel {
    pub fn weight<T: Scalar>(&self, u: T) -> T {
        let a = u.abs();
        if !(a <= T::one()) {
            return T::zero();
        }
        match self {
            Kernel::Rectangular => T::one(),
            Kernel::Tricube => (T::one() - a * a * a).powi(3),
            Kernel::Epanechnikov => T::one() - a * a,
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" | "uniform" => Ok(Kernel::Rectangular),
            "tricube" => Ok(Kernel::Tricube),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(Error::Usage(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Nearest-neighbour fraction α₀ ∈ (0, 1] and constant-bandwidth floor α₁ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth<T> {
    alpha0: T,
    alpha1: T,
}

impl<T: Scalar> Bandwidth<T> {
    pub fn new(alpha0: T, alpha1: T) -> Result<Self> {
        if !(alpha0 > T::zero() && alpha0 <= T::one()) {
            return Err(Error::Usage(format!("alpha0 must lie in (0, 1], got {alpha0}")));
        }
        if !(alpha1 >= T::zero()) || !alpha1.is_finite() {
            return Err(Error::Usage(format!(
                "alpha1 must be a nonnegative number, got {alpha1}"
            )));
        }
        Ok(Self { alpha0, alpha1 })
    }

    /// α = (0.05, 0), used for the balance correction.
    pub fn correction_default() -> Self {
        Self {
            alpha0: T::lit(0.05),
            alpha1: T::zero(),
        }
    }

    /// α = (0.7, 0), used for calibration curves.
    pub fn curve_default() -> Self {
        Self {
            alpha0: T::lit(0.7),
            alpha1: T::zero(),
        }
    }

    pub fn alpha0(&self) -> T {
        self.alpha0
    }

    pub fn alpha1(&self) -> T {
        self.alpha1
    }

    /// k = max(1, floor(n·α₀)).
    pub fn neighbours(&self, n: usize) -> usize {
        let k = (T::from_count(n) * self.alpha0).floor().to_usize().unwrap_or(0);
        k.clamp(1, n.max(1))
    }
}

/// Kernel, bandwidth and whether to project results onto nondecreasing
/// sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec<T> {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth<T>,
    #[serde(default)]
    pub monotone: bool,
}

impl<T: Scalar> CalibrationSpec<T> {
    pub fn new(kernel: Kernel, bandwidth: Bandwidth<T>) -> Self {
        Self {
            kernel,
            bandwidth,
            monotone: false,
        }
    }

    pub fn correction_default() -> Self {
        Self::new(Kernel::Rectangular, Bandwidth::correction_default())
    }

    pub fn curve_default() -> Self {
        Self::new(Kernel::Rectangular, Bandwidth::curve_default())
    }
}

/// One local fit: the corrected value, the bandwidth used and the anchor
/// window (indices into the sorted anchors) that received weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub value: T,
    pub bandwidth: T,
    pub window: Range<usize>,
}

/// Smoothing-set anchors sorted by score, ready for evaluation.
#[derive(Debug, Clone)]
pub struct CalibrationMap<T> {
    scores: Vec<T>,
    y: Vec<T>,
    exposure: Vec<T>,
    prefix_y: Vec<T>,
    prefix_e: Vec<T>,
    spec: CalibrationSpec<T>,
}

impl<T: Scalar> CalibrationMap<T> {
    pub fn new(scores: &[T], y: &[T], exposure: &[T], spec: CalibrationSpec<T>) -> Result<Self> {
        check_same_len("calibration scores/y", scores.len(), y.len())?;
        check_same_len("calibration scores/exposure", scores.len(), exposure.len())?;
        if scores.is_empty() {
            return Err(Error::Usage("smoothing set is empty".into()));
        }
        for i in 0..scores.len() {
            if !scores[i].is_finite() {
                return Err(Error::Domain(format!("anchor {}: score is not finite", i + 1)));
            }
            if !(exposure[i] > T::zero()) || !exposure[i].is_finite() {
                return Err(Error::Domain(format!("anchor {}: exposure must be positive", i + 1)));
            }
            if !(y[i] >= T::zero()) || !y[i].is_finite() {
                return Err(Error::Domain(format!("anchor {}: response must be nonnegative", i + 1)));
            }
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| cmp_float(&scores[a], &scores[b]).then(a.cmp(&b)));
        let scores: Vec<T> = order.iter().map(|&i| scores[i]).collect();
        let y: Vec<T> = order.iter().map(|&i| y[i]).collect();
        let exposure: Vec<T> = order.iter().map(|&i| exposure[i]).collect();
        Ok(Self {
            prefix_y: prefix_sums(&y),
            prefix_e: prefix_sums(&exposure),
            scores,
            y,
            exposure,
            spec,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn spec(&self) -> &CalibrationSpec<T> {
        &self.spec
    }

    /// Sorted anchor `i` as `(score, y, exposure)`.
    pub fn anchor(&self, i: usize) -> (T, T, T) {
        (self.scores[i], self.y[i], self.exposure[i])
    }

    /// Σy / Σe over the whole smoothing set.
    pub fn global_rate(&self) -> T {
        self.prefix_y[self.len()] / self.prefix_e[self.len()]
    }

    /// k-th smallest distance from `s` to the anchor scores.
    fn kth_distance(&self, s: T) -> T {
        let a = &self.scores;
        let k = self.spec.bandwidth.neighbours(a.len());
        // leftmost start of the best contiguous window of k neighbours
        let (mut lo, mut hi) = (0, a.len() - k);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if s - a[mid] > a[mid + k] - s {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (s - a[lo]).abs().max((a[lo + k - 1] - s).abs())
    }

    /// h(s) = max(d_(k), α₁). When that is zero the smallest positive
    /// distance is reported instead, or zero if every anchor sits at `s`.
    pub fn bandwidth_at(&self, s: T) -> T {
        let h = self.kth_distance(s).max(self.spec.bandwidth.alpha1);
        if h > T::zero() {
            return h;
        }
        let ties = self.tied(s);
        let left = ties.start.checked_sub(1).map(|i| s - self.scores[i]);
        let right = self.scores.get(ties.end).map(|&v| v - s);
        match (left, right) {
            (Some(l), Some(r)) => l.min(r),
            (Some(d), None) | (None, Some(d)) => d,
            (None, None) => T::zero(),
        }
    }

    fn tied(&self, s: T) -> Range<usize> {
        let lo = self.scores.partition_point(|&v| v < s);
        let hi = self.scores.partition_point(|&v| v <= s);
        lo..hi
    }

    pub fn evaluate_detailed(&self, s: T) -> Result<Evaluation<T>> {
        if !s.is_finite() {
            return Err(Error::Domain(format!("query score {s} is not finite")));
        }
        let h = self.kth_distance(s).max(self.spec.bandwidth.alpha1);
        if !(h > T::zero()) {
            // k nearest anchors all coincide with s: the window shrinks to them
            let window = self.tied(s);
            let value = self.window_ratio(window.clone());
            return Ok(Evaluation {
                value,
                bandwidth: h,
                window,
            });
        }
        let lo = self.scores.partition_point(|&v| s - v > h);
        let hi = self.scores.partition_point(|&v| v - s <= h);
        let window = lo..hi;
        let value = match self.spec.kernel {
            Kernel::Rectangular => self.window_ratio(window.clone()),
            kernel => {
                let mut num = NeumaierSum::new();
                let mut den = NeumaierSum::new();
                for i in window.clone() {
                    let w = kernel.weight((self.scores[i] - s) / h);
                    num.add(w * self.y[i]);
                    den.add(w * self.exposure[i]);
                }
                if den.value() > T::zero() {
                    num.value() / den.value()
                } else {
                    // every windowed anchor sits on the kernel boundary
                    self.window_ratio(window.clone())
                }
            }
        };
        debug_assert!(value.is_finite());
        Ok(Evaluation {
            value,
            bandwidth: h,
            window,
        })
    }

    fn window_ratio(&self, w: Range<usize>) -> T {
        if w.end - w.start == self.len() {
            return self.global_rate();
        }
        (self.prefix_y[w.end] - self.prefix_y[w.start]) / (self.prefix_e[w.end] - self.prefix_e[w.start])
    }

    /// Corrected score at a single query, without monotone projection.
    pub fn evaluate(&self, s: T) -> Result<T> {
        Ok(self.evaluate_detailed(s)?.value)
    }

    /// Corrected scores for a batch of queries. With monotone projection on,
    /// the values at the distinct sorted queries are replaced by their
    /// pool-adjacent-violators fit (weighted by multiplicity) first.
    pub fn evaluate_many(&self, queries: &[T]) -> Result<Vec<T>> {
        if !self.spec.monotone {
            return queries.iter().map(|&q| self.evaluate(q)).collect();
        }
        let mut order: Vec<usize> = (0..queries.len()).collect();
        order.sort_by(|&a, &b| cmp_float(&queries[a], &queries[b]));
        let mut distinct: Vec<T> = Vec::new();
        let mut counts: Vec<T> = Vec::new();
        let mut slot = vec![0usize; queries.len()];
        for &i in &order {
            if distinct.last() != Some(&queries[i]) {
                distinct.push(queries[i]);
                counts.push(T::zero());
            }
            *counts.last_mut().expect("pushed") = *counts.last().expect("pushed") + T::one();
            slot[i] = distinct.len() - 1;
        }
        let raw: Vec<T> = distinct.iter().map(|&q| self.evaluate(q)).collect::<Result<_>>()?;
        let fitted = pava(&raw, &counts);
        Ok(slot.into_iter().map(|j| fitted[j]).collect())
    }
}

fn prefix_sums<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut acc = NeumaierSum::new();
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(T::zero());
    for &x in v {
        acc.add(x);
        out.push(acc.value());
    }
    out
}

/// Weighted least-squares projection onto nondecreasing sequences
/// (pool adjacent violators).
pub fn pava<T: Scalar>(values: &[T], weights: &[T]) -> Vec<T> {
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Balance-corrected scores for `queries`, fitted on a smoothing set that
/// must be disjoint from the rows used to train the scorer.
pub fn autocalibrate<T: Scalar>(
    scores: &[T],
    y: &[T],
    exposure: &[T],
    queries: &[T],
    spec: CalibrationSpec<T>,
) -> Result<Vec<T>> {
    CalibrationMap::new(scores, y, exposure, spec)?.evaluate_many(queries)
}

/// Empirical s ↦ E[Y | π̂ = s] over a score grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve<T> {
    pub grid: Vec<T>,
    pub values: Vec<T>,
    /// sup |curve(s) − s| over grid points inside the central 80% of scores.
    pub departure: Option<T>,
}

pub fn calibration_curve<T: Scalar>(
    scores: &[T],
    y: &[T],
    exposure: &[T],
    grid: &[T],
    spec: CalibrationSpec<T>,
) -> Result<CalibrationCurve<T>> {
    let map = CalibrationMap::new(scores, y, exposure, spec)?;
    let (lo, hi) = (map.scores[0], map.scores[map.len() - 1]);
    if let Some(g) = grid.iter().find(|&&g| !(g >= lo && g <= hi)) {
        return Err(Error::Usage(format!(
            "grid point {g} outside the score range [{lo}, {hi}]"
        )));
    }
    let values = map.evaluate_many(grid)?;
    let (q10, q90) = (quantile(scores, T::lit(0.1))?, quantile(scores, T::lit(0.9))?);
    let departure = grid
        .iter()
        .zip(&values)
        .filter(|(&g, _)| g >= q10 && g <= q90)
        .map(|(&g, &v)| (v - g).abs())
        .fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.max(d))));
    Ok(CalibrationCurve {
        grid: grid.to_vec(),
        values,
        departure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn spec(kernel: Kernel, a0: f64, a1: f64) -> CalibrationSpec<f64> {
        CalibrationSpec::new(kernel, Bandwidth::new(a0, a1).unwrap())
    }

    /// (s, y, e) = (1,0,1), (2,1,1), (3,2,1), (4,1,1), (5,4,1)
    fn five() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 1.0, 2.0, 1.0, 4.0],
            vec![1.0; 5],
        )
    }

    #[test]
    fn kernel_shapes() {
        for k in [Kernel::Rectangular, Kernel::Tricube, Kernel::Epanechnikov] {
            assert_eq!(k.weight(0.0), 1.0);
            assert_eq!(k.weight(1.5), 0.0);
            assert_eq!(k.weight(0.3), k.weight(-0.3));
        }
        assert_eq!(Kernel::Rectangular.weight(1.0), 1.0);
        assert_eq!(Kernel::Tricube.weight(1.0), 0.0);
        assert_relative_eq!(Kernel::Tricube.weight(0.5), (1.0 - 0.125_f64).powi(3));
        assert_eq!("tricube".parse::<Kernel>().unwrap(), Kernel::Tricube);
        assert!("gauss".parse::<Kernel>().is_err());
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidth::new(0.0, 0.0).is_err());
        assert!(Bandwidth::new(1.1, 0.0).is_err());
        assert!(Bandwidth::new(0.5, -1.0).is_err());
        let b = Bandwidth::new(0.4, 0.0).unwrap();
        assert_eq!(b.neighbours(5), 2);
        assert_eq!(Bandwidth::new(0.01, 0.0).unwrap().neighbours(5), 1);
        assert_eq!(Bandwidth::new(1.0, 0.0).unwrap().neighbours(5), 5);
    }

    #[test]
    fn bandwidth_examples() {
        let (s, y, e) = five();
        let map = CalibrationMap::new(&s, &y, &e, spec(Kernel::Rectangular, 0.4, 0.0)).unwrap();
        assert_eq!(map.bandwidth_at(3.0), 1.0);
        let all = CalibrationMap::new(&s, &y, &e, spec(Kernel::Rectangular, 1.0, 0.0)).unwrap();
        assert_eq!(all.bandwidth_at(3.0), 2.0);
        assert_eq!(all.bandwidth_at(1.0), 4.0);
        let floor = CalibrationMap::new(&s, &y, &e, spec(Kernel::Rectangular, 0.4, 100.0)).unwrap();
        assert_eq!(floor.bandwidth_at(3.0), 100.0);
    }

    #[test]
    fn zero_bandwidth_falls_back_to_nearest_positive_distance() {
        let map = CalibrationMap::new(
            &[1.0, 1.0, 1.0, 3.0],
            &[1.0; 4],
            &[1.0; 4],
            spec(Kernel::Rectangular, 0.5, 0.0),
        )
        .unwrap();
        assert_eq!(map.bandwidth_at(1.0), 2.0);
        let tied = CalibrationMap::new(&[2.0; 3], &[1.0; 3], &[1.0; 3], spec(Kernel::Tricube, 0.3, 0.0)).unwrap();
        assert_eq!(tied.bandwidth_at(2.0), 0.0);
        assert_eq!(tied.evaluate(2.0).unwrap(), 1.0);
    }

    #[test]
    fn five_anchor_fixture() {
        let (s, y, e) = five();
        let map = CalibrationMap::new(&s, &y, &e, spec(Kernel::Rectangular, 0.4, 0.0)).unwrap();
        let at3 = map.evaluate_detailed(3.0).unwrap();
        assert_eq!(at3.window, 1..4);
        assert_relative_eq!(at3.value, 4.0 / 3.0);
        let out = autocalibrate(&s, &y, &e, &[1.0, 3.0, 5.0], spec(Kernel::Rectangular, 0.4, 0.0)).unwrap();
        assert_relative_eq!(out[0], 0.5);
        assert_relative_eq!(out[1], 4.0 / 3.0);
        assert_relative_eq!(out[2], 2.5);
    }

    #[test]
    fn constant_rate_data_is_reproduced() {
        let s = [0.3, 1.1, 2.0, 2.5, 7.0];
        let e = [1.0, 0.5, 2.0, 1.5, 0.25];
        let y: Vec<f64> = e.iter().map(|v| 1.75 * v).collect();
        for kernel in [Kernel::Rectangular, Kernel::Tricube, Kernel::Epanechnikov] {
            for q in [0.0, 1.0, 2.2, 9.0] {
                let v = CalibrationMap::new(&s, &y, &e, spec(kernel, 0.4, 0.0))
                    .unwrap()
                    .evaluate(q)
                    .unwrap();
                assert_relative_eq!(v, 1.75, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn full_window_gives_global_rate() {
        let (s, y, e) = five();
        let out = autocalibrate(&s, &y, &e, &s, spec(Kernel::Rectangular, 1.0, 0.0)).unwrap();
        assert!(out.iter().all(|&v| v == 8.0 / 5.0));
    }

    #[test]
    fn singleton_windows_return_perfectly_calibrated_scores() {
        let s = [0.5, 1.5, 2.0, 4.0];
        let e = [1.0, 2.0, 1.0, 0.5];
        let y: Vec<f64> = s.iter().zip(&e).map(|(a, b)| a * b).collect();
        for kernel in [Kernel::Rectangular, Kernel::Tricube] {
            let out = autocalibrate(&s, &y, &e, &s, spec(kernel, 0.25, 0.0)).unwrap();
            for (o, i) in out.iter().zip(&s) {
                assert_relative_eq!(o, i, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn boundary_only_window_does_not_divide_by_zero() {
        // k = 1 and the query sits midway, so the nearest anchor is at u = 1
        let map = CalibrationMap::new(&[1.0, 3.0], &[1.0, 3.0], &[1.0, 1.0], spec(Kernel::Tricube, 0.5, 0.0)).unwrap();
        assert_relative_eq!(map.evaluate(2.0).unwrap(), 2.0);
    }

    #[test]
    fn empty_smoothing_set_rejected() {
        let r = autocalibrate::<f64>(&[], &[], &[], &[1.0], CalibrationSpec::correction_default());
        assert!(matches!(r, Err(Error::Usage(_))));
        assert!(CalibrationMap::new(&[1.0], &[1.0], &[0.0], CalibrationSpec::correction_default()).is_err());
    }

    #[test]
    fn pava_projection() {
        assert_eq!(pava(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(pava(&[3.0, 1.0], &[1.0, 3.0]), vec![1.5, 1.5]);
        assert_eq!(pava(&[1.0, 2.0], &[1.0, 1.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn monotone_projection_applies_over_queries() {
        let s = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 5.0, 1.0, 6.0];
        let mut sp = spec(Kernel::Rectangular, 0.25, 0.0);
        let raw = autocalibrate(&s, &y, &[1.0; 4], &s, sp).unwrap();
        assert_eq!(raw, vec![1.0, 5.0, 1.0, 6.0]);
        sp.monotone = true;
        let proj = autocalibrate(&s, &y, &[1.0; 4], &[4.0, 2.0, 3.0, 1.0, 2.0], sp).unwrap();
        // distinct queries 1,2,3,4 with multiplicities 1,2,1,1: pool 2 and 3 -> (2*5 + 1)/3
        assert_eq!(proj, vec![6.0, 11.0 / 3.0, 11.0 / 3.0, 1.0, 11.0 / 3.0]);
    }

    #[test]
    fn curve_grid_must_stay_in_range() {
        let (s, y, e) = five();
        let r = calibration_curve(&s, &y, &e, &[0.5, 3.0], CalibrationSpec::curve_default());
        assert!(matches!(r, Err(Error::Usage(_))));
        let c = calibration_curve(&s, &y, &e, &[1.0, 3.0, 5.0], spec(Kernel::Rectangular, 1.0, 0.0)).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.6));
        // central 80% of scores is [s_(1), s_(5)] under the lower quantile
        assert_relative_eq!(c.departure.unwrap(), 3.4);
    }

    #[test]
    fn generic_over_f32() {
        let s = [1.0_f32, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0_f32, 1.0, 2.0, 1.0, 4.0];
        let sp = CalibrationSpec::new(Kernel::Rectangular, Bandwidth::new(0.4_f32, 0.0).unwrap());
        let out = autocalibrate(&s, &y, &[1.0; 5], &[3.0], sp).unwrap();
        assert!((out[0] - 4.0 / 3.0).abs() < 1e-6);
    }

    fn anchors() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((0i32..400, 0u8..10, 1u8..8), 1..60).prop_map(|v| {
            v.into_iter()
                .map(|(s, y, e)| (s as f64 / 16.0, y as f64, e as f64 / 4.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn kth_distance_matches_sorting(rows in anchors(), q in -2.0f64..30.0, a0 in 0.01f64..1.0) {
            let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let e: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let sp = spec(Kernel::Rectangular, a0, 0.0);
            let map = CalibrationMap::new(&s, &y, &e, sp).unwrap();
            let mut d: Vec<f64> = s.iter().map(|v| (v - q).abs()).collect();
            d.sort_by(f64::total_cmp);
            let k = sp.bandwidth.neighbours(s.len());
            prop_assert_eq!(map.kth_distance(q), d[k - 1]);
        }

        #[test]
        fn evaluation_is_a_convex_combination(rows in anchors(), q in -2.0f64..30.0, a0 in 0.01f64..1.0, kind in 0usize..3) {
            let kernel = [Kernel::Rectangular, Kernel::Tricube, Kernel::Epanechnikov][kind];
            let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let e: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let map = CalibrationMap::new(&s, &y, &e, spec(kernel, a0, 0.0)).unwrap();
            let ev = map.evaluate_detailed(q).unwrap();
            prop_assert!(!ev.window.is_empty());
            let rates: Vec<f64> = ev.window.clone().map(|i| { let (_, yi, ei) = map.anchor(i); yi / ei }).collect();
            let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(ev.value >= lo * (1.0 - 1e-12) && ev.value <= hi * (1.0 + 1e-12) + 1e-300);
            for i in ev.window.clone() {
                prop_assert!((map.anchor(i).0 - q).abs() <= ev.bandwidth || ev.bandwidth == 0.0);
            }
        }

        #[test]
        fn affine_score_maps_leave_outputs_unchanged(rows in anchors(), a0 in 0.01f64..1.0, shift in -20i32..20, scale_pow in -2i32..3) {
            // power-of-two scales and multiples of 1/16 keep the transform exact
            let scale = 2f64.powi(scale_pow);
            let s: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let e: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let t: Vec<f64> = s.iter().map(|v| scale * v + shift as f64).collect();
            let sp = spec(Kernel::Rectangular, a0, 0.0);
            let a = autocalibrate(&s, &y, &e, &s, sp).unwrap();
            let b = autocalibrate(&t, &y, &e, &t, sp).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
