use serde::{Deserialize, Serialize};

use super::basis::rows_of;
use crate::error::{check_same_len, Error, Result};
use crate::scalar::{cmp_float, sum, NeumaierSum, Scalar};
use crate::tweedie::{mean_deviance, PowerParam};

const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig<T> {
    n_trees: usize,
    shrinkage: T,
    min_leaf: usize,
}

impl<T: Scalar> BoostConfig<T> {
    pub fn new(n_trees: usize, shrinkage: T, min_leaf: usize) -> Result<Self> {
        if n_trees == 0 {
            return Err(Error::Usage("boosting needs at least one tree".into()));
        }
        if !(shrinkage > T::zero() && shrinkage <= T::one()) {
            return Err(Error::Usage(format!("shrinkage must lie in (0, 1], got {shrinkage}")));
        }
        if min_leaf == 0 {
            return Err(Error::Usage("min_leaf must be at least 1".into()));
        }
        Ok(Self {
            n_trees,
            shrinkage,
            min_leaf,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn shrinkage(&self) -> T {
        self.shrinkage
    }

    pub fn min_leaf(&self) -> usize {
        self.min_leaf
    }
}

/// Depth-one split: rows with `x[feature] <= threshold` go left. Steps are on
/// the log-score scale, before shrinkage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump<T> {
    pub feature: usize,
    pub threshold: T,
    pub left_step: T,
    pub right_step: T,
}

impl<T: Scalar> Stump<T> {
    fn step(&self, x: T) -> T {
        if x <= self.threshold {
            self.left_step
        } else {
            self.right_step
        }
    }
}

/// score(x) = exp(initial_log_level + shrinkage · Σ stump steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostFit<T> {
    pub initial_log_level: T,
    pub stumps: Vec<Stump<T>>,
    pub shrinkage: T,
    pub n_trees: usize,
    /// Mean Poisson deviance on the training rows, starting with the
    /// intercept-only level and then after every stump.
    pub training_deviance: Vec<T>,
}

struct Candidate<T> {
    loss_change: T,
    feature: usize,
    threshold: T,
    left: (T, T),
    right: (T, T),
}

/// Poisson deviance change of rescaling a leaf's expected totals by Y/M.
fn leaf_change<T: Scalar>(y: T, m: T) -> T {
    y - m - y * (y / m).ln()
}

/// Gradient boosting of stumps under Poisson deviance with exposure offsets.
///
/// Each round scans midpoints between distinct sorted feature values, keeps
/// splits with at least `min_leaf` rows and a positive response total on
/// each side, and picks the lowest deviance, breaking ties by feature index
/// and then threshold. Stops early when no admissible split lowers the loss.
pub fn fit_boost<T: Scalar>(y: &[T], exposure: &[T], features: &[Vec<T>], cfg: &BoostConfig<T>) -> Result<BoostFit<T>> {
    check_same_len("fit_boost y/exposure", y.len(), exposure.len())?;
    for col in features {
        check_same_len("fit_boost feature column", y.len(), col.len())?;
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("fit_boost: non-finite feature value".into()));
        }
    }
    if y.is_empty() {
        return Err(Error::Usage("fit_boost: empty data".into()));
    }
    let total_y = sum(y.iter().copied());
    if !(total_y > T::zero()) {
        return Err(Error::Degenerate(
            "all responses are zero; initial log level is -inf".into(),
        ));
    }
    let initial = (total_y / sum(exposure.iter().copied())).ln();
    let poisson = PowerParam::poisson();
    let orders: Vec<Vec<usize>> = features
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..col.len()).collect();
            idx.sort_by(|&a, &b| cmp_float(&col[a], &col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut log_score = vec![initial; y.len()];
    let scores = |ls: &[T]| ls.iter().map(|v| v.exp()).collect::<Vec<_>>();
    let mut dev = mean_deviance(&poisson, y, exposure, &scores(&log_score))?;
    let mut trace = vec![dev];
    let mut stumps = Vec::new();

    for _ in 0..cfg.n_trees {
        let m: Vec<T> = log_score.iter().zip(exposure).map(|(&l, &e)| e * l.exp()).collect();
        let Some(best) = best_split(y, &m, features, &orders, cfg.min_leaf) else {
            break;
        };
        let mut stump = Stump {
            feature: best.feature,
            threshold: best.threshold,
            left_step: (best.left.0 / best.left.1).ln(),
            right_step: (best.right.0 / best.right.1).ln(),
        };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<T> = log_score
                .iter()
                .zip(&features[stump.feature])
                .map(|(&l, &x)| l + cfg.shrinkage * stump.step(x))
                .collect();
            let d = mean_deviance(&poisson, y, exposure, &scores(&trial))?;
            if d <= dev {
                accepted = Some((trial, d));
                break;
            }
            stump.left_step = stump.left_step * T::lit(0.5);
            stump.right_step = stump.right_step * T::lit(0.5);
        }
        let Some((next, d)) = accepted else {
            break;
        };
        log_score = next;
        dev = d;
        trace.push(d);
        stumps.push(stump);
    }
    Ok(BoostFit {
        initial_log_level: initial,
        n_trees: stumps.len(),
        stumps,
        shrinkage: cfg.shrinkage,
        training_deviance: trace,
    })
}

fn best_split<T: Scalar>(
    y: &[T],
    m: &[T],
    features: &[Vec<T>],
    orders: &[Vec<usize>],
    min_leaf: usize,
) -> Option<Candidate<T>> {
    let n = y.len();
    let total_y = sum(y.iter().copied());
    let total_m = sum(m.iter().copied());
    let mut best: Option<Candidate<T>> = None;
    for (j, (col, order)) in features.iter().zip(orders).enumerate() {
        let mut ly = NeumaierSum::new();
        let mut lm = NeumaierSum::new();
        for pos in 0..n.saturating_sub(1) {
            let i = order[pos];
            ly.add(y[i]);
            lm.add(m[i]);
            let (x_here, x_next) = (col[i], col[order[pos + 1]]);
            let left_n = pos + 1;
            if x_here == x_next || left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let (yl, ml) = (ly.value(), lm.value());
            let (yr, mr) = (total_y - yl, total_m - ml);
            if !(yl > T::zero() && yr > T::zero() && ml > T::zero() && mr > T::zero()) {
                continue;
            }
            let change = leaf_change(yl, ml) + leaf_change(yr, mr);
            if !(change < T::zero()) {
                continue;
            }
            if best.as_ref().is_none_or(|b| change < b.loss_change) {
                let mut threshold = (x_here + x_next) * T::lit(0.5);
                if threshold >= x_next {
                    threshold = x_here;
                }
                best = Some(Candidate {
                    loss_change: change,
                    feature: j,
                    threshold,
                    left: (yl, ml),
                    right: (yr, mr),
                });
            }
        }
    }
    best
}

/// Annualized scores; exposure is not applied.
pub fn predict_boost<T: Scalar>(fit: &BoostFit<T>, features: &[Vec<T>]) -> Result<Vec<T>> {
    predict_boost_rows(fit, features, rows_of(features)?)
}

/// As [`predict_boost`] with an explicit row count, needed when there are no
/// feature columns.
pub fn predict_boost_rows<T: Scalar>(fit: &BoostFit<T>, features: &[Vec<T>], n: usize) -> Result<Vec<T>> {
    if features.iter().any(|c| c.len() != n) {
        return Err(Error::Usage(format!("feature columns must all have {n} rows")));
    }
    if let Some(s) = fit.stumps.iter().find(|s| s.feature >= features.len()) {
        return Err(Error::Usage(format!(
            "model uses feature x{}, only {} supplied",
            s.feature + 1,
            features.len()
        )));
    }
    (0..n)
        .map(|i| {
            let mut acc = NeumaierSum::new();
            for s in &fit.stumps {
                let x = features[s.feature][i];
                if !x.is_finite() {
                    return Err(Error::Usage(format!(
                        "row {}: feature x{} is not finite",
                        i + 1,
                        s.feature + 1
                    )));
                }
                acc.add(s.step(x));
            }
            Ok((fit.initial_log_level + fit.shrinkage * acc.value()).exp())
        })
        .collect()
}
