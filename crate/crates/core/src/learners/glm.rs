use serde::{Deserialize, Serialize};

use super::basis::{rows_of, BasisSpec, DesignMatrix, Matrix};
use super::linalg::weighted_least_squares;
use crate::error::{check_same_len, Error, Result};
use crate::scalar::{sum, Scalar};
use crate::tweedie::{mean_deviance, PowerParam};

const MAX_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct GlmConfig<T> {
    pub power: PowerParam<T>,
    /// Stop once |ΔD| / (|D| + 0.1) falls below this.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> GlmConfig<T> {
    pub fn new(power: PowerParam<T>) -> Self {
        Self {
            power,
            tol: T::lit(1e-8),
            max_iter: 25,
        }
    }
}

/// Log-link GLM with exposure offset: expected total = e·exp(xᵀβ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct GlmFit<T> {
    pub coefficients: Vec<T>,
    pub power: PowerParam<T>,
    pub basis: BasisSpec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub final_deviance: T,
    /// Mean deviance after each accepted iteration.
    pub deviance_trace: Vec<T>,
}

/// IRLS with working weights m^(2−ξ) and working response η + (y − m)/m.
/// Steps that raise the deviance beyond rounding are halved up to ten times.
pub fn fit_glm<T: Scalar>(y: &[T], exposure: &[T], design: &DesignMatrix<T>, cfg: &GlmConfig<T>) -> Result<GlmFit<T>> {
    let x = &design.matrix;
    check_same_len("fit_glm y/exposure", y.len(), exposure.len())?;
    check_same_len("fit_glm y/design", y.len(), x.rows())?;
    if y.is_empty() {
        return Err(Error::Usage("fit_glm: empty data".into()));
    }
    for (&yi, &ei) in y.iter().zip(exposure) {
        if !(yi >= T::zero()) || !(ei > T::zero()) {
            return Err(Error::Domain(format!(
                "fit_glm: need y >= 0 and e > 0, got y={yi}, e={ei}"
            )));
        }
    }
    let total_y = sum(y.iter().copied());
    if !(total_y > T::zero()) {
        return Err(Error::Degenerate(
            "all responses are zero; log-link fit has no finite optimum".into(),
        ));
    }
    let rate = total_y / sum(exposure.iter().copied());
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let weight_power = two - cfg.power.xi();

    // start from expected totals halfway between y and the global rate
    let mut m: Vec<T> = y
        .iter()
        .zip(exposure)
        .map(|(&yi, &ei)| (yi + ei * rate) * half)
        .collect();
    let mut eta: Vec<T> = m.iter().zip(exposure).map(|(&mi, &ei)| (mi / ei).ln()).collect();

    let deviance = |beta: &[T]| -> Result<T> {
        let scores = predict_rows(x, beta)?;
        mean_deviance(&cfg.power, y, exposure, &scores)
    };

    let mut beta: Option<Vec<T>> = None;
    let mut dev_old = T::infinity();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let wls_step = |m: &[T], eta: &[T]| -> Result<Vec<T>> {
        let w: Vec<T> = m.iter().map(|&mi| mi.powf(weight_power)).collect();
        let z: Vec<T> = eta
            .iter()
            .zip(m)
            .zip(y)
            .map(|((&et, &mi), &yi)| et + (yi - mi) / mi)
            .collect();
        weighted_least_squares(x, &w, &z)
    };
    while iterations < cfg.max_iter {
        iterations += 1;
        let proposal = wls_step(&m, &eta)?;
        let (next, dev_new) = match &beta {
            None => {
                let d = deviance(&proposal).map_err(as_divergence)?;
                (proposal, d)
            }
            Some(current) => match accept_step(current, proposal, dev_old, &deviance) {
                Some(step) => step,
                None => {
                    // no halving improves: the current iterate is optimal to rounding
                    converged = true;
                    break;
                }
            },
        };
        let rel = (dev_old - dev_new).abs() / (dev_old.abs() + T::lit(0.1));
        beta = Some(next);
        trace.push(dev_new);
        dev_old = dev_new;
        let b = beta.as_deref().expect("set above");
        eta = x.mul_vec(b);
        m = eta.iter().zip(exposure).map(|(&et, &ei)| ei * et.exp()).collect();
        if m.iter().any(|v| !v.is_finite() || !(*v > T::zero())) {
            return Err(Error::Divergence("fitted means left the positive finite range".into()));
        }
        if rel < cfg.tol {
            converged = true;
            // the deviance test leaves coefficients accurate to about tol;
            // one more quadratically convergent step reaches rounding level
            let polished = wls_step(&m, &eta)?;
            if let Ok(d) = deviance(&polished) {
                if d <= dev_old + rounding_slack(dev_old) {
                    beta = Some(polished);
                    trace.push(d);
                    dev_old = d;
                }
            }
            break;
        }
    }
    Ok(GlmFit {
        coefficients: beta.expect("at least one iteration"),
        power: cfg.power,
        basis: design.basis.clone(),
        converged,
        iterations,
        final_deviance: dev_old,
        deviance_trace: trace,
    })
}

fn accept_step<T: Scalar>(
    current: &[T],
    mut proposal: Vec<T>,
    dev_old: T,
    deviance: &impl Fn(&[T]) -> Result<T>,
) -> Option<(Vec<T>, T)> {
    let half = T::lit(0.5);
    for _ in 0..=MAX_HALVINGS {
        if let Ok(d) = deviance(&proposal) {
            if d.is_finite() && d <= dev_old + rounding_slack(dev_old) {
                return Some((proposal, d));
            }
        }
        for (p, &c) in proposal.iter_mut().zip(current) {
            *p = c + (*p - c) * half;
        }
    }
    None
}

/// Near the optimum the deviance is flat to second order, so better
/// coefficients can evaluate a few ulps higher; such steps are not rejected.
fn rounding_slack<T: Scalar>(dev: T) -> T {
    T::lit(64.0) * T::epsilon() * dev.abs().max(T::one())
}

fn as_divergence(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Divergence(msg),
        other => other,
    }
}

fn predict_rows<T: Scalar>(x: &Matrix<T>, beta: &[T]) -> Result<Vec<T>> {
    let scores: Vec<T> = x.mul_vec(beta).into_iter().map(T::exp).collect();
    if scores.iter().any(|s| !s.is_finite() || !(*s > T::zero())) {
        return Err(Error::Divergence("linear predictor overflowed".into()));
    }
    Ok(scores)
}

/// Annualized scores exp(xᵀβ); exposure is not applied.
pub fn predict_glm<T: Scalar>(fit: &GlmFit<T>, features: &[Vec<T>]) -> Result<Vec<T>> {
    predict_glm_rows(fit, features, rows_of(features)?)
}

/// As [`predict_glm`] with an explicit row count, needed when the model has
/// no features.
pub fn predict_glm_rows<T: Scalar>(fit: &GlmFit<T>, features: &[Vec<T>], n: usize) -> Result<Vec<T>> {
    let x = fit.basis.expand_rows(features, n)?;
    predict_rows(&x, &fit.coefficients)
}
