//! Tweedie family: power classification, variance function, the ψ transform
//! used by dominance checks, and the predictive deviance losses.
//!
//! Dispersion is fixed to one and π-free constants of the saturated model are
//! dropped, so absolute loss values are only meaningful for comparing
//! predictors on the same data.

use serde::{Deserialize, Serialize};

use crate::error::{check_same_len, Error, Result};
use crate::scalar::{NeumaierSum, Scalar};

/// Tweedie power ξ of the variance function V(μ) = μ^ξ, restricted to ξ ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PowerParam<T> {
    xi: T,
}

impl<T: Scalar> PowerParam<T> {
    pub fn new(xi: T) -> Result<Self> {
        if !xi.is_finite() || xi < T::one() {
            return Err(Error::Domain(format!(
                "Tweedie power must be finite and >= 1, got {xi}"
            )));
        }
        Ok(Self { xi })
    }

    pub fn poisson() -> Self {
        Self { xi: T::one() }
    }

    pub fn xi(&self) -> T {
        self.xi
    }

    pub fn classify(&self) -> TweedieClass {
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        if self.xi == T::one() {
            TweedieClass::Poisson
        } else if self.xi < two {
            TweedieClass::CompoundPoissonGamma
        } else if self.xi == two {
            TweedieClass::Gamma
        } else if self.xi == three {
            TweedieClass::InverseGaussian
        } else {
            TweedieClass::ContinuousPositive
        }
    }

    /// V(μ) = μ^ξ.
    pub fn variance(&self, mu: T) -> Result<T> {
        positive("mean", mu)?;
        Ok(mu.powf(self.xi))
    }

    /// ψ_ξ(π): ln π at ξ = 2, π^(2−ξ)/(2−ξ) otherwise. Increasing in π.
    pub fn psi(&self, pi: T) -> Result<T> {
        positive("prediction", pi)?;
        let two = T::lit(2.0);
        if self.xi == two {
            Ok(pi.ln())
        } else {
            let a = two - self.xi;
            Ok(pi.powf(a) / a)
        }
    }

    /// Deviance loss of predicting `pi` for an observed `y`, up to π-free
    /// constants.
    pub fn unit_loss(&self, y: T, pi: T) -> Result<T> {
        positive("prediction", pi)?;
        nonneg_response(y)?;
        let one = T::one();
        let two = T::lit(2.0);
        let loss = if self.xi == one {
            if y == T::zero() {
                pi
            } else {
                pi - y * pi.ln()
            }
        } else if self.xi == two {
            pi.ln() + y / pi
        } else {
            let a = two - self.xi;
            let b = one - self.xi;
            pi.powf(a) / a - y * pi.powf(b) / b
        };
        Ok(loss)
    }

    /// ∂L/∂π = π^(−ξ)(π − y), shared by every branch of [`unit_loss`](Self::unit_loss).
    pub fn loss_gradient(&self, y: T, pi: T) -> Result<T> {
        positive("prediction", pi)?;
        nonneg_response(y)?;
        Ok(pi.powf(-self.xi) * (pi - y))
    }
}

impl<'de, T: Scalar> Deserialize<'de> for PowerParam<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let xi = T::deserialize(d)?;
        PowerParam::new(xi).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TweedieClass {
    Poisson,
    CompoundPoissonGamma,
    Gamma,
    ContinuousPositive,
    InverseGaussian,
}

/// Exposure-weighted predictive deviance (1/n) Σ L(y_i, e_i·π_i).
///
/// Scores are annualized; the loss compares observed totals with expected
/// totals `e_i * scores_i`.
pub fn mean_deviance<T: Scalar>(p: &PowerParam<T>, y: &[T], exposure: &[T], scores: &[T]) -> Result<T> {
    check_same_len("mean_deviance y/exposure", y.len(), exposure.len())?;
    check_same_len("mean_deviance y/scores", y.len(), scores.len())?;
    if y.is_empty() {
        return Err(Error::Usage("mean_deviance: empty input".into()));
    }
    let mut acc = NeumaierSum::new();
    for ((&yi, &ei), &si) in y.iter().zip(exposure).zip(scores) {
        positive("exposure", ei)?;
        positive("score", si)?;
        acc.add(p.unit_loss(yi, ei * si)?);
    }
    Ok(acc.value() / T::from_count(y.len()))
}

pub(crate) fn positive<T: Scalar>(what: &str, v: T) -> Result<()> {
    if !(v > T::zero()) || !v.is_finite() {
        return Err(Error::Domain(format!("{what} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn nonneg_response<T: Scalar>(y: T) -> Result<()> {
    if !(y >= T::zero()) || !y.is_finite() {
        return Err(Error::Domain(format!(
            "response must be nonnegative and finite, got {y}"
        )));
    }
    Ok(())
}
