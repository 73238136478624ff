//! Simulated Poisson portfolios with known means, and score distortions for
//! manufacturing miscalibrated predictors.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed_from_u64`. Each row
//! draws its covariates first and then its Poisson response,
//! so a given `(seed, n, shape)` always yields the same rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_N: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;

const X_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// One covariate, piecewise linear mean.
    Univariate,
    /// Two covariates, smooth non-separable mean.
    Bivariate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    n: usize,
    seed: u64,
    shape: Shape,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64, shape: Shape) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("simulation needs at least one row".into()));
        }
        Ok(Self { n, seed, shape })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
}

fn check_domain<T: Scalar>(x: T) -> Result<()> {
    if !(x >= T::zero() && x <= T::lit(X_MAX)) {
        return Err(Error::Domain(format!("covariate {x} outside [0, 10]")));
    }
    Ok(())
}

/// μ(x) = 8 − x + 3·(x − 5)₊ on [0, 10].
pub fn mean_univariate<T: Scalar>(x: T) -> Result<T> {
    check_domain(x)?;
    let five = T::lit(5.0);
    Ok(T::lit(8.0) - x + T::lit(3.0) * (x - five).max(T::zero()))
}

/// Three Gaussian bumps plus a constant level of 8, in the rescaled
/// coordinates u = (x1 − 5)/3, v = (x2 − 5)/3.
pub fn mean_bivariate<T: Scalar>(x1: T, x2: T) -> Result<T> {
    check_domain(x1)?;
    check_domain(x2)?;
    let five = T::lit(5.0);
    let three = T::lit(3.0);
    let one = T::one();
    let u = (x1 - five) / three;
    let v = (x2 - five) / three;
    let bump1 = three * (one - u).powi(2) * (-(u * u) - (v + one).powi(2)).exp();
    let bump2 = T::lit(10.0) * ((x1 - five) / T::lit(15.0) - u.powi(3) - v.powi(5)) * (-(u * u) - v * v).exp();
    let bump3 = (-(u + one).powi(2) - v * v).exp() / three;
    Ok(bump1 - bump2 - bump3 + T::lit(8.0))
}

pub fn simulate<T: Scalar>(cfg: &SimConfig) -> Dataset<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = match cfg.shape {
        Shape::Univariate => 1,
        Shape::Bivariate => 2,
    };
    let mut features = vec![Vec::with_capacity(cfg.n); dims];
    let mut y = Vec::with_capacity(cfg.n);
    let mut mu = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let xs: Vec<f64> = (0..dims).map(|_| X_MAX * rng.random::<f64>()).collect();
        let m = match cfg.shape {
            Shape::Univariate => mean_univariate(xs[0]),
            Shape::Bivariate => mean_bivariate(xs[0], xs[1]),
        }
        .expect("covariates drawn inside the domain");
        let count = Poisson::new(m).expect("means are positive").sample(&mut rng);
        for (col, &x) in features.iter_mut().zip(&xs) {
            col.push(T::lit(x));
        }
        y.push(T::lit(count));
        mu.push(T::lit(m));
    }
    Dataset {
        exposure: vec![T::one(); cfg.n],
        y,
        features,
        mu: Some(mu),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum Distortion<T> {
    /// c·π, c > 0.
    Scale(T),
    /// π^a, a > 0.
    Power(T),
    /// exp(ln π + δ).
    LogShift(T),
}

pub fn distort<T: Scalar>(scores: &[T], kind: Distortion<T>) -> Result<Vec<T>> {
    match kind {
        Distortion::Scale(c) | Distortion::Power(c) if !(c > T::zero()) || !c.is_finite() => {
            return Err(Error::Domain(format!("distortion parameter must be positive, got {c}")));
        }
        Distortion::LogShift(d) if !d.is_finite() => {
            return Err(Error::Domain(format!("log shift must be finite, got {d}")));
        }
        _ => {}
    }
    scores
        .iter()
        .map(|&s| {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::Domain(format!("score {s} is not positive")));
            }
            Ok(match kind {
                Distortion::Scale(c) => c * s,
                Distortion::Power(a) => s.powf(a),
                Distortion::LogShift(d) => (s.ln() + d).exp(),
            })
        })
        .collect()
}
