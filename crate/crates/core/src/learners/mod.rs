//! Baseline predictors: a log-link GLM fitted by IRLS (with optional spline
//! expansions) and gradient-boosted stumps under Poisson deviance.

mod basis;
mod boost;
mod glm;
mod linalg;

pub use basis::{design_matrix, BasisSpec, DesignMatrix, FeatureBasis, Matrix};
pub use boost::{fit_boost, predict_boost, predict_boost_rows, BoostConfig, BoostFit, Stump};
pub use glm::{fit_glm, predict_glm, predict_glm_rows, GlmConfig, GlmFit};
pub use linalg::weighted_least_squares;
