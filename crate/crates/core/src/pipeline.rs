//! End-to-end experiment: simulate or ingest a portfolio, split it, fit the
//! baseline learners on the training rows, correct them on the smoothing
//! rows and audit both versions on the validation rows.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autocal::{autocalibrate, calibration_curve, Bandwidth, CalibrationSpec, Kernel};
use crate::curves::{
    alpha_sweep, bias, cc_density, concentration_curve, default_alpha_grid, empirical_poisson_loss, floor_positive,
    linspace, quantile, spearman, ModelScores, SweepTable,
};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::io;
use crate::learners::{
    design_matrix, fit_boost, fit_glm, predict_boost_rows, predict_glm_rows, BasisSpec, BoostConfig, BoostFit,
    FeatureBasis, GlmConfig, GlmFit,
};
use crate::ordering::{check_dominance, convex_order_check, default_xi_grid, ConvexOrderReport};
use crate::scalar::mean;
use crate::simdata::{distort, simulate, Distortion, Shape, SimConfig, DEFAULT_N, DEFAULT_SEED};
use crate::tweedie::{mean_deviance, PowerParam};

/// Offset between the simulation seed and the split seed, so the permutation
/// does not reuse the covariate stream.
const SPLIT_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Expansion applied to every feature of a GLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisChoice {
    Identity,
    Polynomial {
        degree: u8,
    },
    /// Equispaced interior knots over each feature's training range.
    Splines {
        degree: u8,
        n_knots: usize,
    },
    Knots {
        degree: u8,
        knots: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Glm {
        basis: BasisChoice,
        #[serde(default)]
        tensor: bool,
        #[serde(default = "poisson_xi")]
        xi: f64,
    },
    Boost {
        n_trees: usize,
        shrinkage: f64,
        min_leaf: usize,
    },
}

fn poisson_xi() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Used in output file names: ASCII letters, digits, `_` and `-`.
    pub name: String,
    pub learner: Learner,
    /// Applied to the fitted scores before correction.
    #[serde(default)]
    pub distortion: Option<Distortion<f64>>,
}

impl ModelSpec {
    pub fn glm(name: &str, basis: BasisChoice) -> Self {
        Self {
            name: name.into(),
            learner: Learner::Glm {
                basis,
                tensor: false,
                xi: 1.0,
            },
            distortion: None,
        }
    }

    pub fn boost(name: &str, n_trees: usize, shrinkage: f64, min_leaf: usize) -> Self {
        Self {
            name: name.into(),
            learner: Learner::Boost {
                n_trees,
                shrinkage,
                min_leaf,
            },
            distortion: None,
        }
    }

    /// glm (log-linear), gam (cubic splines, 5 knots) and a 30-stump booster.
    pub fn defaults() -> Vec<Self> {
        vec![
            Self::glm("glm", BasisChoice::Identity),
            Self::glm("gam", BasisChoice::Splines { degree: 3, n_knots: 5 }),
            Self::boost("bst", 30, 0.1, 100),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Fractions([f64; 3]),
    Counts([usize; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset CSV; the built-in simulation is used when absent.
    pub input: Option<PathBuf>,
    pub n: usize,
    pub seed: u64,
    pub shape: Shape,
    pub split: SplitSpec,
    pub models: Vec<ModelSpec>,
    /// Powers for the reported losses and the dominance checks.
    pub xi_grid: Vec<f64>,
    pub kernel: Kernel,
    pub alpha0: f64,
    pub alpha1: f64,
    pub monotone: bool,
    pub curve_alpha0: f64,
    pub curve_alpha1: f64,
    /// Grid size of calibration curves, spread over the central 80% of scores.
    pub curve_points: usize,
    pub alpha0_grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let correction = Bandwidth::<f64>::correction_default();
        let curve = Bandwidth::<f64>::curve_default();
        Self {
            input: None,
            n: DEFAULT_N,
            seed: DEFAULT_SEED,
            shape: Shape::Univariate,
            split: SplitSpec::Fractions([0.6, 0.2, 0.2]),
            models: ModelSpec::defaults(),
            xi_grid: default_xi_grid::<f64>().iter().map(PowerParam::xi).collect(),
            kernel: Kernel::Rectangular,
            alpha0: correction.alpha0(),
            alpha1: correction.alpha1(),
            monotone: false,
            curve_alpha0: curve.alpha0(),
            curve_alpha1: curve.alpha1(),
            curve_points: 41,
            alpha0_grid: (1..=39).map(|k| k as f64 / 40.0).collect(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn correction_spec(&self) -> Result<CalibrationSpec<f64>> {
        let mut spec = CalibrationSpec::new(self.kernel, Bandwidth::new(self.alpha0, self.alpha1)?);
        spec.monotone = self.monotone;
        Ok(spec)
    }

    pub fn curve_spec(&self) -> Result<CalibrationSpec<f64>> {
        Ok(CalibrationSpec::new(
            self.kernel,
            Bandwidth::new(self.curve_alpha0, self.curve_alpha1)?,
        ))
    }

    pub fn powers(&self) -> Result<Vec<PowerParam<f64>>> {
        if self.xi_grid.is_empty() {
            return Err(Error::Usage("xi grid is empty".into()));
        }
        self.xi_grid.iter().map(|&x| PowerParam::new(x)).collect()
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(SPLIT_SEED_OFFSET)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Usage("no models configured".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            let ok = !m.name.is_empty()
                && m.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(Error::Usage(format!(
                    "model name {:?} must be ASCII letters, digits, _ or -",
                    m.name
                )));
            }
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Usage(format!("duplicate model name {}", m.name)));
            }
        }
        if let Some(p) = &self.input {
            if !p.is_file() {
                return Err(Error::Usage(format!("input {} does not exist", p.display())));
            }
        }
        if let SplitSpec::Fractions(f) = self.split {
            let sum: f64 = f.iter().sum();
            if f.iter().any(|&x| !(x > 0.0)) || sum > 1.0 + 1e-12 {
                return Err(Error::Usage(format!(
                    "split fractions {f:?} must be positive and sum to at most 1"
                )));
            }
        }
        self.correction_spec()?;
        self.curve_spec()?;
        self.powers()?;
        for &a in &self.alpha0_grid {
            Bandwidth::new(a, self.alpha1)?;
        }
        if self.curve_points < 2 {
            return Err(Error::Usage("curve_points must be at least 2".into()));
        }
        Ok(())
    }
}

/// Fitted learner, serialized as the fit description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Glm(GlmFit<f64>),
    Boost(BoostFit<f64>),
}

impl FittedModel {
    pub fn predict(&self, data: &Dataset<f64>) -> Result<Vec<f64>> {
        match self {
            FittedModel::Glm(f) => predict_glm_rows(f, &data.features, data.len()),
            FittedModel::Boost(f) => predict_boost_rows(f, &data.features, data.len()),
        }
    }
}

fn basis_for(choice: &BasisChoice, tensor: bool, train: &Dataset<f64>) -> BasisSpec<f64> {
    let p = train.n_features();
    let mut spec = match choice {
        BasisChoice::Identity => BasisSpec::identity(p),
        BasisChoice::Polynomial { degree } => BasisSpec {
            features: vec![FeatureBasis::Polynomial { degree: *degree }; p],
            tensor: false,
        },
        BasisChoice::Splines { degree, n_knots } => BasisSpec::equispaced_splines(train, *degree, *n_knots),
        BasisChoice::Knots { degree, knots } => BasisSpec {
            features: vec![
                FeatureBasis::Spline {
                    degree: *degree,
                    knots: knots.clone(),
                };
                p
            ],
            tensor: false,
        },
    };
    spec.tensor = tensor;
    spec
}

pub fn fit_model(learner: &Learner, train: &Dataset<f64>) -> Result<FittedModel> {
    match learner {
        Learner::Glm { basis, tensor, xi } => {
            let design = design_matrix(train, &basis_for(basis, *tensor, train))?;
            let fit = fit_glm(
                &train.y,
                &train.exposure,
                &design,
                &GlmConfig::new(PowerParam::new(*xi)?),
            )?;
            if !fit.converged {
                log::warn!("GLM stopped after {} iterations without converging", fit.iterations);
            }
            Ok(FittedModel::Glm(fit))
        }
        Learner::Boost {
            n_trees,
            shrinkage,
            min_leaf,
        } => {
            let cfg = BoostConfig::new(*n_trees, *shrinkage, *min_leaf)?;
            Ok(FittedModel::Boost(fit_boost(
                &train.y,
                &train.exposure,
                &train.features,
                &cfg,
            )?))
        }
    }
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

pub struct ModelRun {
    pub name: String,
    pub fit: FittedModel,
    /// Scores for every row of the dataset, after any distortion.
    pub scores: Vec<f64>,
    /// Corrected scores for the validation rows, in split order.
    pub corrected: Vec<f64>,
}

impl ModelRun {
    pub fn scores_at(&self, idx: &[usize]) -> Vec<f64> {
        pick(&self.scores, idx)
    }
}

pub struct PipelineRun {
    pub data: Dataset<f64>,
    pub split: Split,
    pub models: Vec<ModelRun>,
}

impl PipelineRun {
    pub fn validation(&self) -> Dataset<f64> {
        self.data.subset(&self.split.validate)
    }

    pub fn smoothing(&self) -> Dataset<f64> {
        self.data.subset(&self.split.smooth)
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset<f64>> {
    match &cfg.input {
        Some(p) => io::ingest(p),
        None => Ok(simulate(&SimConfig::new(cfg.n, cfg.seed, cfg.shape)?)),
    }
}

pub fn make_split(cfg: &RunConfig, n: usize) -> Result<Split> {
    match cfg.split {
        SplitSpec::Fractions(f) => Split::from_fractions(n, f, cfg.split_seed()),
        SplitSpec::Counts(c) => Split::from_counts(n, c, cfg.split_seed()),
    }
}

/// Loads, splits, fits every model on the training rows and corrects its
/// validation scores with anchors from the smoothing rows.
pub fn execute(cfg: &RunConfig) -> Result<PipelineRun> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let data = load_data(cfg).map_err(|e| e.in_stage("load"))?;
    let split = make_split(cfg, data.len()).map_err(|e| e.in_stage("split"))?;
    let train = data.subset(&split.train);
    let smooth = data.subset(&split.smooth);
    let spec = cfg.correction_spec()?;
    let mut models = Vec::with_capacity(cfg.models.len());
    for m in &cfg.models {
        let fit = fit_model(&m.learner, &train).map_err(|e| e.in_stage("fit"))?;
        let mut scores = fit.predict(&data).map_err(|e| e.in_stage("predict"))?;
        if let Some(d) = m.distortion {
            scores = distort(&scores, d).map_err(|e| e.in_stage("distort"))?;
        }
        let corrected = autocalibrate(
            &pick(&scores, &split.smooth),
            &smooth.y,
            &smooth.exposure,
            &pick(&scores, &split.validate),
            spec,
        )
        .map_err(|e| e.in_stage("calibrate"))?;
        log::info!("model {} fitted and corrected", m.name);
        models.push(ModelRun {
            name: m.name.clone(),
            fit,
            scores,
            corrected: floor_positive(corrected),
        });
    }
    Ok(PipelineRun { data, split, models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub q10: f64,
    pub q90: f64,
    /// mean(e·score − y).
    pub bias: f64,
    pub poisson_loss: f64,
    /// Mean Tweedie deviance per entry of the report's `xi_grid`.
    pub losses: Vec<f64>,
    /// sup |curve(s) − s| over the central 80% of scores.
    pub calibration_departure: Option<f64>,
}

/// Corrected (predictor 2) against uncorrected (predictor 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    /// Checked on the configured power grid only.
    #[serde(rename = "cond1_grid_verified")]
    pub cond1_holds: bool,
    pub cond2_holds: bool,
    pub sufficient: bool,
    /// D(uncorrected) − D(corrected) per entry of `xi_grid`.
    pub deviance_gap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub fit: FittedModel,
    pub raw: ScoreSummary,
    pub corrected: ScoreSummary,
    /// Rank correlation of uncorrected and corrected scores; absent when
    /// either is constant.
    pub spearman: Option<f64>,
    pub dominance: DominanceVerdict,
    /// Corrected expected totals against the responses.
    pub convex_order: ConvexOrderReport<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub n_rows: usize,
    /// Train, smoothing and validation sizes.
    pub split_sizes: [usize; 3],
    pub xi_grid: Vec<f64>,
    pub kernel: Kernel,
    pub alpha0: f64,
    pub alpha1: f64,
    pub models: Vec<ModelSummary>,
    /// Curve CSVs, relative to the report's directory.
    pub curve_files: Vec<String>,
}

/// Two-column curve destined for `file`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub file: String,
    pub header: [&'static str; 2],
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn summarize(
    v: &Dataset<f64>,
    scores: &[f64],
    powers: &[PowerParam<f64>],
    curve_spec: CalibrationSpec<f64>,
    curve_points: usize,
) -> Result<(ScoreSummary, CurveTable)> {
    let (q10, q90) = (quantile(scores, 0.1)?, quantile(scores, 0.9)?);
    let grid = if q90 > q10 {
        linspace(q10, q90, curve_points)
    } else {
        vec![q10]
    };
    let curve = calibration_curve(scores, &v.y, &v.exposure, &grid, curve_spec)?;
    let losses = powers
        .iter()
        .map(|p| mean_deviance(p, &v.y, &v.exposure, scores))
        .collect::<Result<_>>()?;
    let summary = ScoreSummary {
        mean: mean(scores),
        q10,
        q90,
        bias: bias(&v.y, &v.exposure, scores)?,
        poisson_loss: empirical_poisson_loss(&v.y, &v.exposure, scores)?,
        losses,
        calibration_departure: curve.departure,
    };
    let table = CurveTable {
        file: String::new(),
        header: ["score", "value"],
        x: curve.grid,
        y: curve.values,
    };
    Ok((summary, table))
}

fn cc_tables(response: &[f64], scores: &[f64], stem: &str) -> Result<Vec<CurveTable>> {
    let cc = concentration_curve(response, scores, &default_alpha_grid())?;
    let density = cc_density(&cc)?;
    Ok(vec![
        CurveTable {
            file: format!("cc_{stem}.csv"),
            header: ["alpha", "value"],
            x: cc.grid,
            y: cc.values,
        },
        CurveTable {
            file: format!("ccd_{stem}.csv"),
            header: ["alpha", "value"],
            x: density.grid,
            y: density.values,
        },
    ])
}

/// Validation-set summaries and curves for every model.
pub fn audit(cfg: &RunConfig, run: &PipelineRun) -> Result<(Report, Vec<CurveTable>)> {
    let powers = cfg.powers()?;
    let curve_spec = cfg.curve_spec()?;
    let v = run.validation();
    let mut models = Vec::new();
    let mut tables = Vec::new();
    for m in &run.models {
        let raw_scores = m.scores_at(&run.split.validate);
        let (raw, mut raw_curve) = summarize(&v, &raw_scores, &powers, curve_spec, cfg.curve_points)?;
        let (corrected, mut corr_curve) = summarize(&v, &m.corrected, &powers, curve_spec, cfg.curve_points)?;
        raw_curve.file = format!("calibration_{}.csv", m.name);
        corr_curve.file = format!("calibration_{}_corrected.csv", m.name);
        tables.push(raw_curve);
        tables.push(corr_curve);
        tables.extend(cc_tables(&v.y, &raw_scores, &m.name)?);
        tables.extend(cc_tables(&v.y, &m.corrected, &format!("{}_corrected", m.name))?);
        if let Some(mu) = &v.mu {
            tables.extend(cc_tables(mu, &raw_scores, &format!("{}_mu", m.name))?);
        }

        let d = check_dominance(&v.y, &v.exposure, &raw_scores, &m.corrected, &powers, None)?;
        let totals: Vec<f64> = m.corrected.iter().zip(&v.exposure).map(|(s, e)| s * e).collect();
        models.push(ModelSummary {
            name: m.name.clone(),
            fit: m.fit.clone(),
            raw,
            corrected,
            spearman: spearman(&raw_scores, &m.corrected).ok(),
            dominance: DominanceVerdict {
                cond1_holds: d.cond1_holds,
                cond2_holds: d.cond2_holds,
                sufficient: d.sufficient,
                deviance_gap: d.deviance_gap,
            },
            convex_order: convex_order_check(&totals, &v.y, None)?,
        });
    }
    let report = Report {
        seed: cfg.seed,
        n_rows: run.data.len(),
        split_sizes: [run.split.train.len(), run.split.smooth.len(), run.split.validate.len()],
        xi_grid: cfg.xi_grid.clone(),
        kernel: cfg.kernel,
        alpha0: cfg.alpha0,
        alpha1: cfg.alpha1,
        models,
        curve_files: tables.iter().map(|t| t.file.clone()).collect(),
    };
    Ok((report, tables))
}

/// Runs and audits the experiment. With `out`, writes every curve CSV and
/// then `report.json` into that directory.
pub fn run_pipeline(cfg: &RunConfig, out: Option<&Path>) -> Result<Report> {
    let run = execute(cfg)?;
    let (report, tables) = audit(cfg, &run).map_err(|e| e.in_stage("audit"))?;
    if let Some(dir) = out {
        for t in &tables {
            io::write_columns(&dir.join(&t.file), &t.header, &[&t.x, &t.y]).map_err(|e| e.in_stage("write"))?;
        }
        io::write_json(&dir.join("report.json"), &report).map_err(|e| e.in_stage("write"))?;
    }
    Ok(report)
}

/// The α₀ sweep over every configured model.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepTable<f64>> {
    let run = execute(cfg)?;
    let models: Vec<ModelScores<f64>> = run
        .models
        .iter()
        .map(|m| ModelScores {
            name: m.name.clone(),
            scores: m.scores.clone(),
        })
        .collect();
    alpha_sweep(
        &run.data.y,
        &run.data.exposure,
        &models,
        &run.split,
        &cfg.alpha0_grid,
        cfg.kernel,
        cfg.alpha1,
    )
    .map_err(|e| e.in_stage("sweep"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            n: 2_000,
            alpha0_grid: vec![0.05, 0.5, 1.0],
            ..RunConfig::default()
        }
    }

    #[test]
    fn default_config_round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 7, "split": {"counts": [10, 10, 10]}}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.split, SplitSpec::Counts([10, 10, 10]));
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn overlapping_fractions_rejected() {
        let cfg = RunConfig {
            split: SplitSpec::Fractions([0.7, 0.4, 0.2]),
            ..small()
        };
        let err = execute(&cfg).err().unwrap();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().starts_with("config: "));
    }

    #[test]
    fn bad_model_names_rejected() {
        for name in ["", "a/b", "x y"] {
            let cfg = RunConfig {
                models: vec![ModelSpec::glm(name, BasisChoice::Identity)],
                ..small()
            };
            assert!(cfg.validate().is_err(), "{name:?}");
        }
        let cfg = RunConfig {
            models: vec![ModelSpec::glm("a", BasisChoice::Identity); 2],
            ..small()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pipeline_writes_manifest_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_pipeline(&small(), Some(dir.path())).unwrap();
        assert_eq!(report.split_sizes, [1200, 400, 400]);
        assert_eq!(report.models.len(), 3);
        for f in &report.curve_files {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert!(dir.path().join("report.json").is_file());
        for m in &report.models {
            assert_eq!(m.raw.losses.len(), report.xi_grid.len());
            assert!(m.corrected.bias.abs() < 1.0, "{}: {}", m.name, m.corrected.bias);
        }
    }

    #[test]
    fn sweep_rows_cover_grid_and_models() {
        let cfg = small();
        let t = run_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 3 * 3);
        assert_eq!(t.baseline.len(), 3);
        // α₀ = 1 with the rectangular kernel: corrected scores are the
        // smoothing-set global rate
        let run = execute(&cfg).unwrap();
        let s = run.smoothing();
        let v = run.validation();
        let rate = s.global_rate();
        let expect = bias(&v.y, &v.exposure, &vec![rate; v.len()]).unwrap();
        for r in t.rows.iter().filter(|r| r.alpha0 == 1.0) {
            assert!((r.bias - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{}", r.model);
        }
    }

    #[test]
    fn ingested_input_is_used() {
        let dir = tempfile::tempdir().unwrap();
        let data: Dataset<f64> = simulate(&SimConfig::new(600, 3, Shape::Bivariate).unwrap());
        let p = dir.path().join("d.csv");
        io::write_dataset(&p, &data).unwrap();
        let cfg = RunConfig {
            input: Some(p),
            models: vec![
                ModelSpec::glm("glm", BasisChoice::Identity),
                ModelSpec::boost("bst", 5, 0.5, 20),
            ],
            ..small()
        };
        let run = execute(&cfg).unwrap();
        assert_eq!(run.data, data);
        assert_eq!(run.models[1].corrected.len(), run.split.validate.len());
    }
}
