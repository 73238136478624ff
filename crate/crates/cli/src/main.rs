use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autocal::autocal::{calibration_curve, Bandwidth, CalibrationMap, CalibrationSpec, Kernel};
use autocal::curves::{cc_density, concentration_curve, default_alpha_grid, linspace, quantile, CurveSeries};
use autocal::data::Dataset;
use autocal::io;
use autocal::ordering::{check_dominance, default_xi_grid};
use autocal::pipeline::{fit_model, make_split, run_pipeline, run_sweep, BasisChoice, Learner, RunConfig, SplitSpec};
use autocal::scalar::mean;
use autocal::simdata::{simulate, Shape, SimConfig};
use autocal::tweedie::PowerParam;
use autocal::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "autocal",
    version,
    about = "Autocalibration and Tweedie dominance audits for insurance predictors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a portfolio and its train/smooth/validate parts.
    Simulate(SimulateArgs),
    /// Fit a learner on a dataset CSV and score it.
    Fit(FitArgs),
    /// Correct query scores with anchors from a smoothing set.
    Calibrate(CalibrateArgs),
    /// Check whether predictor 2 dominates predictor 1.
    Dominance(DominanceArgs),
    /// Concentration and calibration curves of one predictor.
    Curves(CurvesArgs),
    /// Validation bias and loss over a grid of neighbour fractions.
    Sweep(SweepArgs),
    /// Full pipeline: simulate or ingest, fit, correct, audit.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Univariate,
    Bivariate,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Univariate => Shape::Univariate,
            ShapeArg::Bivariate => Shape::Bivariate,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    /// Log-linear GLM.
    Glm,
    /// GLM on cubic splines with 5 equispaced knots.
    Gam,
    /// Gradient-boosted stumps.
    Boost,
}

#[derive(Args)]
struct Smoothing {
    /// rectangular, tricube or epanechnikov.
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<Kernel>,
    /// Nearest-neighbour fraction in (0, 1].
    #[arg(long)]
    alpha0: Option<f64>,
    /// Bandwidth floor in score units.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Project corrected values onto a nondecreasing sequence.
    #[arg(long)]
    monotone: bool,
}

impl Smoothing {
    fn spec(&self, default: CalibrationSpec<f64>) -> Result<CalibrationSpec<f64>> {
        let b = default.bandwidth;
        let mut spec = CalibrationSpec::new(
            self.kernel.unwrap_or(default.kernel),
            Bandwidth::new(self.alpha0.unwrap_or(b.alpha0()), self.alpha1.unwrap_or(b.alpha1()))?,
        );
        spec.monotone = self.monotone;
        Ok(spec)
    }
}

fn parse_kernel(s: &str) -> std::result::Result<Kernel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = autocal::simdata::DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = autocal::simdata::DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "univariate")]
    shape: ShapeArg,
    /// Train, smoothing and validation fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.2, 0.2])]
    fractions: Vec<f64>,
    /// Output directory for data.csv, train.csv, smooth.csv and validate.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Training dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "glm")]
    model: ModelArg,
    /// Tweedie power of the GLM deviance.
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    #[arg(long, default_value_t = 30)]
    n_trees: usize,
    #[arg(long, default_value_t = 0.1)]
    shrinkage: f64,
    #[arg(long, default_value_t = 100)]
    min_leaf: usize,
    /// Further dataset CSVs to score; each gets scores_<stem>.csv.
    #[arg(long)]
    predict: Vec<PathBuf>,
    /// Output directory for fit.json and scores.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Smoothing-set dataset CSV.
    #[arg(long)]
    smooth: PathBuf,
    /// Scores of the smoothing rows.
    #[arg(long)]
    smooth_scores: PathBuf,
    /// Scores to correct.
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    smoothing: Smoothing,
    /// Corrected score CSV.
    #[arg(long)]
    out: PathBuf,
    /// JSON summary; defaults to the output path with a .json extension.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DominanceArgs {
    #[arg(long)]
    data: PathBuf,
    /// Scores of predictor 1.
    #[arg(long)]
    scores1: PathBuf,
    /// Scores of predictor 2.
    #[arg(long)]
    scores2: PathBuf,
    /// Check a single power instead of the grid 1.0, 1.1, ..., 3.0.
    #[arg(long)]
    xi: Option<f64>,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    smoothing: Smoothing,
    /// Calibration-curve grid size over the central 80% of scores.
    #[arg(long, default_value_t = 41)]
    points: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// RunConfig JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV instead of the built-in simulation.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report losses and dominance for this power only.
    #[arg(long)]
    xi: Option<f64>,
    #[command(flatten)]
    smoothing: Smoothing,
    #[arg(long)]
    out: PathBuf,
}

impl PipelineArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p).map_err(|e| e.in_stage("config"))?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(x) = self.xi {
            cfg.xi_grid = vec![x];
        }
        let s = &self.smoothing;
        cfg.kernel = s.kernel.unwrap_or(cfg.kernel);
        cfg.alpha0 = s.alpha0.unwrap_or(cfg.alpha0);
        cfg.alpha1 = s.alpha1.unwrap_or(cfg.alpha1);
        cfg.monotone |= s.monotone;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: PipelineArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: PipelineArgs,
}

fn load(path: &Path) -> Result<Dataset<f64>> {
    io::ingest(path).map_err(|e| e.in_stage("ingest"))
}

fn load_scores(path: &Path, rows: usize) -> Result<Vec<f64>> {
    let s = io::read_scores(path).map_err(|e| e.in_stage("ingest"))?;
    if s.len() != rows {
        return Err(Error::Usage(format!(
            "{} has {} scores for {rows} rows",
            path.display(),
            s.len()
        )));
    }
    Ok(s)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let data: Dataset<f64> = simulate(&SimConfig::new(a.n, a.seed, a.shape.into())?);
    let cfg = RunConfig {
        seed: a.seed,
        split: SplitSpec::Fractions([a.fractions[0], a.fractions[1], a.fractions[2]]),
        ..RunConfig::default()
    };
    let split = make_split(&cfg, data.len())?;
    io::write_dataset(&a.out.join("data.csv"), &data)?;
    for (name, idx) in [
        ("train", &split.train),
        ("smooth", &split.smooth),
        ("validate", &split.validate),
    ] {
        io::write_dataset(&a.out.join(format!("{name}.csv")), &data.subset(idx))?;
    }
    println!(
        "simulated {} rows (train {}, smooth {}, validate {}) into {}",
        data.len(),
        split.train.len(),
        split.smooth.len(),
        split.validate.len(),
        a.out.display()
    );
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let data = load(&a.data)?;
    let learner = match a.model {
        ModelArg::Glm => Learner::Glm {
            basis: BasisChoice::Identity,
            tensor: false,
            xi: a.xi,
        },
        ModelArg::Gam => Learner::Glm {
            basis: BasisChoice::Splines { degree: 3, n_knots: 5 },
            tensor: false,
            xi: a.xi,
        },
        ModelArg::Boost => Learner::Boost {
            n_trees: a.n_trees,
            shrinkage: a.shrinkage,
            min_leaf: a.min_leaf,
        },
    };
    let fit = fit_model(&learner, &data).map_err(|e| e.in_stage("fit"))?;
    io::write_json(&a.out.join("fit.json"), &fit)?;
    io::write_scores(&a.out.join("scores.csv"), &fit.predict(&data)?)?;
    for p in &a.predict {
        let other = load(p)?;
        let stem = p
            .file_stem()
            .map_or("data".into(), |s| s.to_string_lossy().into_owned());
        let scores = fit.predict(&other).map_err(|e| e.in_stage("predict"))?;
        io::write_scores(&a.out.join(format!("scores_{stem}.csv")), &scores)?;
    }
    println!("fitted on {} rows; wrote {}", data.len(), a.out.display());
    Ok(())
}

fn central_grid(scores: &[f64], points: usize) -> Result<Vec<f64>> {
    let (lo, hi) = (quantile(scores, 0.1)?, quantile(scores, 0.9)?);
    Ok(if hi > lo {
        linspace(lo, hi, points.max(2))
    } else {
        vec![lo]
    })
}

fn calibrate_cmd(a: &CalibrateArgs) -> Result<()> {
    let smooth = load(&a.smooth)?;
    let anchors = load_scores(&a.smooth_scores, smooth.len())?;
    let queries = io::read_scores(&a.queries).map_err(|e| e.in_stage("ingest"))?;
    let spec = a.smoothing.spec(CalibrationSpec::correction_default())?;
    let map = CalibrationMap::new(&anchors, &smooth.y, &smooth.exposure, spec)?;
    let corrected = map.evaluate_many(&queries).map_err(|e| e.in_stage("calibrate"))?;
    io::write_scores(&a.out, &corrected)?;
    let curve = calibration_curve(
        &anchors,
        &smooth.y,
        &smooth.exposure,
        &central_grid(&anchors, 41)?,
        spec,
    )?;
    let summary = serde_json::json!({
        "global_rate": map.global_rate(),
        "mean_corrected": mean(&corrected),
        "identity_departure": curve.departure,
        "spec": spec,
    });
    let path = a.summary.clone().unwrap_or_else(|| a.out.with_extension("json"));
    io::write_json(&path, &summary)?;
    println!(
        "corrected {} scores; global rate {:.6}, mean corrected {:.6}",
        corrected.len(),
        map.global_rate(),
        mean(&corrected)
    );
    Ok(())
}

fn dominance_cmd(a: &DominanceArgs) -> Result<()> {
    let data = load(&a.data)?;
    let s1 = load_scores(&a.scores1, data.len())?;
    let s2 = load_scores(&a.scores2, data.len())?;
    let powers = match a.xi {
        Some(x) => vec![PowerParam::new(x)?],
        None => default_xi_grid(),
    };
    let r = check_dominance(&data.y, &data.exposure, &s1, &s2, &powers, None)?;
    if let Some(p) = &a.out {
        io::write_json(p, &r)?;
    }
    println!(
        "cond1 (grid-verified): {}; cond2 (lower partial moments): {}; sufficient: {}",
        r.cond1_holds, r.cond2_holds, r.sufficient
    );
    for (xi, gap) in r.xi_grid.iter().zip(&r.deviance_gap) {
        println!("  xi {xi:.2}: D1 - D2 = {gap:.6e}");
    }
    Ok(())
}

fn write_curve(path: &Path, header: [&str; 2], c: &CurveSeries<f64>) -> Result<()> {
    io::write_columns(path, &header, &[&c.grid, &c.values])
}

fn curves_cmd(a: &CurvesArgs) -> Result<()> {
    let data = load(&a.data)?;
    let scores = load_scores(&a.scores, data.len())?;
    let grid = default_alpha_grid();
    let mut written = Vec::new();
    let cc = concentration_curve(&data.y, &scores, &grid)?;
    write_curve(&a.out.join("cc.csv"), ["alpha", "value"], &cc)?;
    write_curve(&a.out.join("ccd.csv"), ["alpha", "value"], &cc_density(&cc)?)?;
    written.extend(["cc.csv", "ccd.csv"]);
    if let Some(mu) = &data.mu {
        write_curve(
            &a.out.join("cc_mu.csv"),
            ["alpha", "value"],
            &concentration_curve(mu, &scores, &grid)?,
        )?;
        written.push("cc_mu.csv");
    }
    let spec = a.smoothing.spec(CalibrationSpec::curve_default())?;
    let curve = calibration_curve(
        &scores,
        &data.y,
        &data.exposure,
        &central_grid(&scores, a.points)?,
        spec,
    )?;
    io::write_columns(
        &a.out.join("calibration.csv"),
        &["score", "value"],
        &[&curve.grid, &curve.values],
    )?;
    written.push("calibration.csv");
    println!("wrote {} into {}", written.join(", "), a.out.display());
    if let Some(d) = curve.departure {
        println!("identity departure over the central 80%: {d:.6}");
    }
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let cfg = a.common.config()?;
    let table = run_sweep(&cfg)?;
    let out = &a.common.out;
    io::write_sweep(&out.join("sweep.csv"), &out.join("sweep_baseline.csv"), &table)?;
    println!("{} sweep rows written to {}", table.rows.len(), out.display());
    Ok(())
}

fn report_cmd(a: &ReportArgs) -> Result<()> {
    let cfg = a.common.config()?;
    let report = run_pipeline(&cfg, Some(&a.common.out))?;
    println!(
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>9}",
        "model", "bias", "bias_bc", "loss", "loss_bc", "spearman"
    );
    for m in &report.models {
        println!(
            "{:<12} {:>10.4} {:>10.4} {:>10.5} {:>10.5} {:>9}",
            m.name,
            m.raw.bias,
            m.corrected.bias,
            m.raw.poisson_loss,
            m.corrected.poisson_loss,
            m.spearman.map_or("n/a".into(), |r| format!("{r:.4}"))
        );
    }
    println!(
        "report and {} curve files written to {}",
        report.curve_files.len(),
        a.common.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Dominance(a) => dominance_cmd(a),
        Command::Curves(a) => curves_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("autocal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
