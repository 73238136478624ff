use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn autocal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autocal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> String {
    let cfg = r#"{"n": 2000, "alpha0_grid": [0.05, 0.5]}"#;
    fs::write(dir.join("cfg.json"), cfg).unwrap();
    "cfg.json".into()
}

#[test]
fn stepwise_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = autocal(d, &["simulate", "--n", "3000", "--seed", "5", "--out", "sim"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["data.csv", "train.csv", "smooth.csv", "validate.csv"] {
        assert!(d.join("sim").join(f).is_file(), "{f}");
    }

    let o = autocal(
        d,
        &[
            "fit",
            "--data",
            "sim/train.csv",
            "--model",
            "boost",
            "--n-trees",
            "10",
            "--predict",
            "sim/smooth.csv",
            "--predict",
            "sim/validate.csv",
            "--out",
            "bst",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("bst/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["model"], "boost");
    assert_eq!(fit["stumps"].as_array().unwrap().len(), 10);

    let o = autocal(
        d,
        &[
            "calibrate",
            "--smooth",
            "sim/smooth.csv",
            "--smooth-scores",
            "bst/scores_smooth.csv",
            "--queries",
            "bst/scores_validate.csv",
            "--kernel",
            "tricube",
            "--alpha0",
            "0.1",
            "--out",
            "bst/corrected.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("bst/corrected.json")).unwrap()).unwrap();
    assert_eq!(summary["spec"]["kernel"], "tricube");
    assert!(summary["global_rate"].as_f64().unwrap() > 0.0);

    let o = autocal(
        d,
        &[
            "dominance",
            "--data",
            "sim/validate.csv",
            "--scores1",
            "bst/scores_validate.csv",
            "--scores2",
            "bst/corrected.csv",
            "--out",
            "dom.json",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let dom: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("dom.json")).unwrap()).unwrap();
    assert_eq!(dom["xi_grid"].as_array().unwrap().len(), 21);
    assert!(dom["cond1_grid_verified"].is_boolean());

    let o = autocal(
        d,
        &[
            "curves",
            "--data",
            "sim/validate.csv",
            "--scores",
            "bst/corrected.csv",
            "--out",
            "curves",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cc = fs::read_to_string(d.join("curves/cc.csv")).unwrap();
    assert!(cc.starts_with("alpha,value\n"));
    assert_eq!(cc.lines().count(), 101);
    assert!(cc.lines().last().unwrap().ends_with(",1.0000000000000000e0"));
    assert!(d.join("curves/cc_mu.csv").is_file());
}

#[test]
fn report_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    for out in ["a", "b"] {
        let o = autocal(d, &["report", "--config", &cfg, "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(d.join("a/report.json")).unwrap();
    assert_eq!(a, fs::read(d.join("b/report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    for f in report["curve_files"].as_array().unwrap() {
        let f = f.as_str().unwrap();
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap()
        );
    }
    let o = autocal(d, &["report", "--config", &cfg, "--seed", "9", "--out", "c"]);
    assert_eq!(code(&o), 0);
    assert_ne!(a, fs::read(d.join("c/report.json")).unwrap());
}

#[test]
fn sweep_writes_rows_and_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = small_config(d);
    let o = autocal(d, &["sweep", "--config", &cfg, "--out", "sw"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    assert!(rows.starts_with("alpha0,bias,loss,model\n"));
    assert_eq!(rows.lines().count(), 1 + 2 * 3);
    let base = fs::read_to_string(d.join("sw/sweep_baseline.csv")).unwrap();
    assert_eq!(base.lines().count(), 1 + 3);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), r#"{"split": {"fractions": [0.7, 0.4, 0.2]}}"#).unwrap();
    let o = autocal(d, &["report", "--config", "bad.json", "--out", "r"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("config"), "{}", stderr(&o));
    assert!(!d.join("r/report.json").exists());

    let o = autocal(d, &["report", "--kernel", "gaussian", "--out", "r"]);
    assert_eq!(code(&o), 2);
    let o = autocal(d, &["simulate", "--n", "0", "--out", "s"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn data_errors_exit_3_and_name_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut body = String::from("y,exposure,x1\n");
    for r in 1..=10 {
        body.push_str(if r == 7 { "1,0,2\n" } else { "1,1,2\n" });
    }
    fs::write(d.join("bad.csv"), body).unwrap();
    let o = autocal(d, &["fit", "--data", "bad.csv", "--out", "f"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("row 7"), "{}", stderr(&o));
}

#[test]
fn numeric_failures_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("zeros.csv"), "y,exposure,x1\n0,1,1\n0,1,2\n0,1,3\n").unwrap();
    let o = autocal(d, &["fit", "--data", "zeros.csv", "--out", "f"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    // two identical feature columns make the design rank deficient
    fs::write(d.join("dup.csv"), "y,exposure,x1,x2\n1,1,1,1\n2,1,2,2\n4,1,3,3\n").unwrap();
    let o = autocal(d, &["fit", "--data", "dup.csv", "--out", "f"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn simulated_data_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = autocal(d, &["simulate", "--n", "200", "--shape", "bivariate", "--out", "sim"]);
    assert_eq!(code(&o), 0);
    let data: autocal::data::Dataset<f64> = autocal::io::ingest(&d.join("sim/data.csv")).unwrap();
    let expected: autocal::data::Dataset<f64> = autocal::simdata::simulate(
        &autocal::simdata::SimConfig::new(200, 42, autocal::simdata::Shape::Bivariate).unwrap(),
    );
    assert_eq!(data, expected);
}
