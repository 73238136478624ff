//! CSV and JSON interchange. Floats are written with 17 significant digits so
//! `f64` values round-trip exactly; files are written to a temporary sibling
//! and renamed into place.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::curves::SweepTable;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 17 significant digits in scientific notation.
pub fn fmt_float<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes equal-length numeric columns under `header`.
pub fn write_columns<T: Scalar>(path: &Path, header: &[&str], columns: &[&[T]]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(Error::Usage("header and column counts differ".into()));
    }
    let n = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::Usage("columns have different lengths".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| fmt_float(c[i])))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// `row_id,score`, with row ids starting at 0.
pub fn write_scores<T: Scalar>(path: &Path, scores: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row_id", "score"])?;
    for (i, &s) in scores.iter().enumerate() {
        w.write_record([i.to_string(), fmt_float(s)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// `y,exposure,x1..xp[,mu]`.
pub fn write_dataset<T: Scalar>(path: &Path, data: &Dataset<T>) -> Result<()> {
    let names: Vec<String> = (1..=data.n_features()).map(|j| format!("x{j}")).collect();
    let mut header = vec!["y", "exposure"];
    header.extend(names.iter().map(String::as_str));
    let mut columns: Vec<&[T]> = vec![&data.y, &data.exposure];
    columns.extend(data.features.iter().map(Vec::as_slice));
    if let Some(mu) = &data.mu {
        header.push("mu");
        columns.push(mu);
    }
    write_columns(path, &header, &columns)
}

/// `alpha0,bias,loss,model` rows, and `model,bias,loss` for the uncorrected
/// baselines.
pub fn write_sweep<T: Scalar>(rows_path: &Path, baseline_path: &Path, table: &SweepTable<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha0", "bias", "loss", "model"])?;
    for r in &table.rows {
        w.write_record([
            fmt_float(r.alpha0),
            fmt_float(r.bias),
            fmt_float(r.loss),
            r.model.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(rows_path, &bytes)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "bias", "loss"])?;
    for b in &table.baseline {
        w.write_record([b.model.clone(), fmt_float(b.bias), fmt_float(b.loss)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(baseline_path, &bytes)
}

fn parse_cell<T: Scalar>(raw: &str, row: usize, column: &str) -> Result<T> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Ingest {
        row,
        msg: format!("column {column}: {raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Ingest {
            row,
            msg: format!("column {column}: {raw:?} is not finite"),
        });
    }
    Ok(T::lit(v))
}

fn header_index(headers: &csv::StringRecord) -> HashMap<String, usize> {
    headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect()
}

/// Reads a dataset CSV with required columns `y` and `exposure`, optional
/// `x1..xp` (consecutive from 1) and optional `mu`. Other columns are
/// ignored. Row numbers in errors count data rows from 1.
pub fn ingest<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = header_index(rdr.headers()?);
    let col = |name: &str| {
        idx.get(name).copied().ok_or_else(|| Error::Ingest {
            row: 0,
            msg: format!("missing required column {name}"),
        })
    };
    let (iy, ie) = (col("y")?, col("exposure")?);
    let ix: Vec<usize> = (1..).map_while(|j| idx.get(&format!("x{j}")).copied()).collect();
    let imu = idx.get("mu").copied();

    let mut y = Vec::new();
    let mut exposure = Vec::new();
    let mut features = vec![Vec::new(); ix.len()];
    let mut mu = imu.map(|_| Vec::new());
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec?;
        let cell = |i: usize, name: &str| -> Result<T> {
            let raw = rec.get(i).ok_or_else(|| Error::Ingest {
                row,
                msg: format!("missing cell for {name}"),
            })?;
            parse_cell(raw, row, name)
        };
        let yi: T = cell(iy, "y")?;
        if yi < T::zero() {
            return Err(Error::Ingest {
                row,
                msg: format!("response {yi} is negative"),
            });
        }
        let ei: T = cell(ie, "exposure")?;
        if !(ei > T::zero()) {
            return Err(Error::Ingest {
                row,
                msg: format!("exposure {ei} is not positive"),
            });
        }
        y.push(yi);
        exposure.push(ei);
        for (j, &i) in ix.iter().enumerate() {
            features[j].push(cell(i, &format!("x{}", j + 1))?);
        }
        if let (Some(i), Some(mu)) = (imu, mu.as_mut()) {
            let m: T = cell(i, "mu")?;
            if !(m > T::zero()) {
                return Err(Error::Ingest {
                    row,
                    msg: format!("mu {m} is not positive"),
                });
            }
            mu.push(m);
        }
    }
    if y.is_empty() {
        return Err(Error::Ingest {
            row: 0,
            msg: format!("{} has no data rows", path.display()),
        });
    }
    log::info!(
        "ingested {} rows from {} (features: {}, mu column: {})",
        y.len(),
        path.display(),
        ix.len(),
        imu.is_some()
    );
    Dataset::new(y, exposure, features, mu)
}

/// Reads the `score` column of a CSV, in file order.
pub fn read_scores<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let i = *header_index(rdr.headers()?).get("score").ok_or_else(|| Error::Ingest {
        row: 0,
        msg: format!("{} has no score column", path.display()),
    })?;
    let mut out = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(i).ok_or_else(|| Error::Ingest {
            row: r + 1,
            msg: "missing score cell".into(),
        })?;
        out.push(parse_cell(raw, r + 1, "score")?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn ingest_clean_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "y,exposure,x1\n0,1,0.5\n2,0.5,1.5\n1,2,3\n");
        let d: Dataset<f64> = ingest(&p).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.features, vec![vec![0.5, 1.5, 3.0]]);
        assert_eq!(d.exposure, vec![1.0, 0.5, 2.0]);
        assert!(d.mu.is_none());
    }

    #[test]
    fn ingest_names_the_bad_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("y,exposure\n");
        for r in 1..=10 {
            body.push_str(if r == 7 { "1,0\n" } else { "1,1\n" });
        }
        let p = write(dir.path(), "d.csv", &body);
        match ingest::<f64>(&p) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 7),
            other => panic!("expected ingest error, got {other:?}"),
        }
        let p = write(dir.path(), "n.csv", "y,exposure\n1,1\nabc,1\n");
        assert!(matches!(ingest::<f64>(&p), Err(Error::Ingest { row: 2, .. })));
        let p = write(dir.path(), "neg.csv", "y,exposure\n-1,1\n");
        assert!(matches!(ingest::<f64>(&p), Err(Error::Ingest { row: 1, .. })));
        let p = write(dir.path(), "m.csv", "y,x1\n1,1\n");
        assert!(matches!(ingest::<f64>(&p), Err(Error::Ingest { row: 0, .. })));
        assert_eq!(ingest::<f64>(&p).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::new(
            vec![0.0, 3.0, 1.0],
            vec![1.0, 0.1, 1.0 / 3.0],
            vec![vec![std::f64::consts::PI, 1e-300, 9.999999999999998]],
            Some(vec![0.1 + 0.2, 7.0, 2.5e10]),
        )
        .unwrap();
        let p = dir.path().join("out").join("d.csv");
        write_dataset(&p, &d).unwrap();
        let back: Dataset<f64> = ingest(&p).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = vec![0.7 * 6.1, 1.0 / 7.0];
        write_scores(&p, &s).unwrap();
        assert_eq!(read_scores::<f64>(&p).unwrap(), s);
        assert!(fs::read_to_string(&p).unwrap().starts_with("row_id,score\n0,"));
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(fmt_float(1.0_f64), "1.0000000000000000e0");
        assert_eq!(fmt_float(0.1_f64).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_json(&p, &vec![1, 2]).unwrap();
        write_json(&p, &vec![3]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
        assert_eq!(fs::read_to_string(&p).unwrap(), "[\n  3\n]\n");
    }
}
