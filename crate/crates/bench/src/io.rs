//! CSV persistence: per-iteration records, Table-style summaries, per-arm
//! reports and scene datasets.

use std::fs::File;
use std::path::Path;

use ocpls_core::metrics::{quat_norm, ErrorSummary, Pose};
use ocpls_core::problems::PoseSample;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, BenchResult};

pub const RECORD_HEADER: [&str; 6] = ["k", "train_loss", "val_loss", "step_norm", "clamp_hits", "elapsed_s"];
pub const SUMMARY_HEADER: [&str; 8] = [
    "dataset",
    "algorithm",
    "median_pos_m",
    "mean_pos_m",
    "median_rot_deg",
    "mean_rot_deg",
    "s_p",
    "s_q",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub k: u64,
    /// Loss on step `k`'s mini-batch, evaluated before the update.
    pub train_loss: f64,
    /// Validation loss after the update; logged at validation steps only.
    pub val_loss: Option<f64>,
    pub step_norm: f64,
    pub clamp_hits: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub algorithm: String,
    pub errors: ErrorSummary,
    pub s_p: f64,
    pub s_q: f64,
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_g(v: f64) -> String {
    const DIGITS: i32 = 6;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn parse_f64(field: &str, path: &Path) -> BenchResult<f64> {
    field.trim().parse::<f64>().map_err(|_| BenchError::Format {
        path: path.to_path_buf(),
        message: format!("not a number: '{field}'"),
    })
}

fn csv_writer(path: &Path) -> BenchResult<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    csv::Writer::from_path(path).map_err(|source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader(path: &Path) -> BenchResult<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(|source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes string rows under `header`.
pub fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> BenchResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let wrap = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(wrap)?;
    }
    w.flush().map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_rows(path: &Path, header: &[&str]) -> BenchResult<Vec<csv::StringRecord>> {
    let mut r = csv_reader(path)?;
    let got = r
        .headers()
        .map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(BenchError::Format {
            path: path.to_path_buf(),
            message: format!("expected header {}, got {}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.records()
        .map(|rec| {
            rec.map_err(|source| BenchError::Csv {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

pub fn record_row(r: &RunRecord) -> Vec<String> {
    vec![
        r.k.to_string(),
        fmt_g(r.train_loss),
        r.val_loss.map(fmt_g).unwrap_or_default(),
        fmt_g(r.step_norm),
        r.clamp_hits.to_string(),
        fmt_g(r.elapsed_s),
    ]
}

pub fn write_records(records: &[RunRecord], path: &Path) -> BenchResult<()> {
    write_rows(path, &RECORD_HEADER, records.iter().map(record_row))
}

pub fn read_records(path: &Path) -> BenchResult<Vec<RunRecord>> {
    let int = |s: &str| {
        s.trim().parse::<u64>().map_err(|_| BenchError::Format {
            path: path.to_path_buf(),
            message: format!("not an integer: '{s}'"),
        })
    };
    read_rows(path, &RECORD_HEADER)?
        .iter()
        .map(|rec| {
            Ok(RunRecord {
                k: int(&rec[0])?,
                train_loss: parse_f64(&rec[1], path)?,
                val_loss: if rec[2].trim().is_empty() {
                    None
                } else {
                    Some(parse_f64(&rec[2], path)?)
                },
                step_norm: parse_f64(&rec[3], path)?,
                clamp_hits: int(&rec[4])?,
                elapsed_s: parse_f64(&rec[5], path)?,
            })
        })
        .collect()
}

pub fn summary_row(r: &SummaryRow) -> Vec<String> {
    vec![
        r.dataset.clone(),
        r.algorithm.clone(),
        fmt_g(r.errors.median_pos),
        fmt_g(r.errors.mean_pos),
        fmt_g(r.errors.median_rot),
        fmt_g(r.errors.mean_rot),
        fmt_g(r.s_p),
        fmt_g(r.s_q),
    ]
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> BenchResult<()> {
    write_rows(path, &SUMMARY_HEADER, rows.iter().map(summary_row))
}

pub fn read_summary(path: &Path) -> BenchResult<Vec<SummaryRow>> {
    read_rows(path, &SUMMARY_HEADER)?
        .iter()
        .map(|rec| {
            Ok(SummaryRow {
                dataset: rec[0].to_string(),
                algorithm: rec[1].to_string(),
                errors: ErrorSummary {
                    median_pos: parse_f64(&rec[2], path)?,
                    mean_pos: parse_f64(&rec[3], path)?,
                    median_rot: parse_f64(&rec[4], path)?,
                    mean_rot: parse_f64(&rec[5], path)?,
                },
                s_p: parse_f64(&rec[6], path)?,
                s_q: parse_f64(&rec[7], path)?,
            })
        })
        .collect()
}

const POSE_COLUMNS: [&str; 7] = ["px", "py", "pz", "qw", "qx", "qy", "qz"];

/// Scene CSV: `split,f0..f{n-1},px,py,pz,qw,qx,qy,qz`. Values use the
/// shortest round-trip representation so import reproduces the data exactly.
pub fn write_scene(train: &[PoseSample], val: &[PoseSample], path: &Path) -> BenchResult<()> {
    let dim = train.first().or(val.first()).map_or(0, |s| s.feature.len());
    let mut header: Vec<String> = vec!["split".into()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    header.extend(POSE_COLUMNS.iter().map(|s| s.to_string()));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = [("train", train), ("val", val)].into_iter().flat_map(|(split, set)| {
        set.iter().map(move |s| {
            let mut row = vec![split.to_string()];
            row.extend(s.feature.iter().map(|v| v.to_string()));
            row.extend(s.pose.p.iter().chain(&s.pose.q).map(|v| v.to_string()));
            row
        })
    });
    write_rows(path, &header_refs, rows)
}

pub fn read_scene(path: &Path) -> BenchResult<(Vec<PoseSample>, Vec<PoseSample>)> {
    let bad = |message: String| BenchError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv_reader(path)?;
    let header = r
        .headers()
        .map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let n = header.len();
    if n < 9 || &header[0] != "split" || header.iter().skip(n - 7).ne(POSE_COLUMNS.iter().copied()) {
        return Err(bad("expected columns split,f0..,px,py,pz,qw,qx,qy,qz".into()));
    }
    let dim = n - 8;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| BenchError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let nums = rec.iter().skip(1).map(|f| parse_f64(f, path)).collect::<BenchResult<Vec<f64>>>()?;
        let p = [nums[dim], nums[dim + 1], nums[dim + 2]];
        let q = [nums[dim + 3], nums[dim + 4], nums[dim + 5], nums[dim + 6]];
        // Stored quaternions are already unit; only renormalize if they drifted.
        let pose = if (quat_norm(&q) - 1.0).abs() < 1e-12 {
            Pose { p, q }
        } else {
            Pose::new(p, q).map_err(|e| bad(format!("row {}: {e}", line + 2)))?
        };
        let sample = PoseSample {
            feature: nums[..dim].to_vec(),
            pose,
        };
        match &rec[0] {
            "train" => train.push(sample),
            "val" => val.push(sample),
            other => return Err(bad(format!("row {}: unknown split '{other}'", line + 2))),
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ocpls_core::problems::{make_synthetic_scene, SceneSpec};

    #[test]
    fn g_formatting() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234567, "1.23457e-05"),
            (1.0 / 3.0, "0.333333"),
            (99999.95, "99999.9"),
            (999999.5, "1e+06"),
            (1e-300, "1e-300"),
            (f64::NAN, "nan"),
            (f64::NEG_INFINITY, "-inf"),
        ];
        for (v, want) in cases {
            assert_eq!(fmt_g(v), want, "{v}");
        }
    }

    #[test]
    fn g_round_trips_to_six_digits() {
        for v in [std::f64::consts::PI, -1.0e-7 / 7.0, 6.02214076e23, 0.1 + 0.2] {
            let back: f64 = fmt_g(v).parse().unwrap();
            assert!(((back - v) / v).abs() <= 5e-6, "{v} -> {back}");
        }
    }

    #[test]
    fn empty_records_are_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "k,train_loss,val_loss,step_norm,clamp_hits,elapsed_s\n");
        assert!(read_records(&path).unwrap().is_empty());
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/r.csv");
        let recs = vec![
            RunRecord {
                k: 1,
                train_loss: 1.234567891,
                val_loss: None,
                step_norm: 0.1,
                clamp_hits: 0,
                elapsed_s: 0.0,
            },
            RunRecord {
                k: 2,
                train_loss: -3.5e-9,
                val_loss: Some(2.0 / 3.0),
                step_norm: 1e7,
                clamp_hits: 4,
                elapsed_s: 0.25,
            },
        ];
        write_records(&recs, &path).unwrap();
        let back = read_records(&path).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.k, b.k);
            assert!(((a.train_loss - b.train_loss) / a.train_loss).abs() < 5e-6);
            assert_eq!(a.val_loss.is_some(), b.val_loss.is_some());
            assert_eq!(a.clamp_hits, b.clamp_hits);
        }
        assert_eq!(back[1].val_loss, Some(0.666667));
    }

    #[test]
    fn summary_columns_in_header_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let row = SummaryRow {
            dataset: "loop".into(),
            algorithm: "OCP-LS".into(),
            errors: ErrorSummary {
                median_pos: 1.0,
                mean_pos: 2.0,
                median_rot: 3.0,
                mean_rot: 4.0,
            },
            s_p: 5.0,
            s_q: -6.0,
        };
        write_summary(std::slice::from_ref(&row), &path).unwrap();
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "dataset,algorithm,median_pos_m,mean_pos_m,median_rot_deg,mean_rot_deg,s_p,s_q\nloop,OCP-LS,1,2,3,4,5,-6\n"
        );
        assert_eq!(read_summary(&path).unwrap(), vec![row]);
    }

    #[test]
    fn scene_round_trip_is_exact() {
        let spec = SceneSpec {
            n_train: 20,
            n_val: 7,
            noise_sigma: 0.1,
            seed: 5,
            ..SceneSpec::default()
        };
        let (train, val) = make_synthetic_scene(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.csv");
        write_scene(&train, &val, &path).unwrap();
        let (t2, v2) = read_scene(&path).unwrap();
        assert_eq!(t2, train);
        assert_eq!(v2, val);
    }

    #[test]
    fn wrong_header_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        let err = read_records(&path).unwrap_err().to_string();
        assert!(err.contains("expected header"), "{err}");
    }
}
