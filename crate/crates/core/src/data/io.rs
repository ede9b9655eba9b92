use std::path::Path;

use ndarray::Array2;

use super::{DataError, DatasetBundle, Split};

pub const FEATURES_FILE: &str = "features.csv";
pub const NOISE_FILE: &str = "noise.csv";
pub const LABELS_FILE: &str = "labels.csv";
const SPLITS: [&str; 2] = ["train", "unlabeled"];

fn file_name(split: &str, kind: &str) -> String {
    format!("{split}_{kind}")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io { path: path.display().to_string(), source },
        other => DataError::Schema { file: path.display().to_string(), line, msg: format!("{other:?}") },
    }
}

/// Writes the bundle as `<split>_features.csv`, `<split>_noise.csv` and
/// `<split>_labels.csv` for the `train` and `unlabeled` splits. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path, value_name: &str) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (split, data) in SPLITS.iter().zip([&bundle.train, &bundle.unlabeled]) {
        let path = dir.join(file_name(split, FEATURES_FILE));
        write_matrix(&path, bundle.names.iter().cloned().collect(), &data.x, false)?;
        let path = dir.join(file_name(split, NOISE_FILE));
        let mut header = vec!["row_index".to_string()];
        header.extend(bundle.names.iter().map(|n| format!("u_{n}")));
        write_matrix(&path, header, &data.u, true)?;
        let path = dir.join(file_name(split, LABELS_FILE));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["row_index", "ground_truth_label", value_name]).map_err(|e| csv_err(&path, e))?;
        for (i, (l, v)) in data.labels.iter().zip(&data.values).enumerate() {
            w.write_record([i.to_string(), l.to_string(), v.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn write_matrix(path: &Path, header: Vec<String>, m: &Array2<f64>, indexed: bool) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in m.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(row.len() + 1);
        if indexed {
            rec.push(i.to_string());
        }
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    if !path.exists() {
        return Err(DataError::Missing(path.display().to_string()));
    }
    csv::Reader::from_path(path).map_err(|e| csv_err(path, e))
}

fn check_header(path: &Path, r: &mut csv::Reader<std::fs::File>, expected: &[String]) -> Result<(), DataError> {
    let got: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(DataError::Schema {
            file: path.display().to_string(),
            line: 1,
            msg: format!("header {got:?}, expected {expected:?}"),
        });
    }
    Ok(())
}

fn parse(path: &Path, line: usize, s: &str) -> Result<f64, DataError> {
    s.trim().parse::<f64>().map_err(|_| DataError::Schema {
        file: path.display().to_string(),
        line,
        msg: format!("not a number: {s:?}"),
    })
}

/// Reads numeric rows; with `indexed`, the first column must count 0, 1, 2, …
fn read_rows(path: &Path, header: &[String], indexed: bool) -> Result<Vec<Vec<f64>>, DataError> {
    let mut r = open(path)?;
    check_header(path, &mut r, header)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let mut vals = rec.iter().map(|s| parse(path, line, s)).collect::<Result<Vec<_>, _>>()?;
        if indexed {
            if vals[0] != rows.len() as f64 {
                return Err(DataError::Schema {
                    file: path.display().to_string(),
                    line,
                    msg: format!("row_index {} out of sequence", vals[0]),
                });
            }
            vals.remove(0);
        }
        rows.push(vals);
    }
    Ok(rows)
}

fn matrix(rows: &[Vec<f64>], d: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
}

/// Reads a bundle written by [`write_bundle`]; headers must match `names` exactly.
pub fn read_bundle(dir: &Path, names: &[String]) -> Result<(DatasetBundle, String), DataError> {
    let d = names.len();
    let mut splits = Vec::new();
    let mut value_name = String::new();
    for split in SPLITS {
        let fpath = dir.join(file_name(split, FEATURES_FILE));
        let x = read_rows(&fpath, names, false)?;
        let npath = dir.join(file_name(split, NOISE_FILE));
        let mut header = vec!["row_index".to_string()];
        header.extend(names.iter().map(|n| format!("u_{n}")));
        let u = read_rows(&npath, &header, true)?;
        let lpath = dir.join(file_name(split, LABELS_FILE));
        let mut r = open(&lpath)?;
        let h: Vec<String> = r.headers().map_err(|e| csv_err(&lpath, e))?.iter().map(str::to_string).collect();
        if h.len() != 3 || h[0] != "row_index" || h[1] != "ground_truth_label" {
            return Err(DataError::Schema {
                file: lpath.display().to_string(),
                line: 1,
                msg: format!("header {h:?}, expected [row_index, ground_truth_label, <value>]"),
            });
        }
        value_name = h[2].clone();
        let rows = read_rows(&lpath, &h, true)?;
        for (path, n) in [(&npath, u.len()), (&lpath, rows.len())] {
            if n != x.len() {
                return Err(DataError::Schema {
                    file: path.display().to_string(),
                    line: n + 1,
                    msg: format!("{n} rows but {} has {}", fpath.display(), x.len()),
                });
            }
        }
        let mut labels = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r[0] != 0.0 && r[0] != 1.0 {
                return Err(DataError::Schema {
                    file: lpath.display().to_string(),
                    line: i + 2,
                    msg: format!("label {} is not 0 or 1", r[0]),
                });
            }
            labels.push(r[0] as u8);
        }
        splits.push(Split { x: matrix(&x, d), u: matrix(&u, d), labels, values: rows.iter().map(|r| r[1]).collect() });
    }
    let unlabeled = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    if train.is_empty() {
        return Err(DataError::Schema {
            file: dir.join(file_name("train", FEATURES_FILE)).display().to_string(),
            line: 2,
            msg: "no training rows".into(),
        });
    }
    Ok((DatasetBundle::new(names.to_vec(), train, unlabeled), value_name))
}
