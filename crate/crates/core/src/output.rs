//! CSV and JSON artifacts of a run.
//!
//! Every run writes into its own directory `<root>/<run_id>/`:
//!
//! | file               | columns / content                              |
//! |--------------------|------------------------------------------------|
//! | `t<time>.csv`      | `x,u`                                          |
//! | `steady.csv`       | `x,u_numeric,u_predicted,abs_err`              |
//! | `predicted.csv`    | `x,u_predicted`                                |
//! | `diff_<i>_<j>.csv` | `x,diff`                                       |
//! | `run.json`         | the run summary                                |
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! identical states give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// Creates `dir` and its parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::from)
}

/// File name of the snapshot at time `t`, e.g. `t4000.csv` or `t0.5.csv`.
pub fn snapshot_name(t: f64) -> String {
    format!("t{t}.csv")
}

/// Writes named columns; the first column is the grid.
pub fn write_columns(path: &Path, grid: &Grid1D, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    debug_assert_eq!(names.len(), columns.len());
    if columns.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::invalid("every column must have one entry per grid node"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    for (i, x) in grid.nodes().iter().enumerate() {
        let mut row = vec![x.to_string()];
        row.extend(columns.iter().map(|c| c[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `x,u` for a snapshot at time `t` and returns its path.
pub fn write_snapshot(dir: &Path, grid: &Grid1D, t: f64, u: &[f64]) -> Result<PathBuf> {
    let path = dir.join(snapshot_name(t));
    write_columns(&path, grid, &["u"], &[u])?;
    Ok(path)
}

/// Writes `x,u_numeric,u_predicted,abs_err`.
pub fn write_steady(path: &Path, grid: &Grid1D, numeric: &[f64], predicted: &[f64]) -> Result<()> {
    let err: Vec<f64> = numeric.iter().zip(predicted).map(|(a, b)| (a - b).abs()).collect();
    write_columns(path, grid, &["u_numeric", "u_predicted", "abs_err"], &[numeric, predicted, &err])
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(Error::from)
}

/// Reads back an `x,<name>...` file as `(x, columns)`.
pub fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("{}: bad number `{field}`: {e}", path.display())))?,
            );
        }
    }
    Ok((header, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::new(1.0, 7).unwrap();
        let u = g.sample(|x| (x * 3.0).sin() / 7.0);
        let p = write_snapshot(dir.path(), &g, 0.5, &u).unwrap();
        assert!(p.ends_with("t0.5.csv"));
        let (header, cols) = read_columns(&p).unwrap();
        assert_eq!(header, ["x", "u"]);
        assert_eq!(cols[0], g.nodes());
        assert_eq!(cols[1], u);
    }

    #[test]
    fn steady_file_has_error_column() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::new(1.0, 3).unwrap();
        let path = dir.path().join("steady.csv");
        write_steady(&path, &g, &[1.0, 2.0, 3.0], &[1.0, 2.5, 2.0]).unwrap();
        let (header, cols) = read_columns(&path).unwrap();
        assert_eq!(header, ["x", "u_numeric", "u_predicted", "abs_err"]);
        assert_eq!(cols[3], [0.0, 0.5, 1.0]);
    }

    #[test]
    fn mismatched_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid1D::new(1.0, 3).unwrap();
        assert!(write_columns(&dir.path().join("a.csv"), &g, &["u"], &[&[1.0]]).is_err());
    }
}
