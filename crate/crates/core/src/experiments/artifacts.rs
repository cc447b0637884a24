//! CSV, PGM and JSON artifact writers and readers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::certificates::OverlapReport;
use crate::error::{Error, Result};
use crate::fem::Grid;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, path: &Path) -> Result<T> {
    let raw = record.get(k).ok_or_else(|| Error::Parse(format!("{}: missing column {k}", path.display())))?;
    raw.trim().parse().map_err(|_| Error::Parse(format!("{}: cannot parse `{raw}`", path.display())))
}

fn check_header(reader: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader.headers().map_err(csv_error)?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse(format!("{}: expected header {}", path.display(), expected.join(","))));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRow {
    pub node_index: usize,
    pub x_coord: f64,
    pub y_coord: f64,
    pub value: f64,
}

pub fn write_solution_csv(path: &Path, grid: &Grid, x: &DVector<f64>) -> Result<()> {
    if x.len() != grid.node_count() {
        return Err(Error::DimensionMismatch { expected: grid.node_count(), actual: x.len() });
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["node_index", "x_coord", "y_coord", "value"]).map_err(csv_error)?;
    for (node, &v) in x.iter().enumerate() {
        let (cx, cy) = grid.node_coordinates(node);
        w.write_record([node.to_string(), format_value(cx), format_value(cy), format_value(v)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_solution_csv(path: &Path) -> Result<Vec<SolutionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    check_header(&mut r, &["node_index", "x_coord", "y_coord", "value"], path)?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_error)?;
        rows.push(SolutionRow {
            node_index: parse_field(&record, 0, path)?,
            x_coord: parse_field(&record, 1, path)?,
            y_coord: parse_field(&record, 2, path)?,
            value: parse_field(&record, 3, path)?,
        });
    }
    Ok(rows)
}

/// The `value` column in node order.
pub fn read_solution_vector(path: &Path) -> Result<DVector<f64>> {
    let rows = read_solution_csv(path)?;
    if rows.iter().enumerate().any(|(k, r)| r.node_index != k) {
        return Err(Error::Parse(format!("{}: node indices are not 0..n in order", path.display())));
    }
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.value)))
}

pub fn write_observation_csv(path: &Path, y: &DVector<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["boundary_index", "value"]).map_err(csv_error)?;
    for (k, &v) in y.iter().enumerate() {
        w.write_record([k.to_string(), format_value(v)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observation_csv(path: &Path) -> Result<DVector<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    check_header(&mut r, &["boundary_index", "value"], path)?;
    let mut values = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let index: usize = parse_field(&record, 0, path)?;
        if index != k {
            return Err(Error::Parse(format!("{}: boundary index {index} out of order", path.display())));
        }
        values.push(parse_field(&record, 1, path)?);
    }
    Ok(DVector::from_vec(values))
}

pub fn write_overlap_csv(path: &Path, report: &OverlapReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["tau", "ratio"]).map_err(csv_error)?;
    for (t, r) in report.tau_values.iter().zip(&report.ratios) {
        w.write_record([format_value(*t), format_value(*r)]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_overlap_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    check_header(&mut r, &["tau", "ratio"], path)?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_error)?;
        out.push((parse_field(&record, 0, path)?, parse_field(&record, 1, path)?));
    }
    Ok(out)
}

/// Gray levels for `x`, one row per grid line from the top (`y = 1`) down.
pub fn heatmap_pixels(x: &DVector<f64>, grid: &Grid) -> Result<Vec<Vec<u8>>> {
    if x.len() != grid.node_count() {
        return Err(Error::DimensionMismatch { expected: grid.node_count(), actual: x.len() });
    }
    let (lo, hi) = (x.min(), x.max());
    let side = grid.nodes_per_side();
    let level = |v: f64| -> u8 {
        if hi > lo {
            (255.0 * (v - lo) / (hi - lo)).round() as u8
        } else {
            128
        }
    };
    Ok((0..side).rev().map(|j| (0..side).map(|i| level(x[grid.node_index(i, j)])).collect()).collect())
}

/// ASCII PGM (P2); the header comment records the value range.
pub fn write_heatmap(x: &DVector<f64>, grid: &Grid, path: &Path) -> Result<()> {
    let pixels = heatmap_pixels(x, grid)?;
    let side = grid.nodes_per_side();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "P2")?;
    writeln!(out, "# min {} max {}", format_value(x.min()), format_value(x.max()))?;
    writeln!(out, "{side} {side}")?;
    writeln!(out, "255")?;
    for row in pixels {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// A parsed P2 image: width, height, the recorded range and the pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pixels: Vec<Vec<u16>>,
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let text = std::fs::read_to_string(path)?;
    let bad = |m: &str| Error::Parse(format!("{}: {m}", path.display()));
    let (mut min, mut max) = (None, None);
    let mut tokens = Vec::new();
    for line in text.lines() {
        if let Some(comment) = line.trim().strip_prefix('#') {
            let words: Vec<&str> = comment.split_whitespace().collect();
            for pair in words.windows(2) {
                match pair[0] {
                    "min" => min = pair[1].parse().ok(),
                    "max" => max = pair[1].parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    if it.next().as_deref() != Some("P2") {
        return Err(bad("not a P2 image"));
    }
    let mut number = || -> Result<usize> { it.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("truncated header or data")) };
    let (width, height, _maxval) = (number()?, number()?, number()?);
    let mut pixels = Vec::with_capacity(height);
    for _ in 0..height {
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            row.push(number()? as u16);
        }
        pixels.push(row);
    }
    Ok(Pgm { width, height, min, max, pixels })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
