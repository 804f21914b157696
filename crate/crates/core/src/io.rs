//! File formats: design CSV (`x,y`), dataset CSV (`x,y,z[,f2..fp]`), 4×4
//! matrix files, and atomic writes for every artifact.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::design::{Point, SamplingDesign};
use crate::error::{Error, Result};
use crate::likelihood::GeoDataset;

/// Transform applied to observations at load time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    Sqrt,
    Log,
}

impl Transform {
    pub fn apply(self, z: f64) -> Result<f64> {
        let out = match self {
            Transform::None => z,
            Transform::Sqrt if z >= 0.0 => z.sqrt(),
            Transform::Log if z > 0.0 => z.ln(),
            _ => {
                return Err(Error::InvalidData(format!(
                    "observation {z} is outside the domain of the {self} transform"
                )))
            }
        };
        Ok(out)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::None => "none",
            Transform::Sqrt => "sqrt",
            Transform::Log => "log",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Transform::None),
            "sqrt" => Ok(Transform::Sqrt),
            "log" => Ok(Transform::Log),
            other => Err(Error::config(
                "transform",
                format!("expected none, sqrt or log, got `{other}`"),
            )),
        }
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn read_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| read_error(path, e))
}

fn parse_field(value: &str, column: &str, line: usize) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidData(format!("row {line}: `{value}` in column {column} is not a finite number")))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::InvalidData(format!("missing column `{name}`")))
}

/// Design CSV body: header `x,y`, one location per row.
pub fn design_csv(design: &SamplingDesign) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y"])?;
    for p in &design.points {
        w.write_record([format!("{}", p[0]), format!("{}", p[1])])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_design_csv(path: &Path) -> Result<SamplingDesign> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    let (ix, iy) = (column_index(&headers, "x")?, column_index(&headers, "y")?);
    let mut points: Vec<Point> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        points.push([
            parse_field(&rec[ix], "x", k + 1)?,
            parse_field(&rec[iy], "y", k + 1)?,
        ]);
    }
    SamplingDesign::from_points(points, None)
}

/// Reads `x,y,z` plus optional covariate columns `f2..fp`; an intercept
/// column is always prepended.
pub fn read_dataset_csv(path: &Path, transform: Transform) -> Result<GeoDataset> {
    let mut r = reader(path)?;
    let headers = r.headers()?.clone();
    let (ix, iy, iz) = (
        column_index(&headers, "x")?,
        column_index(&headers, "y")?,
        column_index(&headers, "z")?,
    );
    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![ix, iy, iz].contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut points = Vec::new();
    let mut z = Vec::new();
    let mut extra = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 1;
        points.push([parse_field(&rec[ix], "x", line)?, parse_field(&rec[iy], "y", line)?]);
        z.push(transform.apply(parse_field(&rec[iz], "z", line)?)?);
        for (i, name) in &covariate_cols {
            extra.push(parse_field(&rec[*i], name, line)?);
        }
    }
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidData("dataset has no rows".into()));
    }
    let q = covariate_cols.len();
    let covariates = DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { extra[i * q + j - 1] });
    let design = SamplingDesign::from_points(points, None)?;
    GeoDataset::new(design, covariates, DVector::from_vec(z))
}

/// Reads a 4×4 matrix from JSON (array of four rows) or headerless CSV.
pub fn read_matrix4(path: &Path) -> Result<Matrix4<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| read_error(path, e))?;
    let rows: Vec<Vec<f64>> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)?
    } else {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .enumerate()
                    .map(|(j, v)| parse_field(v, &format!("{}", j + 1), k + 1))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        rows
    };
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        return Err(Error::InvalidData("expected a 4×4 matrix".into()));
    }
    Ok(Matrix4::from_fn(|i, j| rows[i][j]))
}

/// CSV text with leading `# ...` comment lines.
pub fn csv_with_comments<I, R>(comments: &[String], header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = Vec::new();
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Formats a float for CSV output; non-finite values become empty cells.
pub fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}
