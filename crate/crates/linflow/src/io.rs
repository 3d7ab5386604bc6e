//! CSV and JSON artifacts.
//!
//! Trajectory CSVs start with a versioned comment line, then a header with
//! the fixed columns `t, loss, dist_sq, s_t, corr, balance_residual, min_sv,
//! regime`, optionally followed by `bound_value, margin`. Floats use Rust's
//! shortest round-trip exponent form, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use linflow_core::dataset::Dataset;
use linflow_core::flows::Trajectory;
use linflow_core::stability::Margins;
use linflow_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const TRAJECTORY_SCHEMA: &str = "# linflow-trajectory v1";
pub const MARGINS_SCHEMA: &str = "# linflow-margins v1";
pub const MATRIX_SCHEMA: &str = "# linflow-matrix v1";

pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "t",
    "loss",
    "dist_sq",
    "s_t",
    "corr",
    "balance_residual",
    "min_sv",
    "regime",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Parse {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Per-record bound and margin columns appended to a trajectory CSV.
pub struct BoundColumns<'a> {
    pub bound_value: &'a [f64],
    pub margin: &'a [f64],
}

pub fn trajectory_csv<S>(traj: &Trajectory<S>, extra: Option<&BoundColumns<'_>>) -> String {
    let mut out = String::new();
    let cfg = &traj.config;
    let method = serde_json::to_value(cfg.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned));
    writeln!(
        out,
        "{TRAJECTORY_SCHEMA} depth={} method={} dt={} record_every={}",
        traj.depth,
        method.unwrap_or_default(),
        fmt_f64(cfg.dt),
        cfg.record_every
    )
    .unwrap();
    out.push_str(&TRAJECTORY_COLUMNS.join(","));
    if extra.is_some() {
        out.push_str(",bound_value,margin");
    }
    out.push('\n');
    for (i, (t, row)) in traj.times.iter().zip(&traj.metrics).enumerate() {
        let fields = [
            *t,
            row.loss,
            row.dist_sq,
            row.s_t,
            row.corr,
            row.balance_residual,
            row.min_sv,
        ];
        let mut line: Vec<String> = fields.iter().map(|&x| fmt_f64(x)).collect();
        line.push(row.regime.as_str().to_string());
        if let Some(b) = extra {
            line.push(
                b.bound_value
                    .get(i)
                    .map_or_else(|| fmt_f64(f64::NAN), |&x| fmt_f64(x)),
            );
            line.push(
                b.margin
                    .get(i)
                    .map_or_else(|| fmt_f64(f64::NAN), |&x| fmt_f64(x)),
            );
        }
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_trajectory_csv<S>(
    path: &Path,
    traj: &Trajectory<S>,
    extra: Option<&BoundColumns<'_>>,
) -> Result<()> {
    write_text(path, &trajectory_csv(traj, extra))
}

pub fn margins_csv(times: &[f64], margins: &[Margins]) -> String {
    let mut out = format!("{MARGINS_SCHEMA}\nt,lower,upper,alignment,inside\n");
    for (t, m) in times.iter().zip(margins) {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(*t),
            fmt_f64(m.lower),
            fmt_f64(m.upper),
            fmt_f64(m.alignment),
            m.inside()
        )
        .unwrap();
    }
    out
}

/// A parsed CSV: leading `#` lines, the header and the rows as strings.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Option<CsvTable> {
        let comments = leading_comments(text);
        let mut reader = csv_reader(text, true);
        let columns = reader.headers().ok()?.iter().map(str::to_owned).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .ok()?;
        Some(CsvTable {
            comments,
            columns,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<CsvTable> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        CsvTable::parse(&text).ok_or_else(|| AppError::Parse {
            path: path.into(),
            reason: "ragged CSV".into(),
        })
    }

    /// A numeric column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        self.rows.iter().map(|r| r[j].parse().ok()).collect()
    }
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = format!("{MATRIX_SCHEMA} rows={} cols={}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn leading_comments(text: &str) -> Vec<String> {
    text.lines()
        .map_while(|l| l.strip_prefix('#'))
        .map(|c| c.trim().to_string())
        .collect()
}

fn csv_reader(text: &str, has_headers: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

pub fn parse_matrix_csv(text: &str) -> std::result::Result<Matrix, String> {
    let header = text.lines().next().ok_or("empty file")?;
    let dims = header
        .strip_prefix(MATRIX_SCHEMA)
        .ok_or("missing matrix header")?;
    let mut rows = None;
    let mut cols = None;
    for kv in dims.split_whitespace() {
        match kv.split_once('=') {
            Some(("rows", v)) => rows = v.parse::<usize>().ok(),
            Some(("cols", v)) => cols = v.parse::<usize>().ok(),
            _ => return Err(format!("unexpected header field `{kv}`")),
        }
    }
    let (rows, cols) = rows.zip(cols).ok_or("header needs rows= and cols=")?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for record in csv_reader(text, false).records() {
        let record = record.map_err(|e| e.to_string())?;
        if record.len() != cols {
            return Err(format!(
                "row {seen} has {} entries, expected {cols}",
                record.len()
            ));
        }
        for field in &record {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| format!("`{field}`: {e}"))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(format!("found {seen} rows, expected {rows}"));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_matrix_csv(&text).map_err(|reason| AppError::Parse {
        path: path.into(),
        reason,
    })
}

/// Writes `X.csv` and `Y.csv` under `dir` and returns their paths.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<[PathBuf; 2]> {
    let x = dir.join("X.csv");
    let y = dir.join("Y.csv");
    write_text(&x, &matrix_csv(data.x()))?;
    write_text(&y, &matrix_csv(data.y()))?;
    Ok([x, y])
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let x = read_matrix_csv(&dir.join("X.csv"))?;
    let y = read_matrix_csv(&dir.join("Y.csv"))?;
    Ok(Dataset::new(x, y)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
}

/// Collects artifact paths under one output directory.
#[derive(Debug)]
pub struct ArtifactSet {
    root: PathBuf,
    files: Vec<String>,
}

impl ArtifactSet {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| AppError::io(root, e))?;
        Ok(ArtifactSet {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `name`, recorded in the manifest.
    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.root.join(name)
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(mut self, command: &str, config_hash: &str) -> Result<Manifest> {
        self.files.sort();
        let manifest = Manifest {
            version: crate::VERSION.to_string(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            files: self.files,
        };
        write_json(&self.root.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}
