//! On-disk formats.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! every file reads back bit for bit.
//!
//! Projector bundle (text, one keyword per section):
//!
//! ```text
//! cis-projector 1
//! dim <n>
//! rank <r>
//! eigenvalues
//! <n values>
//! u
//! <n lines, line j = column j of U>
//! v
//! <n lines, line j = column j of V = C_prior U>
//! ```
//!
//! Dims-header matrices (CSV): a first line `rows,cols`, then one line per
//! row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cis_core::Projector;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const BUNDLE_MAGIC: &str = "cis-projector 1";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn parse_f64(s: &str, what: &str) -> CliResult<f64> {
    s.trim().parse().map_err(|_| CliError::Input(format!("{what}: cannot parse {s:?} as a number")))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(fmt_f64).collect::<Vec<_>>().join(" ")
}

pub fn write_projector(path: &Path, proj: &Projector) -> CliResult<()> {
    let n = proj.dim();
    let mut text = format!("{BUNDLE_MAGIC}\ndim {n}\nrank {}\neigenvalues\n", proj.rank());
    text += &join(proj.eigenvalues().iter().copied());
    text += "\nu\n";
    for col in proj.u_full().column_iter() {
        text += &join(col.iter().copied());
        text.push('\n');
    }
    text += "v\n";
    for col in proj.v_full().column_iter() {
        text += &join(col.iter().copied());
        text.push('\n');
    }
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_projector(path: &Path) -> CliResult<Projector> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_projector(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_projector(text: &str) -> CliResult<Projector> {
    let bad = |msg: &str| CliError::Input(format!("projector bundle: {msg}"));
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(&format!("missing {what}")));
    if next("header")? != BUNDLE_MAGIC {
        return Err(bad("unknown header"));
    }
    let field = |line: &str, key: &str| -> CliResult<usize> {
        line.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(&format!("expected `{key} <integer>`, got {line:?}")))
    };
    let n = field(next("dim")?, "dim")?;
    let r = field(next("rank")?, "rank")?;
    if r > n {
        return Err(bad(&format!("rank {r} exceeds dimension {n}")));
    }
    let row = |line: &str, what: &str| -> CliResult<Vec<f64>> {
        let v: Vec<f64> = line.split_whitespace().map(|s| parse_f64(s, what)).collect::<CliResult<_>>()?;
        if v.len() != n {
            return Err(bad(&format!("{what} has {} values, expected {n}", v.len())));
        }
        Ok(v)
    };
    if next("eigenvalues")? != "eigenvalues" {
        return Err(bad("expected `eigenvalues`"));
    }
    let eig = DVector::from_vec(row(next("eigenvalue row")?, "eigenvalues")?);
    let mut matrix = |name: &str| -> CliResult<DMatrix<f64>> {
        if next(name)? != name {
            return Err(bad(&format!("expected `{name}`")));
        }
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            data.extend(row(next(name)?, &format!("column {j} of {name}"))?);
        }
        Ok(DMatrix::from_vec(n, n, data))
    };
    let u = matrix("u")?;
    let v = matrix("v")?;
    Ok(Projector::from_parts(u, v, r, eig))
}

/// Writes a matrix with a `rows,cols` first line.
pub fn write_dims_csv(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = create(path)?;
    let mut text = format!("{},{}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        text += &row.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",");
        text.push('\n');
    }
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_dims_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let bad = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| CliError::io(path, e))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| bad(format!("bad dims line {header:?}")))?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("dims line must be `rows,cols`, got {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line.split(',').map(|s| parse_f64(s, &format!("row {i}"))).collect::<CliResult<_>>()?;
        if row.len() != cols {
            return Err(bad(format!("row {i} has {} values, expected {cols}", row.len())));
        }
        data.extend(row);
    }
    if data.len() != rows * cols {
        return Err(bad(format!("expected {rows} rows, found {}", data.len() / cols.max(1))));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Table of numbers with a header row, written through the `csv` crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let to_err = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(&self.header).map_err(to_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|x| fmt_f64(*x))).map_err(to_err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let to_err = |e: csv::Error| CliError::Input(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(to_err)?;
        let header = r.headers().map_err(to_err)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(to_err)?;
            rows.push(rec.iter().map(|s| parse_f64(s, &path.display().to_string())).collect::<CliResult<_>>()?);
        }
        Ok(Self { header, rows })
    }
}

/// One line of a run record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum RunLine {
    Run {
        method: String,
        problem: String,
        seed: u64,
        dim: usize,
        /// ESS of the initial prior-sample weights (iterative runs).
        initial_ess: Option<f64>,
    },
    Iteration {
        iteration: usize,
        rank: usize,
        eigenvalues: Vec<f64>,
        angles: Option<Vec<f64>>,
        e_sqrt_w: Option<f64>,
        var_sqrt_w: Option<f64>,
        e_cond_var_w: Option<f64>,
        hellinger_sq_bound: Option<f64>,
        ess: f64,
        archive_size: usize,
        acceptance_rate: f64,
        evaluations: usize,
    },
    Stage {
        stage: usize,
        beta: f64,
        next_beta: f64,
        rank: usize,
        eigenvalues: Vec<f64>,
        ess: f64,
        particle_ess: f64,
        acceptance_rate: f64,
        pcn_step: f64,
        evaluations: usize,
    },
    Summary {
        rank: usize,
        evaluations: usize,
        eigenvalues: Vec<f64>,
        beta: Option<f64>,
    },
}

pub fn write_jsonl(path: &Path, lines: &[RunLine]) -> CliResult<()> {
    let mut w = create(path)?;
    for line in lines {
        let s = serde_json::to_string(line).map_err(|e| CliError::Input(e.to_string()))?;
        writeln!(w, "{s}").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_jsonl(path: &Path) -> CliResult<Vec<RunLine>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1)))?);
    }
    Ok(out)
}
