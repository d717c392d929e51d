//! CSV and JSON formats for prices, dissimilarities, coefficients, and reports.
//!
//! Object indices in every file are 1-based. Floats are written in Rust's
//! shortest round-trip form, so re-reading a file recovers the exact values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::align::AlignmentResult;
use crate::cmds::InitStrategy;
use crate::coeffs::CoeffSet;
use crate::dissim::{pair_count, pair_index, pairs, DissimilaritySeries, PricePanel};
use crate::error::{FmdsError, Result};
use crate::optimizer::FitConfig;
use crate::report::{ClusterReport, ResidualReport, ShepardRow, SnapshotRow};
use crate::sim::StudyReport;

fn parse_err(line: u64, msg: impl Into<String>) -> FmdsError {
    FmdsError::Parse {
        line,
        msg: msg.into(),
    }
}

fn csv_err(e: csv::Error) -> FmdsError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FmdsError::Io(io),
        kind => parse_err(line, format!("{kind:?}")),
    }
}

/// Reads records after checking the header matches `expected` exactly.
fn records<R: Read>(reader: R, expected: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(parse_err(
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, line: u64, idx: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(idx).ok_or_else(|| parse_err(line, format!("missing `{name}`")))?;
    raw.parse()
        .map_err(|e| parse_err(line, format!("bad `{name}` value {raw:?}: {e}")))
}

fn finite(v: f64, line: u64, name: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("`{name}` must be finite, got {v}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Parses a `date,ticker,close` price file.
pub fn read_prices<R: Read>(reader: R) -> Result<PricePanel> {
    let mut rows = Vec::new();
    for (line, rec) in records(reader, &["date", "ticker", "close"])? {
        let raw: String = field(&rec, line, 0, "date")?;
        let date = NaiveDate::parse_from_str(&raw, "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date {raw:?}: {e}")))?;
        let ticker: String = field(&rec, line, 1, "ticker")?;
        if ticker.is_empty() {
            return Err(parse_err(line, "empty ticker"));
        }
        let close = finite(field(&rec, line, 2, "close")?, line, "close")?;
        if close <= 0.0 {
            return Err(parse_err(line, format!("close must be positive, got {close}")));
        }
        rows.push((date, ticker, close));
    }
    if rows.is_empty() {
        return Err(FmdsError::EmptyInput("price file has no rows".into()));
    }
    PricePanel::from_records(&rows)
}

pub fn write_prices<W: Write>(mut w: W, records: &[(NaiveDate, String, f64)]) -> Result<()> {
    writeln!(w, "date,ticker,close")?;
    for (date, ticker, close) in records {
        writeln!(w, "{},{ticker},{close}", date.format("%Y-%m-%d"))?;
    }
    Ok(())
}

/// Parses a long-format `i,j,t,d` file. Every pair `i < j` of objects
/// `1..=n` must appear exactly once at every time point.
pub fn read_dissim_long<R: Read>(reader: R) -> Result<DissimilaritySeries> {
    let mut cells: Vec<(u64, usize, usize, f64, f64)> = Vec::new();
    let mut n = 0;
    for (line, rec) in records(reader, &["i", "j", "t", "d"])? {
        let i: usize = field(&rec, line, 0, "i")?;
        let j: usize = field(&rec, line, 1, "j")?;
        if i < 1 || i >= j {
            return Err(parse_err(line, format!("need 1 <= i < j, got i = {i}, j = {j}")));
        }
        // + 0.0 folds -0.0 into 0.0 so both land in one grid slot
        let t = finite(field(&rec, line, 2, "t")?, line, "t")? + 0.0;
        let d = finite(field(&rec, line, 3, "d")?, line, "d")?;
        if d < 0.0 {
            return Err(parse_err(line, format!("negative dissimilarity {d}")));
        }
        n = n.max(j);
        cells.push((line, i - 1, j - 1, t, d));
    }
    if cells.is_empty() {
        return Err(FmdsError::EmptyInput("dissimilarity file has no rows".into()));
    }
    let mut grid: Vec<f64> = cells.iter().map(|c| c.3).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let m = grid.len();
    let slot: BTreeMap<u64, usize> = grid.iter().enumerate().map(|(k, t)| (t.to_bits(), k)).collect();
    let mut values = vec![f64::NAN; pair_count(n) * m];
    for &(line, i, j, t, d) in &cells {
        let cell = &mut values[pair_index(i, j) * m + slot[&t.to_bits()]];
        if !cell.is_nan() {
            return Err(parse_err(line, format!("duplicate entry for ({}, {}) at t = {t}", i + 1, j + 1)));
        }
        *cell = d;
    }
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        let (i, j) = crate::dissim::pair_from_index(pos / m);
        return Err(FmdsError::InsufficientData(format!(
            "no value for pair ({}, {}) at t = {}",
            i + 1,
            j + 1,
            grid[pos % m]
        )));
    }
    DissimilaritySeries::new(n, grid, values)
}

pub fn write_dissim_long<W: Write>(mut w: W, series: &DissimilaritySeries) -> Result<()> {
    writeln!(w, "i,j,t,d")?;
    let m = series.m();
    for (idx, (i, j)) in pairs(series.n()).enumerate() {
        for (k, t) in series.grid().iter().enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, j + 1, t, series.values()[idx * m + k])?;
        }
    }
    Ok(())
}

/// Writes the super matrix: one row per pair in storage order, one column
/// per time point.
pub fn write_super_matrix<W: Write>(mut w: W, series: &DissimilaritySeries) -> Result<()> {
    let sup = series.super_matrix();
    write!(w, "i,j")?;
    for t in sup.grid() {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    for r in 0..sup.rows() {
        let (i, j) = sup.row_label(r);
        write!(w, "{i},{j}")?;
        for v in sup.row(r) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_coeffs<W: Write>(mut w: W, coeffs: &CoeffSet) -> Result<()> {
    writeln!(w, "object,row,col,value")?;
    for (i, c) in coeffs.mats().iter().enumerate() {
        for r in 0..c.nrows() {
            for k in 0..c.ncols() {
                writeln!(w, "{},{},{},{}", i + 1, r + 1, k + 1, c[(r, k)])?;
            }
        }
    }
    Ok(())
}

/// Parses an `object,row,col,value` file; every entry of every matrix must
/// be present exactly once.
pub fn read_coeffs<R: Read>(reader: R) -> Result<CoeffSet> {
    let mut entries = Vec::new();
    let (mut n, mut p, mut q) = (0, 0, 0);
    for (line, rec) in records(reader, &["object", "row", "col", "value"])? {
        let i: usize = field(&rec, line, 0, "object")?;
        let r: usize = field(&rec, line, 1, "row")?;
        let k: usize = field(&rec, line, 2, "col")?;
        if i == 0 || r == 0 || k == 0 {
            return Err(parse_err(line, "indices are 1-based"));
        }
        let v = finite(field(&rec, line, 3, "value")?, line, "value")?;
        n = n.max(i);
        p = p.max(r);
        q = q.max(k);
        entries.push((line, i - 1, r - 1, k - 1, v));
    }
    if entries.is_empty() {
        return Err(FmdsError::EmptyInput("coefficient file has no rows".into()));
    }
    let mut mats = vec![DMatrix::from_element(p, q, f64::NAN); n];
    for &(line, i, r, k, v) in &entries {
        if !mats[i][(r, k)].is_nan() {
            return Err(parse_err(line, format!("duplicate entry ({}, {}, {})", i + 1, r + 1, k + 1)));
        }
        mats[i][(r, k)] = v;
    }
    if entries.len() != n * p * q {
        return Err(FmdsError::InsufficientData(format!(
            "coefficient file has {} entries, expected {n}·{p}·{q}",
            entries.len()
        )));
    }
    CoeffSet::new(mats)
}

/// Metadata written next to a coefficient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffSidecar {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub interior_knots: usize,
    pub domain: (f64, f64),
    pub seed: u64,
    pub init: InitStrategy,
    pub config: FitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl CoeffSidecar {
    pub fn spec(&self) -> Result<crate::basis::BasisSpec> {
        let spec = crate::basis::BasisSpec::new(self.interior_knots, self.domain.0, self.domain.1)?;
        if spec.q() != self.q {
            return Err(FmdsError::DimensionMismatch(format!(
                "sidecar q = {} but {} interior knots give q = {}",
                self.q,
                self.interior_knots,
                spec.q()
            )));
        }
        Ok(spec)
    }

    /// Index of the object named `key`: a label, or a 1-based index.
    pub fn resolve(&self, key: &str) -> Result<usize> {
        if let Some(pos) = self.labels.as_ref().and_then(|l| l.iter().position(|s| s == key)) {
            return Ok(pos);
        }
        match key.parse::<usize>() {
            Ok(i) if (1..=self.n).contains(&i) => Ok(i - 1),
            _ => Err(FmdsError::IndexOutOfRange(format!("unknown object {key:?}"))),
        }
    }

    pub fn label(&self, i: usize) -> String {
        self.labels
            .as_ref()
            .and_then(|l| l.get(i).cloned())
            .unwrap_or_else(|| (i + 1).to_string())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

/// Runs `body` against a buffered file at `path`.
pub fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn open(path: &Path) -> Result<std::io::BufReader<File>> {
    Ok(std::io::BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentExport {
    /// Row-major entries of `Γ̂`.
    pub gamma_hat: Vec<Vec<f64>>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub det_component: i8,
    pub max_feasibility_error: f64,
}

impl From<&AlignmentResult> for AlignmentExport {
    fn from(r: &AlignmentResult) -> Self {
        let g = &r.gamma_hat;
        AlignmentExport {
            gamma_hat: (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect(),
            objective: r.objective,
            grad_norm: r.grad_norm,
            iterations: r.iters,
            converged: r.converged,
            det_component: if r.det_sign < 0.0 { -1 } else { 1 },
            max_feasibility_error: r.max_feasibility_error,
        }
    }
}

pub fn write_replications<W: Write>(mut w: W, report: &StudyReport) -> Result<()> {
    writeln!(w, "L,m,rep,mse_dissim,mse_coeff")?;
    for c in &report.cells {
        for r in &c.replications {
            writeln!(w, "{},{},{},{},{}", c.interior_knots, c.m, r.rep + 1, r.mse_dissim, r.mse_coeff)?;
        }
    }
    Ok(())
}

pub fn write_aggregate<W: Write>(mut w: W, report: &StudyReport) -> Result<()> {
    writeln!(w, "L,m,rmse_dissim,rmse_coeff")?;
    for c in &report.cells {
        writeln!(w, "{},{},{},{}", c.interior_knots, c.m, c.rmse_dissim, c.rmse_coeff)?;
    }
    Ok(())
}

pub fn write_snapshot<W: Write>(mut w: W, rows: &[SnapshotRow], labels: &dyn Fn(usize) -> String) -> Result<()> {
    let p = rows.first().map_or(0, |r| r.x.len());
    write!(w, "object,t")?;
    for r in 1..=p {
        write!(w, ",x{r}")?;
    }
    writeln!(w)?;
    for row in rows {
        write!(w, "{},{}", labels(row.object), row.t)?;
        for x in &row.x {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_cluster<W: Write>(mut w: W, report: &ClusterReport, labels: &dyn Fn(usize) -> String) -> Result<()> {
    writeln!(w, "object,t,distance,cluster")?;
    let mut all: Vec<(usize, f64, &str)> = report
        .red
        .iter()
        .map(|&(j, d)| (j, d, "red"))
        .chain(report.blue.iter().map(|&(j, d)| (j, d, "blue")))
        .collect();
    all.sort_by_key(|e| e.0);
    for (j, d, colour) in all {
        writeln!(w, "{},{},{},{}", labels(j), report.t, d, colour)?;
    }
    Ok(())
}

pub fn write_shepard<W: Write>(mut w: W, rows: &[ShepardRow]) -> Result<()> {
    writeln!(w, "i,j,t,observed,estimated")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.i + 1, r.j + 1, r.t, r.observed, r.estimated)?;
    }
    Ok(())
}

pub fn write_residuals<W: Write>(mut w: W, report: &ResidualReport) -> Result<()> {
    writeln!(w, "i,j,t,residual")?;
    for r in &report.rows {
        writeln!(w, "{},{},{},{}", r.i + 1, r.j + 1, r.t, r.residual())?;
    }
    Ok(())
}
