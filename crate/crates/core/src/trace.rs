//! CSV job traces, spot-price histories and result tables, plus Pareto
//! fitting and synthetic workload generation.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::model::{JobSpec, ParetoParams, SampleStream};

pub const TRACE_HEADER: [&str; 7] = [
    "job_id",
    "submit_time_sec",
    "num_tasks",
    "t_min_sec",
    "beta",
    "deadline_sec",
    "price_per_vm_sec",
];

pub const PRICE_HEADER: [&str; 2] = ["timestamp_sec", "price_per_vm_sec"];

pub const RESULT_HEADER: [&str; 9] = [
    "job_id",
    "strategy",
    "r_opt",
    "pocd_analytic",
    "cost_analytic",
    "utility",
    "pocd_mc",
    "cost_mc",
    "seed",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}, column `{column}`: {reason}")]
    ParseError {
        line: u64,
        column: String,
        reason: String,
    },

    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
}

pub type TraceResult<T> = std::result::Result<T, TraceError>;

fn io_err(path: &Path, source: io::Error) -> TraceError {
    TraceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> TraceError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => TraceError::ParseError {
            line,
            column: String::new(),
            reason: format!("{other:?}"),
        },
    }
}

/// One job in a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub job_id: String,
    pub submit_time_sec: f64,
    pub num_tasks: u32,
    pub t_min_sec: f64,
    pub beta: f64,
    pub deadline_sec: f64,
    pub price_per_vm_sec: f64,
}

impl TraceRecord {
    pub fn to_job(&self) -> Result<JobSpec> {
        JobSpec::new(
            self.job_id.clone(),
            self.submit_time_sec,
            self.num_tasks,
            self.deadline_sec,
            self.price_per_vm_sec,
            ParetoParams::new(self.t_min_sec, self.beta)?,
        )
    }
}

impl From<&JobSpec> for TraceRecord {
    fn from(job: &JobSpec) -> Self {
        Self {
            job_id: job.job_id.clone(),
            submit_time_sec: job.submit_time,
            num_tasks: job.num_tasks,
            t_min_sec: job.dist.t_min(),
            beta: job.dist.beta(),
            deadline_sec: job.deadline,
            price_per_vm_sec: job.price,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub timestamp_sec: f64,
    pub price_per_vm_sec: f64,
}

/// One optimized (and optionally simulated) job/strategy pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub job_id: String,
    pub strategy: String,
    pub r_opt: u32,
    pub pocd_analytic: f64,
    pub cost_analytic: f64,
    /// `-inf` when no `r` clears the PoCD floor.
    pub utility: f64,
    pub pocd_mc: Option<f64>,
    pub cost_mc: Option<f64>,
    pub seed: Option<u64>,
}

/// `%.9g`-style rendering: 9 significant digits, trailing zeros trimmed,
/// exponent form outside `[1e-5, 1e9)`. Infinities print as `inf`/`-inf`.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_float(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

struct Row<'a> {
    line: u64,
    record: &'a csv::StringRecord,
    header: &'a [&'a str],
}

impl Row<'_> {
    fn fail(&self, col: usize, reason: impl Into<String>) -> TraceError {
        TraceError::ParseError {
            line: self.line,
            column: self.header[col].to_string(),
            reason: reason.into(),
        }
    }

    fn raw(&self, col: usize) -> TraceResult<&str> {
        self.record
            .get(col)
            .ok_or_else(|| self.fail(col, "missing field"))
    }

    fn finite(&self, col: usize) -> TraceResult<f64> {
        let s = self.raw(col)?;
        match parse_float(s) {
            Some(v) if v.is_finite() => Ok(v),
            Some(_) => Err(self.fail(col, format!("`{s}` is not finite"))),
            None => Err(self.fail(col, format!("`{s}` is not a number"))),
        }
    }

    fn any_float(&self, col: usize) -> TraceResult<f64> {
        let s = self.raw(col)?;
        parse_float(s).ok_or_else(|| self.fail(col, format!("`{s}` is not a number")))
    }

    fn opt_float(&self, col: usize) -> TraceResult<Option<f64>> {
        if self.raw(col)?.trim().is_empty() {
            Ok(None)
        } else {
            self.any_float(col).map(Some)
        }
    }

    fn integer<T: std::str::FromStr>(&self, col: usize) -> TraceResult<T> {
        let s = self.raw(col)?;
        s.trim()
            .parse()
            .map_err(|_| self.fail(col, format!("`{s}` is not a non-negative integer")))
    }
}

fn reader<R: Read>(input: R, path: &Path, header: &[&str]) -> TraceResult<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let found = rdr.headers().map_err(|e| csv_err(path, e))?;
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(TraceError::SchemaMismatch {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

fn open(path: &Path) -> TraceResult<File> {
    File::open(path).map_err(|e| io_err(path, e))
}

fn for_each_row<R: Read>(
    input: R,
    path: &Path,
    header: &[&str],
    mut f: impl FnMut(&Row<'_>) -> TraceResult<()>,
) -> TraceResult<()> {
    let mut rdr = reader(input, path, header)?;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => return Ok(()),
            Ok(true) => {}
            Err(e) => return Err(csv_err(path, e)),
        }
        let line = record.position().map_or(0, |p| p.line());
        let row = Row {
            line,
            record: &record,
            header,
        };
        if record.len() != header.len() {
            return Err(TraceError::ParseError {
                line,
                column: String::new(),
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        f(&row)?;
    }
}

fn parse_trace_row(row: &Row<'_>) -> TraceResult<JobSpec> {
    let job_id = row.raw(0)?.to_string();
    let submit = row.finite(1)?;
    let num_tasks: u32 = row.integer(2)?;
    if num_tasks == 0 {
        return Err(row.fail(2, "num_tasks must be >= 1"));
    }
    let t_min = row.finite(3)?;
    if t_min <= 0.0 {
        return Err(row.fail(3, "t_min_sec must be > 0"));
    }
    let beta = row.finite(4)?;
    if beta <= 0.0 {
        return Err(row.fail(4, "beta must be > 0"));
    }
    let deadline = row.finite(5)?;
    if deadline <= t_min {
        return Err(row.fail(5, "deadline_sec must be > t_min_sec"));
    }
    let price = row.finite(6)?;
    if price < 0.0 {
        return Err(row.fail(6, "price_per_vm_sec must be >= 0"));
    }
    let dist = ParetoParams::new(t_min, beta).map_err(|e| row.fail(4, e.to_string()))?;
    JobSpec::new(job_id, submit, num_tasks, deadline, price, dist)
        .map_err(|e| row.fail(0, e.to_string()))
}

/// Reads a trace from any reader; `path` only labels errors.
pub fn read_trace<R: Read>(input: R, path: &Path) -> TraceResult<Vec<JobSpec>> {
    let mut jobs = Vec::new();
    for_each_row(input, path, &TRACE_HEADER, |row| {
        jobs.push(parse_trace_row(row)?);
        Ok(())
    })?;
    jobs.sort_by(|a, b| a.submit_time.total_cmp(&b.submit_time));
    Ok(jobs)
}

/// Loads a trace, one [`JobSpec`] per row, sorted by submit time (stable).
pub fn load_trace(path: impl AsRef<Path>) -> TraceResult<Vec<JobSpec>> {
    let path = path.as_ref();
    read_trace(open(path)?, path)
}

fn write_with<W: Write>(
    out: W,
    path: &Path,
    f: impl FnOnce(&mut csv::Writer<W>) -> csv::Result<()>,
) -> TraceResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    f(&mut w).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes trace records with shortest round-trip float formatting.
pub fn write_trace_to<W: Write>(records: &[TraceRecord], out: W) -> TraceResult<()> {
    write_with(out, Path::new("<output>"), |w| {
        w.write_record(TRACE_HEADER)?;
        for r in records {
            w.serialize(r)?;
        }
        Ok(())
    })
}

pub fn write_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> TraceResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_trace_to(records, file)
}

/// Loads a price history; timestamps must be strictly increasing.
pub fn load_prices(path: impl AsRef<Path>) -> TraceResult<Vec<PriceRecord>> {
    let path = path.as_ref();
    let mut prices: Vec<PriceRecord> = Vec::new();
    for_each_row(open(path)?, path, &PRICE_HEADER, |row| {
        let ts = row.finite(0)?;
        if let Some(prev) = prices.last() {
            if ts <= prev.timestamp_sec {
                return Err(row.fail(0, "timestamps must be strictly increasing"));
            }
        }
        let price = row.finite(1)?;
        if price < 0.0 {
            return Err(row.fail(1, "price must be >= 0"));
        }
        prices.push(PriceRecord {
            timestamp_sec: ts,
            price_per_vm_sec: price,
        });
        Ok(())
    })?;
    Ok(prices)
}

pub fn write_prices(prices: &[PriceRecord], path: impl AsRef<Path>) -> TraceResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_with(file, path, |w| {
        w.write_record(PRICE_HEADER)?;
        for p in prices {
            w.serialize(p)?;
        }
        Ok(())
    })
}

/// Price in force at `t`: the latest record at or before `t`, or the first
/// record when `t` precedes them all. `None` for an empty history.
pub fn price_at(prices: &[PriceRecord], t: f64) -> Option<f64> {
    let first = prices.first()?;
    let idx = prices.partition_point(|p| p.timestamp_sec <= t);
    Some(if idx == 0 {
        first.price_per_vm_sec
    } else {
        prices[idx - 1].price_per_vm_sec
    })
}

fn opt_cell<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

pub fn write_results_to<W: Write>(rows: &[ResultRow], out: W) -> TraceResult<()> {
    write_with(out, Path::new("<output>"), |w| {
        w.write_record(RESULT_HEADER)?;
        for r in rows {
            w.write_record([
                r.job_id.clone(),
                r.strategy.clone(),
                r.r_opt.to_string(),
                format_sig9(r.pocd_analytic),
                format_sig9(r.cost_analytic),
                format_sig9(r.utility),
                opt_cell(r.pocd_mc, format_sig9),
                opt_cell(r.cost_mc, format_sig9),
                opt_cell(r.seed, |s| s.to_string()),
            ])?;
        }
        Ok(())
    })
}

/// Writes results with 9 significant digits per float.
pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> TraceResult<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_results_to(rows, file)
}

pub fn load_results(path: impl AsRef<Path>) -> TraceResult<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut rows = Vec::new();
    for_each_row(open(path)?, path, &RESULT_HEADER, |row| {
        let seed = row.raw(8)?.trim();
        rows.push(ResultRow {
            job_id: row.raw(0)?.to_string(),
            strategy: row.raw(1)?.to_string(),
            r_opt: row.integer(2)?,
            pocd_analytic: row.any_float(3)?,
            cost_analytic: row.any_float(4)?,
            utility: row.any_float(5)?,
            pocd_mc: row.opt_float(6)?,
            cost_mc: row.opt_float(7)?,
            seed: if seed.is_empty() {
                None
            } else {
                Some(row.integer(8)?)
            },
        });
        Ok(())
    })?;
    Ok(rows)
}

/// Maximum-likelihood Pareto fit: `t_min = min x`, `beta = n / sum ln(x / t_min)`.
pub fn fit_pareto(samples: &[f64]) -> Result<ParetoParams> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { n: samples.len() });
    }
    if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::param(
            "samples",
            format!("must be finite and > 0, got {bad}"),
        ));
    }
    let t_min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let log_sum: f64 = samples.iter().map(|x| (x / t_min).ln()).sum();
    if log_sum == 0.0 {
        return Err(Error::DegenerateSample { n: samples.len() });
    }
    ParetoParams::new(t_min, samples.len() as f64 / log_sum)
}

/// Ranges for [`generate_workload`]; every range is inclusive `(lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub num_jobs: usize,
    /// Submit times are uniform on `[0, span_sec]`.
    pub span_sec: f64,
    pub num_tasks: (u32, u32),
    pub t_min_sec: (f64, f64),
    /// Lower end must exceed 1 so the mean (and hence the deadline) is finite.
    pub beta: (f64, f64),
    pub price_per_vm_sec: (f64, f64),
    /// Deadline as a multiple of the mean task time.
    pub deadline_multiple: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            num_jobs: 100,
            span_sec: 3600.0,
            num_tasks: (1, 100),
            t_min_sec: (5.0, 30.0),
            beta: (1.1, 1.9),
            price_per_vm_sec: (1e-5, 5e-5),
            deadline_multiple: 2.0,
        }
    }
}

impl WorkloadSpec {
    fn validate(&self) -> Result<()> {
        let range = |name: &'static str, (lo, hi): (f64, f64), min_lo: f64, strict: bool| {
            let lo_ok = if strict { lo > min_lo } else { lo >= min_lo };
            if !(lo.is_finite() && hi.is_finite() && lo_ok && lo <= hi) {
                let op = if strict { ">" } else { ">=" };
                return Err(Error::InvalidRange {
                    name,
                    reason: format!("need {min_lo} {op} lo <= hi, got ({lo}, {hi})"),
                });
            }
            Ok(())
        };
        range("span_sec", (0.0, self.span_sec), 0.0, false)?;
        range("t_min_sec", self.t_min_sec, 0.0, true)?;
        range("beta", self.beta, 1.0, true)?;
        range("price_per_vm_sec", self.price_per_vm_sec, 0.0, false)?;
        let (lo, hi) = self.num_tasks;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidRange {
                name: "num_tasks",
                reason: format!("need 1 <= lo <= hi, got ({lo}, {hi})"),
            });
        }
        if !(self.deadline_multiple >= 1.0 && self.deadline_multiple.is_finite()) {
            return Err(Error::InvalidRange {
                name: "deadline_multiple",
                reason: format!("must be >= 1, got {}", self.deadline_multiple),
            });
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Synthetic trace: parameters uniform within the ranges, deadline
/// `m * (t_min + t_min / (beta - 1))`, rows sorted by submit time.
/// Identical output for identical `(spec, seed)`.
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Result<Vec<TraceRecord>> {
    spec.validate()?;
    let mut rng = SampleStream::new(seed, 0).rng();
    let mut rows: Vec<TraceRecord> = (0..spec.num_jobs)
        .map(|i| {
            let submit = uniform(&mut rng, (0.0, spec.span_sec));
            let num_tasks = rng.gen_range(spec.num_tasks.0..=spec.num_tasks.1);
            let t_min = uniform(&mut rng, spec.t_min_sec);
            let beta = uniform(&mut rng, spec.beta);
            let price = uniform(&mut rng, spec.price_per_vm_sec);
            TraceRecord {
                job_id: format!("job-{i:05}"),
                submit_time_sec: submit,
                num_tasks,
                t_min_sec: t_min,
                beta,
                deadline_sec: spec.deadline_multiple * (t_min + t_min / (beta - 1.0)),
                price_per_vm_sec: price,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.submit_time_sec.total_cmp(&b.submit_time_sec));
    Ok(rows)
}
