//! Files written by `qn` and their loaders.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use qcarnot::algebra::GroupPoint;
use qcarnot::connectivity::{GeodesicCase, GeodesicSolution};
use qcarnot::curves::SampledCurve;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Sidecar of `geodesic ivp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvpSidecar {
    pub theta: [f64; 3],
    pub v0: Vec<f64>,
    /// `s_end |v0|`.
    pub length: f64,
    /// `|v0|^2 / 2`.
    pub energy: f64,
    pub s_end: f64,
    pub samples: usize,
    pub integrator: String,
    /// Trapezoid length of the sampled curve.
    pub arc_length: f64,
}

/// Finite-difference checks attached to each solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub endpoint_error: f64,
    pub samples: usize,
    pub horizontality: f64,
    /// `max |x'' - 2 M x'|` over `max(1, max_l 2 |theta|_l |v0_l|)`.
    pub geodesic_relative: f64,
    /// `|arc length - length| / length`.
    pub length_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(flatten)]
    pub solution: GeodesicSolution,
    pub diagnostics: Diagnostics,
    /// Curve CSV under `--emit-curves`, if written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<String>,
}

/// `solutions.json` of `geodesic connect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectReport {
    pub case: GeodesicCase,
    pub truncated: bool,
    pub max_branch: u32,
    pub max_index: u32,
    pub solutions: Vec<SolutionRecord>,
}

/// One row of a kernel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub point: GroupPoint,
    /// Time, for heat kernel rows.
    pub t: Option<f64>,
    pub value: f64,
    pub imag_diagnostic: f64,
    pub tail_estimate: f64,
}

fn kernel_header(n: usize, heat: bool) -> Vec<String> {
    let mut h: Vec<String> = qcarnot::curves::csv_header(n).into_iter().skip(1).collect();
    if heat {
        h.push("t".into());
    }
    h.extend(["value", "imag_diagnostic", "tail_estimate"].map(String::from));
    h
}

pub fn write_kernel_csv<W: Write>(rows: &[KernelRow], w: W) -> Result<()> {
    let Some(first) = rows.first() else { bail!("empty kernel grid") };
    let n = first.point.n_blocks();
    let heat = first.t.is_some();
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(kernel_header(n, heat))?;
    for r in rows {
        if r.point.n_blocks() != n || r.t.is_some() != heat {
            bail!("inconsistent kernel rows");
        }
        let mut rec: Vec<String> = r.point.coords().iter().map(|v| v.to_string()).collect();
        rec.extend(r.t.map(|t| t.to_string()));
        rec.extend([r.value, r.imag_diagnostic, r.tail_estimate].map(|v| format!("{v:e}")));
        wr.write_record(rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_kernel_csv<R: Read>(r: R) -> Result<Vec<KernelRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let heat = header.iter().any(|h| h == "t");
    let extra = if heat { 7 } else { 6 };
    if header.len() < extra + 4 || !(header.len() - extra).is_multiple_of(4) {
        bail!("unexpected kernel header with {} columns", header.len());
    }
    let n = (header.len() - extra) / 4;
    if header != kernel_header(n, heat) {
        bail!("unexpected kernel header");
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let vals: Vec<f64> = rec?
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .context("bad number in kernel CSV")?;
        let d = 4 * n + 3;
        let point = GroupPoint::from_coords(&vals[..d]);
        let (t, rest) = if heat { (Some(vals[d]), &vals[d + 1..]) } else { (None, &vals[d..]) };
        rows.push(KernelRow { point, t, value: rest[0], imag_diagnostic: rest[1], tail_estimate: rest[2] });
    }
    Ok(rows)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

pub fn read_curve(path: &Path) -> Result<SampledCurve> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(SampledCurve::read_csv(BufReader::new(f))?)
}

pub fn read_kernel_file(path: &Path) -> Result<Vec<KernelRow>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_kernel_csv(BufReader::new(f))
}
