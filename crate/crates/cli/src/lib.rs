//! Implementation of the `qn` command-line tool.
//!
//! Exit codes: 0 success, 1 verification failure, 2 bad configuration or
//! refused computation, 3 no geodesic within the caps.

pub mod args;
pub mod formats;

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use qcarnot::algebra::{dilate, dot, GroupPoint};
use qcarnot::connectivity::enumerate_geodesics;
use qcarnot::curves::{horizontal_length, SampledCurve};
use qcarnot::figures;
use qcarnot::geodesic::{battery_samples, geodesic_battery, integrate_bicharacteristic, sample_geodesic, GeodesicIvp};
use qcarnot::kernels::{green_function, heat_kernel, Eps, QuadratureSpec};
use qcarnot::params::AnisotropyParams;
use qcarnot::verify::{self, VerifyOptions};

use crate::args::{
    Cli, Command, ConnectArgs, GeodesicCmd, Integrator, IvpArgs, KernelArgs, KernelCmd, MuArgs, VerifyArgs, RAY_FACTORS,
};
use crate::formats::{
    read_json, write_json, write_kernel_csv, ConnectReport, Diagnostics, IvpSidecar, KernelRow, SolutionRecord,
};

pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NO_SOLUTION: u8 = 3;

/// An error with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_CONFIG, error: error.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<qcarnot::Error>() {
            Some(qcarnot::Error::NoSolution(_)) => EXIT_NO_SOLUTION,
            _ => EXIT_CONFIG,
        };
        Self { code, error }
    }
}

impl From<qcarnot::Error> for Failure {
    fn from(error: qcarnot::Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Sizes the global worker pool from `QN_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("QN_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::config(anyhow!("QN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(Failure::config)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Geodesic { cmd: GeodesicCmd::Ivp(a) } => cmd_ivp(&a),
        Command::Geodesic { cmd: GeodesicCmd::Connect(a) } => cmd_connect(&a),
        Command::Mu(a) => cmd_mu(&a),
        Command::Kernel { cmd: KernelCmd::Heat(a) } => cmd_kernel(&a, true),
        Command::Kernel { cmd: KernelCmd::Green(a) } => cmd_kernel(&a, false),
        Command::Verify(a) => cmd_verify(&a),
    }
}

fn load_params(path: Option<&Path>, horizontal_dim: usize) -> CliResult<AnisotropyParams> {
    let p = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            AnisotropyParams::from_json(&text).with_context(|| format!("bad parameter file {}", path.display()))?
        }
        None => {
            if horizontal_dim == 0 || !horizontal_dim.is_multiple_of(4) {
                return Err(Failure::config(anyhow!("horizontal dimension {horizontal_dim} is not a positive multiple of 4")));
            }
            AnisotropyParams::isotropic(horizontal_dim / 4)
        }
    };
    if p.horizontal_dim() != horizontal_dim {
        return Err(Failure::config(anyhow!(
            "parameters have n = {} but the input has {horizontal_dim} horizontal coordinates",
            p.n()
        )));
    }
    Ok(p)
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn cmd_ivp(a: &IvpArgs) -> CliResult<()> {
    let p = load_params(a.params.as_deref(), a.v0.len())?;
    let theta = match a.theta.as_slice() {
        [t] => [*t; 3],
        [t1, t2, t3] => [*t1, *t2, *t3],
        other => return Err(Failure::config(anyhow!("--theta takes 1 or 3 values, got {}", other.len()))),
    };
    if !(a.s_end > 0.0) || !a.s_end.is_finite() {
        return Err(Failure::config(anyhow!("--s-end must be positive")));
    }
    if a.samples < 3 {
        return Err(Failure::config(anyhow!("--samples must be at least 3")));
    }
    let iv = GeodesicIvp::new(a.v0.clone(), theta, &p)?;
    let curve = match a.integrator {
        Integrator::Exp => sample_geodesic(&iv, a.s_end, a.samples, &p)?,
        Integrator::Rk4 => {
            let seg = a.samples - 1;
            let stride = a.rk4_steps.max(seg).div_ceil(seg);
            let path = integrate_bicharacteristic(&iv, &vec![0.0; p.horizontal_dim()], stride * seg, a.s_end, &p)?;
            let full = path.to_curve()?;
            let s = full.s().iter().step_by(stride).copied().collect();
            let pts = full.points().iter().step_by(stride).cloned().collect();
            SampledCurve::new(s, pts)?
        }
    };
    curve.write_csv(std::io::BufWriter::new(formats::create(&a.out)?))?;
    let speed2 = dot(&a.v0, &a.v0);
    let sidecar = IvpSidecar {
        theta,
        v0: a.v0.clone(),
        length: a.s_end * speed2.sqrt(),
        energy: 0.5 * speed2,
        s_end: a.s_end,
        samples: a.samples,
        integrator: match a.integrator {
            Integrator::Exp => "exp",
            Integrator::Rk4 => "rk4",
        }
        .into(),
        arc_length: horizontal_length(&curve),
    };
    write_json(&sidecar_path(&a.out), &sidecar)?;
    Ok(())
}

pub fn cmd_connect(a: &ConnectArgs) -> CliResult<()> {
    let target: GroupPoint = read_json(&a.target)?;
    let p = load_params(a.params.as_deref(), target.x.len())?;
    if !(a.tol > 0.0) {
        return Err(Failure::config(anyhow!("--tol must be positive")));
    }
    if a.samples < 3 {
        return Err(Failure::config(anyhow!("--samples must be at least 3")));
    }
    let en = enumerate_geodesics(&target, a.max_branch, a.max_index, &p)?;
    if en.solutions.is_empty() {
        return Err(Failure {
            code: EXIT_NO_SOLUTION,
            error: anyhow!(
                "no geodesic found with max branch {} and max index {}",
                a.max_branch,
                a.max_index
            ),
        });
    }
    let mut solutions = Vec::with_capacity(en.solutions.len());
    for (i, sol) in en.solutions.into_iter().enumerate() {
        let iv = sol.ivp(&p)?;
        let samples = battery_samples(&iv, 1.0, a.tol, 1e-6, &p);
        let b = geodesic_battery(&iv, 1.0, samples, &p)?;
        let diagnostics = Diagnostics {
            endpoint_error: sol.endpoint_error(&p)?,
            samples,
            horizontality: b.horizontality,
            geodesic_relative: b.geodesic_relative(),
            length_error: (b.length - sol.length).abs() / sol.length,
        };
        let curve = match &a.emit_curves {
            Some(dir) => {
                let file = format!("solution_{i}.csv");
                let c = sample_geodesic(&iv, 1.0, a.samples, &p)?;
                c.write_csv(std::io::BufWriter::new(formats::create(&dir.join(&file))?))?;
                Some(file)
            }
            None => None,
        };
        solutions.push(SolutionRecord { solution: sol, diagnostics, curve });
    }
    let report = ConnectReport {
        case: en.case,
        truncated: en.truncated,
        max_branch: en.max_branch,
        max_index: en.max_index,
        solutions,
    };
    write_json(&a.out, &report)?;
    let note = if report.truncated { " (truncated infinite family)" } else { "" };
    println!("{} solution(s){note}", report.solutions.len());
    Ok(())
}

pub fn cmd_mu(a: &MuArgs) -> CliResult<()> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    if a.figures {
        let s = figures::write_all(&a.out)?;
        let counts: Vec<usize> = s.level_roots.branches.iter().map(|b| b.count).collect();
        println!("figure data written to {}; level {} counts {counts:?}", a.out.display(), s.level_roots.level);
        return Ok(());
    }
    if !a.level.is_finite() {
        return Err(Failure::config(anyhow!("--level must be finite")));
    }
    let roots = figures::write_mu_data(&a.out, a.level, a.max_branch)?;
    let counts: Vec<usize> = roots.branches.iter().map(|b| b.count).collect();
    println!("level {} counts {counts:?}", roots.level);
    if !a.perturbed.is_empty() {
        if a.perturbed.contains(&0) {
            return Err(Failure::config(anyhow!("--perturbed indices must be positive")));
        }
        for (inst, r) in figures::write_perturbed_data(&a.out, &a.perturbed, a.max_branch)? {
            let counts: Vec<usize> = r.branches.iter().map(|b| b.count).collect();
            println!("perturbed k = {} counts {counts:?}", inst.index);
        }
    }
    Ok(())
}

fn kernel_points(a: &KernelArgs) -> CliResult<Vec<GroupPoint>> {
    let point = a.point.as_deref().map(read_json::<GroupPoint>).transpose()?;
    match (a.grid.as_deref(), point) {
        (Some("ray"), Some(q)) => RAY_FACTORS.iter().map(|&l| Ok(dilate(l, &q)?)).collect(),
        (Some("ray"), None) => Err(Failure::config(anyhow!("--grid ray needs --point"))),
        (Some(path), None) => {
            let pts: Vec<GroupPoint> = read_json(Path::new(path))?;
            if pts.is_empty() {
                return Err(Failure::config(anyhow!("grid {path} is empty")));
            }
            Ok(pts)
        }
        (Some(_), Some(_)) => Err(Failure::config(anyhow!("give either --point or a grid file, not both"))),
        (None, Some(q)) => Ok(vec![q]),
        (None, None) => Err(Failure::config(anyhow!("one of --point or --grid is required"))),
    }
}

pub fn cmd_kernel(a: &KernelArgs, heat: bool) -> CliResult<()> {
    let points = kernel_points(a)?;
    let dim = points[0].x.len();
    if points.iter().any(|q| q.x.len() != dim) {
        return Err(Failure::config(anyhow!("grid points have different dimensions")));
    }
    let p = load_params(a.params.as_deref(), dim)?;
    let mut quad = match &a.quad {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            QuadratureSpec::from_json(&text).with_context(|| format!("bad quadrature file {}", path.display()))?
        }
        None => QuadratureSpec::default(),
    };
    if let Some(tol) = a.tol {
        quad.tol = tol;
    }
    let t = if heat {
        Some(a.t.ok_or_else(|| Failure::config(anyhow!("kernel heat needs --t")))?)
    } else {
        if a.t.is_some() {
            return Err(Failure::config(anyhow!("--t applies to the heat kernel only")));
        }
        None
    };
    let eps = match a.eps.as_str() {
        "auto" => Eps::Auto,
        s => Eps::Value(s.parse().map_err(|_| Failure::config(anyhow!("--eps must be `auto` or a number, got {s:?}")))?),
    };
    let mut rows = Vec::with_capacity(points.len());
    for q in points {
        let v = match t {
            Some(t) => heat_kernel(&q.x, &q.z, t, &quad, a.c, &p)?,
            None => green_function(&q.x, &q.z, eps, &quad, &p)?,
        };
        rows.push(KernelRow { point: q, t, value: v.value, imag_diagnostic: v.imag, tail_estimate: v.tail_estimate });
    }
    write_kernel_csv(&rows, std::io::BufWriter::new(formats::create(&a.out)?))?;
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    if !(a.tol > 0.0) {
        return Err(Failure::config(anyhow!("--tol must be positive")));
    }
    let opts = VerifyOptions { seed: a.seed, tol_scale: a.tol, figures_dir: a.figures.clone() };
    let report = if a.suite == "all" {
        verify::run_all(&opts)?
    } else {
        if !verify::SUITES.contains(&a.suite.as_str()) {
            return Err(Failure::config(anyhow!(
                "unknown suite {:?}; expected `all` or one of {}",
                a.suite,
                verify::SUITES.join(", ")
            )));
        }
        verify::run_suites(&[a.suite.as_str()], &opts)?
    };
    let json = report.to_json();
    match &a.out {
        Some(path) => std::fs::write(path, format!("{json}\n")).with_context(|| format!("cannot write {}", path.display()))?,
        None => println!("{json}"),
    }
    for s in &report.suites {
        eprintln!("{:<11} {}", s.name, if s.passed { "PASS" } else { "FAIL" });
    }
    if report.passed {
        return Ok(());
    }
    let failed: Vec<String> = report
        .suites
        .iter()
        .flat_map(|s| {
            s.failures().map(move |c| {
                format!("{}/{}: measured {:e} {} {:e}", s.name, c.name, c.measured, relation_text(c.relation), c.bound)
            })
        })
        .collect();
    Err(Failure { code: EXIT_VERIFY, error: anyhow!("verification failed: {}", failed.join("; ")) })
}

fn relation_text(r: verify::Relation) -> &'static str {
    match r {
        verify::Relation::AtMost => "must be <=",
        verify::Relation::AtLeast => "must be >=",
        verify::Relation::Equal => "must equal",
        verify::Relation::Info => "vs",
    }
}
