//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcarnot::figures::{FIGURE_LEVEL, FIGURE_MAX_BRANCH};
use qcarnot::verify::CURVE_TOL;

#[derive(Debug, Parser)]
#[command(name = "qn", version, about = "Geodesics and kernels on anisotropic quaternion Carnot groups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Geodesic initial- and boundary-value problems.
    Geodesic {
        #[command(subcommand)]
        cmd: GeodesicCmd,
    },
    /// Samples of mu, level crossings and figure data.
    Mu(MuArgs),
    /// Heat kernel and Green's function grids.
    Kernel {
        #[command(subcommand)]
        cmd: KernelCmd,
    },
    /// Runs verification suites and writes a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Subcommand)]
pub enum GeodesicCmd {
    /// Samples the geodesic with initial velocity `v0` and multiplier `theta`.
    Ivp(IvpArgs),
    /// Enumerates geodesics from the origin to a target point.
    Connect(ConnectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Integrator {
    /// Closed-form exponential map.
    Exp,
    /// Fixed-step RK4 of the Hamiltonian system.
    Rk4,
}

#[derive(Debug, Args)]
pub struct IvpArgs {
    /// Parameter file; defaults to `a = 1` with `n` taken from `v0`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Initial horizontal velocity, comma separated, `4n` entries.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub v0: Vec<f64>,
    /// Multiplier `theta`; a single value is repeated three times.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub s_end: f64,
    #[arg(long, default_value_t = 1001)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Integrator::Exp)]
    pub integrator: Integrator,
    /// Minimum RK4 steps; rounded up to a multiple of `samples - 1`.
    #[arg(long, default_value_t = 10_000)]
    pub rk4_steps: usize,
    /// Curve CSV; the sidecar is written next to it with extension `.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConnectArgs {
    /// Parameter file; defaults to `a = 1` with `n` taken from the target.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// JSON file `{"x": [...], "z": [z1, z2, z3]}`.
    #[arg(long)]
    pub target: PathBuf,
    /// Largest `mu`-branch searched for nonzero blocks.
    #[arg(long, default_value_t = 4)]
    pub max_branch: u32,
    /// Largest index `n_l` for zero blocks.
    #[arg(long, default_value_t = 5)]
    pub max_index: u32,
    /// Residual tolerance that sets the diagnostic sample counts.
    #[arg(long, default_value_t = CURVE_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for one curve CSV per solution.
    #[arg(long)]
    pub emit_curves: Option<PathBuf>,
    /// Samples per emitted curve.
    #[arg(long, default_value_t = 1001)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct MuArgs {
    #[arg(long, default_value_t = FIGURE_LEVEL, allow_hyphen_values = true)]
    pub level: f64,
    #[arg(long, default_value_t = FIGURE_MAX_BRANCH)]
    pub max_branch: u32,
    /// Indices `k` of the perturbed `Q^2` instance whose root pictures are
    /// emitted.
    #[arg(long, value_delimiter = ',')]
    pub perturbed: Vec<u32>,
    /// Regenerate the full figure set; other options are ignored.
    #[arg(long)]
    pub figures: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum KernelCmd {
    /// Heat kernel `P(x, z, t)`.
    Heat(KernelArgs),
    /// Green's function `G(x, z)`.
    Green(KernelArgs),
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Parameter file; defaults to `a = 1` with `n` taken from the points.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// JSON file with one point `{"x": [...], "z": [...]}`.
    #[arg(long)]
    pub point: Option<PathBuf>,
    /// JSON array of points, or `ray` for dilations of `--point`.
    #[arg(long)]
    pub grid: Option<String>,
    /// Time (heat kernel only).
    #[arg(long)]
    pub t: Option<f64>,
    /// Heat kernel normalization constant.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Contour shift: `auto` or a number (Green's function only).
    #[arg(long, default_value = "auto")]
    pub eps: String,
    /// Quadrature spec JSON; missing fields take their defaults.
    #[arg(long)]
    pub quad: Option<PathBuf>,
    /// Overrides the quadrature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `all` or one suite name.
    pub suite: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Multiplies every upper bound.
    #[arg(long, default_value_t = 1.0)]
    pub tol: f64,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep the files written by the figures suite here.
    #[arg(long)]
    pub figures: Option<PathBuf>,
}

/// Dilation factors used by `--grid ray`.
pub const RAY_FACTORS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];
