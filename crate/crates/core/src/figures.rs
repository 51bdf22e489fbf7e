//! Data behind the plots of `mu`, of the `(0, z)` geodesic families and of
//! the perturbed level equation from the mixed case. Everything is written
//! as CSV or JSON; plotting is left to external tools.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algebra::GroupPoint;
use crate::connectivity::{connect_zero_z, distance};
use crate::curves::{SampledCurve, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::mu::{mu_critical, mu_unchecked, perturbed_level_solve, MuBranch};
use crate::params::AnisotropyParams;

/// Samples of `mu` on `[t_min, t_max]`, skipping points within `pole_gap`
/// of a nonzero multiple of `pi`.
pub fn mu_samples(t_min: f64, t_max: f64, samples: usize, pole_gap: f64) -> Result<Vec<(f64, f64)>> {
    if !(t_max > t_min) || samples < 2 {
        return Err(Error::InvalidArgument("need t_min < t_max and at least 2 samples".into()));
    }
    let step = (t_max - t_min) / (samples - 1) as f64;
    Ok((0..samples)
        .map(|i| t_min + step * i as f64)
        .filter(|t| {
            let k = (t / PI).round();
            k == 0.0 || (t - k * PI).abs() > pole_gap
        })
        .map(|t| (t, mu_unchecked(t)))
        .collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

/// Roots of `mu(t) = level - slope * t` on one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRoots {
    pub branch: u32,
    pub interval: (f64, f64),
    /// `(c_m, mu(c_m))`, absent on branch 0.
    pub critical: Option<(f64, f64)>,
    pub roots: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRoots {
    pub level: f64,
    pub slope: f64,
    pub branches: Vec<BranchRoots>,
    pub total: usize,
}

pub fn level_roots(level: f64, slope: f64, max_branch: u32) -> Result<LevelRoots> {
    let branches = (0..=max_branch)
        .map(|b| {
            let br = MuBranch(b);
            let roots = perturbed_level_solve(level, slope, br)?;
            Ok(BranchRoots {
                branch: b,
                interval: br.interval(),
                critical: if b == 0 { None } else { Some(mu_critical(br)?) },
                count: roots.len(),
                roots,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = branches.iter().map(|b| b.count).sum();
    Ok(LevelRoots { level, slope, branches, total })
}

/// Scalar equation for `|theta|_1` on `Q^2` with `x_2 = 0` and
/// `z = (z_1, 0, 0)`:
/// `mu(t) = 4 |z_1| / (a_11 |x_1|^2) - t a_12^2 E_2 / (pi^2 k^2 a_11^2 |x_1|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedLevel {
    pub a11: f64,
    pub a12: f64,
    pub x1_norm_sq: f64,
    pub z1: f64,
    pub e2: f64,
    pub index: u32,
}

impl PerturbedLevel {
    pub fn level(&self) -> f64 {
        4.0 * self.z1.abs() / (self.a11 * self.x1_norm_sq)
    }

    pub fn slope(&self) -> f64 {
        let k = self.index as f64;
        self.a12.powi(2) * self.e2 / (PI * PI * k * k * self.a11.powi(2) * self.x1_norm_sq)
    }

    pub fn roots(&self, max_branch: u32) -> Result<LevelRoots> {
        if self.index == 0 {
            return Err(Error::InvalidArgument("index must be positive".into()));
        }
        level_roots(self.level(), self.slope(), max_branch)
    }
}

/// Default level for the `mu` picture: crosses branch 0 once and branches
/// 1 and 2 twice, misses branch 3.
pub const FIGURE_LEVEL: f64 = 10.0;
pub const FIGURE_MAX_BRANCH: u32 = 4;
/// Indices of the `(0, z)` geodesics drawn for `n = 1`, `a = 1`, `z = e_1`.
pub const ZERO_X_INDICES: [u32; 3] = [1, 2, 5];
/// Indices for the perturbed level picture.
pub const PERTURBED_INDICES: [u32; 3] = [1, 2, 50];

pub fn perturbed_instance(index: u32) -> PerturbedLevel {
    PerturbedLevel { a11: 1.0, a12: 1.0, x1_norm_sq: 1.0, z1: FIGURE_LEVEL / 4.0, e2: 2.0 * PI * PI, index }
}

/// One `(0, z)` geodesic of the figure set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroXCurve {
    pub index: u32,
    pub file: String,
    pub length: f64,
    pub endpoint_x_error: f64,
    pub endpoint_z_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSummary {
    pub mu_csv: String,
    pub level_roots: LevelRoots,
    pub zero_x_curves: Vec<ZeroXCurve>,
    pub perturbed: Vec<(PerturbedLevel, LevelRoots)>,
}

/// Writes the `mu` graph and its level crossings.
pub fn write_mu_data(dir: &Path, level: f64, max_branch: u32) -> Result<LevelRoots> {
    let t_max = (max_branch + 1) as f64 * PI;
    let samples = mu_samples(-PI, t_max, 2000 * (max_branch as usize + 2) + 1, 0.05)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("mu.csv"))?);
    w.write_record(["t", "mu"])?;
    for (t, m) in &samples {
        w.write_record([format!("{t:.17e}"), format!("{m:.17e}")])?;
    }
    w.flush()?;
    let roots = level_roots(level, 0.0, max_branch)?;
    write_json(&dir.join("mu_roots.json"), &roots)?;
    Ok(roots)
}

/// Writes the `(0, e_1)` geodesics of `Q^1` for the given indices.
pub fn write_zero_x_curves(dir: &Path, indices: &[u32]) -> Result<Vec<ZeroXCurve>> {
    let p = AnisotropyParams::isotropic(1);
    let z = [1.0, 0.0, 0.0];
    let target = GroupPoint::new(vec![0.0; 4], z);
    let mut out = Vec::new();
    for &k in indices {
        let sol = connect_zero_z(&z, &[k], None, &p)?;
        let curve = SampledCurve::from_fn(0.0, 1.0, DEFAULT_SAMPLES, |s| sol.point(s, &p))?;
        let file = format!("zero_x_k{k}.csv");
        curve.write_csv(create(&dir.join(&file))?)?;
        let end = sol.point(1.0, &p);
        out.push(ZeroXCurve {
            index: k,
            file,
            length: sol.length,
            endpoint_x_error: end.x.iter().fold(0.0, |a, v| a.max(v.abs())),
            endpoint_z_error: distance(&GroupPoint::new(vec![0.0; 4], end.z), &target),
        });
    }
    write_json(&dir.join("zero_x_curves.json"), &out)?;
    Ok(out)
}

/// Writes `mu` against the perturbed line for each index.
pub fn write_perturbed_data(dir: &Path, indices: &[u32], max_branch: u32) -> Result<Vec<(PerturbedLevel, LevelRoots)>> {
    let t_max = (max_branch + 1) as f64 * PI;
    let samples = mu_samples(0.0, t_max, 2000 * (max_branch as usize + 1) + 1, 0.05)?;
    let mut out = Vec::new();
    for &k in indices {
        let inst = perturbed_instance(k);
        let mut w = csv::Writer::from_writer(create(&dir.join(format!("perturbed_k{k}.csv")))?);
        w.write_record(["t", "mu", "line"])?;
        for (t, m) in &samples {
            let line = inst.level() - inst.slope() * t;
            w.write_record([format!("{t:.17e}"), format!("{m:.17e}"), format!("{line:.17e}")])?;
        }
        w.flush()?;
        out.push((inst, inst.roots(max_branch)?));
    }
    write_json(&dir.join("perturbed_roots.json"), &out)?;
    Ok(out)
}

/// Regenerates all figure data under `dir`.
pub fn write_all(dir: &Path) -> Result<FigureSummary> {
    let level_roots = write_mu_data(dir, FIGURE_LEVEL, FIGURE_MAX_BRANCH)?;
    let zero_x_curves = write_zero_x_curves(dir, &ZERO_X_INDICES)?;
    let perturbed = write_perturbed_data(dir, &PERTURBED_INDICES, FIGURE_MAX_BRANCH)?;
    let summary = FigureSummary { mu_csv: "mu.csv".into(), level_roots, zero_x_curves, perturbed };
    write_json(&dir.join("figures.json"), &summary)?;
    Ok(summary)
}
