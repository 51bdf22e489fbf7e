//! Geodesics from the origin to a prescribed endpoint.
//!
//! Four cases are distinguished by the target `(x, z)`:
//!
//! * `z = 0`: the straight line, unique;
//! * `x = 0`: a family indexed by positive integers `n_l` with
//!   `|theta|_l = pi n_l`;
//! * every block `x_l != 0`: finitely many geodesics, one for each root of
//!   the system in the per-block norms `|theta|_l` inside a chosen box of
//!   `mu`-branches;
//! * some blocks zero: the two mechanisms combined.
//!
//! All nontrivial cases share one square system. For blocks with
//! `x_l != 0` the unknown is `t_l = |theta|_l`; for zero blocks it is the
//! energy `E_l = |v0_l|^2`. With
//! `S_m = sum_{x_l != 0} a_{ml}^2 |x_l|^2 mu(t_l) / t_l + sum_{x_l = 0} a_{ml}^2 E_l / (pi n_l)^2`
//! the multipliers are `theta_m = 4 z_m / S_m` and every block must satisfy
//! `sum_m 16 z_m^2 a_{ml}^2 / S_m^2 = T_l^2`, where `T_l` is `t_l` or
//! `pi n_l`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{block_norm_sq, dot, mat4_apply, theta_block, theta_norms, GroupPoint};
use crate::error::{Error, Result};
use crate::geodesic::{exp_map, GeodesicIvp};
use crate::mu::{mu_prime_unchecked, mu_unchecked, MuBranch};
use crate::params::AnisotropyParams;

/// Newton iteration cap.
pub const NEWTON_MAX_ITER: usize = 100;
/// Newton stops once the scaled step falls below this.
pub const NEWTON_STEP_TOL: f64 = 1e-12;
/// Starting points per monotone sub-interval of a branch.
pub const STARTS_PER_PIECE: usize = 5;
/// Roots with `|theta|_l` this close to `pi Z` are rejected for nonzero blocks.
pub const POLE_REJECT: f64 = 1e-8;
/// Deduplication threshold.
pub const DEDUP_TOL: f64 = 1e-8;
/// Largest accepted endpoint error, relative to `max(1, |target|)`.
pub const ENDPOINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GeodesicCase {
    XOnly,
    ZOnly,
    Full,
    Mixed,
}

impl GeodesicCase {
    pub fn of(target: &GroupPoint) -> Option<Self> {
        let n = target.n_blocks();
        let zero_z = target.z.iter().all(|v| *v == 0.0);
        let zero_blocks = (0..n).filter(|&l| block_norm_sq(&target.x, l) == 0.0).count();
        match (zero_blocks == n, zero_z) {
            (true, true) => None,
            (false, true) => Some(Self::XOnly),
            (true, false) => Some(Self::ZOnly),
            (false, false) if zero_blocks == 0 => Some(Self::Full),
            (false, false) => Some(Self::Mixed),
        }
    }

    /// Whether the case admits infinitely many geodesics.
    pub fn is_infinite_family(self) -> bool {
        matches!(self, Self::ZOnly | Self::Mixed)
    }
}

/// One geodesic from the origin to `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSolution {
    pub case: GeodesicCase,
    /// Blocks with `x_l = 0` at the endpoint.
    pub zero_blocks: Vec<usize>,
    /// `n_l` for the zero blocks, in the same order.
    pub multiindex: Option<Vec<u32>>,
    /// `mu`-branch of `|theta|_l` for the nonzero blocks, in block order.
    pub branches: Option<Vec<u32>>,
    pub theta_norms: Vec<f64>,
    pub theta: [f64; 3],
    pub v0: Vec<f64>,
    pub length: f64,
    pub target: GroupPoint,
}

impl GeodesicSolution {
    pub fn ivp(&self, p: &AnisotropyParams) -> Result<GeodesicIvp> {
        GeodesicIvp::new(self.v0.clone(), self.theta, p)
    }

    /// `|exp_map(1) - target|` over all coordinates.
    pub fn endpoint_error(&self, p: &AnisotropyParams) -> Result<f64> {
        let (q, _) = exp_map(&self.ivp(p)?, 1.0, p);
        Ok(distance(&q, &self.target))
    }

    /// Point at parameter `s` from the case-specific closed form. For
    /// nonzero blocks the curve is written in terms of the endpoint `x_l`
    /// rather than `v0`, which gives an independent route to `exp_map`.
    pub fn point(&self, s: f64, p: &AnisotropyParams) -> GroupPoint {
        if self.case == GeodesicCase::XOnly {
            return GroupPoint::new(self.target.x.iter().map(|v| s * v).collect(), [0.0; 3]);
        }
        let n = p.n();
        let mut x = Vec::with_capacity(4 * n);
        let mut z = [0.0; 3];
        for l in 0..n {
            let t = self.theta_norms[l];
            let st = s * t;
            let zero = self.zero_blocks.contains(&l);
            let weight = if zero {
                let v0 = &self.v0[4 * l..4 * l + 4];
                let mv = mat4_apply(&theta_block(&self.theta, p, l), v0);
                let a = (st.sin() / t).powi(2);
                let b = (2.0 * st).sin() / (2.0 * t);
                x.extend((0..4).map(|k| a * mv[k] + b * v0[k]));
                block_norm_sq(&self.v0, l) / (4.0 * t * t)
            } else {
                let xl = self.target.block(l);
                let mx = mat4_apply(&theta_block(&self.theta, p, l), xl);
                let cot = t.cos() / t.sin();
                let sin2 = st.sin().powi(2);
                let cm = 0.5 * (2.0 * cot * sin2 - (2.0 * st).sin()) / t;
                let ci = 0.5 * (cot * (2.0 * st).sin() + 2.0 * sin2);
                x.extend((0..4).map(|k| cm * mx[k] + ci * xl[k]));
                block_norm_sq(&self.target.x, l) / (4.0 * t.sin().powi(2))
            };
            let ramp = s - (2.0 * st).sin() / (2.0 * t);
            for (m, zm) in z.iter_mut().enumerate() {
                *zm += self.theta[m] * p.a(m, l).powi(2) * weight * ramp;
            }
        }
        GroupPoint::new(x, z)
    }
}

pub(crate) fn distance(a: &GroupPoint, b: &GroupPoint) -> f64 {
    a.x.iter()
        .zip(&b.x)
        .map(|(u, v)| (u - v).powi(2))
        .chain(a.z.iter().zip(&b.z).map(|(u, v)| (u - v).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// The unique geodesic to `(x, 0)`: the straight line `s x`.
pub fn connect_x_zero(x: &[f64], p: &AnisotropyParams) -> Result<GeodesicSolution> {
    p.check_horizontal(x)?;
    let len = dot(x, x).sqrt();
    if len == 0.0 {
        return Err(Error::InvalidArgument("target is the origin".into()));
    }
    Ok(GeodesicSolution {
        case: GeodesicCase::XOnly,
        zero_blocks: Vec::new(),
        multiindex: None,
        branches: None,
        theta_norms: vec![0.0; p.n()],
        theta: [0.0; 3],
        v0: x.to_vec(),
        length: len,
        target: GroupPoint::new(x.to_vec(), [0.0; 3]),
    })
}

/// Energies of the zero blocks in the mixed case.
#[derive(Debug, Clone, PartialEq)]
pub enum ZeroBlockEnergies {
    /// Prescribed `E_l`; a root is kept only if the zero blocks close up,
    /// i.e. `|theta|_l = pi n_l`.
    Given(Vec<f64>),
    /// Solved for together with the nonzero-block unknowns.
    Closure,
}

/// The square system shared by the nontrivial cases.
struct System<'a> {
    p: &'a AnisotropyParams,
    z: [f64; 3],
    xsq: Vec<f64>,
    nonzero: Vec<usize>,
    zero: Vec<usize>,
    zero_n: Vec<u32>,
    given_e: Option<Vec<f64>>,
}

impl System<'_> {
    fn n_t(&self) -> usize {
        self.nonzero.len()
    }

    fn n_unknowns(&self) -> usize {
        self.n_t() + if self.given_e.is_some() { 0 } else { self.zero.len() }
    }

    fn energies<'u>(&'u self, u: &'u [f64]) -> &'u [f64] {
        match &self.given_e {
            Some(e) => e,
            None => &u[self.n_t()..],
        }
    }

    fn sums(&self, u: &[f64]) -> [f64; 3] {
        let e = self.energies(u);
        let mut s = [0.0; 3];
        for (m, sm) in s.iter_mut().enumerate() {
            for (i, &l) in self.nonzero.iter().enumerate() {
                let t = u[i];
                *sm += self.p.a(m, l).powi(2) * self.xsq[l] * mu_unchecked(t) / t;
            }
            for (j, &l) in self.zero.iter().enumerate() {
                *sm += self.p.a(m, l).powi(2) * e[j] / (PI * self.zero_n[j] as f64).powi(2);
            }
        }
        s
    }

    fn theta(&self, u: &[f64]) -> [f64; 3] {
        let s = self.sums(u);
        [0, 1, 2].map(|m| 4.0 * self.z[m] / s[m])
    }

    /// Blocks carrying an equation, in unknown order.
    fn equation_blocks(&self) -> Vec<usize> {
        let mut b = self.nonzero.clone();
        if self.given_e.is_none() {
            b.extend(&self.zero);
        }
        b
    }

    fn target_sq(&self, eq: usize, u: &[f64]) -> f64 {
        if eq < self.n_t() {
            u[eq] * u[eq]
        } else {
            (PI * self.zero_n[eq - self.n_t()] as f64).powi(2)
        }
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let s = self.sums(u);
        self.equation_blocks()
            .iter()
            .enumerate()
            .map(|(eq, &l)| {
                let lhs: f64 = (0..3).map(|m| 16.0 * (self.z[m] * self.p.a(m, l) / s[m]).powi(2)).sum();
                lhs - self.target_sq(eq, u)
            })
            .collect()
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let k = self.n_unknowns();
        let s = self.sums(u);
        // dS_m / du_j
        let mut ds = vec![[0.0; 3]; k];
        for (i, &l) in self.nonzero.iter().enumerate() {
            let t = u[i];
            let dq = (mu_prime_unchecked(t) * t - mu_unchecked(t)) / (t * t);
            for m in 0..3 {
                ds[i][m] = self.p.a(m, l).powi(2) * self.xsq[l] * dq;
            }
        }
        if self.given_e.is_none() {
            for (j, &l) in self.zero.iter().enumerate() {
                for m in 0..3 {
                    ds[self.n_t() + j][m] = self.p.a(m, l).powi(2) / (PI * self.zero_n[j] as f64).powi(2);
                }
            }
        }
        let blocks = self.equation_blocks();
        DMatrix::from_fn(k, k, |eq, j| {
            let l = blocks[eq];
            let mut v: f64 = (0..3)
                .map(|m| -32.0 * (self.z[m] * self.p.a(m, l)).powi(2) / s[m].powi(3) * ds[j][m])
                .sum();
            if eq == j && eq < self.n_t() {
                v -= 2.0 * u[eq];
            }
            v
        })
    }

    fn residual_scale(&self, u: &[f64]) -> f64 {
        (0..self.equation_blocks().len()).map(|eq| self.target_sq(eq, u)).fold(1.0, f64::max)
    }
}

/// Feasible region of one unknown.
#[derive(Debug, Clone, Copy)]
enum Bound {
    Open(f64, f64),
    Positive,
}

impl Bound {
    fn project(self, cand: f64, old: f64) -> f64 {
        match self {
            Bound::Open(lo, hi) => {
                let pad = 1e-12 * hi.max(1.0);
                cand.clamp(lo + pad, hi - pad)
            }
            Bound::Positive => cand.max(0.1 * old),
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Damped Newton with step halving and projection; the linear step is the
/// minimum-norm least-squares solution so rank-deficient Jacobians (which
/// occur when the solution set is a continuum) do not stall the iteration.
fn newton(sys: &System, mut u: Vec<f64>, bounds: &[Bound]) -> Option<Vec<f64>> {
    let mut g = sys.residual(&u);
    let mut gn = inf_norm(&g);
    for _ in 0..NEWTON_MAX_ITER {
        if !gn.is_finite() {
            return None;
        }
        let jac = sys.jacobian(&u);
        let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let delta = svd.solve(&rhs, 1e-13 * smax.max(f64::MIN_POSITIVE)).ok()?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = u
                .iter()
                .zip(delta.iter())
                .zip(bounds)
                .map(|((ui, di), b)| b.project(ui + lambda * di, *ui))
                .collect();
            let gc = sys.residual(&cand);
            let gcn = inf_norm(&gc);
            if gcn.is_finite() && gcn < gn {
                accepted = Some((cand, gc, gcn));
                break;
            }
            lambda *= 0.5;
        }
        let Some((cand, gc, gcn)) = accepted else { break };
        let step = u.iter().zip(&cand).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
        u = cand;
        g = gc;
        gn = gcn;
        if step < NEWTON_STEP_TOL {
            break;
        }
    }
    (gn <= 1e-10 * sys.residual_scale(&u)).then_some(u)
}

/// Scalar fallback: sign scan plus bisection of `G(t) / t^2` on one branch.
fn scalar_roots(sys: &System, branch: MuBranch) -> Vec<f64> {
    let f = |t: f64| sys.residual(&[t])[0] / (t * t);
    let mut roots = Vec::new();
    for (lo, hi) in branch.monotone_pieces() {
        const CELLS: usize = 400;
        let pts: Vec<f64> = (1..CELLS).map(|i| lo + (hi - lo) * i as f64 / CELLS as f64).collect();
        let vals: Vec<f64> = pts.iter().map(|&t| f(t)).collect();
        for i in 0..pts.len() - 1 {
            if vals[i] == 0.0 {
                roots.push(pts[i]);
            } else if (vals[i] < 0.0) != (vals[i + 1] < 0.0) && vals[i + 1] != 0.0 {
                let rising = vals[i] < 0.0;
                roots.push(crate::mu::bisect(pts[i], pts[i + 1], rising, f));
            }
        }
    }
    roots
}

/// Starting points inside each monotone piece, strictly interior.
fn piece_starts(lo: f64, hi: f64) -> Vec<f64> {
    (1..=STARTS_PER_PIECE).map(|j| lo + (hi - lo) * j as f64 / (STARTS_PER_PIECE + 1) as f64).collect()
}

fn solve_system(sys: &System, branch_box: &[u32]) -> Vec<Vec<f64>> {
    let nt = sys.n_t();
    let mut bounds: Vec<Bound> = branch_box.iter().map(|&b| {
        let (lo, hi) = MuBranch(b).interval();
        Bound::Open(lo, hi)
    }).collect();
    let ne = sys.n_unknowns() - nt;
    bounds.extend(std::iter::repeat_n(Bound::Positive, ne));

    let mut found: Vec<Vec<f64>> = Vec::new();
    if nt == 1 && ne == 0 {
        found.extend(scalar_roots(sys, MuBranch(branch_box[0])).into_iter().map(|t| vec![t]));
    }

    // starts: each combination of monotone pieces, STARTS_PER_PIECE diagonal points
    let pieces: Vec<Vec<(f64, f64)>> = branch_box.iter().map(|&b| MuBranch(b).monotone_pieces()).collect();
    let mut combos: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for ps in &pieces {
        combos = combos
            .into_iter()
            .flat_map(|c| ps.iter().map(move |pc| {
                let mut c = c.clone();
                c.push(*pc);
                c
            }))
            .collect();
    }
    let e_guess: Vec<f64> = sys
        .zero
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let r: f64 = (0..3).map(|m| (sys.z[m] / sys.p.a(m, l)).powi(2)).sum::<f64>().sqrt();
            (4.0 * PI * sys.zero_n[j] as f64 * r / sys.zero.len() as f64).max(1e-12)
        })
        .collect();
    let e_scales: &[f64] = if ne > 0 { &[1.0, 0.3, 3.0] } else { &[1.0] };
    for combo in &combos {
        let starts: Vec<Vec<f64>> = combo.iter().map(|&(lo, hi)| piece_starts(lo, hi)).collect();
        for j in 0..STARTS_PER_PIECE {
            for &sc in e_scales {
                let mut u0: Vec<f64> = starts.iter().map(|s| s[j]).collect();
                if ne > 0 {
                    u0.extend(e_guess.iter().map(|e| e * sc));
                }
                if let Some(u) = newton(sys, u0, &bounds) {
                    found.push(u);
                }
            }
        }
    }
    if nt == 0 && ne > 0 {
        for &sc in e_scales {
            if let Some(u) = newton(sys, e_guess.iter().map(|e| e * sc).collect(), &bounds) {
                found.push(u);
            }
        }
    }
    found
}

fn near_pole(t: f64) -> bool {
    let k = (t / PI).round();
    k >= 1.0 && (t - k * PI).abs() < POLE_REJECT
}

fn build_solution(
    sys: &System,
    u: &[f64],
    case: GeodesicCase,
    target: &GroupPoint,
    directions: &[[f64; 4]],
    branch_box: &[u32],
) -> Option<GeodesicSolution> {
    let p = sys.p;
    let theta = sys.theta(u);
    if !theta.iter().all(|v| v.is_finite()) {
        return None;
    }
    let norms = theta_norms(&theta, p);
    let e = sys.energies(u).to_vec();
    if e.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    for (i, &l) in sys.nonzero.iter().enumerate() {
        if near_pole(u[i]) || (norms[l] - u[i]).abs() > 1e-8 * u[i].max(1.0) {
            return None;
        }
    }
    for (j, &l) in sys.zero.iter().enumerate() {
        let want = PI * sys.zero_n[j] as f64;
        if (norms[l] - want).abs() > 1e-9 * want {
            return None;
        }
    }
    let mut v0 = vec![0.0; p.horizontal_dim()];
    let s = sys.sums(u);
    let mut length_sq: f64 = (0..3).map(|m| 16.0 * sys.z[m] * sys.z[m] / s[m]).sum();
    for (i, &l) in sys.nonzero.iter().enumerate() {
        let t = u[i];
        let xl = target.block(l);
        let mx = mat4_apply(&theta_block(&theta, p, l), xl);
        let tc = t * t.cos() / t.sin();
        for k in 0..4 {
            v0[4 * l + k] = tc * xl[k] - mx[k];
        }
        length_sq += sys.xsq[l] * tc;
    }
    for (j, &l) in sys.zero.iter().enumerate() {
        let d = directions[l];
        let dn = dot(&d, &d).sqrt();
        for k in 0..4 {
            v0[4 * l + k] = e[j].sqrt() * d[k] / dn;
        }
    }
    let sol = GeodesicSolution {
        case,
        zero_blocks: sys.zero.clone(),
        multiindex: (!sys.zero.is_empty()).then(|| sys.zero_n.clone()),
        branches: (!sys.nonzero.is_empty()).then(|| branch_box.to_vec()),
        theta_norms: norms,
        theta,
        v0,
        length: length_sq.sqrt(),
        target: target.clone(),
    };
    let scale = dot(&target.coords(), &target.coords()).sqrt().max(1.0);
    match sol.endpoint_error(p) {
        Ok(err) if err <= ENDPOINT_TOL * scale => Some(sol),
        _ => None,
    }
}

fn dedup(mut sols: Vec<GeodesicSolution>) -> Vec<GeodesicSolution> {
    let mut out: Vec<GeodesicSolution> = Vec::new();
    sols.sort_by(|a, b| a.length.total_cmp(&b.length));
    for s in sols {
        let dup = out.iter().any(|o| {
            let dn = o.theta_norms.iter().zip(&s.theta_norms).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dt = o.theta.iter().zip(&s.theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            dn + dt < DEDUP_TOL
        });
        if !dup {
            out.push(s);
        }
    }
    out
}

fn default_directions(n: usize) -> Vec<[f64; 4]> {
    vec![[1.0, 0.0, 0.0, 0.0]; n]
}

fn check_directions(dirs: &[[f64; 4]], p: &AnisotropyParams) -> Result<()> {
    if dirs.len() != p.n() {
        return Err(Error::DimensionMismatch { expected: p.n(), found: dirs.len() });
    }
    if dirs.iter().any(|d| !(dot(d, d) > 0.0) || d.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("directions must be nonzero".into()));
    }
    Ok(())
}

fn zero_target_z(z: &[f64; 3]) -> Result<()> {
    if z.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("z must be nonzero".into()));
    }
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("z".into()));
    }
    Ok(())
}

/// Geodesic to `(0, z)` with `|theta|_l = pi n_l`; `directions` fixes the
/// unit direction of each `v0_l` (default `e_{1l}`).
pub fn connect_zero_z(
    z: &[f64; 3],
    multiindex: &[u32],
    directions: Option<&[[f64; 4]]>,
    p: &AnisotropyParams,
) -> Result<GeodesicSolution> {
    zero_target_z(z)?;
    if multiindex.len() != p.n() || multiindex.contains(&0) {
        return Err(Error::InvalidArgument(format!("multiindex must hold {} positive integers", p.n())));
    }
    let dirs = directions.map(<[_]>::to_vec).unwrap_or_else(|| default_directions(p.n()));
    check_directions(&dirs, p)?;
    let sys = System {
        p,
        z: *z,
        xsq: vec![0.0; p.n()],
        nonzero: Vec::new(),
        zero: (0..p.n()).collect(),
        zero_n: multiindex.to_vec(),
        given_e: None,
    };
    let target = GroupPoint::new(vec![0.0; p.horizontal_dim()], *z);
    let sols: Vec<GeodesicSolution> = solve_system(&sys, &[])
        .iter()
        .filter_map(|u| build_solution(&sys, u, GeodesicCase::ZOnly, &target, &dirs, &[]))
        .collect();
    dedup(sols)
        .into_iter()
        .next()
        .ok_or_else(|| Error::NoSolution(format!("multiindex {multiindex:?}")))
}

/// All geodesics to `(x, z)`, every `x_l != 0`, whose norms `|theta|_l` lie
/// in the given branches.
pub fn connect_full(x: &[f64], z: &[f64; 3], branch_box: &[u32], p: &AnisotropyParams) -> Result<Vec<GeodesicSolution>> {
    p.check_horizontal(x)?;
    zero_target_z(z)?;
    if (0..p.n()).any(|l| block_norm_sq(x, l) == 0.0) {
        return Err(Error::InvalidArgument("every block of x must be nonzero".into()));
    }
    connect_general(x, z, &[], ZeroBlockEnergies::Closure, branch_box, None, p)
}

/// Geodesics to `(x, z)` when some blocks of `x` vanish. `multiindex` and
/// the energies refer to the zero blocks in increasing block order;
/// `branch_box` to the nonzero blocks.
pub fn connect_mixed(
    x: &[f64],
    z: &[f64; 3],
    multiindex: &[u32],
    energies: ZeroBlockEnergies,
    branch_box: &[u32],
    directions: Option<&[[f64; 4]]>,
    p: &AnisotropyParams,
) -> Result<Vec<GeodesicSolution>> {
    p.check_horizontal(x)?;
    zero_target_z(z)?;
    connect_general(x, z, multiindex, energies, branch_box, directions, p)
}

fn connect_general(
    x: &[f64],
    z: &[f64; 3],
    multiindex: &[u32],
    energies: ZeroBlockEnergies,
    branch_box: &[u32],
    directions: Option<&[[f64; 4]]>,
    p: &AnisotropyParams,
) -> Result<Vec<GeodesicSolution>> {
    let xsq: Vec<f64> = (0..p.n()).map(|l| block_norm_sq(x, l)).collect();
    let nonzero: Vec<usize> = (0..p.n()).filter(|&l| xsq[l] > 0.0).collect();
    let zero: Vec<usize> = (0..p.n()).filter(|&l| xsq[l] == 0.0).collect();
    if branch_box.len() != nonzero.len() {
        return Err(Error::InvalidArgument(format!(
            "branch box has {} entries for {} nonzero blocks",
            branch_box.len(),
            nonzero.len()
        )));
    }
    if multiindex.len() != zero.len() || multiindex.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "multiindex must hold {} positive integers",
            zero.len()
        )));
    }
    let given_e = match energies {
        ZeroBlockEnergies::Given(e) => {
            if e.len() != zero.len() || e.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("zero-block energies must be positive".into()));
            }
            Some(e)
        }
        ZeroBlockEnergies::Closure => None,
    };
    let dirs = directions.map(<[_]>::to_vec).unwrap_or_else(|| default_directions(p.n()));
    check_directions(&dirs, p)?;
    let case = if zero.is_empty() { GeodesicCase::Full } else { GeodesicCase::Mixed };
    let sys = System { p, z: *z, xsq, nonzero, zero, zero_n: multiindex.to_vec(), given_e };
    let target = GroupPoint::new(x.to_vec(), *z);
    let sols = solve_system(&sys, branch_box)
        .iter()
        .filter_map(|u| build_solution(&sys, u, case, &target, &dirs, branch_box))
        .collect();
    Ok(dedup(sols))
}

/// Result of an enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub case: GeodesicCase,
    /// Set when the case has infinitely many geodesics and only those
    /// within the caps were produced.
    pub truncated: bool,
    pub max_branch: u32,
    pub max_index: u32,
    pub solutions: Vec<GeodesicSolution>,
}

fn cartesian(len: usize, values: impl Iterator<Item = u32> + Clone) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|c| values.clone().map(move |v| {
                let mut c = c.clone();
                c.push(v);
                c
            }))
            .collect();
    }
    out
}

/// Every geodesic to `target` within the branch cap (nonzero blocks) and
/// the multiindex cap (zero blocks), sorted by length.
pub fn enumerate_geodesics(
    target: &GroupPoint,
    max_branch: u32,
    max_index: u32,
    p: &AnisotropyParams,
) -> Result<Enumeration> {
    target.check(p)?;
    let case = GeodesicCase::of(target).ok_or_else(|| Error::InvalidArgument("target is the origin".into()))?;
    let n_zero = (0..p.n()).filter(|&l| block_norm_sq(&target.x, l) == 0.0).count();
    let n_nonzero = p.n() - n_zero;
    let solutions = match case {
        GeodesicCase::XOnly => vec![connect_x_zero(&target.x, p)?],
        GeodesicCase::ZOnly => {
            let idx = cartesian(p.n(), 1..=max_index);
            let sols: Vec<GeodesicSolution> = idx
                .par_iter()
                .filter_map(|k| connect_zero_z(&target.z, k, None, p).ok())
                .collect();
            dedup(sols)
        }
        GeodesicCase::Full | GeodesicCase::Mixed => {
            let boxes = cartesian(n_nonzero, 0..=max_branch);
            let idx = cartesian(n_zero, 1..=max_index);
            let work: Vec<(&Vec<u32>, &Vec<u32>)> = boxes.iter().flat_map(|b| idx.iter().map(move |k| (b, k))).collect();
            let per: Vec<Vec<GeodesicSolution>> = work
                .par_iter()
                .map(|(b, k)| {
                    connect_general(&target.x, &target.z, k, ZeroBlockEnergies::Closure, b, None, p).unwrap_or_default()
                })
                .collect();
            dedup(per.into_iter().flatten().collect())
        }
    };
    Ok(Enumeration { case, truncated: case.is_infinite_family(), max_branch, max_index, solutions })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block_zero_z_closed_form() {
        let p = AnisotropyParams::isotropic(1);
        for k in 1..=3u32 {
            let s = connect_zero_z(&[1.0, 0.0, 0.0], &[k], None, &p).unwrap();
            let e = 4.0 * PI * k as f64;
            assert!((dot(&s.v0, &s.v0) - e).abs() < 1e-10 * e);
            assert!((s.theta[0] - PI * k as f64).abs() < 1e-10);
            assert!((s.length * s.length - e).abs() < 1e-10 * e);
        }
    }

    #[test]
    fn isotropic_full_case_level_half_pi() {
        let p = AnisotropyParams::isotropic(1);
        let z = [PI / 8.0, 0.0, 0.0];
        let sols = connect_full(&[1.0, 0.0, 0.0, 0.0], &z, &[0], &p).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0].theta_norms[0] - PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn closed_form_curve_matches_exp_map() {
        let p = AnisotropyParams::new(2, [vec![1.0, 0.7], vec![1.3, 0.9], vec![0.8, 1.1]]).unwrap();
        let x = [0.4, -0.3, 0.2, 0.5, 0.1, 0.6, -0.2, 0.3];
        let z = [0.3, -0.2, 0.25];
        let e = enumerate_geodesics(&GroupPoint::new(x.to_vec(), z), 1, 1, &p).unwrap();
        assert!(!e.solutions.is_empty());
        for sol in &e.solutions {
            let iv = sol.ivp(&p).unwrap();
            for &s in &[0.0, 0.3, 0.77, 1.0] {
                let a = sol.point(s, &p);
                let (b, _) = exp_map(&iv, s, &p);
                assert!(distance(&a, &b) < 1e-9);
            }
        }
    }
}
