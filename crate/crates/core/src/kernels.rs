//! Complex action, volume element, heat kernel and Green's function of the
//! sub-Laplacian at the origin.
//!
//! The kernels are integrals over `tau in R^3`. Every special function is
//! written in terms of `s_l = sum_m a_{ml}^2 w_m^2`:
//!
//! * `g(s) = sqrt(s) coth sqrt(s)` (so `|w|_l coth |w|_l = g(s_l)`),
//! * `h(s) = s / sinh^2 sqrt(s)` (so `V = prod_l h(s_l)`).
//!
//! Both are even in `sqrt(s)`, hence entire in `s` away from the poles
//! `s = -(pi k)^2`, and the branch of the square root never matters.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{block_norm_sq, dot, sublaplacian_terms, GroupPoint, BASE};
use crate::error::{Error, Result};
use crate::mu::mu_unchecked;
use crate::params::AnisotropyParams;

const SERIES_RADIUS: f64 = 0.04;

const G_SERIES: [f64; 8] = [
    1.0,
    1.0 / 3.0,
    -1.0 / 45.0,
    2.0 / 945.0,
    -1.0 / 4725.0,
    2.0 / 93555.0,
    -1382.0 / 638512875.0,
    4.0 / 18243225.0,
];

const H_SERIES: [f64; 8] = [
    1.0,
    -1.0 / 3.0,
    1.0 / 15.0,
    -2.0 / 189.0,
    1.0 / 675.0,
    -2.0 / 10395.0,
    1382.0 / 58046625.0,
    -4.0 / 1403325.0,
];

// mu(t) / t as a series in q = t^2
const MU_OVER_T_SERIES: [f64; 7] = [
    2.0 / 3.0,
    4.0 / 45.0,
    4.0 / 315.0,
    8.0 / 4725.0,
    4.0 / 18711.0,
    5528.0 / 212837625.0,
    8.0 / 2606175.0,
];

fn horner(c: &[f64], s: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &k| acc * s + k)
}

/// Principal square root with the right half-plane convention.
fn root(s: C64) -> C64 {
    let u = s.sqrt();
    if u.re < 0.0 {
        -u
    } else {
        u
    }
}

/// `sqrt(s) coth sqrt(s)`.
pub fn g_entire(s: C64) -> C64 {
    if s.norm() < SERIES_RADIUS {
        return horner(&G_SERIES, s);
    }
    let u = root(s);
    let e = (-2.0 * u).exp();
    u * (1.0 + e) / (1.0 - e)
}

/// `s / sinh^2 sqrt(s)`.
pub fn h_entire(s: C64) -> C64 {
    if s.norm() < SERIES_RADIUS {
        return horner(&H_SERIES, s);
    }
    let u = root(s);
    let e = (-2.0 * u).exp();
    4.0 * s * e / ((1.0 - e) * (1.0 - e))
}

/// `mu(t) / t` for complex `t`.
pub fn mu_over_t(t: C64) -> C64 {
    let q = t * t;
    if q.norm() < SERIES_RADIUS {
        return horner(&MU_OVER_T_SERIES, q);
    }
    let st = t.sin();
    (2.0 * t - (2.0 * t).sin()) / (2.0 * t * st * st)
}

/// `coth(alpha + i beta)` through its real and imaginary parts.
pub fn coth_decomposed(alpha: f64, beta: f64) -> C64 {
    let den = (2.0 * alpha).cosh() - (2.0 * beta).cos();
    C64::new((2.0 * alpha).sinh() / den, -(2.0 * beta).sin() / den)
}

/// `s_l(w) = sum_m a_{ml}^2 w_m^2`.
pub fn block_square(w: &[C64; 3], p: &AnisotropyParams, l: usize) -> C64 {
    (0..3).map(|m| p.a(m, l).powi(2) * w[m] * w[m]).sum()
}

/// Largest admissible contour shift: `pi / (4 max a^2)`, tightened to
/// `pi / (4 max a)` when `max a < 1` so that `eps |z~|_l <= pi / 4` holds
/// for every block.
pub fn eps0(p: &AnisotropyParams) -> f64 {
    let abar = p.a_bar();
    PI / (4.0 * abar.max(abar.sqrt()))
}

/// Unit vector of `z`, or zero.
pub fn unit_or_zero(z: &[f64; 3]) -> [f64; 3] {
    let r = dot(z, z).sqrt();
    if r > 0.0 {
        z.map(|v| v / r)
    } else {
        [0.0; 3]
    }
}

/// `w = tau + i eps z~`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedTau {
    pub tau: [f64; 3],
    pub eps: f64,
    pub ztilde: [f64; 3],
}

impl ShiftedTau {
    pub fn new(tau: [f64; 3], eps: f64, z: &[f64; 3]) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("eps = {eps} must be >= 0")));
        }
        Ok(Self { tau, eps, ztilde: unit_or_zero(z) })
    }

    pub fn real(tau: [f64; 3]) -> Self {
        Self { tau, eps: 0.0, ztilde: [0.0; 3] }
    }

    /// Errors unless `eps < eps_0`.
    pub fn check(&self, p: &AnisotropyParams) -> Result<()> {
        let e0 = eps0(p);
        if self.eps > 0.0 && self.eps >= e0 {
            return Err(Error::InvalidArgument(format!("eps = {} must be below eps_0 = {e0}", self.eps)));
        }
        Ok(())
    }

    pub fn w(&self) -> [C64; 3] {
        [0, 1, 2].map(|m| C64::new(self.tau[m], self.eps * self.ztilde[m]))
    }
}

/// `gamma(x, w) = sum_l |x_l|^2 / 4 |w|_l coth |w|_l`.
pub fn gamma_part(x: &[f64], w: &[C64; 3], p: &AnisotropyParams) -> C64 {
    (0..p.n()).map(|l| 0.25 * block_norm_sq(x, l) * g_entire(block_square(w, p, l))).sum()
}

/// `f(x, z, w) = gamma(x, w) - i sum_m w_m z_m` at an arbitrary complex `w`.
pub fn complex_action_at(x: &[f64], z: &[f64; 3], w: &[C64; 3], p: &AnisotropyParams) -> C64 {
    let lin: C64 = (0..3).map(|m| w[m] * z[m]).sum();
    gamma_part(x, w, p) - C64::i() * lin
}

pub fn complex_action(x: &[f64], z: &[f64; 3], w: &ShiftedTau, p: &AnisotropyParams) -> Result<C64> {
    p.check_horizontal(x)?;
    w.check(p)?;
    Ok(complex_action_at(x, z, &w.w(), p))
}

/// `V(w) = prod_l |w|_l^2 / sinh^2 |w|_l`.
pub fn volume_element_at(w: &[C64; 3], p: &AnisotropyParams) -> C64 {
    (0..p.n()).map(|l| h_entire(block_square(w, p, l))).product()
}

pub fn volume_element(w: &ShiftedTau, p: &AnisotropyParams) -> Result<C64> {
    w.check(p)?;
    Ok(volume_element_at(&w.w(), p))
}

/// `df / dtau_m = -i z_m - i tau_m sum_l a_{ml}^2 |x_l|^2 / (4 |tau|_l) mu(i |tau|_l)`.
pub fn action_tau_gradient(x: &[f64], z: &[f64; 3], tau: &[f64; 3], p: &AnisotropyParams) -> [C64; 3] {
    let w = tau.map(|v| C64::new(v, 0.0));
    let per_block: Vec<C64> = (0..p.n())
        .map(|l| {
            let it = C64::i() * root(block_square(&w, p, l));
            // mu(i r) / r = i mu(i r) / (i r)
            C64::i() * mu_over_t(it) * 0.25 * block_norm_sq(x, l)
        })
        .collect();
    [0, 1, 2].map(|m| {
        let sum: C64 = (0..p.n()).map(|l| p.a(m, l).powi(2) * per_block[l]).sum();
        -C64::i() * z[m] - C64::i() * tau[m] * sum
    })
}

/// Hamiltonian `|xi|^2 + (Theta^2 x, x) / 4 + (M x, xi)` with complex
/// multipliers and momenta, using the bilinear (non-conjugating) pairing.
pub fn hamiltonian_complex(x: &[f64], xi: &[C64], theta: &[C64; 3], p: &AnisotropyParams) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for l in 0..p.n() {
        let xl = &x[4 * l..4 * l + 4];
        let xil = &xi[4 * l..4 * l + 4];
        let theta_sq: C64 = (0..3).map(|m| p.a(m, l).powi(2) * theta[m] * theta[m]).sum();
        let mut mx = [C64::new(0.0, 0.0); 4];
        for (m, base) in BASE.iter().enumerate() {
            let c = theta[m] * p.a(m, l);
            for i in 0..4 {
                for j in 0..4 {
                    mx[i] += c * base[i][j] * xl[j];
                }
            }
        }
        for k in 0..4 {
            total += xil[k] * xil[k] + 0.25 * theta_sq * xl[k] * xl[k] + mx[k] * xil[k];
        }
    }
    total
}

/// `|sum_m tau_m df/dtau_m + H(x, z, grad_x f, grad_z f) - f|`, with `H`
/// taken at `theta = -i tau`.
pub fn hj_residual(x: &[f64], z: &[f64; 3], tau: &[f64; 3], p: &AnisotropyParams) -> Result<f64> {
    p.check_horizontal(x)?;
    let w = tau.map(|v| C64::new(v, 0.0));
    let f = complex_action_at(x, z, &w, p);
    let grad = action_tau_gradient(x, z, tau, p);
    let euler: C64 = (0..3).map(|m| tau[m] * grad[m]).sum();
    let mut xi = vec![C64::new(0.0, 0.0); x.len()];
    for l in 0..p.n() {
        let c = 0.5 * g_entire(block_square(&w, p, l));
        for k in 4 * l..4 * l + 4 {
            xi[k] = c * x[k];
        }
    }
    let theta = tau.map(|v| C64::new(0.0, -v));
    let h = hamiltonian_complex(x, &xi, &theta, p);
    Ok((euler + h - f).norm())
}

/// `|(2n - Delta f) V - sum_m tau_m dV/dtau_m|` with
/// `Delta f = 2 sum_l |tau|_l coth |tau|_l`. The `tau`-derivatives of `V`
/// are taken by the complex-step method, which is exact to rounding because
/// `V` is real-analytic.
pub fn transport_residual(tau: &[f64; 3], p: &AnisotropyParams) -> f64 {
    let w = tau.map(|v| C64::new(v, 0.0));
    let v = volume_element_at(&w, p).re;
    let lap_f: f64 = 2.0 * (0..p.n()).map(|l| g_entire(block_square(&w, p, l)).re).sum::<f64>();
    const STEP: f64 = 1e-30;
    let euler: f64 = (0..3)
        .map(|m| {
            let mut ws = w;
            ws[m].im = STEP;
            tau[m] * volume_element_at(&ws, p).im / STEP
        })
        .sum();
    ((2.0 * p.n() as f64 - lap_f) * v - euler).abs()
}

/// Real restriction of the action to `tau = i theta`:
/// `f(x, z, i theta) = theta . z + sum_l |x_l|^2 / 4 |theta|_l cot |theta|_l`.
fn action_on_imaginary_axis(x: &[f64], z: &[f64; 3], theta: &[f64; 3], p: &AnisotropyParams) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let mut value = dot(theta, z);
    let mut grad = Vector3::from_column_slice(z);
    let mut hess = Matrix3::zeros();
    for l in 0..p.n() {
        let c = 0.25 * block_norm_sq(x, l);
        if c == 0.0 {
            continue;
        }
        let a2: [f64; 3] = [0, 1, 2].map(|m| p.a(m, l).powi(2));
        let t = (0..3).map(|m| a2[m] * theta[m] * theta[m]).sum::<f64>().sqrt();
        let (tcot, q, dq) = if t < 1e-4 {
            (1.0 - t * t / 3.0, 2.0 / 3.0 + 4.0 * t * t / 45.0, 8.0 / 45.0)
        } else {
            let q = mu_unchecked(t) / t;
            let dq = (crate::mu::mu_prime_unchecked(t) - q) / (t * t);
            (t * t.cos() / t.sin(), q, dq)
        };
        value += c * tcot;
        for m in 0..3 {
            grad[m] -= c * a2[m] * theta[m] * q;
            hess[(m, m)] -= c * a2[m] * q;
            for k in 0..3 {
                // d(q)/d theta_k = q'(t) a_k^2 theta_k / t, with dq = q'(t) / t
                hess[(m, k)] -= c * a2[m] * theta[m] * dq * a2[k] * theta[k];
            }
        }
    }
    (value, grad, hess)
}

/// Critical point `tau_c = i theta_c` of the action, by Newton on
/// `grad_theta f(x, z, i theta) = 0` from `theta0`. Returns `theta_c`.
pub fn critical_point(x: &[f64], z: &[f64; 3], theta0: [f64; 3], p: &AnisotropyParams) -> Result<[f64; 3]> {
    p.check_horizontal(x)?;
    let mut theta = Vector3::from(theta0);
    for _ in 0..100 {
        let th: [f64; 3] = theta.into();
        let (_, grad, hess) = action_on_imaginary_axis(x, z, &th, p);
        let step = hess
            .lu()
            .solve(&(-grad))
            .ok_or_else(|| Error::NoSolution("singular Hessian at the critical point".into()))?;
        theta += step;
        if step.norm() < 1e-14 * theta.norm().max(1.0) {
            break;
        }
    }
    let th: [f64; 3] = theta.into();
    let (_, grad, _) = action_on_imaginary_axis(x, z, &th, p);
    if !(grad.norm() < 1e-9 * (1.0 + dot(z, z).sqrt())) {
        return Err(Error::NoSolution(format!("critical point search stalled, |grad| = {:e}", grad.norm())));
    }
    Ok(th)
}

/// `f(x, z, i theta)`.
pub fn action_at_imaginary(x: &[f64], z: &[f64; 3], theta: &[f64; 3], p: &AnisotropyParams) -> C64 {
    let w = theta.map(|v| C64::new(0.0, v));
    complex_action_at(x, z, &w, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Composite Gauss-Legendre on graded panels.
    Graded,
    /// The graded rule with nodes per panel doubled until two successive
    /// values agree to `tol`.
    Adaptive,
}

/// Tensor quadrature over a cube `[-T, T]^3` in a frame whose first axis
/// is the direction of the kernel's oscillation or contour shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Truncation half-width for `min a = 1`; divided by `min(1, min a)`.
    pub truncation: f64,
    /// Gauss-Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Positive panel breaks along the first axis.
    pub axial_breaks: Vec<f64>,
    /// Positive panel breaks along the other two axes.
    pub transverse_breaks: Vec<f64>,
    pub rule: QuadratureRule,
    /// Relative tolerance of the adaptive rule and of convergence checks.
    pub tol: f64,
    /// Largest accepted relative tail mass of the volume element.
    pub tail_tol: f64,
    /// Doublings allowed by the adaptive rule.
    pub max_doublings: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            truncation: 12.0,
            nodes_per_panel: 10,
            axial_breaks: vec![0.5, 1.5, 4.0],
            transverse_breaks: vec![1.5, 5.0],
            rule: QuadratureRule::Graded,
            tol: 1e-6,
            tail_tol: 1e-5,
            max_doublings: 3,
        }
    }
}

impl QuadratureSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let q: Self = serde_json::from_str(text)?;
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_breaks = |b: &[f64]| b.windows(2).all(|w| w[0] < w[1]) && b.iter().all(|v| *v > 0.0 && *v < self.truncation);
        if !(self.truncation > 0.0) || self.nodes_per_panel == 0 || !ok_breaks(&self.axial_breaks) || !ok_breaks(&self.transverse_breaks) {
            return Err(Error::InvalidArgument("malformed quadrature spec".into()));
        }
        if !(self.tol > 0.0) || !(self.tail_tol > 0.0) {
            return Err(Error::InvalidArgument("quadrature tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Same spec with twice the nodes per panel.
    pub fn doubled(&self) -> Self {
        Self { nodes_per_panel: 2 * self.nodes_per_panel, ..self.clone() }
    }

    pub fn effective_truncation(&self, p: &AnisotropyParams) -> f64 {
        self.truncation / p.a_under().sqrt().min(1.0)
    }

    /// Relative mass of the envelope `prod_l 4 |tau|_l^2 exp(-2 |tau|_l)`
    /// of `V` outside the ball of radius `T`, with `|tau|_l >= min a |tau|`.
    pub fn tail_estimate(&self, p: &AnisotropyParams) -> f64 {
        let k = 2 * p.n() + 3;
        let xarg = 2.0 * p.n() as f64 * p.a_under().sqrt() * self.effective_truncation(p);
        // regularized upper incomplete gamma for integer order
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..k {
            term *= xarg / j as f64;
            sum += term;
        }
        (-xarg).exp() * sum
    }
}

fn axis_nodes(breaks: &[f64], t: f64, npp: usize) -> Result<Vec<(f64, f64)>> {
    let npp = NonZeroUsize::new(npp).ok_or_else(|| Error::InvalidArgument("nodes_per_panel must be > 0".into()))?;
    let rule = GaussLegendre::new(npp);
    let mut edges: Vec<f64> = vec![-t];
    edges.extend(breaks.iter().rev().map(|b| -b));
    edges.push(0.0);
    edges.extend(breaks);
    edges.push(t);
    let mut out = Vec::with_capacity((edges.len() - 1) * npp.get());
    for e in edges.windows(2) {
        let (lo, hi) = (e[0], e[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        out.extend(rule.as_node_weight_pairs().iter().map(|&(x, w)| (mid + half * x, half * w)));
    }
    Ok(out)
}

/// Orthonormal frame whose first vector is `axis` (identity if zero).
pub fn frame_for(axis: &[f64; 3]) -> [[f64; 3]; 3] {
    let e1 = unit_or_zero(axis);
    if e1 == [0.0; 3] {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = (0..3).min_by(|&i, &j| e1[i].abs().total_cmp(&e1[j].abs())).unwrap_or(0);
    let mut e2 = [0.0; 3];
    e2[k] = 1.0;
    let d = dot(&e1, &e2);
    let e2 = unit_or_zero(&[0, 1, 2].map(|i| e2[i] - d * e1[i]));
    let e3 = [
        e1[1] * e2[2] - e1[2] * e2[1],
        e1[2] * e2[0] - e1[0] * e2[2],
        e1[0] * e2[1] - e1[1] * e2[0],
    ];
    [e1, e2, e3]
}

/// Neumaier-compensated accumulator.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

/// Integral of `f` over the rotated cube with the graded rule at the
/// given nodes per panel. Slabs are evaluated in parallel and combined in
/// a fixed order, so results do not depend on the thread count.
fn graded_integral<F>(spec: &QuadratureSpec, npp: usize, frame: &[[f64; 3]; 3], p: &AnisotropyParams, f: &F) -> Result<C64>
where
    F: Fn(&[f64; 3]) -> C64 + Sync,
{
    let t = spec.effective_truncation(p);
    let ax = axis_nodes(&spec.axial_breaks, t, npp)?;
    let tr = axis_nodes(&spec.transverse_breaks, t, npp)?;
    let slabs: Vec<(f64, f64)> = ax
        .par_iter()
        .map(|&(u1, w1)| {
            let mut re = Compensated::default();
            let mut im = Compensated::default();
            for &(u2, w2) in &tr {
                for &(u3, w3) in &tr {
                    let tau = [0, 1, 2].map(|i| u1 * frame[0][i] + u2 * frame[1][i] + u3 * frame[2][i]);
                    let v = f(&tau) * (w1 * w2 * w3);
                    re.add(v.re);
                    im.add(v.im);
                }
            }
            (re.value(), im.value())
        })
        .collect();
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    for (a, b) in slabs {
        re.add(a);
        im.add(b);
    }
    Ok(C64::new(re.value(), im.value()))
}

/// A kernel value with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// Imaginary part left by the quadrature; zero in exact arithmetic.
    pub imag: f64,
    pub tail_estimate: f64,
    /// Change under the last doubling (adaptive rule only).
    pub quad_error: Option<f64>,
}

fn integrate<F>(spec: &QuadratureSpec, frame: &[[f64; 3]; 3], p: &AnisotropyParams, f: F) -> Result<(C64, f64, Option<f64>)>
where
    F: Fn(&[f64; 3]) -> C64 + Sync,
{
    spec.validate()?;
    let tail = spec.tail_estimate(p);
    if tail > spec.tail_tol {
        return Err(Error::Quadrature(format!(
            "tail estimate {tail:e} exceeds {:e}; increase the truncation",
            spec.tail_tol
        )));
    }
    match spec.rule {
        QuadratureRule::Graded => Ok((graded_integral(spec, spec.nodes_per_panel, frame, p, &f)?, tail, None)),
        QuadratureRule::Adaptive => {
            let mut npp = spec.nodes_per_panel;
            let mut prev = graded_integral(spec, npp, frame, p, &f)?;
            for _ in 0..spec.max_doublings {
                npp *= 2;
                let next = graded_integral(spec, npp, frame, p, &f)?;
                let err = (next - prev).norm();
                if err <= spec.tol * next.norm() {
                    return Ok((next, tail, Some(err)));
                }
                prev = next;
            }
            Err(Error::Quadrature(format!("no convergence after {} doublings", spec.max_doublings)))
        }
    }
}

/// `P(y, w, t) = C / t^(2n+3) int exp(-f(y, w, tau) / t) V(tau) dtau`.
pub fn heat_kernel(y: &[f64], w: &[f64; 3], t: f64, quad: &QuadratureSpec, c: f64, p: &AnisotropyParams) -> Result<KernelValue> {
    p.check_horizontal(y)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t = {t} must be > 0")));
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("w".into()));
    }
    let frame = frame_for(w);
    let quarter_sq: Vec<f64> = (0..p.n()).map(|l| 0.25 * block_norm_sq(y, l)).collect();
    let integrand = |tau: &[f64; 3]| {
        let tw = tau.map(|v| C64::new(v, 0.0));
        let mut gamma = 0.0;
        let mut vol = 1.0;
        for l in 0..p.n() {
            let s = block_square(&tw, p, l);
            if quarter_sq[l] != 0.0 {
                gamma += quarter_sq[l] * g_entire(s).re;
            }
            vol *= h_entire(s).re;
        }
        let phase = dot(tau, w) / t;
        C64::from_polar((-gamma / t).exp() * vol, phase)
    };
    let (val, tail, err) = integrate(quad, &frame, p, integrand)?;
    let scale = c / t.powi(2 * p.n() as i32 + 3);
    Ok(KernelValue {
        value: scale * val.re,
        imag: scale * val.im,
        tail_estimate: tail,
        quad_error: err.map(|e| scale.abs() * e),
    })
}

/// Contour shift for the Green's function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eps {
    /// `eps_0 / 2`.
    Auto,
    Value(f64),
}

impl Eps {
    pub fn resolve(self, p: &AnisotropyParams) -> f64 {
        match self {
            Eps::Auto => 0.5 * eps0(p),
            Eps::Value(e) => e,
        }
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `2^(2n) (2 pi)^(2n+3) / (2n+1)!`.
pub fn green_constant(n: usize) -> f64 {
    let n = n as i32;
    2f64.powi(2 * n) * (2.0 * PI).powi(2 * n + 3) / factorial(2 * n as u32 + 1)
}

/// `G(x, z) = -K int V(tau + i eps z~) / f^(2n+2)(x, z, tau + i eps z~) dtau`.
pub fn green_function(x: &[f64], z: &[f64; 3], eps: Eps, quad: &QuadratureSpec, p: &AnisotropyParams) -> Result<KernelValue> {
    p.check_horizontal(x)?;
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("z".into()));
    }
    let x_zero = dot(x, x) == 0.0;
    let z_zero = z.iter().all(|v| *v == 0.0);
    if x_zero && z_zero {
        return Err(Error::InvalidArgument("the Green's function is singular at the origin".into()));
    }
    let e = eps.resolve(p);
    if !(e >= 0.0) || e >= eps0(p) || (e == 0.0 && x_zero) {
        return Err(Error::InvalidArgument(format!(
            "eps = {e} must lie in (0, {}) (0 allowed only for x != 0)",
            eps0(p)
        )));
    }
    let zt = unit_or_zero(z);
    let frame = frame_for(&zt);
    let power = 2 * p.n() as i32 + 2;
    let quarter_sq: Vec<f64> = (0..p.n()).map(|l| 0.25 * block_norm_sq(x, l)).collect();
    let integrand = |tau: &[f64; 3]| {
        let w = [0, 1, 2].map(|m| C64::new(tau[m], e * zt[m]));
        let mut f = -C64::i() * (0..3).map(|m| w[m] * z[m]).sum::<C64>();
        let mut vol = C64::new(1.0, 0.0);
        for l in 0..p.n() {
            let s = block_square(&w, p, l);
            if quarter_sq[l] != 0.0 {
                f += quarter_sq[l] * g_entire(s);
            }
            vol *= h_entire(s);
        }
        vol / f.powi(power)
    };
    let (val, tail, err) = integrate(quad, &frame, p, integrand)?;
    let k = -green_constant(p.n());
    Ok(KernelValue {
        value: k * val.re,
        imag: k * val.im,
        tail_estimate: tail,
        quad_error: err.map(|e| k.abs() * e),
    })
}

/// A finite-difference PDE residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdResidual {
    pub absolute: f64,
    /// `absolute` divided by the summed magnitudes of the difference terms.
    pub relative: f64,
}

/// `Delta_0 G` by finite differences with step `h`.
pub fn green_laplacian_residual(
    q: &GroupPoint,
    h: f64,
    eps: Eps,
    quad: &QuadratureSpec,
    p: &AnisotropyParams,
) -> Result<FdResidual> {
    let lap = sublaplacian_terms(|r| Ok(green_function(&r.x, &r.z, eps, quad, p)?.value), q, h, p)?;
    Ok(FdResidual { absolute: lap.value.abs(), relative: lap.value.abs() / lap.scale })
}

/// `Delta_0 P - dP/dt` by finite differences with step `h` in space and
/// time.
pub fn heat_equation_residual(
    q: &GroupPoint,
    t: f64,
    h: f64,
    quad: &QuadratureSpec,
    p: &AnisotropyParams,
) -> Result<FdResidual> {
    if !(t > h) {
        return Err(Error::InvalidArgument(format!("t = {t} must exceed the step {h}")));
    }
    let at = |r: &GroupPoint, s: f64| Ok(heat_kernel(&r.x, &r.z, s, quad, 1.0, p)?.value);
    let lap = sublaplacian_terms(|r| at(r, t), q, h, p)?;
    let dt = (at(q, t + h)? - at(q, t - h)?) / (2.0 * h);
    let absolute = (lap.value - dt).abs();
    Ok(FdResidual { absolute, relative: absolute / (lap.scale + dt.abs()) })
}

/// Outcome of an estimate probe at `w = tau + i eps z~`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateProbe {
    pub re_gamma: f64,
    pub im_gamma: f64,
    pub re_f: f64,
    pub eps0: f64,
    /// `|Im gamma| <= c1 eps |x|^2`.
    pub im_bound: bool,
    /// `Re gamma >= c2 |x|^2`.
    pub re_bound: bool,
    /// `Re f >= c2 (|x|^2 + eps |z|)`.
    pub f_bound: bool,
}

impl EstimateProbe {
    pub fn ok(&self) -> bool {
        self.im_bound && self.re_bound && self.f_bound
    }
}

/// Evaluates `gamma` block by block through `coth(alpha + i beta)` and
/// checks the lower and upper bounds for the given constants.
pub fn estimate_probe(
    x: &[f64],
    z: &[f64; 3],
    tau: &[f64; 3],
    eps: f64,
    c1: f64,
    c2: f64,
    p: &AnisotropyParams,
) -> Result<EstimateProbe> {
    let st = ShiftedTau::new(*tau, eps, z)?;
    st.check(p)?;
    p.check_horizontal(x)?;
    let w = st.w();
    let mut gamma = C64::new(0.0, 0.0);
    for l in 0..p.n() {
        let u = root(block_square(&w, p, l));
        let g = if u.norm() < 1e-3 { g_entire(u * u) } else { u * coth_decomposed(u.re, u.im) };
        gamma += 0.25 * block_norm_sq(x, l) * g;
    }
    let xsq = dot(x, x);
    let zn = dot(z, z).sqrt();
    let re_f = gamma.re + eps * zn;
    let slack = 1e-14 * (1.0 + xsq);
    Ok(EstimateProbe {
        re_gamma: gamma.re,
        im_gamma: gamma.im,
        re_f,
        eps0: eps0(p),
        im_bound: gamma.im.abs() <= c1 * eps * xsq + slack,
        re_bound: gamma.re >= c2 * xsq - slack,
        f_bound: re_f >= c2 * (xsq + eps * zn) - slack,
    })
}

/// `int_0^inf u^(-2n-3) exp(-f / u) du` by Gauss-Legendre in `log u`,
/// returned with the closed form `Gamma(2n+2) / f^(2n+2)`.
pub fn gamma_reduction_check(n: usize, f: f64) -> Result<(f64, f64)> {
    if !(f > 0.0) {
        return Err(Error::InvalidArgument("f must be positive".into()));
    }
    let k = 2 * n as i32 + 2;
    // u = f e^v: integrand f^(-k) exp(-k v - e^(-v))
    let rule = GaussLegendre::new(NonZeroUsize::new(20).expect("nonzero"));
    let mut acc = Compensated::default();
    let (lo, hi, panels) = (-6.0, 40.0, 92);
    let width = (hi - lo) / panels as f64;
    for i in 0..panels {
        let a = lo + i as f64 * width;
        for &(x, w) in rule.as_node_weight_pairs().iter() {
            let v = a + 0.5 * width * (x + 1.0);
            acc.add(0.5 * width * w * (-(k as f64) * v - (-v).exp()).exp());
        }
    }
    let numeric = acc.value() / f.powi(k);
    let exact = factorial(k as u32 - 1) / f.powi(k);
    Ok((numeric, exact))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn entire_functions_match_closed_forms_across_series_switch() {
        for &s in &[0.039, 0.041, -0.039, -0.041, 1.0, -1.0, 10.0] {
            let u = C64::new(s, 0.0).sqrt();
            let g = u * u.cosh() / u.sinh();
            let h = C64::new(s, 0.0) / (u.sinh() * u.sinh());
            assert!((g_entire(c(s)) - g).norm() < 1e-14, "g at {s}");
            assert!((h_entire(c(s)) - h).norm() < 1e-14, "h at {s}");
        }
        let t = C64::new(0.1, 0.15);
        let direct = (2.0 * t - (2.0 * t).sin()) / (2.0 * t * t.sin() * t.sin());
        assert!((mu_over_t(t) - direct).norm() < 1e-12);
    }

    #[test]
    fn coth_decomposition_agrees() {
        let u = C64::new(0.7, 0.3);
        let d = coth_decomposed(u.re, u.im);
        assert!((d - u.cosh() / u.sinh()).norm() < 1e-14);
    }

    #[test]
    fn volume_element_values() {
        let p = AnisotropyParams::isotropic(1);
        assert_eq!(volume_element_at(&[c(0.0); 3], &p), c(1.0));
        let v = volume_element_at(&[c(1.0), c(0.0), c(0.0)], &p).re;
        assert!((v - 1.0 / 1f64.sinh().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn action_limits() {
        let p = AnisotropyParams::isotropic(1);
        let x = [0.3, -0.2, 0.5, 0.1];
        let f = complex_action(&x, &[0.4, 0.1, 0.0], &ShiftedTau::real([0.0; 3]), &p).unwrap();
        assert!((f - c(dot(&x, &x) / 4.0)).norm() < 1e-15);
        let f0 = complex_action(&[0.0; 4], &[0.4, 0.1, 0.0], &ShiftedTau::real([1.0, 2.0, 0.0]), &p).unwrap();
        assert!((f0 - C64::new(0.0, -0.6)).norm() < 1e-15);
    }

    #[test]
    fn gamma_reduction() {
        for n in 1..=3 {
            let (num, exact) = gamma_reduction_check(n, 1.7).unwrap();
            assert!((num - exact).abs() < 1e-12 * exact, "n = {n}: {num} vs {exact}");
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let f = frame_for(&[0.3, -0.4, 0.5]);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&f[i], &f[j]) - want).abs() < 1e-15);
            }
        }
    }
}
