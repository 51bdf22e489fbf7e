//! Hamiltonian flow, the closed-form exponential map from the origin and
//! the geodesic residual `x'' - 2 M x'`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::algebra::{
    a_norm_sq, bilinear, block_matrix_apply, block_norm_sq, dot, mat4_apply, norm, theta_block, theta_matrix,
    theta_norms, BlockDiag, GroupPoint, IDENTITY4,
};
use crate::curves::{horizontality_residual, max_norm, uniform_grid, SampledCurve};
use crate::error::{Error, Result};
use crate::params::AnisotropyParams;

/// Below this value of `s |theta|_l` the trigonometric quotients are
/// evaluated by their Taylor series.
pub const SMALL_ANGLE: f64 = 0.05;

/// `|xi|^2 + (Theta^2 x, x) / 4 + (M x, xi)`.
pub fn hamiltonian(x: &[f64], xi: &[f64], theta: &[f64; 3], p: &AnisotropyParams) -> f64 {
    let norms = theta_norms(theta, p);
    let quad: f64 = norms.iter().enumerate().map(|(l, r)| r * r * block_norm_sq(x, l)).sum();
    let mx = theta_matrix(theta, p).apply(x);
    dot(xi, xi) + 0.25 * quad + dot(&mx, xi)
}

/// Initial data `(x'(0), theta)` of a geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicIvp {
    pub v0: Vec<f64>,
    pub theta: [f64; 3],
    #[serde(skip)]
    norms: Vec<f64>,
}

impl GeodesicIvp {
    pub fn new(v0: Vec<f64>, theta: [f64; 3], p: &AnisotropyParams) -> Result<Self> {
        if v0.len() != p.horizontal_dim() {
            return Err(Error::DimensionMismatch { expected: p.horizontal_dim(), found: v0.len() });
        }
        if !v0.iter().chain(&theta).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("initial data".into()));
        }
        let norms = theta_norms(&theta, p);
        Ok(Self { v0, theta, norms })
    }

    /// Per-block norms `|theta|_l`.
    pub fn theta_norms(&self) -> &[f64] {
        &self.norms
    }

    /// Initial momentum `xi(0) = v0/2 - M x0/2`.
    pub fn initial_momentum(&self, x0: &[f64], p: &AnisotropyParams) -> Vec<f64> {
        let mx = theta_matrix(&self.theta, p).apply(x0);
        self.v0.iter().zip(&mx).map(|(v, m)| 0.5 * v - 0.5 * m).collect()
    }
}

/// Sampled solution of the Hamiltonian system.
#[derive(Debug, Clone)]
pub struct BicharacteristicPath {
    pub s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<[f64; 3]>,
    pub xi: Vec<Vec<f64>>,
    pub theta: [f64; 3],
}

impl BicharacteristicPath {
    pub fn to_curve(&self) -> Result<SampledCurve> {
        let pts = self.x.iter().zip(&self.z).map(|(x, z)| GroupPoint::new(x.clone(), *z)).collect();
        SampledCurve::new(self.s.clone(), pts)
    }

    pub fn hamiltonian_series(&self, p: &AnisotropyParams) -> Vec<f64> {
        self.x.iter().zip(&self.xi).map(|(x, xi)| hamiltonian(x, xi, &self.theta, p)).collect()
    }
}

/// Classical fixed-step RK4 for
/// `x' = 2 xi + M x`, `z'_m = theta_m |x|^2_{A_m} / 2 + (M_m x, xi)`,
/// `xi' = -Theta^2 x / 2 + M xi`, with `theta` constant and `z(0) = 0`.
pub fn integrate_bicharacteristic(
    iv: &GeodesicIvp,
    x0: &[f64],
    steps: usize,
    s_end: f64,
    p: &AnisotropyParams,
) -> Result<BicharacteristicPath> {
    if steps < 10 {
        return Err(Error::InvalidArgument(format!("steps = {steps}, need at least 10")));
    }
    p.check_horizontal(x0)?;
    let dim = p.horizontal_dim();
    let mm = theta_matrix(&iv.theta, p);
    let th2: Vec<f64> = iv.norms.iter().map(|r| r * r).collect();
    let theta = iv.theta;
    let rhs = |y: &[f64]| -> Vec<f64> {
        let (x, rest) = y.split_at(dim);
        let xi = &rest[3..];
        let mut out = vec![0.0; y.len()];
        let mx = mm.apply(x);
        let mxi = mm.apply(xi);
        for j in 0..dim {
            out[j] = 2.0 * xi[j] + mx[j];
            out[dim + 3 + j] = -0.5 * th2[j / 4] * x[j] + mxi[j];
        }
        for m in 0..3 {
            out[dim + m] = 0.5 * theta[m] * a_norm_sq(x, m, p) + bilinear(m, x, xi, p);
        }
        out
    };
    let h = s_end / steps as f64;
    let mut y: Vec<f64> = x0.to_vec();
    y.extend_from_slice(&[0.0; 3]);
    y.extend(iv.initial_momentum(x0, p));
    let mut path = BicharacteristicPath {
        s: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        xi: Vec::with_capacity(steps + 1),
        theta,
    };
    let push = |path: &mut BicharacteristicPath, s: f64, y: &[f64]| {
        path.s.push(s);
        path.x.push(y[..dim].to_vec());
        path.z.push([y[dim], y[dim + 1], y[dim + 2]]);
        path.xi.push(y[dim + 3..].to_vec());
    };
    push(&mut path, 0.0, &y);
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for i in 1..=steps {
        let k1 = rhs(&y);
        let k2 = rhs(&axpy(&y, &k1, 0.5 * h));
        let k3 = rhs(&axpy(&y, &k2, 0.5 * h));
        let k4 = rhs(&axpy(&y, &k3, h));
        for j in 0..y.len() {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("state diverged at step {i}; reduce the step size")));
        }
        let s = if i == steps { s_end } else { i as f64 * h };
        push(&mut path, s, &y);
    }
    Ok(path)
}

/// `(1 - cos 2sr) / 2r^2`.
fn quot_a(s: f64, r: f64) -> f64 {
    let u = s * r;
    if u.abs() < SMALL_ANGLE {
        let (s2, r2) = (s * s, r * r);
        let w = s2 * r2;
        s2 * (1.0 - w / 3.0 + 2.0 * w * w / 45.0 - w * w * w / 315.0 + 2.0 * w.powi(4) / 14175.0)
    } else {
        (s * r).sin().powi(2) / (r * r)
    }
}

/// `sin(2sr) / 2r`.
fn quot_b(s: f64, r: f64) -> f64 {
    let u = s * r;
    if u.abs() < SMALL_ANGLE {
        let w = u * u;
        s * (1.0 - 2.0 * w / 3.0 + 2.0 * w * w / 15.0 - 4.0 * w * w * w / 315.0 + 2.0 * w.powi(4) / 2835.0)
    } else {
        (2.0 * s * r).sin() / (2.0 * r)
    }
}

/// `(s - sin(2sr) / 2r) / r^2`.
fn quot_c(s: f64, r: f64) -> f64 {
    let u = s * r;
    if u.abs() < SMALL_ANGLE {
        let w = u * u;
        s * s * s
            * (2.0 / 3.0 - 2.0 * w / 15.0 + 4.0 * w * w / 315.0 - 2.0 * w * w * w / 2835.0
                + 4.0 * w.powi(4) / 155925.0)
    } else {
        (s - (2.0 * s * r).sin() / (2.0 * r)) / (r * r)
    }
}

/// Blocks of `exp(2 s M(theta))`: `cos(2s|theta|_l) I + sin(2s|theta|_l)/|theta|_l [M]_l`.
pub fn exp_2sm(s: f64, theta: &[f64; 3], p: &AnisotropyParams) -> BlockDiag {
    let norms = theta_norms(theta, p);
    let blocks = norms
        .iter()
        .enumerate()
        .map(|(l, &r)| {
            let c = (2.0 * s * r).cos();
            let sn = 2.0 * quot_b(s, r);
            let mb = theta_block(theta, p, l);
            let mut out = IDENTITY4;
            for i in 0..4 {
                for j in 0..4 {
                    out[i][j] = c * IDENTITY4[i][j] + sn * mb[i][j];
                }
            }
            out
        })
        .collect();
    BlockDiag { blocks }
}

/// Point and velocity of the geodesic from the origin at parameter `s`.
pub fn exp_map(iv: &GeodesicIvp, s: f64, p: &AnisotropyParams) -> (GroupPoint, Vec<f64>) {
    let n = p.n();
    let mut x = Vec::with_capacity(4 * n);
    let mut v = Vec::with_capacity(4 * n);
    let mut z = [0.0; 3];
    for l in 0..n {
        let r = iv.norms[l];
        let v0 = &iv.v0[4 * l..4 * l + 4];
        let mv = mat4_apply(&theta_block(&iv.theta, p, l), v0);
        let (qa, qb) = (quot_a(s, r), quot_b(s, r));
        let c = (2.0 * s * r).cos();
        for k in 0..4 {
            x.push(qa * mv[k] + qb * v0[k]);
            v.push(c * v0[k] + 2.0 * qb * mv[k]);
        }
        let e = 0.25 * block_norm_sq(&iv.v0, l) * quot_c(s, r);
        for (m, zm) in z.iter_mut().enumerate() {
            *zm += iv.theta[m] * p.a(m, l).powi(2) * e;
        }
    }
    (GroupPoint::new(x, z), v)
}

/// `exp_map` sampled on `samples` uniform points of `[0, s_end]`.
pub fn sample_geodesic(iv: &GeodesicIvp, s_end: f64, samples: usize, p: &AnisotropyParams) -> Result<SampledCurve> {
    SampledCurve::from_fn(0.0, s_end, samples, |s| exp_map(iv, s, p).0)
}

/// `x''(s_i) - 2 M(theta) x'(s_i)` by finite differences.
pub fn geodesic_residual(c: &SampledCurve, theta: &[f64; 3], p: &AnisotropyParams) -> Result<Vec<Vec<f64>>> {
    let dim = p.horizontal_dim();
    if c.points()[0].x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: c.points()[0].x.len() });
    }
    let mm = theta_matrix(theta, p);
    let vel = c.velocity();
    let acc = c.acceleration();
    Ok(vel
        .iter()
        .zip(&acc)
        .map(|(v, a)| {
            let mv = mm.apply(&v.x);
            a.x.iter().zip(&mv).map(|(ai, mi)| ai - 2.0 * mi).collect()
        })
        .collect())
}

pub fn max_vec_norm(r: &[Vec<f64>]) -> f64 {
    r.iter().map(|v| norm(v)).fold(0.0, f64::max)
}

/// Least-squares multipliers minimizing `sum_i |x'' - 2 M(theta) x'|^2`.
pub fn fit_theta(c: &SampledCurve, p: &AnisotropyParams) -> [f64; 3] {
    let vel = c.velocity();
    let acc = c.acceleration();
    let mut g = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (v, a) in vel.iter().zip(&acc) {
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|m| block_matrix_apply(m, &v.x, p).iter().map(|t| 2.0 * t).collect())
            .collect();
        for i in 0..3 {
            rhs[i] += dot(&cols[i], &a.x);
            for j in 0..3 {
                g[(i, j)] += dot(&cols[i], &cols[j]);
            }
        }
    }
    let sol = g.lu().solve(&rhs).or_else(|| g.pseudo_inverse(1e-14).ok().map(|pinv| pinv * rhs));
    match sol {
        Some(t) => [t[0], t[1], t[2]],
        None => [0.0; 3],
    }
}

/// Finite-difference checks of a geodesic sampled from `exp_map`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub samples: usize,
    pub horizontality: f64,
    pub geodesic: f64,
    /// `max(1, max_l 2 |theta|_l |v0_l|)`, the size of `x''`.
    pub scale: f64,
    pub length: f64,
}

impl Battery {
    /// `geodesic / scale`.
    pub fn geodesic_relative(&self) -> f64 {
        self.geodesic / self.scale
    }
}

/// `max(1, max_l 2 |theta|_l |v0_l|)`: the magnitude of `x''` along the
/// geodesic, used to normalize `x'' - 2 M x'`.
pub fn acceleration_scale(iv: &GeodesicIvp) -> f64 {
    iv.norms
        .iter()
        .enumerate()
        .map(|(l, r)| 2.0 * r * block_norm_sq(&iv.v0, l).sqrt())
        .fold(1.0, f64::max)
}

/// Sample count for which the leading O(h^2) errors stay below a quarter
/// of their tolerances: `tol` for the horizontality residual,
/// `tol * acceleration_scale` for `x'' - 2 M x'` and `length_tol` for the
/// relative length error. Never fewer than the default 1001.
pub fn battery_samples(iv: &GeodesicIvp, s_end: f64, tol: f64, length_tol: f64, p: &AnisotropyParams) -> usize {
    let mut geo = 0.0f64;
    let mut hor = 0.0f64;
    let mut len = 0.0f64;
    let speed2 = dot(&iv.v0, &iv.v0).max(f64::MIN_POSITIVE);
    let theta_abs: f64 = iv.theta.iter().map(|t| t.abs()).sum();
    for (l, &r) in iv.norms.iter().enumerate() {
        let e = block_norm_sq(&iv.v0, l);
        let v = e.sqrt();
        // endpoint stencils dominate: 10 h^2 r^3 |v| for x'' - 2Mx'
        geo = geo.max(10.0 * r.powi(3) * v);
        let amax = (0..3).map(|m| p.a(m, l)).fold(0.0, f64::max);
        let xmax = v * s_end.max(1.0);
        hor += (theta_abs * amax * amax * e + amax * xmax * 4.0 * r * r * v) / 3.0;
        len = len.max(2.0 * r * r / 3.0 * e / speed2);
    }
    let need = |c: f64, t: f64| if c > 0.0 { (4.0 * c / t).sqrt() } else { 0.0 };
    let inv_h = need(geo, tol * acceleration_scale(iv)).max(need(hor, tol)).max(need(len, length_tol));
    let n = (inv_h * s_end).ceil() as usize + 1;
    n.max(crate::curves::DEFAULT_SAMPLES)
}

/// Residual maxima and trapezoid length of `exp_map` on `samples` points,
/// evaluated in overlapping chunks so that large sample counts stay cheap
/// in memory. Each interior residual uses the same stencil as on the full
/// grid.
pub fn geodesic_battery(iv: &GeodesicIvp, s_end: f64, samples: usize, p: &AnisotropyParams) -> Result<Battery> {
    const CHUNK: usize = 1 << 14;
    if samples < 4 {
        return Err(Error::NonUniformGrid);
    }
    let grid_at = |i: usize| if i + 1 == samples { s_end } else { s_end * i as f64 / (samples - 1) as f64 };
    let h = s_end / (samples - 1) as f64;
    let mut out = Battery { samples, horizontality: 0.0, geodesic: 0.0, scale: acceleration_scale(iv), length: 0.0 };
    let mut start = 0usize;
    let mut prev_speed: Option<f64> = None;
    while start < samples - 1 {
        // chunk covers global indices lo..=hi, results kept for start..=keep_hi
        let lo = start.saturating_sub(1);
        let hi = (start + CHUNK).min(samples - 1);
        let keep_hi = if hi == samples - 1 { hi } else { hi - 1 };
        let lo = lo.min(hi.saturating_sub(3));
        let s: Vec<f64> = (lo..=hi).map(grid_at).collect();
        let pts: Vec<GroupPoint> = s.iter().map(|&t| exp_map(iv, t, p).0).collect();
        let c = SampledCurve::new(s, pts)?;
        let hres = horizontality_residual(&c, p)?;
        let gres = geodesic_residual(&c, &iv.theta, p)?;
        let vel = c.velocity();
        for gi in start..=keep_hi {
            let k = gi - lo;
            out.horizontality = out.horizontality.max(max_norm(&hres[k..=k]));
            out.geodesic = out.geodesic.max(norm(&gres[k]));
            let sp = norm(&vel[k].x);
            if let Some(prev) = prev_speed {
                out.length += 0.5 * h * (prev + sp);
            }
            prev_speed = Some(sp);
        }
        start = keep_hi + 1;
    }
    Ok(out)
}

/// The default 1001-sample grid on `[0, 1]`.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(0.0, 1.0, crate::curves::DEFAULT_SAMPLES)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_branches_agree_with_direct_formulas() {
        for &(s, r) in &[(1.0f64, 0.0499f64), (0.7, 0.07), (2.0, 0.0249)] {
            let u = s * r;
            let a = (u.sin() / r).powi(2);
            let b = (2.0 * u).sin() / (2.0 * r);
            let c = (s - b) / (r * r);
            assert!((quot_a(s, r) - a).abs() < 1e-13 * a.abs());
            assert!((quot_b(s, r) - b).abs() < 1e-13 * b.abs());
            assert!((quot_c(s, r) - c).abs() < 1e-10 * c.abs());
        }
        assert_eq!(quot_a(0.3, 0.0), 0.09);
        assert_eq!(quot_b(0.3, 0.0), 0.3);
    }

    #[test]
    fn zero_theta_gives_straight_line() {
        let p = AnisotropyParams::isotropic(1);
        let iv = GeodesicIvp::new(vec![0.3, -0.4, 1.2, 0.1], [0.0; 3], &p).unwrap();
        let (q, v) = exp_map(&iv, 0.5, &p);
        assert_eq!(q.x, vec![0.15, -0.2, 0.6, 0.05]);
        assert_eq!(q.z, [0.0; 3]);
        assert_eq!(v, iv.v0);
    }

    #[test]
    fn hamiltonian_scaling() {
        let p = AnisotropyParams::new(1, [vec![1.3], vec![0.6], vec![2.0]]).unwrap();
        let x = [0.2, -0.5, 0.3, 0.9];
        let xi = [1.1, 0.4, -0.7, 0.2];
        let th = [0.3, -1.2, 0.5];
        let h1 = hamiltonian(&x, &xi, &th, &p);
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let xi2: Vec<f64> = xi.iter().map(|v| 3.0 * v).collect();
        assert!((hamiltonian(&x2, &xi2, &th, &p) - 9.0 * h1).abs() < 1e-12 * h1.abs().max(1.0));
        assert!((hamiltonian(&x, &xi, &[0.0; 3], &p) - dot(&xi, &xi)).abs() < 1e-15);
    }

    #[test]
    fn chunked_battery_matches_full_grid() {
        let p = AnisotropyParams::new(2, [vec![1.0, 0.8], vec![0.6, 1.2], vec![0.9, 1.1]]).unwrap();
        let iv = GeodesicIvp::new(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.3, 0.6], [0.8, -0.5, 1.1], &p).unwrap();
        let samples = 40_000;
        let c = sample_geodesic(&iv, 1.0, samples, &p).unwrap();
        let full_h = max_norm(&horizontality_residual(&c, &p).unwrap());
        let full_g = max_vec_norm(&geodesic_residual(&c, &iv.theta, &p).unwrap());
        let full_len = crate::curves::horizontal_length(&c);
        let b = geodesic_battery(&iv, 1.0, samples, &p).unwrap();
        assert!((b.horizontality - full_h).abs() <= 1e-15 + 1e-9 * full_h);
        assert!((b.geodesic - full_g).abs() <= 1e-15 + 1e-9 * full_g);
        assert!((b.length - full_len).abs() < 1e-12);
    }
}
