//! Uniformly sampled curves, horizontality residuals, lengths and energies.

use std::io::{Read, Write};

use crate::algebra::{a_norm_sq, bilinear, group_mul, norm, GroupPoint};
use crate::error::{Error, Result};
use crate::params::AnisotropyParams;

/// Default number of samples on `[0, 1]`.
pub const DEFAULT_SAMPLES: usize = 1001;

/// A curve sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    s: Vec<f64>,
    points: Vec<GroupPoint>,
}

pub fn uniform_grid(s0: f64, s1: f64, samples: usize) -> Vec<f64> {
    let h = (s1 - s0) / (samples - 1) as f64;
    (0..samples).map(|i| if i + 1 == samples { s1 } else { s0 + i as f64 * h }).collect()
}

impl SampledCurve {
    pub fn new(s: Vec<f64>, points: Vec<GroupPoint>) -> Result<Self> {
        if s.len() < 3 || s.len() != points.len() {
            return Err(Error::NonUniformGrid);
        }
        let h = (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64;
        if !(h > 0.0) || s.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-8 * h) {
            return Err(Error::NonUniformGrid);
        }
        let dim = points[0].x.len();
        if let Some(bad) = points.iter().find(|q| q.x.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.x.len() });
        }
        Ok(Self { s, points })
    }

    /// Samples `f` on `samples` uniform points of `[s0, s1]`.
    pub fn from_fn(s0: f64, s1: f64, samples: usize, f: impl Fn(f64) -> GroupPoint) -> Result<Self> {
        if samples < 3 {
            return Err(Error::NonUniformGrid);
        }
        let s = uniform_grid(s0, s1, samples);
        let points = s.iter().map(|&t| f(t)).collect();
        Self::new(s, points)
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn points(&self) -> &[GroupPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.s[self.s.len() - 1] - self.s[0]) / (self.s.len() - 1) as f64
    }

    pub fn n_blocks(&self) -> usize {
        self.points[0].n_blocks()
    }

    /// Coordinate series, one vector per coordinate of `(x, z)`.
    fn columns(&self) -> Vec<Vec<f64>> {
        let dim = self.points[0].x.len() + 3;
        let mut cols = vec![Vec::with_capacity(self.len()); dim];
        for q in &self.points {
            for (c, v) in cols.iter_mut().zip(q.x.iter().chain(&q.z)) {
                c.push(*v);
            }
        }
        cols
    }

    /// First derivatives at every sample, as points `(x', z')`.
    pub fn velocity(&self) -> Vec<GroupPoint> {
        let h = self.step();
        rows(self.columns().iter().map(|c| diff1(c, h)).collect())
    }

    /// Second derivatives at every sample.
    pub fn acceleration(&self) -> Vec<GroupPoint> {
        let h = self.step();
        rows(self.columns().iter().map(|c| diff2(c, h)).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(csv_header(self.n_blocks()))?;
        for (s, q) in self.s.iter().zip(&self.points) {
            let mut rec = vec![s.to_string()];
            rec.extend(q.x.iter().chain(&q.z).map(|v| v.to_string()));
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        let cols = header.len();
        if cols < 8 || (cols - 4) % 4 != 0 {
            return Err(Error::InvalidArgument(format!("unexpected curve header with {cols} columns")));
        }
        let n = (cols - 4) / 4;
        if header.iter().collect::<Vec<_>>() != csv_header(n) {
            return Err(Error::InvalidArgument("unexpected curve header".into()));
        }
        let mut s = Vec::new();
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("bad number in curve CSV: {e}")))?;
            s.push(vals[0]);
            points.push(GroupPoint::from_coords(&vals[1..]));
        }
        Self::new(s, points)
    }
}

/// Column names `s,x_11,x_21,x_31,x_41,...,x_4n,z_1,z_2,z_3`.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["s".to_string()];
    for l in 1..=n {
        for k in 1..=4 {
            h.push(format!("x_{k}{l}"));
        }
    }
    h.extend(["z_1", "z_2", "z_3"].map(String::from));
    h
}

fn rows(cols: Vec<Vec<f64>>) -> Vec<GroupPoint> {
    let len = cols[0].len();
    (0..len)
        .map(|i| GroupPoint::from_coords(&cols.iter().map(|c| c[i]).collect::<Vec<_>>()))
        .collect()
}

/// Central first differences with one-sided second-order ends.
pub fn diff1(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
    }
    d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
    d
}

/// Central second differences with one-sided second-order ends
/// (first-order when only three samples exist).
pub fn diff2(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h2;
    }
    if n >= 4 {
        d[0] = (2.0 * y[0] - 5.0 * y[1] + 4.0 * y[2] - y[3]) / h2;
        d[n - 1] = (2.0 * y[n - 1] - 5.0 * y[n - 2] + 4.0 * y[n - 3] - y[n - 4]) / h2;
    } else {
        d[0] = d[1];
        d[n - 1] = d[1];
    }
    d
}

/// `z'_m - (M_m x, x') / 2` at every sample.
pub fn horizontality_residual(c: &SampledCurve, p: &AnisotropyParams) -> Result<Vec<[f64; 3]>> {
    check_curve(c, p)?;
    let vel = c.velocity();
    Ok(c.points
        .iter()
        .zip(&vel)
        .map(|(q, v)| {
            let mut r = [0.0; 3];
            for (m, rm) in r.iter_mut().enumerate() {
                *rm = v.z[m] - 0.5 * bilinear(m, &q.x, &v.x, p);
            }
            r
        })
        .collect())
}

/// `z''_m - (M_m x, x'') / 2` at every sample; vanishes up to O(h^2) on
/// horizontal curves.
pub fn vertical_acceleration_residual(c: &SampledCurve, p: &AnisotropyParams) -> Result<Vec<[f64; 3]>> {
    check_curve(c, p)?;
    let acc = c.acceleration();
    Ok(c.points
        .iter()
        .zip(&acc)
        .map(|(q, a)| {
            let mut r = [0.0; 3];
            for (m, rm) in r.iter_mut().enumerate() {
                *rm = a.z[m] - 0.5 * bilinear(m, &q.x, &a.x, p);
            }
            r
        })
        .collect())
}

/// Largest Euclidean norm over a residual series.
pub fn max_norm<const D: usize>(r: &[[f64; D]]) -> f64 {
    r.iter().map(|v| norm(v)).fold(0.0, f64::max)
}

/// Trapezoid rule for `int |x'| ds`.
pub fn horizontal_length(c: &SampledCurve) -> f64 {
    let speeds: Vec<f64> = c.velocity().iter().map(|v| norm(&v.x)).collect();
    trapezoid(&speeds, c.step())
}

pub(crate) fn trapezoid(y: &[f64], h: f64) -> f64 {
    let inner: f64 = y[1..y.len() - 1].iter().sum();
    h * (inner + 0.5 * (y[0] + y[y.len() - 1]))
}

/// Kinetic energies `(E, E_1, E_2, E_3)` with `E = |x'|^2 / 2` and
/// `E_m = |x'|^2_{A_m} / 2`.
pub fn kinetic_energies(c: &SampledCurve, p: &AnisotropyParams) -> Result<Vec<[f64; 4]>> {
    check_curve(c, p)?;
    Ok(c.velocity()
        .iter()
        .map(|v| {
            let e = 0.5 * v.x.iter().map(|a| a * a).sum::<f64>();
            [e, 0.5 * a_norm_sq(&v.x, 0, p), 0.5 * a_norm_sq(&v.x, 1, p), 0.5 * a_norm_sq(&v.x, 2, p)]
        })
        .collect())
}

/// Pointwise left translation `q o c(s)`.
pub fn left_translate_curve(q: &GroupPoint, c: &SampledCurve, p: &AnisotropyParams) -> Result<SampledCurve> {
    let points = c.points.iter().map(|r| group_mul(q, r, p)).collect::<Result<Vec<_>>>()?;
    SampledCurve::new(c.s.clone(), points)
}

/// The horizontal curve `(s^2/2, s, s^2/2, s, 0, ..., 0, a_11 s^3/6, c1, c2)`,
/// which is not a geodesic for any choice of multipliers.
pub fn counterexample_curve(grid: &[f64], p: &AnisotropyParams, c1: f64, c2: f64) -> Result<SampledCurve> {
    let a11 = p.a(0, 0);
    let points = grid
        .iter()
        .map(|&s| {
            let mut x = vec![0.0; p.horizontal_dim()];
            x[0] = 0.5 * s * s;
            x[1] = s;
            x[2] = 0.5 * s * s;
            x[3] = s;
            GroupPoint::new(x, [a11 * s * s * s / 6.0, c1, c2])
        })
        .collect();
    SampledCurve::new(grid.to_vec(), points)
}

fn check_curve(c: &SampledCurve, p: &AnisotropyParams) -> Result<()> {
    let found = c.points[0].x.len();
    if found != p.horizontal_dim() {
        return Err(Error::DimensionMismatch { expected: p.horizontal_dim(), found });
    }
    Ok(())
}
