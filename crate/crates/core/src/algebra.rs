//! Group structure of `Q^n`: the block matrices, the group law, the
//! left-invariant frame, dual forms, dilations and the sub-Laplacian.
//!
//! Horizontal coordinates are stored block-major, `x_{11}, x_{21}, x_{31},
//! x_{41}, x_{12}, ...`, so block `l` is the slice `x[4l..4l + 4]`.
//! Block and direction indices are zero-based throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::AnisotropyParams;

pub type Mat4 = [[f64; 4]; 4];

pub const IDENTITY4: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// The fixed 4 x 4 matrices from which every `M_m` is assembled.
pub const BASE: [Mat4; 3] = [
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ],
    [
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ],
    [
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ],
];

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat4_apply(a: &Mat4, v: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, row) in a.iter().enumerate() {
        out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
    }
    out
}

pub fn mat4_transpose(a: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[j][i] = a[i][j];
        }
    }
    out
}

/// A block-diagonal `4n x 4n` matrix stored as its `n` diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiag {
    pub blocks: Vec<Mat4>,
}

impl BlockDiag {
    pub fn identity(n: usize) -> Self {
        Self { blocks: vec![IDENTITY4; n] }
    }

    pub fn zero(n: usize) -> Self {
        Self { blocks: vec![[[0.0; 4]; 4]; n] }
    }

    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        for (l, b) in self.blocks.iter().enumerate() {
            out.extend_from_slice(&mat4_apply(b, &x[4 * l..4 * l + 4]));
        }
        out
    }

    pub fn mul(&self, other: &BlockDiag) -> BlockDiag {
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| mat4_mul(a, b)).collect();
        BlockDiag { blocks }
    }

    pub fn transpose(&self) -> BlockDiag {
        BlockDiag { blocks: self.blocks.iter().map(mat4_transpose).collect() }
    }

    pub fn add(&self, other: &BlockDiag) -> BlockDiag {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> BlockDiag {
        let mut out = self.clone();
        for v in out.blocks.iter_mut().flatten().flatten() {
            *v *= s;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &BlockDiag) -> f64 {
        self.zip_with(other, |a, b| a - b)
            .blocks
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn zip_with(&self, other: &BlockDiag, f: impl Fn(f64, f64) -> f64) -> BlockDiag {
        let mut out = self.clone();
        for (a, b) in out.blocks.iter_mut().zip(&other.blocks) {
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] = f(a[i][j], b[i][j]);
                }
            }
        }
        out
    }
}

/// Diagonal matrix `A_m` with blocks `a_{ml} I`.
pub fn a_matrix(m: usize, p: &AnisotropyParams) -> Result<BlockDiag> {
    check_direction(m)?;
    let blocks = (0..p.n()).map(|l| scaled(&IDENTITY4, p.a(m, l))).collect();
    Ok(BlockDiag { blocks })
}

/// `M_m`, with block `l` equal to `a_{ml}` times the base matrix.
pub fn block_matrix(m: usize, p: &AnisotropyParams) -> Result<BlockDiag> {
    check_direction(m)?;
    let blocks = (0..p.n()).map(|l| scaled(&BASE[m], p.a(m, l))).collect();
    Ok(BlockDiag { blocks })
}

/// Block `l` of `M(theta) = sum_m theta_m M_m`.
pub fn theta_block(theta: &[f64; 3], p: &AnisotropyParams, l: usize) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for m in 0..3 {
        let c = theta[m] * p.a(m, l);
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += c * BASE[m][i][j];
            }
        }
    }
    out
}

pub fn theta_matrix(theta: &[f64; 3], p: &AnisotropyParams) -> BlockDiag {
    BlockDiag { blocks: (0..p.n()).map(|l| theta_block(theta, p, l)).collect() }
}

/// `|theta|_l = sqrt(sum_m theta_m^2 a_{ml}^2)`.
pub fn theta_norm(theta: &[f64; 3], p: &AnisotropyParams, l: usize) -> Result<f64> {
    if l >= p.n() {
        return Err(Error::InvalidIndex(format!("block {l} with n = {}", p.n())));
    }
    Ok(theta_norm_unchecked(theta, p, l))
}

pub(crate) fn theta_norm_unchecked(theta: &[f64; 3], p: &AnisotropyParams, l: usize) -> f64 {
    (0..3).map(|m| (theta[m] * p.a(m, l)).powi(2)).sum::<f64>().sqrt()
}

pub fn theta_norms(theta: &[f64; 3], p: &AnisotropyParams) -> Vec<f64> {
    (0..p.n()).map(|l| theta_norm_unchecked(theta, p, l)).collect()
}

/// `Theta^2 = sum_m theta_m^2 A_m^2`, diagonal with entries `|theta|_l^2`.
pub fn theta_squared(theta: &[f64; 3], p: &AnisotropyParams) -> BlockDiag {
    let blocks = (0..p.n())
        .map(|l| scaled(&IDENTITY4, theta_norm_unchecked(theta, p, l).powi(2)))
        .collect();
    BlockDiag { blocks }
}

/// `|x|^2_{A_m} = sum_l a_{ml}^2 |x_l|^2`.
pub fn a_norm_sq(x: &[f64], m: usize, p: &AnisotropyParams) -> f64 {
    (0..p.n()).map(|l| p.a(m, l).powi(2) * block_norm_sq(x, l)).sum()
}

pub fn block_norm_sq(x: &[f64], l: usize) -> f64 {
    x[4 * l..4 * l + 4].iter().map(|v| v * v).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn scaled(a: &Mat4, s: f64) -> Mat4 {
    a.map(|row| row.map(|v| v * s))
}

fn check_direction(m: usize) -> Result<()> {
    if m >= 3 {
        return Err(Error::InvalidIndex(format!("direction {m} (expected 0, 1 or 2)")));
    }
    Ok(())
}

/// A point `(x, z)` of the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint {
    pub x: Vec<f64>,
    pub z: [f64; 3],
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, z: [f64; 3]) -> Self {
        Self { x, z }
    }

    pub fn origin(n: usize) -> Self {
        Self { x: vec![0.0; 4 * n], z: [0.0; 3] }
    }

    pub fn n_blocks(&self) -> usize {
        self.x.len() / 4
    }

    pub fn block(&self, l: usize) -> &[f64] {
        &self.x[4 * l..4 * l + 4]
    }

    /// Flat coordinates `(x, z)` of length `4n + 3`.
    pub fn coords(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.z);
        v
    }

    pub fn from_coords(c: &[f64]) -> Self {
        let k = c.len() - 3;
        Self { x: c[..k].to_vec(), z: [c[k], c[k + 1], c[k + 2]] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.z).all(|v| v.is_finite())
    }

    pub fn check(&self, p: &AnisotropyParams) -> Result<()> {
        p.check_horizontal(&self.x)?;
        if !self.is_finite() {
            return Err(Error::NonFinite("group point has non-finite coordinates".into()));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        Self { x: self.x.iter().map(|v| -v).collect(), z: self.z.map(|v| -v) }
    }
}

/// `(x, z) o (x', z') = (x + x', z_m + z'_m + (M_m x, x') / 2)`.
pub fn group_mul(q: &GroupPoint, r: &GroupPoint, p: &AnisotropyParams) -> Result<GroupPoint> {
    q.check(p)?;
    r.check(p)?;
    let x = q.x.iter().zip(&r.x).map(|(a, b)| a + b).collect();
    let mut z = [0.0; 3];
    for (m, zm) in z.iter_mut().enumerate() {
        *zm = q.z[m] + r.z[m] + 0.5 * bilinear(m, &q.x, &r.x, p);
    }
    Ok(GroupPoint { x, z })
}

/// `(M_m u, v)` evaluated blockwise.
pub fn bilinear(m: usize, u: &[f64], v: &[f64], p: &AnisotropyParams) -> f64 {
    // summed over antisymmetric pairs so that (M_m x, x) is exactly zero
    let b = &BASE[m];
    let mut acc = 0.0;
    for l in 0..p.n() {
        let (ul, vl) = (&u[4 * l..4 * l + 4], &v[4 * l..4 * l + 4]);
        let mut block = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                if b[i][j] != 0.0 {
                    block += b[i][j] * (ul[j] * vl[i] - ul[i] * vl[j]);
                }
            }
        }
        acc += p.a(m, l) * block;
    }
    acc
}

/// Coefficients of the frame `X_{kl}` (index `4l + k`) followed by `Z_m`
/// (index `4n + m`) in the coordinate basis `(d/dx, d/dz)`.
pub fn frame(q: &GroupPoint, p: &AnisotropyParams) -> Vec<Vec<f64>> {
    let dim = p.topological_dim();
    let hdim = p.horizontal_dim();
    let mx: Vec<Vec<f64>> = (0..3).map(|m| block_matrix_apply(m, &q.x, p)).collect();
    let mut out = Vec::with_capacity(dim);
    for j in 0..hdim {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        for m in 0..3 {
            v[hdim + m] = 0.5 * mx[m][j];
        }
        out.push(v);
    }
    for m in 0..3 {
        let mut v = vec![0.0; dim];
        v[hdim + m] = 1.0;
        out.push(v);
    }
    out
}

pub(crate) fn block_matrix_apply(m: usize, x: &[f64], p: &AnisotropyParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for l in 0..p.n() {
        let b = mat4_apply(&BASE[m], &x[4 * l..4 * l + 4]);
        out.extend(b.iter().map(|v| v * p.a(m, l)));
    }
    out
}

/// Commutator table of the frame: `[X_i, X_j] = sum_m c_m Z_m`.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    a: AnisotropyParams,
}

impl StructureConstants {
    /// Coefficients `c` for frame indices `i`, `j` (horizontal indices
    /// `4l + k`, vertical indices `4n + m`).
    pub fn bracket(&self, i: usize, j: usize) -> [f64; 3] {
        let hdim = self.a.horizontal_dim();
        if i >= hdim || j >= hdim || i / 4 != j / 4 || i == j {
            return [0.0; 3];
        }
        let l = i / 4;
        let (a1, a2, a3) = (self.a.a(0, l), self.a.a(1, l), self.a.a(2, l));
        let (k, kk, sign) = if i % 4 < j % 4 { (i % 4, j % 4, 1.0) } else { (j % 4, i % 4, -1.0) };
        let c = match (k, kk) {
            (0, 1) => [-a1, 0.0, 0.0],
            (0, 2) => [0.0, 0.0, a3],
            (0, 3) => [0.0, a2, 0.0],
            (1, 2) => [0.0, a2, 0.0],
            (1, 3) => [0.0, 0.0, -a3],
            (2, 3) => [-a1, 0.0, 0.0],
            _ => unreachable!("k < kk < 4"),
        };
        c.map(|v| sign * v)
    }
}

pub fn structure_constants(p: &AnisotropyParams) -> StructureConstants {
    StructureConstants { a: p.clone() }
}

/// Commutator `[X_i, X_j]` of frame fields at `q`, by central differences
/// of the coefficient fields.
pub fn frame_commutator_fd(
    q: &GroupPoint,
    i: usize,
    j: usize,
    h: f64,
    p: &AnisotropyParams,
) -> Vec<f64> {
    let dim = p.topological_dim();
    let c0 = q.coords();
    let f0 = frame(q, p);
    let field = |c: &[f64], k: usize| frame(&GroupPoint::from_coords(c), p).swap_remove(k);
    // directional derivative of field k along coefficient vector v
    let deriv = |k: usize, v: &[f64]| -> Vec<f64> {
        let plus: Vec<f64> = c0.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = c0.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let fp = field(&plus, k);
        let fm = field(&minus, k);
        (0..dim).map(|r| (fp[r] - fm[r]) / (2.0 * h)).collect()
    };
    let dj = deriv(j, &f0[i]);
    let di = deriv(i, &f0[j]);
    dj.iter().zip(&di).map(|(a, b)| a - b).collect()
}

/// `theta_m(v) = v_{z_m} - (M_m x, v_x) / 2`.
pub fn dual_form(m: usize, q: &GroupPoint, v: &[f64], p: &AnisotropyParams) -> Result<f64> {
    check_direction(m)?;
    let hdim = p.horizontal_dim();
    if v.len() != hdim + 3 {
        return Err(Error::DimensionMismatch { expected: hdim + 3, found: v.len() });
    }
    Ok(v[hdim + m] - 0.5 * bilinear(m, &q.x, &v[..hdim], p))
}

/// `delta_lambda (x, z) = (lambda x, lambda^2 z)`.
pub fn dilate(lambda: f64, q: &GroupPoint) -> Result<GroupPoint> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("dilation factor {lambda} must be > 0")));
    }
    Ok(GroupPoint {
        x: q.x.iter().map(|v| lambda * v).collect(),
        z: q.z.map(|v| lambda * lambda * v),
    })
}

/// `((|x|^2)^2 + |z|^2)^(1/4)`.
pub fn homogeneous_norm(q: &GroupPoint) -> f64 {
    let x2 = dot(&q.x, &q.x);
    let z2 = dot(&q.z, &q.z);
    (x2 * x2 + z2).sqrt().sqrt()
}

/// Finite-difference step `rel` times the homogeneous norm of `q`
/// (or `rel` itself at the origin).
pub fn fd_step(q: &GroupPoint, rel: f64) -> f64 {
    let r = homogeneous_norm(q);
    if r > 0.0 {
        rel * r
    } else {
        rel
    }
}

/// Second-order finite-difference value of the sub-Laplacian applied to
/// `g` at `q`, using the coordinate form
/// `Delta_x + 1/4 sum_m |x|^2_{A_m} d^2/dz_m^2 + sum_m (M_m x, grad_x) d/dz_m`.
///
/// The mixed terms are evaluated as directional cross differences along
/// `M_m x` and `z_m`.
pub fn sublaplacian_apply<G>(g: G, q: &GroupPoint, h: f64, p: &AnisotropyParams) -> Result<f64>
where
    G: Fn(&GroupPoint) -> Result<f64>,
{
    Ok(sublaplacian_terms(g, q, h, p)?.value)
}

/// Finite-difference sub-Laplacian together with the sum of the absolute
/// values of its individual difference terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SublaplacianFd {
    pub value: f64,
    /// Size of the terms that cancel in `value`; the natural scale of a
    /// residual when `g` is annihilated by the operator.
    pub scale: f64,
}

pub fn sublaplacian_terms<G>(g: G, q: &GroupPoint, h: f64, p: &AnisotropyParams) -> Result<SublaplacianFd>
where
    G: Fn(&GroupPoint) -> Result<f64>,
{
    q.check(p)?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be > 0")));
    }
    let g0 = g(q)?;
    let at = |dx: &[(usize, f64)], dz: Option<(usize, f64)>| -> Result<f64> {
        let mut r = q.clone();
        for &(j, d) in dx {
            r.x[j] += d;
        }
        if let Some((m, d)) = dz {
            r.z[m] += d;
        }
        g(&r)
    };
    let h2 = h * h;
    let mut total = 0.0;
    let mut scale = 0.0;
    let mut push = |v: f64| {
        total += v;
        scale += v.abs();
    };
    for j in 0..q.x.len() {
        let plus = at(&[(j, h)], None)?;
        let minus = at(&[(j, -h)], None)?;
        push((plus - 2.0 * g0 + minus) / h2);
    }
    for m in 0..3 {
        let coef = 0.25 * a_norm_sq(&q.x, m, p);
        if coef != 0.0 {
            let plus = at(&[], Some((m, h)))?;
            let minus = at(&[], Some((m, -h)))?;
            push(coef * (plus - 2.0 * g0 + minus) / h2);
        }
        let v = block_matrix_apply(m, &q.x, p);
        let vn = norm(&v);
        if vn > 0.0 {
            let plus_dir: Vec<(usize, f64)> = v.iter().enumerate().map(|(j, c)| (j, h * c / vn)).collect();
            let minus_dir: Vec<(usize, f64)> = plus_dir.iter().map(|&(j, d)| (j, -d)).collect();
            let pp = at(&plus_dir, Some((m, h)))?;
            let pm = at(&plus_dir, Some((m, -h)))?;
            let mp = at(&minus_dir, Some((m, h)))?;
            let mm = at(&minus_dir, Some((m, -h)))?;
            push(vn * (pp - pm - mp + mm) / (4.0 * h2));
        }
    }
    Ok(SublaplacianFd { value: total, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params2() -> AnisotropyParams {
        AnisotropyParams::new(2, [vec![1.5, 0.7], vec![0.4, 2.0], vec![1.1, 0.9]]).unwrap()
    }

    #[test]
    fn base_matrix_relations() {
        let neg_id = scaled(&IDENTITY4, -1.0);
        for m in 0..3 {
            assert_eq!(mat4_mul(&BASE[m], &BASE[m]), neg_id);
            assert_eq!(mat4_transpose(&BASE[m]), scaled(&BASE[m], -1.0));
        }
        assert_eq!(mat4_mul(&BASE[0], &BASE[1]), BASE[2]);
        assert_eq!(mat4_mul(&BASE[1], &BASE[2]), BASE[0]);
        assert_eq!(mat4_mul(&BASE[2], &BASE[0]), BASE[1]);
    }

    #[test]
    fn first_block_matrix_maps_e1_to_minus_a_e2() {
        let p = params2();
        let first = block_matrix(0, &p).unwrap();
        let mut e = vec![0.0; 8];
        e[4] = 1.0;
        let img = first.apply(&e);
        let mut expected = vec![0.0; 8];
        expected[5] = -0.7;
        assert_eq!(img, expected);
        assert!(block_matrix(3, &p).is_err());
    }

    #[test]
    fn group_law_example() {
        let p = AnisotropyParams::new(1, [vec![2.0], vec![1.0], vec![1.0]]).unwrap();
        let e1 = GroupPoint::new(vec![1.0, 0.0, 0.0, 0.0], [0.0; 3]);
        let e2 = GroupPoint::new(vec![0.0, 1.0, 0.0, 0.0], [0.0; 3]);
        let r = group_mul(&e1, &e2, &p).unwrap();
        assert_eq!(r.x, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(r.z, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn frame_coefficient_example() {
        let p = params2();
        let q = GroupPoint::new(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0; 3]);
        let f = frame(&q, &p);
        assert_eq!(f[0][8], 0.75);
        let origin = GroupPoint::origin(2);
        for (j, v) in frame(&origin, &p).iter().enumerate() {
            assert!(v.iter().enumerate().all(|(r, c)| *c == if r == j { 1.0 } else { 0.0 }));
        }
    }

    #[test]
    fn symbolic_brackets_match_fd() {
        let p = params2();
        let q = GroupPoint::new(vec![0.3, -0.2, 0.5, 1.1, -0.7, 0.4, 0.9, -0.3], [0.2, -0.1, 0.4]);
        let sc = structure_constants(&p);
        for i in 0..8 {
            for j in 0..8 {
                let fd = frame_commutator_fd(&q, i, j, 1e-4, &p);
                let c = sc.bracket(i, j);
                for r in 0..8 {
                    assert!(fd[r].abs() < 1e-9);
                }
                for m in 0..3 {
                    assert!((fd[8 + m] - c[m]).abs() < 1e-9, "[{i},{j}] m={m}");
                }
            }
        }
        assert_eq!(sc.bracket(0, 1), [-1.5, 0.0, 0.0]);
        assert_eq!(sc.bracket(2, 3), [-1.5, 0.0, 0.0]);
        assert_eq!(sc.bracket(0, 5), [0.0; 3]);
    }

    #[test]
    fn dual_forms_annihilate_horizontal_frame() {
        let p = params2();
        let q = GroupPoint::new(vec![0.3, -0.2, 0.5, 1.1, -0.7, 0.4, 0.9, -0.3], [0.2, -0.1, 0.4]);
        let f = frame(&q, &p);
        for (j, v) in f.iter().enumerate() {
            for m in 0..3 {
                let val = dual_form(m, &q, v, &p).unwrap();
                let expected = if j == 8 + m { 1.0 } else { 0.0 };
                assert!((val - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sublaplacian_of_polynomials() {
        let p = params2();
        let q = GroupPoint::new(vec![0.3, -0.2, 0.5, 1.1, -0.7, 0.4, 0.9, -0.3], [0.2, -0.1, 0.4]);
        let lin = sublaplacian_apply(|r| Ok(r.x[0]), &q, 1e-3, &p).unwrap();
        let zed = sublaplacian_apply(|r| Ok(r.z[0]), &q, 1e-3, &p).unwrap();
        let sq = sublaplacian_apply(|r| Ok(dot(&r.x, &r.x)), &q, 1e-3, &p).unwrap();
        assert!(lin.abs() < 1e-8);
        assert!(zed.abs() < 1e-8);
        assert!((sq - 16.0).abs() < 1e-6);
    }

    #[test]
    fn homogeneous_norm_examples() {
        let q = GroupPoint::new(vec![3.0, 4.0, 0.0, 0.0], [0.0; 3]);
        assert!((homogeneous_norm(&q) - 5.0).abs() < 1e-14);
        let r = GroupPoint::new(vec![0.0; 4], [0.0, 0.0, 16.0]);
        assert!((homogeneous_norm(&r) - 4.0).abs() < 1e-14);
        let d = dilate(2.0, &q).unwrap();
        assert!((homogeneous_norm(&d) - 10.0).abs() < 1e-13);
        assert!(dilate(0.0, &q).is_err());
    }
}
