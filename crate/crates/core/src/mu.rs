//! The function `mu(t) = t / sin^2 t - cot t` and its level sets.
//!
//! On `(0, pi)` `mu` increases from 0 to infinity. On each branch
//! `(m pi, (m + 1) pi)`, `m >= 1`, it decreases from infinity to the
//! critical value `mu(c_m) = c_m`, where `tan c_m = c_m`, and then increases
//! back to infinity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branch index: `(0, pi)` for 0, `(m pi, (m + 1) pi)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MuBranch(pub u32);

impl MuBranch {
    pub fn interval(self) -> (f64, f64) {
        let m = self.0 as f64;
        (m * PI, (m + 1.0) * PI)
    }

    pub fn contains(self, t: f64) -> bool {
        let (lo, hi) = self.interval();
        t > lo && t < hi
    }

    /// Monotone sub-intervals of the branch.
    pub fn monotone_pieces(self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.interval();
        if self.0 == 0 {
            vec![(lo, hi)]
        } else {
            let c = critical_point(self.0);
            vec![(lo, c), (c, hi)]
        }
    }
}

/// `u - sin u`, accurate for small `u`.
pub(crate) fn u_minus_sin(u: f64) -> f64 {
    if u.abs() < 1.0 {
        // u^3/3! - u^5/5! + ...
        let w = u * u;
        let mut term = u * w / 6.0;
        let mut sum = 0.0f64;
        let mut k = 3.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            term *= -w / ((k + 1.0) * (k + 2.0));
            k += 2.0;
        }
        sum
    } else {
        u - u.sin()
    }
}

/// `sin t - t cos t`, accurate for small `t`.
fn sin_minus_t_cos(t: f64) -> f64 {
    if t.abs() < 1.0 {
        // sum_{k>=1} (-1)^(k+1) 2k t^(2k+1) / (2k+1)!
        let w = t * t;
        let mut fact_term = t * w / 6.0; // t^3/3!
        let mut sum = 0.0f64;
        let mut k = 1.0;
        while fact_term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += 2.0 * k * fact_term;
            fact_term *= -w / ((2.0 * k + 2.0) * (2.0 * k + 3.0));
            k += 1.0;
        }
        sum
    } else {
        t.sin() - t * t.cos()
    }
}

/// `mu(t)` without pole checks; the value is huge near `t in pi Z \ {0}`.
#[inline]
pub fn mu_unchecked(t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let s = t.sin();
    u_minus_sin(2.0 * t) / (2.0 * s * s)
}

fn check_pole(t: f64) -> Result<()> {
    let k = (t / PI).round();
    if k != 0.0 && (t - k * PI).abs() <= 4.0 * f64::EPSILON * t.abs() {
        return Err(Error::Pole(t));
    }
    Ok(())
}

pub fn mu(t: f64) -> Result<f64> {
    check_pole(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(mu_unchecked(t))
}

/// `mu'(t) = 2 (sin t - t cos t) / sin^3 t`.
pub fn mu_prime(t: f64) -> Result<f64> {
    check_pole(t)?;
    if t == 0.0 {
        return Ok(2.0 / 3.0);
    }
    Ok(mu_prime_unchecked(t))
}

#[inline]
pub fn mu_prime_unchecked(t: f64) -> f64 {
    if t == 0.0 {
        return 2.0 / 3.0;
    }
    let s = t.sin();
    if t.abs() < 1.0 {
        // sin t - t cos t ~ t^3/3, sin^3 t ~ t^3
        2.0 * sin_minus_t_cos(t) / (s * s * s)
    } else {
        2.0 * (s - t * t.cos()) / (s * s * s)
    }
}

/// Critical point `c_m` in `(m pi, (m + 1) pi)`, `m >= 1`.
fn critical_point(m: u32) -> f64 {
    let (mut lo, mut hi) = MuBranch(m).interval();
    // mu' < 0 left of c_m and > 0 right of it
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mu_prime_unchecked(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(c_m, mu(c_m))` for `m >= 1`.
pub fn mu_critical(branch: MuBranch) -> Result<(f64, f64)> {
    if branch.0 == 0 {
        return Err(Error::InvalidArgument("branch 0 has no critical point".into()));
    }
    let c = critical_point(branch.0);
    Ok((c, mu_unchecked(c)))
}

/// Root of a continuous function with a sign change on `(lo, hi)`, where
/// `f(lo) < 0 < f(hi)` in the limit sense given by `rising`.
pub(crate) fn bisect(mut lo: f64, mut hi: f64, rising: bool, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of `mu(t) = level` on one branch, in increasing order.
pub fn mu_solve(level: f64, branch: MuBranch) -> Vec<f64> {
    if !level.is_finite() {
        return Vec::new();
    }
    let g = |t: f64| mu_unchecked(t) - level;
    let (lo, hi) = branch.interval();
    if branch.0 == 0 {
        if level <= 0.0 {
            return Vec::new();
        }
        return vec![bisect(lo, hi, true, g)];
    }
    let c = critical_point(branch.0);
    let floor = mu_unchecked(c);
    let tol = 1e-12 * floor.abs().max(1.0);
    if level < floor - tol {
        Vec::new()
    } else if level <= floor + tol {
        vec![c]
    } else {
        vec![bisect(lo, c, false, g), bisect(c, hi, true, g)]
    }
}

/// Roots of `mu(t) = level - slope * t` on one branch, found by a sign scan
/// with `scan` cells followed by bisection.
pub fn perturbed_level_roots(level: f64, slope: f64, branch: MuBranch, scan: usize) -> Vec<f64> {
    let g = |t: f64| mu_unchecked(t) - level + slope * t;
    let (lo, hi) = branch.interval();
    let width = hi - lo;
    let cells = scan.max(16);
    let pts: Vec<f64> = (1..cells).map(|i| lo + width * i as f64 / cells as f64).collect();
    let mut roots = Vec::new();
    let mut prev_t = lo;
    // g -> +inf at both poles (and g(0+) = -level for branch 0)
    let mut prev_v = if branch.0 == 0 { -level } else { f64::INFINITY };
    for &t in pts.iter().chain(std::iter::once(&hi)) {
        let v = if t == hi { f64::INFINITY } else { g(t) };
        if (prev_v < 0.0) != (v < 0.0) {
            let rising = prev_v < 0.0;
            roots.push(bisect(prev_t, t, rising, g));
        }
        prev_t = t;
        prev_v = v;
    }
    roots
}

/// Roots of `mu(t) = level - slope * t` on one branch for `slope >= 0`.
///
/// `mu` is increasing on branch 0 and convex on every other branch, so the
/// left-hand side minus the line has at most one root on branch 0 and at
/// most two elsewhere, split at the minimizer `mu'(t) = -slope`.
pub fn perturbed_level_solve(level: f64, slope: f64, branch: MuBranch) -> Result<Vec<f64>> {
    if !(slope >= 0.0) || !level.is_finite() || !slope.is_finite() {
        return Err(Error::InvalidArgument(format!("need finite level and slope >= 0, got {level}, {slope}")));
    }
    let g = |t: f64| mu_unchecked(t) - level + slope * t;
    let (lo, hi) = branch.interval();
    if branch.0 == 0 {
        return Ok(if level > 0.0 { vec![bisect(lo, hi, true, g)] } else { Vec::new() });
    }
    let tmin = bisect(lo, hi, true, |t| mu_prime_unchecked(t) + slope);
    if g(tmin) > 0.0 {
        Ok(Vec::new())
    } else if g(tmin) == 0.0 {
        Ok(vec![tmin])
    } else {
        Ok(vec![bisect(lo, tmin, false, g), bisect(tmin, hi, true, g)])
    }
}
