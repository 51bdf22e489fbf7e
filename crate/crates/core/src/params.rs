//! Anisotropy parameters `a_{ml}` of the group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 3 x n matrix of strictly positive parameters.
///
/// Indices are zero-based: `a(m, l)` with `m < 3` and `l < n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct AnisotropyParams {
    n: usize,
    a: [Vec<f64>; 3],
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    n: usize,
    a: Vec<Vec<f64>>,
}

impl TryFrom<RawParams> for AnisotropyParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        if raw.a.len() != 3 {
            return Err(Error::InvalidParams(format!(
                "expected 3 rows in `a`, found {}",
                raw.a.len()
            )));
        }
        let mut rows = raw.a.into_iter();
        let a = [
            rows.next().unwrap_or_default(),
            rows.next().unwrap_or_default(),
            rows.next().unwrap_or_default(),
        ];
        AnisotropyParams::new(raw.n, a)
    }
}

impl From<AnisotropyParams> for RawParams {
    fn from(p: AnisotropyParams) -> Self {
        RawParams { n: p.n, a: p.a.to_vec() }
    }
}

impl AnisotropyParams {
    pub fn new(n: usize, a: [Vec<f64>; 3]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        for (m, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParams(format!(
                    "row {} has {} entries, expected {n}",
                    m + 1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidParams(format!(
                    "entries must be finite and > 0, found {v} in row {}",
                    m + 1
                )));
            }
        }
        Ok(Self { n, a })
    }

    /// All parameters equal to one.
    pub fn isotropic(n: usize) -> Self {
        Self::uniform(n, 1.0)
    }

    pub fn uniform(n: usize, value: f64) -> Self {
        Self::new(n, [vec![value; n], vec![value; n], vec![value; n]])
            .expect("uniform parameters are valid for n > 0 and value > 0")
    }

    /// Parameters `a_{ml} = per_m[m]` for every block.
    pub fn per_direction(n: usize, per_m: [f64; 3]) -> Result<Self> {
        Self::new(n, per_m.map(|v| vec![v; n]))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a(&self, m: usize, l: usize) -> f64 {
        self.a[m][l]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.a[m]
    }

    /// Length of the horizontal coordinate vector, `4n`.
    pub fn horizontal_dim(&self) -> usize {
        4 * self.n
    }

    pub fn topological_dim(&self) -> usize {
        4 * self.n + 3
    }

    pub fn homogeneous_dim(&self) -> usize {
        4 * self.n + 6
    }

    /// `max a_{ml}^2`.
    pub fn a_bar(&self) -> f64 {
        self.a.iter().flatten().map(|v| v * v).fold(0.0, f64::max)
    }

    /// `min a_{ml}^2`.
    pub fn a_under(&self) -> f64 {
        self.a.iter().flatten().map(|v| v * v).fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_horizontal(&self, x: &[f64]) -> Result<()> {
        if x.len() != 4 * self.n {
            return Err(Error::DimensionMismatch { expected: 4 * self.n, found: x.len() });
        }
        Ok(())
    }
}
