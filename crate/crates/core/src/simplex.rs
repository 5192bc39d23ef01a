//! Probability vectors on a finite alphabet and their tangent directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the coordinate sum of simplex and tangent vectors.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector: nonnegative coordinates summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if let Some(bad) = coords.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::InvalidInput(format!(
                "probability coordinate {bad} is negative or not finite"
            )));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL * coords.len() as f64 {
            return Err(Error::InvalidInput(format!(
                "probability vector sums to {sum}"
            )));
        }
        Ok(Self(coords))
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 || !sum.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot normalize weights with total {sum}"
            )));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    /// Point mass on `index`.
    pub fn dirac(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Applies a relabelling: coordinate `perm[i]` of the result is coordinate `i` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(permute(&self.0, perm))
    }
}

impl std::ops::Index<usize> for SimplexVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(v: SimplexVector) -> Self {
        v.0
    }
}

/// A direction inside the simplex: coordinates summing to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector(Vec<f64>);

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let sum: f64 = coords.iter().sum();
        let scale = coords.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        if sum.abs() > SIMPLEX_TOL * scale * coords.len().max(1) as f64 {
            return Err(Error::InvalidInput(format!(
                "tangent vector coordinates sum to {sum}"
            )));
        }
        Ok(Self(coords))
    }

    /// Orthogonal projection onto the zero-sum hyperplane.
    pub fn project(mut coords: Vec<f64>) -> Self {
        let mean = coords.iter().sum::<f64>() / coords.len().max(1) as f64;
        for c in &mut coords {
            *c -= mean;
        }
        Self(coords)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// `p - q` for two probability vectors.
    pub fn between(p: &SimplexVector, q: &SimplexVector) -> Self {
        Self::project(p.0.iter().zip(&q.0).map(|(a, b)| a - b).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|x| x * factor).collect())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(permute(&self.0, perm))
    }
}

impl std::ops::Index<usize> for TangentVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn permute(v: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, &p) in perm.iter().enumerate() {
        out[p] = v[i];
    }
    out
}

/// Maximum absolute coordinate difference.
pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Numerically stable `log(sum(exp(x)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogAccumulator {
    max: f64,
    scaled: f64,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogAccumulator {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}
