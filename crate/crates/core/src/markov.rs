//! Finite ergodic Markov chains: stationary law, path sampling, occupation
//! statistics and the covariance of the standardized occupation-time vector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{SimplexVector, TangentVector};

/// Row-sum and stationarity tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const ROW_SUM_TOL: f64 = 1e-9;
pub const PSD_SLACK: f64 = 1e-9;

/// Row-stochastic matrix on the disorder alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    labels: Vec<String>,
    m: DMatrix<f64>,
}

/// JSON form: `{"states": ["1","2","3"], "rows": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainJson {
    /// Optional; defaults to `"1".."q"`.
    #[serde(default)]
    pub states: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Builds a matrix with labels `"1".."q"`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=rows.len()).map(|i| i.to_string()).collect();
        Self::with_labels(labels, rows)
    }

    pub fn with_labels(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = rows.len();
        if q == 0 {
            return Err(Error::InvalidInput("empty transition matrix".into()));
        }
        if labels.len() != q {
            return Err(Error::InvalidInput(format!(
                "{} state labels for a {q}-state matrix",
                labels.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != q {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {q}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic { row: i, sum });
            }
        }
        let m = DMatrix::from_fn(q, q, |i, j| rows[i][j]);
        Ok(Self { labels, m })
    }

    pub fn from_json(json: &ChainJson) -> Result<Self> {
        if json.states.is_empty() {
            return Self::new(json.rows.clone());
        }
        Self::with_labels(json.states.clone(), json.rows.clone())
    }

    pub fn to_json(&self) -> ChainJson {
        ChainJson {
            states: self.labels.clone(),
            rows: self.rows(),
        }
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.m[(from, to)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| self.m.row(i).iter().copied().collect())
            .collect()
    }

    /// Relabels states: state `i` becomes state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let q = self.size();
        let mut m = DMatrix::zeros(q, q);
        let mut labels = vec![String::new(); q];
        for i in 0..q {
            labels[perm[i]] = self.labels[i].clone();
            for j in 0..q {
                m[(perm[i], perm[j])] = self.m[(i, j)];
            }
        }
        Self { labels, m }
    }

    /// Cumulative rows for inverse-CDF sampling.
    fn cumulative_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| {
                let mut acc = 0.0;
                let mut cdf: Vec<f64> = self
                    .m
                    .row(i)
                    .iter()
                    .map(|&x| {
                        acc += x;
                        acc
                    })
                    .collect();
                // The last state with positive mass absorbs rounding.
                if let Some(last) = (0..cdf.len()).rev().find(|&j| self.m[(i, j)] > 0.0) {
                    for c in &mut cdf[last..] {
                        *c = f64::INFINITY;
                    }
                }
                cdf
            })
            .collect()
    }
}

/// Named chains used throughout the crate and the CLI.
pub mod presets {
    use super::*;

    /// The degenerate three-state chain with a deterministic step 1 → 2.
    pub fn degenerate(p: f64) -> Result<TransitionMatrix> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!("p = {p} must lie in (0, 1)")));
        }
        TransitionMatrix::new(vec![
            vec![0.0, 1.0, 0.0],
            vec![p, 0.0, 1.0 - p],
            vec![1.0 - p, 0.0, p],
        ])
    }

    /// Independent draws from `rho` at every step.
    pub fn iid(rho: &SimplexVector) -> Result<TransitionMatrix> {
        TransitionMatrix::new(vec![rho.as_slice().to_vec(); rho.len()])
    }

    pub fn iid_uniform(q: usize) -> Result<TransitionMatrix> {
        iid(&SimplexVector::uniform(q))
    }

    /// General doubly stochastic 3×3 matrix with free entries `a, b, c, d`.
    pub fn doubly(a: f64, b: f64, c: f64, d: f64) -> Result<TransitionMatrix> {
        TransitionMatrix::new(vec![
            vec![a, b, 1.0 - a - b],
            vec![c, d, 1.0 - c - d],
            vec![1.0 - a - c, 1.0 - b - d, -1.0 + a + b + c + d],
        ])
    }

    pub fn two_state(a: f64, b: f64) -> Result<TransitionMatrix> {
        TransitionMatrix::new(vec![vec![1.0 - a, a], vec![b, 1.0 - b]])
    }

    /// Parses `degenerate:p`, `iid:uniform[:q]`, `doubly:a,b,c,d`.
    pub fn parse(spec: &str) -> Result<TransitionMatrix> {
        let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad preset number {s:?}: {e}")))
                })
                .collect()
        };
        match name {
            "degenerate" => {
                let v = nums()?;
                match v.as_slice() {
                    [p] => degenerate(*p),
                    _ => Err(Error::InvalidInput("degenerate:p takes one number".into())),
                }
            }
            "iid" => {
                let mut parts = args.split(':');
                match (parts.next(), parts.next()) {
                    (Some("uniform") | Some(""), None) | (None, None) => iid_uniform(3),
                    (Some("uniform"), Some(q)) => {
                        let q: usize = q
                            .parse()
                            .map_err(|e| Error::InvalidInput(format!("bad size {q:?}: {e}")))?;
                        iid_uniform(q)
                    }
                    _ => Err(Error::InvalidInput(format!("unknown iid preset {spec:?}"))),
                }
            }
            "doubly" => {
                let v = nums()?;
                match v.as_slice() {
                    [a, b, c, d] => doubly(*a, *b, *c, *d),
                    _ => Err(Error::InvalidInput("doubly:a,b,c,d takes four numbers".into())),
                }
            }
            _ => Err(Error::InvalidInput(format!("unknown chain preset {spec:?}"))),
        }
    }
}

/// Smallest power with all entries positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ErgodicityCertificate {
    pub power: usize,
}

/// Checks primitivity by boolean reachability up to the Wielandt bound.
pub fn validate_chain(m: &TransitionMatrix) -> Result<ErgodicityCertificate> {
    let q = m.size();
    let bound = (q - 1) * (q - 1) + 1;
    let step: Vec<Vec<bool>> = (0..q)
        .map(|i| (0..q).map(|j| m.get(i, j) > 0.0).collect())
        .collect();
    let mut reach = step.clone();
    for r in 1..=bound {
        if reach.iter().all(|row| row.iter().all(|&x| x)) {
            return Ok(ErgodicityCertificate { power: r });
        }
        reach = (0..q)
            .map(|i| {
                (0..q)
                    .map(|j| (0..q).any(|k| reach[i][k] && step[k][j]))
                    .collect()
            })
            .collect();
    }
    Err(Error::NotErgodic { bound })
}

/// Stationary law from `π^t (M - I) = 0` with the normalization row appended.
pub fn stationary(m: &TransitionMatrix) -> Result<SimplexVector> {
    let q = m.size();
    let mut a = DMatrix::zeros(q + 1, q);
    for i in 0..q {
        for j in 0..q {
            a[(i, j)] = m.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
        a[(q, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(q + 1);
    rhs[q] = 1.0;
    let pi = a
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::SolverFailure(e.to_string()))?;
    let mut pi: Vec<f64> = pi.iter().map(|&x| if x.abs() < 1e-15 { 0.0 } else { x }).collect();
    if pi.iter().any(|&x| x < -1e-12) {
        return Err(Error::SolverFailure("negative stationary weight".into()));
    }
    for x in &mut pi {
        *x = x.max(0.0);
    }
    let total: f64 = pi.iter().sum();
    for x in &mut pi {
        *x /= total;
    }
    let residual = stationarity_residual(m, &pi);
    if residual > STOCHASTIC_TOL {
        return Err(Error::SolverFailure(format!(
            "stationarity residual {residual:e} above tolerance"
        )));
    }
    SimplexVector::new(pi)
}

/// `‖π^t M − π^t‖∞`.
pub fn stationarity_residual(m: &TransitionMatrix, pi: &[f64]) -> f64 {
    let q = m.size();
    (0..q)
        .map(|j| ((0..q).map(|i| pi[i] * m.get(i, j)).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max)
}

/// Power-iteration cross-check for [`stationary`].
pub fn stationary_power(m: &TransitionMatrix, iterations: usize) -> Vec<f64> {
    let q = m.size();
    // Lazy chain has the same stationary law and is aperiodic.
    let mut v = vec![1.0 / q as f64; q];
    for _ in 0..iterations {
        let next: Vec<f64> = (0..q)
            .map(|j| 0.5 * v[j] + 0.5 * (0..q).map(|i| v[i] * m.get(i, j)).sum::<f64>())
            .collect();
        v = next;
    }
    v
}

/// Initial condition of a sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Start {
    State(usize),
    Stationary,
}

/// A realization `η(1..n)` of the chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainPath {
    pub states: Vec<usize>,
    pub seed: u64,
    pub start: Start,
}

impl ChainPath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> usize {
        *self.states.last().expect("paths are nonempty")
    }

    /// True when every step of the path has positive probability under `m`.
    pub fn is_admissible(&self, m: &TransitionMatrix) -> bool {
        self.states.windows(2).all(|w| m.get(w[0], w[1]) > 0.0)
    }
}

/// Reusable sampler; holds the cumulative rows and the stationary law.
#[derive(Debug, Clone)]
pub struct PathSampler {
    cdf: Vec<Vec<f64>>,
    pi_cdf: Vec<f64>,
}

impl PathSampler {
    pub fn new(m: &TransitionMatrix, pi: &SimplexVector) -> Self {
        let mut acc = 0.0;
        let mut pi_cdf: Vec<f64> = pi
            .as_slice()
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        if let Some(last) = (0..pi.len()).rev().find(|&j| pi[j] > 0.0) {
            for c in &mut pi_cdf[last..] {
                *c = f64::INFINITY;
            }
        }
        Self {
            cdf: m.cumulative_rows(),
            pi_cdf,
        }
    }

    #[inline]
    fn draw(cdf: &[f64], u: f64) -> usize {
        cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
    }

    pub fn initial<R: Rng>(&self, start: Start, rng: &mut R) -> usize {
        match start {
            Start::State(s) => s,
            Start::Stationary => Self::draw(&self.pi_cdf, rng.gen::<f64>()),
        }
    }

    #[inline]
    pub fn step<R: Rng>(&self, from: usize, rng: &mut R) -> usize {
        Self::draw(&self.cdf[from], rng.gen::<f64>())
    }

    /// Fills `states` with a path of length `n`.
    pub fn path_into<R: Rng>(&self, start: Start, n: usize, rng: &mut R, states: &mut Vec<usize>) {
        states.clear();
        if n == 0 {
            return;
        }
        let mut s = self.initial(start, rng);
        states.push(s);
        for _ in 1..n {
            s = self.step(s, rng);
            states.push(s);
        }
    }

    /// Occupation counts and final state without storing the path.
    pub fn counts<R: Rng>(&self, start: Start, n: usize, rng: &mut R) -> (Vec<u64>, usize) {
        let mut counts = vec![0u64; self.cdf.len()];
        let mut s = self.initial(start, rng);
        counts[s] += 1;
        for _ in 1..n {
            s = self.step(s, rng);
            counts[s] += 1;
        }
        (counts, s)
    }
}

/// Samples `η(1..n)`; a pure function of `(M, start, n, seed)`.
pub fn sample_path(m: &TransitionMatrix, start: Start, n: usize, seed: u64) -> Result<ChainPath> {
    if n == 0 {
        return Err(Error::InvalidInput("path length must be positive".into()));
    }
    if let Start::State(s) = start {
        if s >= m.size() {
            return Err(Error::InvalidInput(format!("start state {s} out of range")));
        }
    }
    let pi = match start {
        Start::Stationary => stationary(m)?,
        Start::State(_) => SimplexVector::uniform(m.size()),
    };
    let sampler = PathSampler::new(m, &pi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(n);
    sampler.path_into(start, n, &mut rng, &mut states);
    Ok(ChainPath { states, seed, start })
}

/// Occupation counts, frequencies and `√n(π̂_n − π)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationStats {
    pub counts: Vec<u64>,
    pub frequencies: SimplexVector,
    pub fluctuation: TangentVector,
}

impl OccupationStats {
    pub fn from_counts(counts: Vec<u64>, pi: &SimplexVector) -> Self {
        let n: u64 = counts.iter().sum();
        let nf = n as f64;
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        let root = nf.sqrt();
        let fluct = TangentVector::project(
            freq.iter()
                .zip(pi.as_slice())
                .map(|(f, p)| root * (f - p))
                .collect(),
        );
        Self {
            counts,
            frequencies: SimplexVector::new(freq).expect("counts give a probability vector"),
            fluctuation: fluct,
        }
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn occupation(path: &ChainPath, pi: &SimplexVector) -> OccupationStats {
    let mut counts = vec![0u64; pi.len()];
    for &s in &path.states {
        counts[s] += 1;
    }
    OccupationStats::from_counts(counts, pi)
}

/// Volume at which a covariance was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovarianceKind {
    Finite { n: usize },
    Limit,
}

/// Covariance of the standardized occupation-time vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub matrix: DMatrix<f64>,
    pub kind: CovarianceKind,
}

impl CovarianceMatrix {
    pub fn new(matrix: DMatrix<f64>, kind: CovarianceKind) -> Self {
        Self { matrix, kind }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| self.matrix.row(i).iter().copied().collect())
            .collect()
    }

    /// `xᵗ Σ x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }

    pub fn max_abs_diff(&self, other: &CovarianceMatrix) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }

    /// Checks symmetry, zero row sums and positive semidefiniteness on tangents.
    pub fn check_invariants(&self) -> Result<()> {
        let q = self.size();
        for i in 0..q {
            for j in 0..q {
                let d = (self.get(i, j) - self.get(j, i)).abs();
                if d > SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "covariance asymmetric at ({i},{j}) by {d:e}"
                    )));
                }
            }
            let s: f64 = self.matrix.row(i).iter().sum();
            if s.abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!("covariance row {i} sums to {s:e}")));
            }
        }
        let eig = tangent_eigen(self);
        if let Some(min) = eig.0.iter().copied().reduce(f64::min) {
            if min < -PSD_SLACK {
                return Err(Error::InvalidInput(format!(
                    "covariance not PSD on tangents: eigenvalue {min:e}"
                )));
            }
        }
        Ok(())
    }

    /// Applies a state relabelling to rows and columns.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let q = self.size();
        let mut m = DMatrix::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                m[(perm[i], perm[j])] = self.matrix[(i, j)];
            }
        }
        Self::new(m, self.kind)
    }
}

fn centered(m: &TransitionMatrix, pi: &SimplexVector) -> DMatrix<f64> {
    let q = m.size();
    DMatrix::from_fn(q, q, |i, j| m.get(i, j) - pi[j])
}

fn assemble(pi: &SimplexVector, s: &DMatrix<f64>, kind: CovarianceKind) -> CovarianceMatrix {
    let q = pi.len();
    let cov = DMatrix::from_fn(q, q, |i, j| {
        let diag = if i == j { pi[i] } else { 0.0 };
        diag - pi[i] * pi[j] + pi[i] * s[(i, j)] + pi[j] * s[(j, i)]
    });
    CovarianceMatrix::new(cov, kind)
}

/// Exact covariance `n·Cov_π(π̂_n)` at volume `n`.
///
/// Uses `M^r − 𝟙πᵗ = (M − 𝟙πᵗ)^r` for `r ≥ 1`, which avoids the cancellation
/// of subtracting `π` from converged powers.
pub fn covariance_finite(m: &TransitionMatrix, pi: &SimplexVector, n: usize) -> Result<CovarianceMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("volume must be positive".into()));
    }
    let q = m.size();
    let d = centered(m, pi);
    let mut power = d.clone();
    let mut s = DMatrix::zeros(q, q);
    let nf = n as f64;
    for r in 1..n {
        let w = (n - r) as f64 / nf;
        s += &power * w;
        if power.amax() == 0.0 {
            break;
        }
        power = &power * &d;
    }
    Ok(assemble(pi, &s, CovarianceKind::Finite { n }))
}

/// Route used for the limiting covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMethod {
    Series,
    FundamentalMatrix,
}

pub const SERIES_ITERATION_CAP: usize = 1_000_000;

/// Limiting covariance `Σ_M = lim_n Σ_{M,n}`.
pub fn covariance_limit(
    m: &TransitionMatrix,
    pi: &SimplexVector,
    method: CovarianceMethod,
    tol: f64,
) -> Result<CovarianceMatrix> {
    let s = match method {
        CovarianceMethod::FundamentalMatrix => fundamental_deviation(m, pi)?,
        CovarianceMethod::Series => series_deviation(m, pi, tol)?,
    };
    Ok(assemble(pi, &s, CovarianceKind::Limit))
}

/// `Σ_{r≥1}(M^r − 𝟙πᵗ) = Z − I`, so the assembled covariance equals
/// `π(i)Z(i,j) + π(j)Z(j,i) − π(i)δ_ij − π(i)π(j)`.
fn fundamental_deviation(m: &TransitionMatrix, pi: &SimplexVector) -> Result<DMatrix<f64>> {
    let z = fundamental_matrix(m, pi)?;
    let q = m.size();
    // Z = I + Σ_{r≥1}(M^r − 𝟙πᵗ); return the sum.
    Ok(DMatrix::from_fn(q, q, |i, j| z[(i, j)] - if i == j { 1.0 } else { 0.0 }))
}

/// The fundamental matrix `Z = (I − M + 𝟙πᵗ)^{-1}`.
pub fn fundamental_matrix(m: &TransitionMatrix, pi: &SimplexVector) -> Result<DMatrix<f64>> {
    let q = m.size();
    let a = DMatrix::from_fn(q, q, |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - m.get(i, j) + pi[j]
    });
    a.try_inverse()
        .ok_or_else(|| Error::SolverFailure("I − M + 𝟙πᵗ is singular".into()))
}

fn series_deviation(m: &TransitionMatrix, pi: &SimplexVector, tol: f64) -> Result<DMatrix<f64>> {
    const WINDOW: usize = 16;
    let q = m.size();
    let d = centered(m, pi);
    let mu = spectral_info(m)?.mu;
    let scale = pi.as_slice().iter().copied().fold(0.0, f64::max) * 2.0;
    let mut power = d.clone();
    let mut s = DMatrix::zeros(q, q);
    let mut norms: Vec<f64> = Vec::new();
    for r in 1..=SERIES_ITERATION_CAP {
        s += &power;
        let norm = inf_norm(&power);
        norms.push(norm);
        if norm == 0.0 {
            return Ok(s);
        }
        if mu < 1.0 && r >= WINDOW {
            // C from the observed decay over the probe window.
            let c = (r + 1 - WINDOW..=r)
                .map(|k| norms[k - 1] / mu.powi(k as i32))
                .fold(0.0, f64::max);
            let tail = if mu == 0.0 {
                0.0
            } else {
                c * mu.powi(r as i32 + 1) / (1.0 - mu)
            };
            if tail.is_finite() && tail * scale <= tol {
                return Ok(s);
            }
            // mu^r underflows before the bound is met only when norms already vanish.
            if !tail.is_finite() && norm * scale / (1.0 - mu) <= tol {
                return Ok(s);
            }
        }
        power = &power * &d;
    }
    Err(Error::NonConvergence(format!(
        "covariance series exceeded {SERIES_ITERATION_CAP} terms"
    )))
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Orthonormal basis of the zero-sum hyperplane (Helmert contrasts), as columns.
pub fn tangent_basis(q: usize) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(q, q - 1);
    for k in 1..q {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k - 1)] = 1.0 / norm;
        }
        u[(k, k - 1)] = -(k as f64) / norm;
    }
    u
}

pub(crate) fn tangent_eigen(cov: &CovarianceMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let q = cov.size();
    if q < 2 {
        return (Vec::new(), DMatrix::zeros(q, 0));
    }
    let u = tangent_basis(q);
    let sym = &cov.matrix + cov.matrix.transpose();
    let a = u.transpose() * (sym * 0.5) * &u;
    let eig = SymmetricEigen::new(a);
    let vectors = &u * eig.eigenvectors;
    (eig.eigenvalues.iter().copied().collect(), vectors)
}

/// Rank of a covariance on the tangent space and its null directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentRank {
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub null_directions: Vec<TangentVector>,
}

pub fn tangent_rank(cov: &CovarianceMatrix, tol: f64) -> TangentRank {
    let (values, vectors) = tangent_eigen(cov);
    let mut rank = 0;
    let mut null_directions = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        if v > tol {
            rank += 1;
        } else {
            let mut dir: Vec<f64> = vectors.column(k).iter().copied().collect();
            if let Some(first) = dir.iter().copied().find(|x| x.abs() > 1e-12) {
                if first < 0.0 {
                    dir.iter_mut().for_each(|x| *x = -*x);
                }
            }
            null_directions.push(TangentVector::project(dir));
        }
    }
    let mut eigenvalues = values;
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    TangentRank {
        rank,
        eigenvalues,
        null_directions,
    }
}

/// Second-largest eigenvalue modulus of `M` and its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralInfo {
    pub mu: f64,
    pub multiplicity: usize,
}

pub fn spectral_info(m: &TransitionMatrix) -> Result<SpectralInfo> {
    let q = m.size();
    if q == 1 {
        return Ok(SpectralInfo { mu: 0.0, multiplicity: 1 });
    }
    let eig = m.matrix().clone().complex_eigenvalues();
    if eig.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let (one, _) = eig
        .iter()
        .enumerate()
        .map(|(k, z)| (k, (z - nalgebra::Complex::new(1.0, 0.0)).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::EigenFailure("no eigenvalues".into()))?;
    let moduli: Vec<f64> = eig
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != one)
        .map(|(_, z)| z.norm())
        .collect();
    let mu = moduli.iter().copied().fold(0.0, f64::max);
    // Defective eigenvalues split by O(sqrt(eps)) under rounding.
    let multiplicity = moduli.iter().filter(|&&x| (x - mu).abs() <= 1e-6).count();
    let mu = if mu < 1e-12 { 0.0 } else { mu.min(1.0) };
    Ok(SpectralInfo { mu, multiplicity })
}

/// `‖(M − 𝟙πᵗ)^r‖^{1/r}`, which tends to the second eigenvalue modulus.
pub fn power_decay_rate(m: &TransitionMatrix, pi: &SimplexVector, r: usize) -> f64 {
    let d = centered(m, pi);
    let mut power = d.clone();
    for _ in 1..r {
        power = &power * &d;
    }
    inf_norm(&power).powf(1.0 / r as f64)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_is_not_ergodic() {
        let m = TransitionMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(validate_chain(&m), Err(Error::NotErgodic { .. })));
    }

    #[test]
    fn non_stochastic_rows_are_rejected() {
        let e = TransitionMatrix::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(e, Error::NotStochastic { row: 0, .. }));
    }

    #[test]
    fn certificates() {
        let m = presets::iid_uniform(3).unwrap();
        assert_eq!(validate_chain(&m).unwrap().power, 1);
        let d = presets::degenerate(0.5).unwrap();
        let cert = validate_chain(&d).unwrap();
        assert!(cert.power <= 5);
        // Periodic two-cycle never becomes positive.
        let flip = TransitionMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(validate_chain(&flip).is_err());
    }

    #[test]
    fn stationary_laws() {
        for p in [0.1, 0.5, 0.9] {
            let pi = stationary(&presets::degenerate(p).unwrap()).unwrap();
            for &x in pi.as_slice() {
                assert!(close(x, 1.0 / 3.0, 1e-12));
            }
        }
        let rho = SimplexVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let pi = stationary(&presets::iid(&rho).unwrap()).unwrap();
        for k in 0..3 {
            assert!(close(pi[k], rho[k], 1e-12));
        }
        let (a, b) = (0.3, 0.1);
        let pi = stationary(&presets::two_state(a, b).unwrap()).unwrap();
        assert!(close(pi[0], b / (a + b), 1e-12));
        assert!(close(pi[1], a / (a + b), 1e-12));
        let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
        let pw = stationary_power(&m, 200);
        let pi = stationary(&m).unwrap();
        assert!(crate::simplex::linf_distance(&pw, pi.as_slice()) < 1e-12);
    }

    #[test]
    fn degenerate_paths() {
        let m = presets::degenerate(0.5).unwrap();
        let path = sample_path(&m, Start::State(0), 50, 3).unwrap();
        assert_eq!(path.states[1], 1);
        for w in path.states.windows(2) {
            if w[0] == 0 {
                assert_eq!(w[1], 1);
            }
        }
        assert!(path.is_admissible(&m));
        let one = sample_path(&m, Start::State(2), 1, 9).unwrap();
        assert_eq!(one.states, vec![2]);
        assert_eq!(sample_path(&m, Start::Stationary, 100, 5), sample_path(&m, Start::Stationary, 100, 5));
    }

    #[test]
    fn transition_frequencies_match_matrix() {
        let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
        let path = sample_path(&m, Start::Stationary, 100_000, 17).unwrap();
        let mut pairs = [[0u64; 3]; 3];
        for w in path.states.windows(2) {
            pairs[w[0]][w[1]] += 1;
        }
        for i in 0..3 {
            let total: u64 = pairs[i].iter().sum();
            for j in 0..3 {
                let p = m.get(i, j);
                let sd = (p * (1.0 - p) / total as f64).sqrt();
                let freq = pairs[i][j] as f64 / total as f64;
                assert!((freq - p).abs() <= 3.0 * sd + 1e-12, "({i},{j}) {freq} vs {p}");
            }
        }
    }

    #[test]
    fn occupation_of_short_path() {
        let path = ChainPath { states: vec![0, 1, 2], seed: 0, start: Start::State(0) };
        let stats = occupation(&path, &SimplexVector::uniform(3));
        assert_eq!(stats.counts, vec![1, 1, 1]);
        assert!(stats.fluctuation.norm() < 1e-15);
    }

    #[test]
    fn imbalance_from_state_three() {
        let m = presets::degenerate(0.5).unwrap();
        let pi = stationary(&m).unwrap();
        for seed in 0..200 {
            let path = sample_path(&m, Start::State(2), 301, seed).unwrap();
            let s = occupation(&path, &pi);
            let diff = s.counts[0] as i64 - s.counts[1] as i64;
            assert_eq!(diff, i64::from(path.last() == 0));
        }
    }

    #[test]
    fn covariance_at_unit_volume_and_iid() {
        let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
        let pi = stationary(&m).unwrap();
        let c = covariance_finite(&m, &pi, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { pi[i] } else { 0.0 } - pi[i] * pi[j];
                assert!(close(c.get(i, j), expect, 1e-15));
            }
        }
        let rho = SimplexVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let iid = presets::iid(&rho).unwrap();
        let pi = stationary(&iid).unwrap();
        for n in [2, 17, 1000] {
            let c = covariance_finite(&iid, &pi, n).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { rho[i] } else { 0.0 } - rho[i] * rho[j];
                    assert!(close(c.get(i, j), expect, 1e-12));
                }
            }
        }
        let lim = covariance_limit(&iid, &pi, CovarianceMethod::Series, 1e-12).unwrap();
        let fm = covariance_limit(&iid, &pi, CovarianceMethod::FundamentalMatrix, 1e-12).unwrap();
        let c = covariance_finite(&iid, &pi, 1000).unwrap();
        assert!(lim.max_abs_diff(&c) < 1e-12);
        assert!(fm.max_abs_diff(&c) < 1e-12);
    }

    #[test]
    fn two_state_limit_has_closed_form() {
        // Var of the occupation of state 1: ab(2 − a − b)/(a + b)^3.
        let (a, b) = (0.3, 0.2);
        let m = presets::two_state(a, b).unwrap();
        let pi = stationary(&m).unwrap();
        let c = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-13).unwrap();
        let expect = a * b * (2.0 - a - b) / (a + b).powi(3);
        assert!(close(c.get(0, 0), expect, 1e-12));
        assert!(close(c.get(0, 1), -expect, 1e-12));
    }

    #[test]
    fn methods_agree_on_doubly_stochastic_chain() {
        let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
        let pi = stationary(&m).unwrap();
        let tol = 1e-12;
        let s = covariance_limit(&m, &pi, CovarianceMethod::Series, tol).unwrap();
        let f = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, tol).unwrap();
        assert!(s.max_abs_diff(&f) <= 10.0 * tol.max(1e-11));
        let big = covariance_finite(&m, &pi, 100_000).unwrap();
        assert!(big.max_abs_diff(&f) < 1e-3);
        f.check_invariants().unwrap();
    }

    #[test]
    fn degenerate_covariance_is_rank_one() {
        let m = presets::degenerate(0.5).unwrap();
        let pi = stationary(&m).unwrap();
        let c = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-12).unwrap();
        assert!(c.quadratic_form(&[1.0, -1.0, 0.0]).abs() < 1e-10);
        let rank = tangent_rank(&c, 1e-9);
        assert_eq!(rank.rank, 1);
        let null = &rank.null_directions[0];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(crate::simplex::linf_distance(null.as_slice(), &[s, -s, 0.0]) < 1e-8);
    }

    #[test]
    fn ranks() {
        let m = presets::iid_uniform(3).unwrap();
        let pi = stationary(&m).unwrap();
        let c = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-12).unwrap();
        assert_eq!(tangent_rank(&c, 1e-9).rank, 2);
        let zero = CovarianceMatrix::new(DMatrix::zeros(3, 3), CovarianceKind::Limit);
        let r = tangent_rank(&zero, 1e-9);
        assert_eq!(r.rank, 0);
        assert_eq!(r.null_directions.len(), 2);
    }

    #[test]
    fn spectral_gaps() {
        let iid = presets::iid_uniform(3).unwrap();
        assert_eq!(spectral_info(&iid).unwrap().mu, 0.0);
        let (a, b) = (0.3, 0.45);
        let two = presets::two_state(a, b).unwrap();
        assert!(close(spectral_info(&two).unwrap().mu, (1.0 - a - b).abs(), 1e-12));
        let d = presets::degenerate(0.5).unwrap();
        let info = spectral_info(&d).unwrap();
        assert!(info.mu < 1.0);
        let pi = stationary(&d).unwrap();
        let rate = power_decay_rate(&d, &pi, 400);
        assert!((rate - info.mu).abs() < 0.02, "{rate} vs {}", info.mu);
    }

    #[test]
    fn preset_parsing() {
        assert!(presets::parse("degenerate:0.5").is_ok());
        assert!(presets::parse("iid:uniform").is_ok());
        assert!(presets::parse("doubly:0.4,0.3,0.2,0.5").is_ok());
        assert!(presets::parse("doubly:0.4").is_err());
        assert!(presets::parse("nope").is_err());
    }

    #[test]
    fn chain_json_round_trip() {
        let m = presets::degenerate(0.25).unwrap();
        let text = serde_json::to_string(&m.to_json()).unwrap();
        let back = TransitionMatrix::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
