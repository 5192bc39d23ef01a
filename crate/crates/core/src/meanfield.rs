//! Free-energy engine for finite-type mean-field models in a random field.
//!
//! A model couples spins in `E = {0..q}` to disorder symbols in
//! `E' = {0..q'}` through a-priori kernels `α[b]` and interacts through a
//! smooth energy `F` of the empirical spin distribution. Equilibrium
//! profiles minimize
//!
//! ```text
//! φ[π](ν̂) = F(Σ_b π(b) ν̂(b)) + Σ_b π(b) S(ν̂(b) | α[b]).
//! ```

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::markov::tangent_basis;
use crate::simplex::{dot, linf_distance, log_sum_exp, SimplexVector, TangentVector};

/// Interaction energy `F` on the spin simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Energy {
    /// `F ≡ 0`.
    Zero,
    /// `F(ν) = −β/2 Σ_a ν(a)²`.
    PottsQuadratic { beta: f64 },
    /// `F(ν) = −½ νᵗ J ν` for a symmetric coupling `J`.
    Quadratic { coupling: Vec<Vec<f64>> },
}

impl Energy {
    pub fn value(&self, nu: &[f64]) -> f64 {
        match self {
            Energy::Zero => 0.0,
            Energy::PottsQuadratic { beta } => -0.5 * beta * dot(nu, nu),
            Energy::Quadratic { coupling } => {
                -0.5 * coupling
                    .iter()
                    .zip(nu)
                    .map(|(row, x)| x * dot(row, nu))
                    .sum::<f64>()
            }
        }
    }

    /// Gradient `dF_ν` of the natural extension of `F` to `ℝ^E`.
    pub fn gradient(&self, nu: &[f64]) -> Vec<f64> {
        match self {
            Energy::Zero => vec![0.0; nu.len()],
            Energy::PottsQuadratic { beta } => nu.iter().map(|x| -beta * x).collect(),
            Energy::Quadratic { coupling } => coupling.iter().map(|row| -dot(row, nu)).collect(),
        }
    }

    /// `-n F(K/n)` for an integer count vector `K`.
    pub fn log_tilt(&self, counts: &[usize], n: usize) -> f64 {
        let nf = n as f64;
        match self {
            Energy::Zero => 0.0,
            Energy::PottsQuadratic { beta } => {
                0.5 * beta * counts.iter().map(|&k| (k * k) as f64).sum::<f64>() / nf
            }
            _ => {
                let nu: Vec<f64> = counts.iter().map(|&k| k as f64 / nf).collect();
                -nf * self.value(&nu)
            }
        }
    }

    fn check(&self, q: usize) -> Result<()> {
        match self {
            Energy::Zero => Ok(()),
            Energy::PottsQuadratic { beta } if beta.is_finite() => Ok(()),
            Energy::PottsQuadratic { beta } => {
                Err(Error::InvalidInput(format!("beta = {beta} is not finite")))
            }
            Energy::Quadratic { coupling } => {
                let ok = coupling.len() == q
                    && coupling.iter().all(|r| r.len() == q && r.iter().all(|x| x.is_finite()))
                    && (0..q).all(|i| (0..q).all(|j| (coupling[i][j] - coupling[j][i]).abs() < 1e-12));
                if ok {
                    Ok(())
                } else {
                    Err(Error::InvalidInput("coupling must be a finite symmetric q×q matrix".into()))
                }
            }
        }
    }
}

/// Parameters of the random-field Potts model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PottsParams {
    pub beta: f64,
    pub field: f64,
    pub q: usize,
}

impl PottsParams {
    pub fn new(beta: f64, field: f64, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidInput(format!("q = {q} must be at least 2")));
        }
        if !beta.is_finite() || !field.is_finite() {
            return Err(Error::InvalidInput("beta and field must be finite".into()));
        }
        Ok(Self { beta, field, q })
    }
}

/// A mean-field model with quenched disorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub energy: Energy,
    /// `alpha[b]` is the a-priori spin law at sites with disorder symbol `b`.
    pub alpha: Vec<SimplexVector>,
}

impl ModelSpec {
    pub fn new(energy: Energy, alpha: Vec<SimplexVector>) -> Result<Self> {
        let q = alpha
            .first()
            .map(SimplexVector::len)
            .ok_or_else(|| Error::InvalidInput("model needs at least one disorder symbol".into()))?;
        if alpha.iter().any(|a| a.len() != q) {
            return Err(Error::InvalidInput("a-priori kernels differ in length".into()));
        }
        if alpha.iter().any(|a| a.min_entry() <= 0.0) {
            return Err(Error::InvalidInput("a-priori kernels must be strictly positive".into()));
        }
        energy.check(q)?;
        Ok(Self { energy, alpha })
    }

    /// Potts energy with `α[b](a) = e^{B·1(a=b)} / (e^B + q − 1)`.
    pub fn potts(params: &PottsParams) -> Self {
        let q = params.q;
        let alpha = (0..q)
            .map(|b| {
                let w: Vec<f64> = (0..q)
                    .map(|a| if a == b { params.field } else { 0.0 })
                    .collect();
                softmax(&w)
            })
            .collect();
        Self {
            energy: Energy::PottsQuadratic { beta: params.beta },
            alpha,
        }
    }

    pub fn spins(&self) -> usize {
        self.alpha[0].len()
    }

    pub fn fields(&self) -> usize {
        self.alpha.len()
    }

    /// Relabels spins by `spin_perm` and disorder symbols by `field_perm`.
    pub fn permuted(&self, spin_perm: &[usize], field_perm: &[usize]) -> Self {
        let mut alpha = vec![SimplexVector::uniform(self.spins()); self.fields()];
        for (b, a) in self.alpha.iter().enumerate() {
            alpha[field_perm[b]] = a.permuted(spin_perm);
        }
        let energy = match &self.energy {
            Energy::Quadratic { coupling } => {
                let q = coupling.len();
                let mut c = vec![vec![0.0; q]; q];
                for i in 0..q {
                    for j in 0..q {
                        c[spin_perm[i]][spin_perm[j]] = coupling[i][j];
                    }
                }
                Energy::Quadratic { coupling: c }
            }
            e => e.clone(),
        };
        Self { energy, alpha }
    }
}

fn softmax(logits: &[f64]) -> SimplexVector {
    let z = log_sum_exp(logits);
    let mut p: Vec<f64> = logits.iter().map(|x| (x - z).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    SimplexVector::new(p).expect("softmax output is a probability vector")
}

/// One spin law per disorder symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProfile(pub Vec<SimplexVector>);

impl TypeProfile {
    /// Total measure `Σ_b π(b) ν̂(b)`.
    pub fn total(&self, pi: &SimplexVector) -> SimplexVector {
        let q = self.0[0].len();
        let mut nu = vec![0.0; q];
        for (b, prof) in self.0.iter().enumerate() {
            for (a, x) in prof.as_slice().iter().enumerate() {
                nu[a] += pi[b] * x;
            }
        }
        SimplexVector::normalized(nu).expect("mixture of probability vectors")
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().map(SimplexVector::min_entry).fold(f64::INFINITY, f64::min)
    }
}

/// `S(p|q) = Σ p log(p/q)` with `0 log 0 = 0`.
pub fn rel_entropy(p: &SimplexVector, q: &SimplexVector) -> Result<f64> {
    rel_entropy_raw(p.as_slice(), q.as_slice())
}

fn rel_entropy_raw(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for (atom, (&x, &y)) in p.iter().zip(q).enumerate() {
        if x > 0.0 {
            if y <= 0.0 {
                return Err(Error::SupportViolation { atom });
            }
            s += x * (x / y).ln();
        }
    }
    Ok(s)
}

/// `φ[π̂](ν̂)`.
pub fn free_energy(model: &ModelSpec, pi_hat: &SimplexVector, profile: &TypeProfile) -> Result<f64> {
    free_energy_raw(model, pi_hat.as_slice(), &profile_slices(profile))
}

fn profile_slices(profile: &TypeProfile) -> Vec<&[f64]> {
    profile.0.iter().map(SimplexVector::as_slice).collect()
}

fn free_energy_raw(model: &ModelSpec, pi: &[f64], profile: &[&[f64]]) -> Result<f64> {
    let q = model.spins();
    let mut nu = vec![0.0; q];
    let mut entropy = 0.0;
    for (b, prof) in profile.iter().enumerate() {
        for a in 0..q {
            nu[a] += pi[b] * prof[a];
        }
        if pi[b] != 0.0 {
            entropy += pi[b] * rel_entropy_raw(prof, model.alpha[b].as_slice())?;
        }
    }
    Ok(model.energy.value(&nu) + entropy)
}

/// Single-site kernel `γ[b](a|ν) ∝ e^{−dF_ν(a)} α[b](a)`.
pub fn gamma_kernel(model: &ModelSpec, b: usize, nu: &SimplexVector) -> SimplexVector {
    let grad = model.energy.gradient(nu.as_slice());
    let logits: Vec<f64> = grad
        .iter()
        .zip(model.alpha[b].as_slice())
        .map(|(g, a)| -g + a.ln())
        .collect();
    softmax(&logits)
}

/// Lifts a total measure to the critical profile `ν̂(b) = γ[b](·|ν)`.
pub fn lift_profile(model: &ModelSpec, nu: &SimplexVector) -> TypeProfile {
    TypeProfile((0..model.fields()).map(|b| gamma_kernel(model, b, nu)).collect())
}

/// `ν ↦ Σ_b π(b) γ[b](·|ν)`; its fixed points are the critical totals of `φ[π]`.
pub fn self_consistent_map(model: &ModelSpec, pi: &SimplexVector, nu: &SimplexVector) -> SimplexVector {
    lift_profile(model, nu).total(pi)
}

/// Settings of the multistart minimizer search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    /// Grid points per simplex edge.
    pub grid_resolution: usize,
    /// Free-energy slack for flagging global minimizers.
    pub tol: f64,
    pub max_iterations: usize,
    /// Fixed-point residual accepted as converged.
    pub fixed_point_tol: f64,
    pub execution: Execution,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            grid_resolution: 11,
            tol: 1e-9,
            max_iterations: 200_000,
            fixed_point_tol: 1e-13,
            execution: Execution::Parallel,
        }
    }
}

/// A converged critical profile of the free energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerRecord {
    pub profile: TypeProfile,
    pub total: SimplexVector,
    pub value: f64,
    /// `None` for boundary profiles, which are excluded from the Hessian test.
    pub hessian_pd: Option<bool>,
    pub min_hessian_eigenvalue: Option<f64>,
    pub stability: Option<TangentVector>,
    pub global: bool,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerSearch {
    pub records: Vec<MinimizerRecord>,
    /// Starts that hit the iteration cap.
    pub dropped: usize,
}

impl MinimizerSearch {
    pub fn global(&self) -> impl Iterator<Item = &MinimizerRecord> {
        self.records.iter().filter(|r| r.global)
    }
}

/// Lattice `{k/(res−1)}` on the probability simplex of dimension `q − 1`.
pub fn simplex_grid(q: usize, resolution: usize) -> Vec<SimplexVector> {
    let steps = resolution.max(2) - 1;
    let mut out = Vec::new();
    let mut current = vec![0usize; q];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, steps: usize, out: &mut Vec<SimplexVector>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            let v = cur.iter().map(|&k| k as f64 / steps as f64).collect();
            out.push(SimplexVector::normalized(v).expect("grid point"));
            return;
        }
        for k in 0..=left {
            cur[pos] = k;
            rec(pos + 1, left - k, cur, steps, out);
        }
    }
    rec(0, steps, &mut current, steps, &mut out);
    out
}

/// Iterates the self-consistency map from `start`; damped by 0.5 once the
/// step length stops shrinking.
pub fn iterate_fixed_point(
    model: &ModelSpec,
    pi: &SimplexVector,
    start: &SimplexVector,
    max_iterations: usize,
    tol: f64,
) -> Option<SimplexVector> {
    let mut nu = start.clone();
    let mut damping = 1.0;
    let mut last_step = f64::INFINITY;
    let mut growth = 0;
    for _ in 0..max_iterations {
        let image = self_consistent_map(model, pi, &nu);
        let step = linf_distance(image.as_slice(), nu.as_slice());
        if step <= tol {
            return Some(image);
        }
        if step > last_step {
            growth += 1;
            if growth >= 3 && damping == 1.0 {
                damping = 0.5;
            }
        }
        last_step = step;
        nu = if damping == 1.0 {
            image
        } else {
            let mixed = nu
                .as_slice()
                .iter()
                .zip(image.as_slice())
                .map(|(x, y)| (1.0 - damping) * x + damping * y)
                .collect();
            SimplexVector::normalized(mixed).expect("convex combination")
        };
    }
    None
}

/// Multistart search for minimizers of `φ[π]`.
pub fn find_minimizers(model: &ModelSpec, pi: &SimplexVector, opts: &SearchOptions) -> Result<MinimizerSearch> {
    let starts = simplex_grid(model.spins(), opts.grid_resolution);
    let converged = exec::map_slice(&starts, opts.execution, |s| {
        iterate_fixed_point(model, pi, s, opts.max_iterations, opts.fixed_point_tol)
    });
    let dropped = converged.iter().filter(|c| c.is_none()).count();
    let mut totals: Vec<SimplexVector> = Vec::new();
    for nu in converged.into_iter().flatten() {
        if !totals.iter().any(|t| linf_distance(t.as_slice(), nu.as_slice()) <= 1e-6) {
            totals.push(nu);
        }
    }
    if totals.is_empty() {
        return Err(Error::EmptyResult);
    }
    let mut records = Vec::with_capacity(totals.len());
    for nu in totals {
        let profile = lift_profile(model, &nu);
        let total = profile.total(pi);
        let value = free_energy(model, pi, &profile)?;
        let boundary = profile.min_entry() < BOUNDARY_ENTRY;
        let mut rec = MinimizerRecord {
            profile,
            total,
            value,
            hessian_pd: None,
            min_hessian_eigenvalue: None,
            stability: None,
            global: false,
            boundary,
        };
        if !boundary {
            let h = hessian_pd(model, pi, &rec.profile, HESSIAN_PD_TOL)?;
            rec.hessian_pd = Some(h.positive_definite);
            rec.min_hessian_eigenvalue = Some(h.min_eigenvalue);
            rec.stability = Some(stability_vector(model, pi, &rec)?);
        }
        records.push(rec);
    }
    let best = records.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    for r in &mut records {
        r.global = r.value <= best + opts.tol;
    }
    // Sorted by φ; states whose values agree within `tol` are ordered by
    // descending total measure so symmetric states keep their label order.
    records.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut start = 0;
    while start < records.len() {
        let mut end = start + 1;
        while end < records.len() && records[end].value - records[start].value <= opts.tol {
            end += 1;
        }
        records[start..end].sort_by(|a, b| lexicographic(b.total.as_slice(), a.total.as_slice()));
        start = end;
    }
    Ok(MinimizerSearch { records, dropped })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Entries below this mark a profile as lying on a simplex face.
pub const BOUNDARY_ENTRY: f64 = 1e-8;
pub const HESSIAN_STEP: f64 = 1e-4;
pub const HESSIAN_PD_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HessianReport {
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

/// Finite-difference Hessian of `φ[π]` in tangent coordinates of the product
/// of simplices, with one Richardson step.
pub fn hessian_pd(model: &ModelSpec, pi: &SimplexVector, profile: &TypeProfile, tol: f64) -> Result<HessianReport> {
    let min_entry = profile.min_entry();
    if min_entry < BOUNDARY_ENTRY {
        return Err(Error::BoundaryPoint { min_entry });
    }
    let q = model.spins();
    let fields = model.fields();
    let basis = tangent_basis(q);
    let dim = fields * (q - 1);
    let base: Vec<Vec<f64>> = profile.0.iter().map(|p| p.as_slice().to_vec()).collect();
    let h0 = HESSIAN_STEP.min(min_entry / 4.0);

    let eval = |shift: &[f64]| -> Result<f64> {
        let prof: Vec<Vec<f64>> = (0..fields)
            .map(|b| {
                (0..q)
                    .map(|a| {
                        base[b][a]
                            + (0..q - 1)
                                .map(|k| basis[(a, k)] * shift[b * (q - 1) + k])
                                .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        let slices: Vec<&[f64]> = prof.iter().map(Vec::as_slice).collect();
        free_energy_raw(model, pi.as_slice(), &slices)
    };

    let fd = |h: f64| -> Result<DMatrix<f64>> {
        let f0 = eval(&vec![0.0; dim])?;
        let mut hess = DMatrix::zeros(dim, dim);
        let mut e = vec![0.0; dim];
        for i in 0..dim {
            e[i] = h;
            let fp = eval(&e)?;
            e[i] = -h;
            let fm = eval(&e)?;
            e[i] = 0.0;
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let mut s = |si: f64, sj: f64| -> Result<f64> {
                    e[i] = si * h;
                    e[j] = sj * h;
                    let v = eval(&e);
                    e[i] = 0.0;
                    e[j] = 0.0;
                    v
                };
                let v = (s(1.0, 1.0)? - s(1.0, -1.0)? - s(-1.0, 1.0)? + s(-1.0, -1.0)?) / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    };

    let coarse = fd(h0)?;
    let fine = fd(h0 / 2.0)?;
    let hess = (fine * 4.0 - coarse) / 3.0;
    let eig = SymmetricEigen::new(hess);
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HessianReport {
        min_eigenvalue,
        positive_definite: min_eigenvalue > tol,
    })
}

/// Stability vector `B_j`: minus the gradient of `π̂ ↦ φ[π̂](ν̂_j)`,
/// projected to the tangent space of disorder laws.
pub fn stability_vector(model: &ModelSpec, pi: &SimplexVector, record: &MinimizerRecord) -> Result<TangentVector> {
    let nu = record.profile.total(pi);
    let grad = model.energy.gradient(nu.as_slice());
    let coords = record
        .profile
        .0
        .iter()
        .zip(&model.alpha)
        .map(|(prof, alpha)| Ok(-(dot(&grad, prof.as_slice()) + rel_entropy(prof, alpha)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(TangentVector::project(coords))
}

/// Non-degeneracy condition 2: distinct stability vectors among global minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition2 {
    pub holds: bool,
    pub min_distance: f64,
}

pub fn check_condition2(stability: &[TangentVector]) -> Condition2 {
    let mut min_distance = f64::INFINITY;
    for i in 0..stability.len() {
        for j in 0..i {
            let d = stability[i]
                .as_slice()
                .iter()
                .zip(stability[j].as_slice())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            min_distance = min_distance.min(d);
        }
    }
    Condition2 {
        holds: min_distance > 1e-8,
        min_distance,
    }
}

/// Stability vectors of the global minimizers of a search.
pub fn global_stability_vectors(search: &MinimizerSearch) -> Vec<TangentVector> {
    search
        .global()
        .filter_map(|r| r.stability.clone())
        .collect()
}
