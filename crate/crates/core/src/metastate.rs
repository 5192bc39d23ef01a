//! Metastate assembly.
//!
//! Disorder fluctuations `x = √n(π̂_n − π)` select among the global
//! minimizers through the stability cones
//! `R_j = {x : ⟨x, B_j⟩ > max_{k≠j} ⟨x, B_k⟩}`. The weights of the
//! metastate are the Gaussian probabilities of these cones; its atoms are
//! product kernels `γ[η(i)](·|πν̂_j)`, or mixtures of them when the chain is
//! degenerate.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, replica_rng, Execution};
use crate::gibbs::{self, NeighborhoodSpec};
use crate::markov::{
    covariance_limit, stationary, tangent_eigen, CovarianceMatrix, CovarianceMethod, OccupationStats, PathSampler,
    Start, TransitionMatrix,
};
use crate::meanfield::{gamma_kernel, MinimizerRecord, ModelSpec, PottsParams};
use crate::potts;
use crate::simplex::{linf_distance, SimplexVector, TangentVector};

/// Coefficient tolerance under which two atoms are merged.
pub const ATOM_MERGE_TOL: f64 = 0.02;
/// Gaussian eigendirections below this fraction of the trace are dropped.
pub const RANK_CUTOFF: f64 = 1e-12;
const GAUSSIAN_CHUNK: usize = 8192;

/// Region index `j` when `⟨x,B_j⟩` beats every competitor by more than `margin`.
pub fn classify(x: &TangentVector, stability: &[TangentVector], margin: f64) -> Option<usize> {
    classify_slice(x.as_slice(), stability, margin)
}

fn classify_slice(x: &[f64], stability: &[TangentVector], margin: f64) -> Option<usize> {
    let mut best = None;
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for (j, b) in stability.iter().enumerate() {
        let v = crate::simplex::dot(x, b.as_slice());
        if v > top {
            second = top;
            top = v;
            best = Some(j);
        } else if v > second {
            second = v;
        }
    }
    // a single candidate has no competitor to beat
    if stability.len() == 1 {
        return best;
    }
    if top - second > margin {
        best
    } else {
        None
    }
}

/// Centered Gaussian on the tangent space with covariance `Σ`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    pub covariance: CovarianceMatrix,
    /// `q × r` factor `A` with `A Aᵗ = Σ` restricted to its range.
    factor: DMatrix<f64>,
    pub seed: u64,
}

impl GaussianSampler {
    pub fn new(covariance: &CovarianceMatrix, seed: u64) -> Result<Self> {
        covariance.check_invariants()?;
        let (values, vectors) = tangent_eigen(covariance);
        let trace: f64 = values.iter().filter(|v| **v > 0.0).sum();
        let keep: Vec<usize> = (0..values.len())
            .filter(|&k| trace > 0.0 && values[k] > RANK_CUTOFF * trace)
            .collect();
        let q = covariance.size();
        let mut factor = DMatrix::zeros(q, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            let scale = values[k].sqrt();
            for i in 0..q {
                factor[(i, c)] = vectors[(i, k)] * scale;
            }
        }
        Ok(Self { covariance: covariance.clone(), factor, seed })
    }

    /// Dimension of the sampled range.
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TangentVector {
        let z = DVector::from_iterator(self.rank(), (0..self.rank()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        TangentVector::project((&self.factor * z).iter().copied().collect())
    }

    /// Draw `index` of the sampler's deterministic sequence, chunked by stream.
    pub fn samples(&self, count: usize, exec: Execution) -> Vec<TangentVector> {
        let chunks = count.div_ceil(GAUSSIAN_CHUNK);
        exec::map_indices(chunks, exec, |c| {
            let mut rng = replica_rng(self.seed, c as u64);
            let len = GAUSSIAN_CHUNK.min(count - c * GAUSSIAN_CHUNK);
            (0..len).map(|_| self.sample(&mut rng)).collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

/// Monte Carlo region weights with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionWeights {
    pub weights: Vec<f64>,
    pub stderr: Vec<f64>,
    pub undecided: f64,
    pub undecided_stderr: f64,
    /// Fraction of draws where the two leading scores were exactly equal.
    pub ties: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
struct Tally {
    regions: Vec<u64>,
    undecided: u64,
    ties: u64,
}

impl Tally {
    fn new(k: usize) -> Self {
        Self { regions: vec![0; k], undecided: 0, ties: 0 }
    }

    fn record(&mut self, x: &[f64], stability: &[TangentVector], margin: f64) {
        match classify_slice(x, stability, margin) {
            Some(j) => self.regions[j] += 1,
            None => {
                self.undecided += 1;
                if stability.len() > 1 && classify_slice(x, stability, -0.0).is_none() {
                    self.ties += 1;
                }
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.regions.iter_mut().zip(other.regions) {
            *a += b;
        }
        self.undecided += other.undecided;
        self.ties += other.ties;
        self
    }

    fn finish(self, samples: usize) -> RegionWeights {
        let n = samples as f64;
        let se = |w: f64| (w * (1.0 - w) / n).sqrt();
        let weights: Vec<f64> = self.regions.iter().map(|&c| c as f64 / n).collect();
        let undecided = self.undecided as f64 / n;
        RegionWeights {
            stderr: weights.iter().map(|&w| se(w)).collect(),
            weights,
            undecided,
            undecided_stderr: se(undecided),
            ties: self.ties as f64 / n,
            samples,
        }
    }
}

/// `w_j = P(G ∈ R_j)` for `G ~ 𝒩(0, Σ)`.
pub fn gaussian_weights(
    covariance: &CovarianceMatrix,
    stability: &[TangentVector],
    samples: usize,
    margin: f64,
    seed: u64,
    exec: Execution,
) -> Result<RegionWeights> {
    if samples == 0 || stability.is_empty() {
        return Err(Error::InvalidInput("need samples and stability vectors".into()));
    }
    let sampler = GaussianSampler::new(covariance, seed)?;
    let chunks = samples.div_ceil(GAUSSIAN_CHUNK);
    let tally = exec::fold_replicas(
        chunks,
        exec,
        Tally::new(stability.len()),
        |acc, c| {
            let mut rng = replica_rng(seed, c as u64);
            let len = GAUSSIAN_CHUNK.min(samples - c * GAUSSIAN_CHUNK);
            for _ in 0..len {
                let x = sampler.sample(&mut rng);
                acc.record(x.as_slice(), stability, margin);
            }
        },
        Tally::merge,
    );
    let out = tally.finish(samples);
    if out.undecided >= 1.0 {
        return Err(Error::DegenerateAll);
    }
    Ok(out)
}

/// Margin used to call a finite-n fluctuation decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarginSchedule {
    Fixed { margin: f64 },
    /// `scale · n^{−exponent}`.
    Power { scale: f64, exponent: f64 },
    Infinite,
}

impl MarginSchedule {
    pub const DEFAULT_CONSTANT: f64 = 0.05;

    /// `0.05 · max_j ‖B_j‖ · n^{−1/4}`.
    pub fn scaled(stability: &[TangentVector]) -> Self {
        let norm = stability.iter().map(|b| b.norm()).fold(0.0, f64::max);
        MarginSchedule::Power { scale: Self::DEFAULT_CONSTANT * norm, exponent: 0.25 }
    }

    pub fn margin(&self, n: usize) -> f64 {
        match *self {
            MarginSchedule::Fixed { margin } => margin,
            MarginSchedule::Power { scale, exponent } => scale * (n as f64).powf(-exponent),
            MarginSchedule::Infinite => f64::INFINITY,
        }
    }
}

/// Fraction of stationary chain paths whose fluctuation lands in each region.
#[allow(clippy::too_many_arguments)]
pub fn empirical_region_weights(
    m: &TransitionMatrix,
    pi: &SimplexVector,
    stability: &[TangentVector],
    n: usize,
    replicas: usize,
    schedule: MarginSchedule,
    seed: u64,
    exec: Execution,
) -> Result<RegionWeights> {
    if n == 0 || replicas == 0 {
        return Err(Error::InvalidInput("need a positive volume and replica count".into()));
    }
    let sampler = PathSampler::new(m, pi);
    let margin = schedule.margin(n);
    let tally = exec::fold_replicas(
        replicas,
        exec,
        Tally::new(stability.len()),
        |acc, i| {
            let mut rng = replica_rng(seed, i as u64);
            let (counts, _) = sampler.counts(Start::Stationary, n, &mut rng);
            let stats = OccupationStats::from_counts(counts, pi);
            acc.record(stats.fluctuation.as_slice(), stability, margin);
        },
        Tally::merge,
    );
    Ok(tally.finish(replicas))
}

/// Product kernels of the pure state selected by minimizer `index` on a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PureStateKernels {
    pub index: usize,
    pub window: Vec<usize>,
    pub kernels: Vec<SimplexVector>,
}

pub fn pure_state_kernels(
    model: &ModelSpec,
    pi: &SimplexVector,
    index: usize,
    record: &MinimizerRecord,
    window: &[usize],
) -> Result<PureStateKernels> {
    if let Some(&b) = window.iter().find(|&&b| b >= model.fields()) {
        return Err(Error::InvalidInput(format!("field symbol {b} out of range")));
    }
    let total = record.profile.total(pi);
    Ok(PureStateKernels {
        index,
        window: window.to_vec(),
        kernels: window.iter().map(|&b| gamma_kernel(model, b, &total)).collect(),
    })
}

/// A mixture of pure states and the metastate weight it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetastateAtom {
    /// Coefficients over minimizer indices.
    pub coefficients: Vec<f64>,
    pub weight: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Structural,
    Direct,
    Reference,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetastateEstimate {
    pub atoms: Vec<MetastateAtom>,
    pub undecided: f64,
    pub provenance: Provenance,
    /// Set when the minimizers coincide and the atoms cannot be told apart.
    pub degenerate: bool,
}

impl MetastateEstimate {
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum::<f64>() + self.undecided
    }

    /// Weight of the atom within `tol` of `coefficients`, or 0.
    pub fn weight_near(&self, coefficients: &[f64], tol: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| linf_distance(&a.coefficients, coefficients) <= tol)
            .map(|a| a.weight)
            .sum()
    }

    pub fn atom_near(&self, coefficients: &[f64], tol: f64) -> Option<&MetastateAtom> {
        self.atoms
            .iter()
            .find(|a| linf_distance(&a.coefficients, coefficients) <= tol)
    }
}

/// Greedy merge in lexicographic order; coefficients become weight-averaged.
fn merge_atoms(mut atoms: Vec<MetastateAtom>, tol: f64) -> Vec<MetastateAtom> {
    atoms.retain(|a| a.weight > 0.0);
    atoms.sort_by(|a, b| {
        a.coefficients
            .iter()
            .zip(&b.coefficients)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out: Vec<(Vec<f64>, MetastateAtom)> = Vec::new();
    for atom in atoms {
        match out.iter_mut().find(|(rep, _)| linf_distance(rep, &atom.coefficients) <= tol) {
            Some((_, acc)) => {
                let w = acc.weight + atom.weight;
                for (c, x) in acc.coefficients.iter_mut().zip(&atom.coefficients) {
                    *c = (*c * acc.weight + x * atom.weight) / w;
                }
                acc.stderr = (acc.stderr.powi(2) + atom.stderr.powi(2)).sqrt();
                acc.weight = w;
            }
            None => out.push((atom.coefficients.clone(), atom)),
        }
    }
    let mut merged: Vec<MetastateAtom> = out.into_iter().map(|(_, a)| a).collect();
    for a in &mut merged {
        let s: f64 = a.coefficients.iter().sum();
        a.coefficients.iter_mut().for_each(|c| *c /= s);
    }
    merged.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    merged
}

/// Which finite-volume rule assigns mixture coefficients to non-3-like paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Closed-form odds `p₁^{d}` with `d` the 1-vs-2 occupation imbalance.
    Structural,
    /// Exact Gibbs ratio of the neighbourhoods of `ν_{1,u}` and `ν_{2,u}`.
    Direct,
}

/// Potts data shared by the κ estimators: order parameter, stability
/// vectors of the three ordered states and the odds `p₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PottsStates {
    pub params: PottsParams,
    pub u: f64,
    pub p1: f64,
    pub totals: Vec<SimplexVector>,
    pub stability: Vec<TangentVector>,
    /// True when `u = 0` is also a global minimizer (a zero stability vector is appended).
    pub includes_disordered: bool,
    pub degenerate: bool,
}

impl PottsStates {
    pub const GLOBAL_TOL: f64 = 1e-9;

    pub fn new(params: &PottsParams) -> Result<Self> {
        if params.q != 3 {
            return Err(Error::InvalidInput("the degenerate-chain metastate needs q = 3".into()));
        }
        let (u, degenerate) = match potts::ordered_branch(params, Self::GLOBAL_TOL) {
            Ok(r) => (r.u, false),
            Err(Error::NoOrderedPhase) => (0.0, true),
            Err(e) => return Err(e),
        };
        let mut stability: Vec<TangentVector> = (0..3).map(|j| potts::stability_vector_closed(params, u, j)).collect();
        let includes_disordered = !degenerate
            && potts::potts_free_energy_u(params, 0.0) <= potts::potts_free_energy_u(params, u) + Self::GLOBAL_TOL;
        if includes_disordered {
            stability.push(TangentVector::zeros(3));
        }
        Ok(Self {
            params: *params,
            u,
            p1: potts::p1(params, u)?,
            totals: (0..3).map(|j| potts::ordered_total(params, u, j)).collect(),
            stability,
            includes_disordered,
            degenerate,
        })
    }

    pub fn p(&self) -> f64 {
        self.p1 / (1.0 + self.p1)
    }
}

/// Per-replica outcome of the κ estimators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRecord {
    pub replica: usize,
    pub counts: Vec<u64>,
    pub last: usize,
    pub three_like: bool,
    pub coefficients: Vec<f64>,
}

/// Options of [`degenerate_potts_kappa`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaOptions {
    pub start: Start,
    pub n: usize,
    pub replicas: usize,
    /// Neighbourhood radius of the direct estimator.
    pub epsilon: f64,
    pub seed: u64,
    pub estimator: Estimator,
    pub schedule: Option<MarginSchedule>,
}

/// κ_start for the Potts model in the field of a degenerate chain.
///
/// Paths whose fluctuation classifies to state 3 give the pure state `μ³`.
/// The remaining paths give a mixture of `μ¹` and `μ²` whose odds are
/// `p₁^{d}` (structural) or the exact Gibbs ratio (direct).
pub fn degenerate_potts_kappa(
    states: &PottsStates,
    chain: &TransitionMatrix,
    opts: &KappaOptions,
    exec: Execution,
) -> Result<(MetastateEstimate, Vec<ReplicaRecord>)> {
    if opts.n == 0 || opts.replicas == 0 {
        return Err(Error::InvalidInput("need a positive volume and replica count".into()));
    }
    if chain.size() != 3 {
        return Err(Error::InvalidInput("the degenerate chain has three states".into()));
    }
    let pi = stationary(chain)?;
    let sampler = PathSampler::new(chain, &pi);
    let margin = opts.schedule.unwrap_or_else(|| MarginSchedule::scaled(&states.stability)).margin(opts.n);
    let sampled: Vec<(Vec<u64>, usize, bool)> = exec::map_indices(opts.replicas, exec, |i| {
        let mut rng = replica_rng(opts.seed, i as u64);
        let (counts, last) = sampler.counts(opts.start, opts.n, &mut rng);
        let stats = OccupationStats::from_counts(counts.clone(), &pi);
        let three = !states.degenerate && classify(&stats.fluctuation, &states.stability, margin) == Some(2);
        (counts, last, three)
    });

    let ratios: HashMap<Vec<u64>, f64> = match opts.estimator {
        Estimator::Structural => HashMap::new(),
        Estimator::Direct => {
            let mut keys: Vec<Vec<u64>> = sampled.iter().filter(|s| !s.2).map(|s| s.0.clone()).collect();
            keys.sort();
            keys.dedup();
            let model = ModelSpec::potts(&states.params);
            let first = NeighborhoodSpec::new(states.totals[0].clone(), opts.epsilon)?;
            let second = NeighborhoodSpec::new(states.totals[1].clone(), opts.epsilon)?;
            let values = exec::map_slice(&keys, exec, |k| {
                let counts: Vec<usize> = k.iter().map(|&c| c as usize).collect();
                let dist = gibbs::count_distribution_for_counts(&model, &counts)?;
                gibbs::gibbs_ratio_from(&dist, &first, &second)
            });
            keys.into_iter()
                .zip(values)
                .map(|(k, v)| v.map(|r| (k, r)))
                .collect::<Result<_>>()?
        }
    };

    let records: Vec<ReplicaRecord> = sampled
        .into_iter()
        .enumerate()
        .map(|(i, (counts, last, three))| {
            let coefficients = if three {
                vec![0.0, 0.0, 1.0]
            } else {
                let r = match opts.estimator {
                    Estimator::Structural => states.p1.powi(counts[0] as i32 - counts[1] as i32),
                    Estimator::Direct => ratios[&counts],
                };
                vec![r / (1.0 + r), 1.0 / (1.0 + r), 0.0]
            };
            ReplicaRecord { replica: i, counts, last, three_like: three, coefficients }
        })
        .collect();

    let weight = 1.0 / opts.replicas as f64;
    let atoms = merge_atoms(
        records
            .iter()
            .map(|r| MetastateAtom { coefficients: r.coefficients.clone(), weight, stderr: 0.0 })
            .collect(),
        ATOM_MERGE_TOL,
    )
    .into_iter()
    .map(|mut a| {
        a.stderr = (a.weight * (1.0 - a.weight) / opts.replicas as f64).sqrt();
        a
    })
    .collect();
    let estimate = MetastateEstimate {
        atoms,
        undecided: 0.0,
        provenance: match opts.estimator {
            Estimator::Structural => Provenance::Structural,
            Estimator::Direct => Provenance::Direct,
        },
        degenerate: states.degenerate,
    };
    Ok((estimate, records))
}

/// `κ = Σ_i π(i) κ_i`, merging atoms at [`ATOM_MERGE_TOL`].
pub fn combine_kappa(per_start: &[MetastateEstimate], pi: &SimplexVector) -> Result<MetastateEstimate> {
    if per_start.len() != pi.len() {
        return Err(Error::InvalidInput(format!(
            "{} estimates for {} start states",
            per_start.len(),
            pi.len()
        )));
    }
    let mut atoms = Vec::new();
    let mut undecided = 0.0;
    for (est, &w) in per_start.iter().zip(pi.as_slice()) {
        undecided += w * est.undecided;
        atoms.extend(est.atoms.iter().map(|a| MetastateAtom {
            coefficients: a.coefficients.clone(),
            weight: w * a.weight,
            stderr: w * a.stderr,
        }));
    }
    let provenance = match per_start.first().map(|e| e.provenance) {
        Some(p) if per_start.iter().all(|e| e.provenance == p) => p,
        _ => Provenance::Combined,
    };
    Ok(MetastateEstimate {
        atoms: merge_atoms(atoms, ATOM_MERGE_TOL),
        undecided,
        provenance,
        degenerate: per_start.iter().any(|e| e.degenerate),
    })
}

/// The four-atom limit `½ δ_{μ³} + ⅓ δ_{(μ¹+μ²)/2} + ⅑ δ_{pμ¹+(1−p)μ²} + 1/18 δ_{(1−p)μ¹+pμ²}`.
pub fn theorem3_reference(params: &PottsParams) -> Result<MetastateEstimate> {
    let states = PottsStates::new(params)?;
    if states.degenerate {
        return Err(Error::NoOrderedPhase);
    }
    let p = states.p();
    let atom = |c: [f64; 3], w: f64| MetastateAtom { coefficients: c.to_vec(), weight: w, stderr: 0.0 };
    Ok(MetastateEstimate {
        atoms: vec![
            atom([0.0, 0.0, 1.0], 0.5),
            atom([0.5, 0.5, 0.0], 1.0 / 3.0),
            atom([p, 1.0 - p, 0.0], 1.0 / 9.0),
            atom([1.0 - p, p, 0.0], 1.0 / 18.0),
        ],
        undecided: 0.0,
        provenance: Provenance::Reference,
        degenerate: false,
    })
}

/// Per-final-state moments of a projected fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalStateRow {
    pub state: usize,
    pub count: usize,
    pub frequency: f64,
    pub frequency_z: f64,
    pub mean: f64,
    pub mean_z: f64,
    pub variance: f64,
    pub variance_z: f64,
}

/// Asymptotic independence of the final state and the occupation fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub n: usize,
    pub replicas: usize,
    /// `λᵗ Σ_M λ`.
    pub limit_variance: f64,
    pub rows: Vec<FinalStateRow>,
    pub max_abs_z: f64,
    pub passes: bool,
}

pub const CLT_Z_LIMIT: f64 = 4.0;

/// Compares `⟨λ, √n(π̂_n − π)⟩` conditioned on `η(n)` with `𝒩(0, λᵗΣ_Mλ)`,
/// and the law of `η(n)` with `π`.
pub fn clt_joint_independence(
    m: &TransitionMatrix,
    lambda: &TangentVector,
    n: usize,
    replicas: usize,
    seed: u64,
    exec: Execution,
) -> Result<CltReport> {
    if lambda.len() != m.size() {
        return Err(Error::InvalidInput("λ has the wrong dimension".into()));
    }
    if n == 0 || replicas < 2 {
        return Err(Error::InvalidInput("need n > 0 and at least two replicas".into()));
    }
    let pi = stationary(m)?;
    let sigma = covariance_limit(m, &pi, CovarianceMethod::FundamentalMatrix, 1e-12)?;
    let limit_variance = sigma.quadratic_form(lambda.as_slice());
    let sampler = PathSampler::new(m, &pi);
    let pairs: Vec<(usize, f64)> = exec::map_indices(replicas, exec, |i| {
        let mut rng = replica_rng(seed, i as u64);
        let (counts, last) = sampler.counts(Start::Stationary, n, &mut rng);
        let stats = OccupationStats::from_counts(counts, &pi);
        (last, stats.fluctuation.dot(lambda))
    });
    let r = replicas as f64;
    let mut rows = Vec::new();
    for s in 0..m.size() {
        let ys: Vec<f64> = pairs.iter().filter(|p| p.0 == s).map(|p| p.1).collect();
        let k = ys.len() as f64;
        let frequency = k / r;
        let frequency_z = (frequency - pi[s]) / (pi[s] * (1.0 - pi[s]) / r).sqrt().max(f64::MIN_POSITIVE);
        let (mean, mean_z, variance, variance_z) = if ys.len() < 2 {
            (f64::NAN, 0.0, f64::NAN, 0.0)
        } else {
            let mean = ys.iter().sum::<f64>() / k;
            // second and fourth moments about the hypothesised mean 0
            let m2 = ys.iter().map(|y| y * y).sum::<f64>() / k;
            let m4 = ys.iter().map(|y| y.powi(4)).sum::<f64>() / k;
            let mean_se = (m2 / k).sqrt();
            let var_se = ((m4 - m2 * m2).max(0.0) / k).sqrt();
            let z = |d: f64, se: f64| if se > 0.0 { d / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
            (mean, z(mean, mean_se), m2, z(m2 - limit_variance, var_se))
        };
        rows.push(FinalStateRow { state: s, count: ys.len(), frequency, frequency_z, mean, mean_z, variance, variance_z });
    }
    let max_abs_z = rows
        .iter()
        .flat_map(|r| [r.frequency_z, r.mean_z, r.variance_z])
        .map(f64::abs)
        .fold(0.0, f64::max);
    Ok(CltReport { n, replicas, limit_variance, rows, max_abs_z, passes: max_abs_z <= CLT_Z_LIMIT })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{covariance_limit, presets, CovarianceKind};

    fn tv(v: &[f64]) -> TangentVector {
        TangentVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn classify_basics() {
        let b = vec![tv(&[2.0, -1.0, -1.0]), tv(&[0.0, 0.5, -0.5])];
        assert_eq!(classify(&b[0], &b, 0.0), Some(0));
        assert_eq!(classify(&TangentVector::zeros(3), &b, 0.0), None);
        let x = tv(&[-0.3, 0.8, -0.5]);
        let v = classify(&x, &b, 0.0);
        assert_eq!(classify(&x.scaled(7.5), &b, 0.0), v);
        assert_eq!(classify(&x, &b, f64::INFINITY), None);
    }

    #[test]
    fn zero_covariance_is_all_undecided() {
        let cov = CovarianceMatrix::new(DMatrix::zeros(3, 3), CovarianceKind::Limit);
        let b = vec![tv(&[2.0, -1.0, -1.0]), tv(&[-1.0, 2.0, -1.0])];
        assert_eq!(gaussian_weights(&cov, &b, 1000, 0.0, 1, Execution::Sequential), Err(Error::DegenerateAll));
    }

    #[test]
    fn sampler_reproduces_covariance() {
        let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
        let pi = stationary(&m).unwrap();
        let cov = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-12).unwrap();
        let sampler = GaussianSampler::new(&cov, 9).unwrap();
        assert_eq!(sampler.rank(), 2);
        let n = 200_000;
        let xs = sampler.samples(n, Execution::Parallel);
        for i in 0..3 {
            for j in 0..3 {
                let prods: Vec<f64> = xs.iter().map(|x| x[i] * x[j]).collect();
                let mean = prods.iter().sum::<f64>() / n as f64;
                let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
                assert!((mean - cov.get(i, j)).abs() < 3.0 * (var / n as f64).sqrt() + 1e-12, "{i},{j}");
            }
        }
        assert!(xs.iter().all(|x| x.as_slice().iter().sum::<f64>().abs() < 1e-10));
    }

    #[test]
    fn rank_one_sampler_stays_on_its_line() {
        let m = presets::degenerate(0.5).unwrap();
        let pi = stationary(&m).unwrap();
        let cov = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-12).unwrap();
        let sampler = GaussianSampler::new(&cov, 2).unwrap();
        assert_eq!(sampler.rank(), 1);
        for x in sampler.samples(100, Execution::Sequential) {
            assert!((x[0] - x[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn backends_give_identical_weights() {
        let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
        let pi = stationary(&m).unwrap();
        let cov = covariance_limit(&m, &pi, CovarianceMethod::FundamentalMatrix, 1e-12).unwrap();
        let b = vec![tv(&[2.0, -1.0, -1.0]), tv(&[-1.0, 2.0, -1.0]), tv(&[-1.0, -1.0, 2.0])];
        let a = gaussian_weights(&cov, &b, 20_000, 0.0, 5, Execution::Sequential).unwrap();
        let c = gaussian_weights(&cov, &b, 20_000, 0.0, 5, Execution::Parallel).unwrap();
        assert_eq!(a, c);
        let total: f64 = a.weights.iter().sum::<f64>() + a.undecided;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_kernels_are_priors() {
        let alpha = vec![SimplexVector::new(vec![0.7, 0.2, 0.1]).unwrap(), SimplexVector::uniform(3)];
        let model = ModelSpec::new(crate::meanfield::Energy::Zero, alpha.clone()).unwrap();
        let pi = SimplexVector::uniform(2);
        let record = MinimizerRecord {
            profile: crate::meanfield::TypeProfile(alpha.clone()),
            total: SimplexVector::uniform(3),
            value: 0.0,
            hessian_pd: None,
            min_hessian_eigenvalue: None,
            stability: None,
            global: true,
            boundary: false,
        };
        let k = pure_state_kernels(&model, &pi, 0, &record, &[1, 0, 1]).unwrap();
        assert!(linf_distance(k.kernels[1].as_slice(), alpha[0].as_slice()) < 1e-15);
        assert!(linf_distance(k.kernels[2].as_slice(), alpha[1].as_slice()) < 1e-15);
    }

    #[test]
    fn reference_weights_sum_to_one() {
        let params = PottsParams::new(4.0, 1.69, 3).unwrap();
        let r = theorem3_reference(&params).unwrap();
        assert!((r.total_mass() - 1.0).abs() < 1e-15);
        assert!(r.atoms[2].coefficients[0] > 0.5);
        assert_eq!(theorem3_reference(&PottsParams::new(1.0, 0.5, 3).unwrap()), Err(Error::NoOrderedPhase));
    }

    #[test]
    fn combining_identical_estimates_is_identity() {
        let r = theorem3_reference(&PottsParams::new(4.0, 1.69, 3).unwrap()).unwrap();
        let c = combine_kappa(&[r.clone(), r.clone(), r.clone()], &SimplexVector::uniform(3)).unwrap();
        assert_eq!(c.atoms.len(), 4);
        for a in &r.atoms {
            assert!((c.weight_near(&a.coefficients, 1e-12) - a.weight).abs() < 1e-12);
        }
    }

    #[test]
    fn no_interaction_is_flagged() {
        let params = PottsParams::new(0.0, 0.4, 3).unwrap();
        let states = PottsStates::new(&params).unwrap();
        let chain = presets::degenerate(0.5).unwrap();
        let opts = KappaOptions {
            start: Start::State(2),
            n: 50,
            replicas: 40,
            epsilon: 0.1,
            seed: 3,
            estimator: Estimator::Structural,
            schedule: None,
        };
        let (est, _) = degenerate_potts_kappa(&states, &chain, &opts, Execution::Sequential).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.atoms.len(), 1);
        assert!((est.atoms[0].weight - 1.0).abs() < 1e-12);
    }
}
