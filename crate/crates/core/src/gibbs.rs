//! Exact finite-volume Gibbs laws of the total spin-count vector.
//!
//! For a frozen disorder string the law of `K = n·L_n` is the convolution
//! over disorder symbols `b` of multinomial blocks
//! `multinomial(n_b; k_b) · Π_a α[b](a)^{k_b(a)}`, tilted by `e^{−nF(K/n)}`.
//! The law depends on the string only through its symbol counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::ModelSpec;
use crate::simplex::{l1_distance, LogAccumulator, SimplexVector};

/// Volume cap for three spin values.
pub const DEFAULT_VOLUME_CAP: usize = 400;

/// Largest volume the dense count-vector tables accept for `q` spin values.
pub fn volume_cap(q: usize) -> usize {
    match q {
        0..=3 => DEFAULT_VOLUME_CAP,
        _ => {
            // keep (n+1)^(q-1) at or below the q = 3 table size
            let budget = ((DEFAULT_VOLUME_CAP + 1) as f64).powi(2);
            (budget.powf(1.0 / (q - 1) as f64).floor() as usize).saturating_sub(1)
        }
    }
}

/// Disorder symbols `η(1..n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisorderString {
    symbols: Vec<usize>,
    alphabet: usize,
}

impl DisorderString {
    pub fn new(symbols: Vec<usize>, alphabet: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidInput("empty disorder string".into()));
        }
        if let Some(s) = symbols.iter().find(|&&s| s >= alphabet) {
            return Err(Error::InvalidInput(format!(
                "symbol {s} outside an alphabet of size {alphabet}"
            )));
        }
        Ok(Self { symbols, alphabet })
    }

    /// A string with prescribed symbol counts, the last symbol being `last`.
    pub fn from_counts(counts: &[usize], last: usize) -> Result<Self> {
        if last >= counts.len() || counts[last] == 0 {
            return Err(Error::InvalidInput("last symbol must have a positive count".into()));
        }
        let mut symbols = Vec::with_capacity(counts.iter().sum());
        for (b, &c) in counts.iter().enumerate() {
            let c = if b == last { c - 1 } else { c };
            symbols.extend(std::iter::repeat_n(b, c));
        }
        symbols.push(last);
        Self::new(symbols, counts.len())
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn last(&self) -> usize {
        *self.symbols.last().expect("nonempty")
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.alphabet];
        for &s in &self.symbols {
            c[s] += 1;
        }
        c
    }

    /// The same string with its last symbol replaced.
    pub fn with_last(&self, symbol: usize) -> Result<Self> {
        let mut s = self.symbols.clone();
        *s.last_mut().expect("nonempty") = symbol;
        Self::new(s, self.alphabet)
    }
}

/// Compositions of `m` into `q` parts, first `q − 1` coordinates dense-indexed.
#[derive(Debug, Clone)]
struct LogLaw {
    m: usize,
    q: usize,
    /// log-weights indexed by the first q − 1 coordinates (radix m + 1).
    values: Vec<f64>,
}

impl LogLaw {
    fn radix_len(m: usize, q: usize) -> usize {
        (m + 1).pow((q - 1) as u32)
    }

    fn point(q: usize) -> Self {
        Self { m: 0, q, values: vec![0.0] }
    }

    fn index(coords: &[usize], m: usize) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &c in &coords[..coords.len() - 1] {
            idx += c * stride;
            stride *= m + 1;
        }
        idx
    }

    fn compositions(m: usize, q: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = vec![0; q];
        fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if pos + 1 == cur.len() {
                cur[pos] = left;
                out.push(cur.clone());
                return;
            }
            for k in 0..=left {
                cur[pos] = k;
                rec(pos + 1, left - k, cur, out);
            }
        }
        rec(0, m, &mut cur, &mut out);
        out
    }

    /// Multinomial block for `m` sites with spin law `alpha`.
    fn block(m: usize, alpha: &[f64], ln_fact: &[f64]) -> Self {
        let q = alpha.len();
        let ln_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();
        let mut values = vec![f64::NEG_INFINITY; Self::radix_len(m, q)];
        for k in Self::compositions(m, q) {
            let mut lw = ln_fact[m];
            for (a, &ka) in k.iter().enumerate() {
                lw += -ln_fact[ka] + ka as f64 * ln_alpha[a];
            }
            values[Self::index(&k, m)] = lw;
        }
        Self { m, q, values }
    }

    fn entries(&self) -> Vec<(Vec<usize>, f64)> {
        Self::compositions(self.m, self.q)
            .into_iter()
            .map(|k| {
                let v = self.values[Self::index(&k, self.m)];
                (k, v)
            })
            .filter(|(_, v)| *v > f64::NEG_INFINITY)
            .collect()
    }

    /// Convolution `C(K) = log Σ_{k} e^{A(k) + B(K−k)}`.
    ///
    /// Products are summed in linear space after shifting each factor by its
    /// maximum; entries whose shifted sum falls below `1e-250` are recomputed
    /// with a streaming log-sum-exp so no mass is lost to underflow.
    fn convolve(&self, other: &LogLaw) -> LogLaw {
        let q = self.q;
        let m = self.m + other.m;
        let len = Self::radix_len(m, q);
        let a = self.entries();
        let b = other.entries();
        let max_a = a.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let max_b = b.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let a_lin: Vec<(usize, f64)> = a.iter().map(|(k, v)| (Self::index(k, m), (v - max_a).exp())).collect();
        let b_lin: Vec<(usize, f64)> = b.iter().map(|(k, v)| (Self::index(k, m), (v - max_b).exp())).collect();
        let mut lin = vec![0.0; len];
        for &(ia, wa) in &a_lin {
            if wa == 0.0 {
                continue;
            }
            for &(ib, wb) in &b_lin {
                lin[ia + ib] += wa * wb;
            }
        }
        let mut values: Vec<f64> = lin
            .iter()
            .map(|&s| if s > 0.0 { max_a + max_b + s.ln() } else { f64::NEG_INFINITY })
            .collect();
        let tiny: Vec<usize> = Self::compositions(m, q)
            .into_iter()
            .map(|k| Self::index(&k, m))
            .filter(|&i| lin[i] < 1e-250)
            .collect();
        if !tiny.is_empty() {
            let mut acc = vec![LogAccumulator::default(); len];
            let mut is_tiny = vec![false; len];
            for &i in &tiny {
                is_tiny[i] = true;
            }
            let a_idx: Vec<(usize, f64)> = a.iter().map(|(k, v)| (Self::index(k, m), *v)).collect();
            let b_idx: Vec<(usize, f64)> = b.iter().map(|(k, v)| (Self::index(k, m), *v)).collect();
            for &(ia, va) in &a_idx {
                for &(ib, vb) in &b_idx {
                    if is_tiny[ia + ib] {
                        acc[ia + ib].push(va + vb);
                    }
                }
            }
            for &i in &tiny {
                values[i] = acc[i].value();
            }
        }
        LogLaw { m, q, values }
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Untilted law of the total count vector for sites with the given symbol counts.
fn untilted(model: &ModelSpec, counts: &[usize]) -> LogLaw {
    let n: usize = counts.iter().sum();
    let ln_fact = ln_factorials(n);
    let q = model.spins();
    let mut law = LogLaw::point(q);
    for (b, &nb) in counts.iter().enumerate() {
        if nb > 0 {
            let block = LogLaw::block(nb, model.alpha[b].as_slice(), &ln_fact);
            law = if law.m == 0 { block } else { law.convolve(&block) };
        }
    }
    law
}

fn check_volume(model: &ModelSpec, n: usize, alphabet: usize) -> Result<()> {
    if alphabet != model.fields() {
        return Err(Error::InvalidInput(format!(
            "disorder alphabet {alphabet} does not match the model's {}",
            model.fields()
        )));
    }
    let cap = volume_cap(model.spins());
    if n > cap {
        return Err(Error::VolumeTooLarge { n, cap });
    }
    Ok(())
}

/// Exact Gibbs law of the total spin-count vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution {
    pub n: usize,
    pub q: usize,
    /// Flattened count vectors, `q` entries per support point.
    pub cells: Vec<usize>,
    pub log_probs: Vec<f64>,
    /// `log Z_n`.
    pub log_z: f64,
}

impl CountDistribution {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn counts(&self, i: usize) -> &[usize] {
        &self.cells[i * self.q..(i + 1) * self.q]
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.log_probs[i].exp()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        (0..self.len()).map(move |i| (self.counts(i), self.prob(i)))
    }

    /// Probability of an exact count vector (0 off the support).
    pub fn prob_of(&self, counts: &[usize]) -> f64 {
        (0..self.len())
            .find(|&i| self.counts(i) == counts)
            .map(|i| self.prob(i))
            .unwrap_or(0.0)
    }

    /// Law of `L_n = K / n` pushed to the spin simplex, as mean spin distribution.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.q];
        for (k, p) in self.iter() {
            for a in 0..self.q {
                m[a] += p * k[a] as f64 / self.n as f64;
            }
        }
        m
    }
}

/// Exact law of `K = n L_n` under the finite-volume Gibbs measure.
pub fn count_distribution(model: &ModelSpec, eta: &DisorderString) -> Result<CountDistribution> {
    count_distribution_for_counts(model, &eta.counts())
}

/// Same as [`count_distribution`], keyed by the symbol counts of the string.
pub fn count_distribution_for_counts(model: &ModelSpec, counts: &[usize]) -> Result<CountDistribution> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidInput("empty disorder string".into()));
    }
    check_volume(model, n, counts.len())?;
    let q = model.spins();
    let law = untilted(model, counts);
    let mut cells = Vec::new();
    let mut log_w = Vec::new();
    let mut acc = LogAccumulator::default();
    for k in LogLaw::compositions(n, q) {
        let v = law.values[LogLaw::index(&k, n)];
        if v == f64::NEG_INFINITY {
            continue;
        }
        let w = v + model.energy.log_tilt(&k, n);
        acc.push(w);
        cells.extend_from_slice(&k);
        log_w.push(w);
    }
    let log_z = acc.value();
    let log_probs = log_w.into_iter().map(|w| w - log_z).collect();
    Ok(CountDistribution { n, q, cells, log_probs, log_z })
}

/// ℓ1 ball `{ν : ‖ν − center‖₁ ≤ radius}` in the spin simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeighborhoodSpec {
    pub center: SimplexVector,
    pub radius: f64,
}

impl NeighborhoodSpec {
    pub fn new(center: SimplexVector, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::InvalidInput(format!("radius {radius} must be nonnegative")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, counts: &[usize], n: usize) -> bool {
        let nu: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
        l1_distance(&nu, self.center.as_slice()) <= self.radius + 1e-12
    }
}

/// Default radius: 0.4 × the minimum pairwise ℓ1 distance between centers.
pub fn default_radius(centers: &[SimplexVector]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..centers.len() {
        for j in 0..i {
            min = min.min(l1_distance(centers[i].as_slice(), centers[j].as_slice()));
        }
    }
    0.4 * min
}

/// `log` of the Gibbs mass of a neighbourhood.
pub fn log_neighborhood_mass(dist: &CountDistribution, spec: &NeighborhoodSpec) -> f64 {
    let mut acc = LogAccumulator::default();
    for i in 0..dist.len() {
        if spec.contains(dist.counts(i), dist.n) {
            acc.push(dist.log_probs[i]);
        }
    }
    acc.value()
}

pub fn neighborhood_mass(dist: &CountDistribution, spec: &NeighborhoodSpec) -> f64 {
    log_neighborhood_mass(dist, spec).exp()
}

/// Mass below which a neighbourhood is treated as empty (`1e-300`).
const LOG_MASS_FLOOR: f64 = -690.7755278982137;

/// Ratio of neighbourhood masses around two centers for the same string.
pub fn gibbs_ratio_from(dist: &CountDistribution, first: &NeighborhoodSpec, second: &NeighborhoodSpec) -> Result<f64> {
    let num = log_neighborhood_mass(dist, first);
    let den = log_neighborhood_mass(dist, second);
    if den.is_nan() || den <= LOG_MASS_FLOOR {
        return Err(Error::ZeroMass);
    }
    Ok((num - den).exp())
}

pub fn gibbs_ratio(
    model: &ModelSpec,
    eta: &DisorderString,
    first: &SimplexVector,
    second: &SimplexVector,
    radius: f64,
) -> Result<f64> {
    let dist = count_distribution(model, eta)?;
    gibbs_ratio_from(
        &dist,
        &NeighborhoodSpec::new(first.clone(), radius)?,
        &NeighborhoodSpec::new(second.clone(), radius)?,
    )
}

/// Conditional law of the last spin given that `L_n` lies in a neighbourhood.
///
/// The last site is split off the convolution: the remaining `n − 1` sites
/// give an untilted law of `K'`, and spin `a` at site `n` contributes
/// `α[η(n)](a) · e^{−nF((K' + e_a)/n)}` restricted to the event.
pub fn site_marginal_conditional(
    model: &ModelSpec,
    eta: &DisorderString,
    spec: &NeighborhoodSpec,
) -> Result<SimplexVector> {
    let n = eta.len();
    check_volume(model, n, eta.alphabet())?;
    let q = model.spins();
    let last = eta.last();
    let mut rest = eta.counts();
    rest[last] -= 1;
    let law = untilted(model, &rest);
    let m = n - 1;
    let mut per_spin = vec![LogAccumulator::default(); q];
    let mut full = vec![0usize; q];
    for k in LogLaw::compositions(m, q) {
        let v = law.values[LogLaw::index(&k, m)];
        if v == f64::NEG_INFINITY {
            continue;
        }
        for a in 0..q {
            full.copy_from_slice(&k);
            full[a] += 1;
            if spec.contains(&full, n) {
                per_spin[a].push(v + model.energy.log_tilt(&full, n));
            }
        }
    }
    let logs: Vec<f64> = per_spin
        .iter()
        .zip(model.alpha[last].as_slice())
        .map(|(acc, alpha)| acc.value() + alpha.ln())
        .collect();
    let total = crate::simplex::log_sum_exp(&logs);
    if total == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }
    SimplexVector::normalized(logs.iter().map(|l| (l - total).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{Energy, PottsParams};

    /// Law of K by summing over all q^n spin configurations.
    fn brute_force(model: &ModelSpec, eta: &DisorderString) -> Vec<(Vec<usize>, f64)> {
        let n = eta.len();
        let q = model.spins();
        let total = q.pow(n as u32);
        let mut weights: std::collections::BTreeMap<Vec<usize>, f64> = Default::default();
        let mut log_terms = Vec::with_capacity(total);
        let mut keys = Vec::with_capacity(total);
        for code in 0..total {
            let mut c = code;
            let mut k = vec![0; q];
            let mut lw = 0.0;
            for &b in eta.symbols() {
                let a = c % q;
                c /= q;
                k[a] += 1;
                lw += model.alpha[b][a].ln();
            }
            lw += model.energy.log_tilt(&k, n);
            log_terms.push(lw);
            keys.push(k);
        }
        let z = crate::simplex::log_sum_exp(&log_terms);
        for (k, lw) in keys.into_iter().zip(log_terms) {
            *weights.entry(k).or_default() += (lw - z).exp();
        }
        weights.into_iter().collect()
    }

    fn potts(beta: f64, field: f64) -> ModelSpec {
        ModelSpec::potts(&PottsParams::new(beta, field, 3).unwrap())
    }

    #[test]
    fn zero_energy_two_sites_is_multinomial() {
        let alpha = SimplexVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let model = ModelSpec::new(Energy::Zero, vec![alpha.clone(), SimplexVector::uniform(3)]).unwrap();
        let eta = DisorderString::new(vec![0, 0], 2).unwrap();
        let dist = count_distribution(&model, &eta).unwrap();
        assert!((dist.prob_of(&[2, 0, 0]) - 0.25).abs() < 1e-15);
        assert!((dist.prob_of(&[1, 1, 0]) - 0.3).abs() < 1e-15);
        assert!((dist.prob_of(&[0, 1, 1]) - 0.12).abs() < 1e-15);
        assert!(dist.log_z.abs() < 1e-15);
    }

    #[test]
    fn matches_configuration_enumeration() {
        let model = potts(2.7, 0.6);
        let eta = DisorderString::new(vec![0, 2, 1, 1, 0, 2, 2, 1], 3).unwrap();
        let dist = count_distribution(&model, &eta).unwrap();
        let brute = brute_force(&model, &eta);
        assert_eq!(brute.len(), dist.len());
        for (k, p) in brute {
            assert!((dist.prob_of(&k) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn site_marginal_matches_enumeration() {
        let model = potts(3.1, 0.8);
        let eta = DisorderString::new(vec![0, 2, 1, 1, 0, 2, 0, 1], 3).unwrap();
        let n = eta.len();
        let center = SimplexVector::new(vec![0.2, 0.6, 0.2]).unwrap();
        let spec = NeighborhoodSpec::new(center, 0.5).unwrap();
        let got = site_marginal_conditional(&model, &eta, &spec).unwrap();
        let q: usize = 3;
        let mut num = [0.0; 3];
        for code in 0..q.pow(n as u32) {
            let mut c = code;
            let mut k = vec![0; q];
            let mut w = 1.0;
            let mut last = 0;
            for &b in eta.symbols() {
                let a = c % q;
                c /= q;
                k[a] += 1;
                w *= model.alpha[b][a];
                last = a;
            }
            if spec.contains(&k, n) {
                num[last] += w * model.energy.log_tilt(&k, n).exp();
            }
        }
        let s: f64 = num.iter().sum();
        for a in 0..3 {
            assert!((got[a] - num[a] / s).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_temperature_marginal_is_uniform() {
        let model = potts(0.0, 0.0);
        let eta = DisorderString::new(vec![0, 1, 2, 2, 1, 0, 1], 3).unwrap();
        let spec = NeighborhoodSpec::new(SimplexVector::new(vec![0.6, 0.2, 0.2]).unwrap(), 2.0).unwrap();
        let got = site_marginal_conditional(&model, &eta, &spec).unwrap();
        for a in 0..3 {
            assert!((got[a] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbourhood_extremes() {
        let model = potts(2.0, 0.3);
        let eta = DisorderString::new(vec![0, 1, 2, 0, 1, 2, 2], 3).unwrap();
        let dist = count_distribution(&model, &eta).unwrap();
        let all = NeighborhoodSpec::new(SimplexVector::uniform(3), 2.0).unwrap();
        assert!((neighborhood_mass(&dist, &all) - 1.0).abs() < 1e-12);
        let off = NeighborhoodSpec::new(SimplexVector::new(vec![0.3, 0.3, 0.4]).unwrap(), 0.0).unwrap();
        assert_eq!(neighborhood_mass(&dist, &off), 0.0);
        let c = SimplexVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert!((gibbs_ratio(&model, &eta, &c, &c, 0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            gibbs_ratio(&model, &eta, &c, &SimplexVector::new(vec![0.3, 0.3, 0.4]).unwrap(), 0.0),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn volume_cap_is_enforced() {
        let model = potts(1.0, 0.0);
        let eta = DisorderString::new(vec![0; 401], 3).unwrap();
        assert!(matches!(count_distribution(&model, &eta), Err(Error::VolumeTooLarge { .. })));
    }

    #[test]
    fn large_volume_normalizes() {
        let model = potts(4.0, 1.69);
        let dist = count_distribution_for_counts(&model, &[81, 80, 79]).unwrap();
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }
}
