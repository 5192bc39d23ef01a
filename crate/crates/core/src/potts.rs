//! Closed forms for the random-field Potts model with equidistributed disorder.
//!
//! Minimizers have totals `ν_{j,u}` with `ν(j) = (1 + (q−1)u)/q` and
//! `ν(i) = (1 − u)/q` otherwise, where `u` solves the mean-field equation
//! `u = e^{βu}/(e^{βu} + e^B + q − 2) − 1/(e^{βu+B} + q − 1)`.

use serde::Serialize;

use crate::error::{Error, Result};
pub use crate::meanfield::PottsParams;
use crate::simplex::{log_sum_exp, SimplexVector, TangentVector};

/// Residual accepted for a root of the mean-field equation.
pub const ROOT_TOL: f64 = 1e-10;
pub const SCAN_STEP: f64 = 1e-4;

/// A solution `u` of the mean-field equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderParameter {
    pub u: f64,
    pub residual: f64,
}

fn ln_qm(params: &PottsParams, k: usize) -> f64 {
    // ln(q - k); -inf when q == k
    ((params.q - k) as f64).ln()
}

/// `ln(e^{βu} + e^B + q − 2)`.
fn ln_mixed(params: &PottsParams, u: f64) -> f64 {
    log_sum_exp(&[params.beta * u, params.field, ln_qm(params, 2)])
}

/// `ln(e^{βu+B} + q − 1)`.
fn ln_aligned(params: &PottsParams, u: f64) -> f64 {
    log_sum_exp(&[params.beta * u + params.field, ln_qm(params, 1)])
}

pub fn mfe_residual(params: &PottsParams, u: f64) -> f64 {
    let first = (params.beta * u - ln_mixed(params, u)).exp();
    let second = (-ln_aligned(params, u)).exp();
    u - (first - second)
}

/// All roots of the mean-field equation in `[0, 1]`, ascending.
pub fn solve_order_parameters(params: &PottsParams) -> Vec<OrderParameter> {
    let steps = (1.0 / SCAN_STEP).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&u| mfe_residual(params, u)).collect();
    let mut roots: Vec<f64> = Vec::new();
    for k in 0..=steps {
        if values[k].abs() <= 1e-15 {
            roots.push(grid[k]);
            continue;
        }
        if k < steps && values[k + 1].abs() > 1e-15 && values[k].signum() != values[k + 1].signum() {
            roots.push(bisect(|u| mfe_residual(params, u), grid[k], grid[k + 1], 1e-12));
        }
    }
    let mut out: Vec<OrderParameter> = roots
        .into_iter()
        .map(|u| OrderParameter { u, residual: mfe_residual(params, u) })
        .filter(|r| r.residual.abs() <= ROOT_TOL)
        .collect();
    out.sort_by(|a, b| a.u.total_cmp(&b.u));
    out
}

/// Bisection on a bracketing interval down to width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Free energy of the ordered profile with order parameter `u`, relative to `u = 0`.
pub fn potts_free_energy_u(params: &PottsParams, u: f64) -> f64 {
    let q = params.q as f64;
    let beta = params.beta;
    let ln_norm = log_sum_exp(&[params.field, ln_qm(params, 1)]);
    let lm = ln_mixed(params, u);
    (ln_norm - lm) + beta * (q - 1.0) * u * u / (2.0 * q) + beta * u / q - (ln_aligned(params, u) - lm) / q
}

/// The total measure `ν_{j,u}`.
pub fn ordered_total(params: &PottsParams, u: f64, j: usize) -> SimplexVector {
    let q = params.q as f64;
    let v = (0..params.q)
        .map(|i| if i == j { (1.0 + (q - 1.0) * u) / q } else { (1.0 - u) / q })
        .collect();
    SimplexVector::normalized(v).expect("ordered total is a probability vector")
}

/// `L = ln[(e^{βu+B} + q − 1)/(e^{βu} + e^B + q − 2)]`, the length scale of the stability vectors.
pub fn stability_log_ratio(params: &PottsParams, u: f64) -> f64 {
    ln_aligned(params, u) - ln_mixed(params, u)
}

/// Stability vector of the state ordered in direction `j`.
pub fn stability_vector_closed(params: &PottsParams, u: f64, j: usize) -> TangentVector {
    let q = params.q as f64;
    let l = stability_log_ratio(params, u);
    TangentVector::project(
        (0..params.q)
            .map(|i| if i == j { (q - 1.0) / q * l } else { -l / q })
            .collect(),
    )
}

fn require_three(params: &PottsParams) -> Result<()> {
    if params.q != 3 {
        return Err(Error::InvalidInput(format!(
            "the biased-mixture weight is defined for q = 3, got q = {}",
            params.q
        )));
    }
    Ok(())
}

/// `p₁ = (2 + e^{βu+B}) / (e^B + e^{βu} + 1)`, the odds of state 1 against state 2.
pub fn p1(params: &PottsParams, u: f64) -> Result<f64> {
    require_three(params)?;
    Ok(stability_log_ratio(params, u).exp())
}

/// Bias `p = p₁ / (1 + p₁)` of the mixture `p μ¹ + (1 − p) μ²`.
pub fn p_of(params: &PottsParams, u: f64) -> Result<f64> {
    let odds = p1(params, u)?;
    Ok(odds / (1.0 + odds))
}

/// Free-energy gap between the deepest nonzero root and `u = 0`;
/// `None` when only the disordered solution exists.
pub fn ordered_gap(params: &PottsParams) -> Option<(f64, f64)> {
    solve_order_parameters(params)
        .into_iter()
        .filter(|r| r.u > 1e-8)
        .map(|r| (potts_free_energy_u(params, r.u) - potts_free_energy_u(params, 0.0), r.u))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// A point on the coexistence curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoexistencePoint {
    pub beta: f64,
    pub field: f64,
    pub u_star: f64,
    pub gap: f64,
}

/// Field `B*(β)` at which the ordered and disordered minima have equal depth.
pub fn coexistence(beta: f64, q: usize, window: (f64, f64), tol: f64) -> Result<CoexistencePoint> {
    let gap_at = |field: f64| -> Result<f64> {
        let p = PottsParams::new(beta, field, q)?;
        Ok(ordered_gap(&p).map(|g| g.0).unwrap_or(f64::INFINITY))
    };
    let (mut lo, mut hi) = window;
    let glo = gap_at(lo)?;
    let ghi = gap_at(hi)?;
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::NoBracket);
    }
    let mut point = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let params = PottsParams::new(beta, mid, q)?;
        match ordered_gap(&params) {
            Some((g, u)) => {
                if g.abs() <= tol {
                    point = Some(CoexistencePoint { beta, field: mid, u_star: u, gap: g });
                    break;
                }
                if g < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            None => hi = mid,
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    point.ok_or_else(|| Error::NonConvergence("coexistence bisection stalled".into()))
}

/// Largest root `u*` that is a global minimizer (within `tol`); used for the bias `p`.
pub fn ordered_branch(params: &PottsParams, tol: f64) -> Result<OrderParameter> {
    let zero = potts_free_energy_u(params, 0.0);
    let roots = solve_order_parameters(params);
    let best = roots
        .iter()
        .map(|r| potts_free_energy_u(params, r.u))
        .fold(f64::INFINITY, f64::min)
        .min(zero);
    roots
        .into_iter()
        .rev()
        .find(|r| r.u > 1e-8 && potts_free_energy_u(params, r.u) <= best + tol)
        .ok_or(Error::NoOrderedPhase)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64, field: f64) -> PottsParams {
        PottsParams::new(beta, field, 3).unwrap()
    }

    #[test]
    fn zero_is_always_a_root() {
        for (b, f) in [(0.0, 0.0), (2.0, 0.0), (4.0, 1.3), (1.0, 0.5)] {
            assert!(mfe_residual(&params(b, f), 0.0).abs() < 1e-15);
        }
        assert!((mfe_residual(&params(0.0, 0.0), 0.4) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn free_energy_vanishes_at_zero() {
        assert!(potts_free_energy_u(&params(3.0, 0.7), 0.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_temperature_single_root() {
        let roots = solve_order_parameters(&params(0.0, 0.3));
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].u, 0.0);
    }

    #[test]
    fn closed_form_stability_vector() {
        let p = params(3.5, 0.4);
        let v = stability_vector_closed(&p, 0.6, 0);
        let w = stability_vector_closed(&p, 0.6, 1);
        assert!(v.as_slice().iter().sum::<f64>().abs() < 1e-15);
        assert!((v[0] - w[1]).abs() < 1e-15 && (v[1] - w[0]).abs() < 1e-15 && (v[2] - w[2]).abs() < 1e-15);
        assert!(stability_vector_closed(&p, 0.0, 2).norm() < 1e-15);
    }

    #[test]
    fn bias_at_zero_order() {
        let p = params(3.0, 0.5);
        assert!((p1(&p, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((p_of(&p, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(p_of(&p, 0.4).unwrap() > 0.5);
        assert!(p1(&PottsParams::new(3.0, 0.5, 4).unwrap(), 0.1).is_err());
    }

    #[test]
    fn no_bracket_at_high_temperature() {
        assert!(matches!(coexistence(1.0, 3, (0.0, 1.0), 1e-12), Err(Error::NoBracket)));
    }
}
