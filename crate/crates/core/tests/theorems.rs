#![allow(clippy::needless_range_loop)]

use metastate_core::exec::Execution;
use metastate_core::markov::{self, presets, CovarianceMethod, Start, TransitionMatrix};
use metastate_core::metastate::{self, Estimator, KappaOptions, PottsStates};
use metastate_core::potts;
use metastate_core::meanfield::PottsParams;
use metastate_core::simplex::{SimplexVector, TangentVector};

fn limit(m: &TransitionMatrix) -> markov::CovarianceMatrix {
    let pi = markov::stationary(m).unwrap();
    markov::covariance_limit(m, &pi, CovarianceMethod::FundamentalMatrix, 1e-13).unwrap()
}

fn potts_vectors() -> Vec<TangentVector> {
    let params = PottsParams::new(4.0, 1.69, 3).unwrap();
    let u = potts::ordered_branch(&params, 1e-9).unwrap().u;
    (0..3).map(|j| potts::stability_vector_closed(&params, u, j)).collect()
}

/// Closed form of the doubly stochastic limit covariance, every entry over
/// the denominator `27(−1 + a + bc + d − ad)`.
fn doubly_closed_form(a: f64, b: f64, c: f64, d: f64) -> [[f64; 3]; 3] {
    let den = 27.0 * (-1.0 + a + b * c + d - a * d);
    let s11 = 2.0 / 9.0 + 2.0 * (1.0 + b * (2.0 - 6.0 * c) + 2.0 * c - 2.0 * d + a * (-5.0 + 6.0 * d)) / den;
    let s12 = -1.0 / 9.0 - (b * (5.0 - 6.0 * c) + 5.0 * c - 2.0 * (1.0 + d) + a * (-2.0 + 6.0 * d)) / den;
    let s13 = -1.0 / 9.0 - (4.0 - 8.0 * a - b - c - 6.0 * b * c - 2.0 * d + 6.0 * a * d) / den;
    let s22 = 2.0 / 9.0 + 2.0 * (1.0 + b * (2.0 - 6.0 * c) + 2.0 * c - 5.0 * d + a * (-2.0 + 6.0 * d)) / den;
    let s23 = -1.0 / 9.0 - (4.0 - 2.0 * a - b - c - 6.0 * b * c - 8.0 * d + 6.0 * a * d) / den;
    let s33 = 2.0 / 9.0 - 2.0 * (-4.0 + b + c + 6.0 * b * c + a * (5.0 - 6.0 * d) + 5.0 * d) / den;
    [[s11, s12, s13], [s12, s22, s23], [s13, s23, s33]]
}

#[test]
fn doubly_stochastic_closed_form_matches() {
    for (a, b, c, d) in [(0.4, 0.3, 0.2, 0.5), (0.1, 0.6, 0.3, 0.2), (0.25, 0.25, 0.5, 0.1)] {
        let sigma = limit(&presets::doubly(a, b, c, d).unwrap());
        let closed = doubly_closed_form(a, b, c, d);
        for i in 0..3 {
            for j in 0..3 {
                assert!((sigma.get(i, j) - closed[i][j]).abs() < 1e-12, "({a},{b},{c},{d}) entry {i},{j}");
            }
        }
    }
}

#[test]
fn misprinted_denominator_is_wrong() {
    // (2,1) and (2,2) entries printed over −1 + a + b + c + d − ad
    let (a, b, c, d) = (0.4, 0.3, 0.2, 0.5);
    let den = 27.0 * (-1.0 + a + b + c + d - a * d);
    let s22 = 2.0 / 9.0 + 2.0 * (1.0 + b * (2.0 - 6.0 * c) + 2.0 * c - 5.0 * d + a * (-2.0 + 6.0 * d)) / den;
    let sigma = limit(&presets::doubly(a, b, c, d).unwrap());
    assert!((sigma.get(1, 1) - s22).abs() > 0.1);
}

#[test]
fn time_reversal_pairs_give_equal_weights() {
    // relabeling 1↔3 maps this chain to its reversal, which has the same covariance
    let m = presets::doubly(0.4, 0.3, 0.2, 0.5).unwrap();
    let sigma = limit(&m);
    let swap = [2, 1, 0];
    assert!(sigma.permuted(&swap).max_abs_diff(&sigma) < 1e-12);
    let reversed = TransitionMatrix::new(
        (0..3).map(|i| (0..3).map(|j| m.get(j, i)).collect()).collect(),
    )
    .unwrap();
    assert!(m.permuted(&swap).rows().iter().flatten().zip(reversed.rows().iter().flatten()).all(|(x, y)| (x - y).abs() < 1e-15));
}

#[test]
fn generic_doubly_stochastic_weights_differ() {
    let sigma = limit(&presets::doubly(0.8, 0.16, 0.09, 0.41).unwrap());
    let w = metastate::gaussian_weights(&sigma, &potts_vectors(), 400_000, 0.0, 12, Execution::Parallel)
        .unwrap()
        .weights;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        assert!((w[i] - w[j]).abs() > 0.01, "{w:?}");
    }
}

#[test]
fn degenerate_gaussian_splits_between_state_three_and_boundary() {
    let sigma = limit(&presets::degenerate(0.5).unwrap());
    let g = metastate::gaussian_weights(&sigma, &potts_vectors(), 200_000, 0.0, 13, Execution::Parallel).unwrap();
    assert!((g.weights[2] - 0.5).abs() < 0.01);
    assert!(g.weights[0] < 0.01 && g.weights[1] < 0.01);
    assert!((g.undecided - 0.5).abs() < 0.01);
}

#[test]
fn simulated_weights_follow_occupation_imbalance() {
    let cp = potts::coexistence(4.0, 3, (1.0, 2.5), 1e-13).unwrap();
    let params = PottsParams::new(4.0, cp.field, 3).unwrap();
    let states = PottsStates::new(&params).unwrap();
    let p = states.p();
    let chain = presets::degenerate(0.5).unwrap();
    let per: Vec<_> = (0..3)
        .map(|s| {
            let opts = KappaOptions {
                start: Start::State(s),
                n: 4000,
                replicas: 6000,
                epsilon: 0.1,
                seed: 40 + s as u64,
                estimator: Estimator::Structural,
                schedule: None,
            };
            metastate::degenerate_potts_kappa(&states, &chain, &opts, Execution::Parallel).unwrap().0
        })
        .collect();
    let start2 = &per[1];
    assert!((start2.weight_near(&[0.5, 0.5, 0.0], 0.02) - 1.0 / 6.0).abs() < 0.03);
    assert!((start2.weight_near(&[1.0 - p, p, 0.0], 0.02) - 1.0 / 3.0).abs() < 0.03);
    let kappa = metastate::combine_kappa(&per, &SimplexVector::uniform(3)).unwrap();
    for (c, w) in [
        ([0.0, 0.0, 1.0], 0.5),
        ([0.5, 0.5, 0.0], 5.0 / 18.0),
        ([p, 1.0 - p, 0.0], 1.0 / 9.0),
        ([1.0 - p, p, 0.0], 1.0 / 9.0),
    ] {
        assert!((kappa.weight_near(&c, 0.02) - w).abs() < 0.03, "{c:?}");
    }
}

#[test]
fn starts_one_and_three_agree() {
    let params = PottsParams::new(4.0, 1.69, 3).unwrap();
    let states = PottsStates::new(&params).unwrap();
    let chain = presets::degenerate(0.5).unwrap();
    let run = |s: usize| {
        let opts = KappaOptions {
            start: Start::State(s),
            n: 2000,
            replicas: 4000,
            epsilon: 0.1,
            seed: 70,
            estimator: Estimator::Structural,
            schedule: None,
        };
        metastate::degenerate_potts_kappa(&states, &chain, &opts, Execution::Parallel).unwrap().0
    };
    let (k1, k3) = (run(0), run(2));
    for a in &k3.atoms {
        assert!((k1.weight_near(&a.coefficients, 0.02) - a.weight).abs() < 0.04);
    }
}
