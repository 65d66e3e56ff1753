mod common;

use common::oracle::{brute_force_oracle, degree_three_trees};
use common::{dirac, instance_set, measure, random_probability, rng};
use ramified::bounds::separation_lower_bound;
use ramified::solver::{full_topologies, solve_dalpha, SolveOptions, SolveStatus, SolverError};
use ramified::transport_graph::{cost_malpha, validate};

#[test]
fn oracle_topologies_agree_in_number() {
    for n in 3..=5 {
        assert_eq!(degree_three_trees(n).len(), full_topologies(n).len());
    }
}

#[test]
fn solver_matches_oracle() {
    let opts = SolveOptions::default();
    for (i, (a, b)) in instance_set(7, 10, 5).iter().enumerate() {
        for alpha in [0.0, 0.5, 0.9] {
            let s = solve_dalpha(a, b, alpha, &opts).unwrap().value;
            let o = brute_force_oracle(a, b, alpha, 0.05).unwrap();
            assert!((s - o).abs() < 1e-3, "instance {i}, alpha {alpha}: solver {s}, oracle {o}");
        }
    }
}

#[test]
fn oracle_reproduces_y_instance() {
    let a = dirac(&[0.0, 0.0], 1.0);
    let b = measure(&[(&[1.0, 1.0], 0.5), (&[1.0, -1.0], 0.5)]);
    let o = brute_force_oracle(&a, &b, 0.0, 1e-3).unwrap();
    assert!((o - (1.0 + 3f64.sqrt())).abs() < 1e-3, "{o}");
}

#[test]
fn round_trip_wins_at_negative_alpha() {
    let a = dirac(&[0.0], 1.0);
    let b = measure(&[(&[0.0], 0.8), (&[1.0], 0.2)]);
    let opts = SolveOptions::default();
    let neg = solve_dalpha(&a, &b, -0.6, &opts).unwrap();
    assert!((neg.value - (1.0 + 0.8f64.powf(-0.6))).abs() < 1e-12, "{}", neg.value);
    assert_eq!(neg.status, SolveStatus::Exact);
    assert!(validate(&neg.path, &a, &b).unwrap().valid);
    let pos = solve_dalpha(&a, &b, 0.5, &opts).unwrap();
    assert!((pos.value - 0.2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn solutions_are_valid_paths_with_matching_cost() {
    let opts = SolveOptions::default();
    for (a, b) in instance_set(31, 6, 7) {
        for alpha in [-0.5, 0.0, 0.5, 0.9] {
            let r = solve_dalpha(&a, &b, alpha, &opts).unwrap();
            assert!(validate(&r.path, &a, &b).unwrap().valid);
            let c = cost_malpha(&r.path, alpha).unwrap();
            assert!((c - r.value).abs() <= 1e-9 * r.value.max(1.0), "{c} vs {}", r.value);
        }
    }
}

#[test]
fn large_instances_fall_back_to_a_heuristic() {
    let mut r = rng(5);
    let a = random_probability(&mut r, 5);
    let b = random_probability(&mut r, 5);
    let res = solve_dalpha(&a, &b, 0.5, &SolveOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Heuristic);
    assert!(validate(&res.path, &a, &b).unwrap().valid);
    assert!(res.value >= separation_lower_bound(&a, &b, 0.5).unwrap());
}

#[test]
fn alpha_one_is_the_line_wasserstein_distance() {
    let a = measure(&[(&[0.0], 0.5), (&[2.0], 0.5)]);
    let b = measure(&[(&[1.0], 0.25), (&[3.0], 0.75)]);
    // ∫ |F_a − F_b| over the line
    let w1 = 0.5 * 1.0 + 0.25 * 1.0 + 0.75 * 1.0;
    let r = solve_dalpha(&a, &b, 1.0, &SolveOptions::default()).unwrap();
    assert!((r.value - w1).abs() < 1e-12, "{}", r.value);
}

#[test]
fn same_seed_same_answer() {
    let (a, b) = instance_set(3, 1, 6).remove(0);
    let opts = SolveOptions { seed: 9, restarts: 3, ..SolveOptions::default() };
    assert_eq!(solve_dalpha(&a, &b, 0.3, &opts).unwrap(), solve_dalpha(&a, &b, 0.3, &opts).unwrap());
}

#[test]
fn rejects_bad_inputs() {
    let a = dirac(&[0.0], 1.0);
    let half = dirac(&[1.0], 0.5);
    let opts = SolveOptions::default();
    assert!(matches!(solve_dalpha(&a, &half, 0.5, &opts), Err(SolverError::MassMismatch { .. })));
    assert!(matches!(solve_dalpha(&a, &a, 1.5, &opts), Err(SolverError::AlphaOutOfRange(_))));
    assert!(matches!(solve_dalpha(&a, &dirac(&[0.0, 1.0], 1.0), 0.5, &opts), Err(SolverError::DimensionMismatch(1, 2))));
}
