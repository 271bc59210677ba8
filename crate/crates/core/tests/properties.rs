mod common;

use common::*;
use monge_ampere::harness::builtin_problem;
use monge_ampere::solver::{MixedSystem, NewtonOptions};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn inf_sup_identity(seed in any::<u64>(), nx in 2usize..6, k in 2usize..4) {
        let e = inf_sup_identity_error(seed, nx, k);
        prop_assert!(e <= 1e-12, "relative error {e}");
    }

    #[test]
    fn cofactor_rows_are_divergence_free(seed in any::<u64>(), nx in 2usize..5, k in 2usize..4) {
        let r = cofactor_divergence_residual(seed, nx, k);
        prop_assert!(r <= 1e-12, "residual {r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>(), eps in 1e-3f64..1.0) {
        let sys = MixedSystem::new(builtin_problem("test2a").unwrap(), 3, 2, None).unwrap();
        let e = jacobian_fd_error(&sys, eps, seed);
        prop_assert!(e <= 1e-6, "relative error {e}");
    }
}

#[test]
fn jacobian_fd_with_cubic_elements() {
    let sys = MixedSystem::new(builtin_problem("test1b").unwrap(), 2, 3, None).unwrap();
    for seed in 0..3 {
        assert!(jacobian_fd_error(&sys, 0.05, seed) <= 1e-6);
    }
}

#[test]
fn quadrature_matches_factorial_formula() {
    for d in 1..=10 {
        let e = quadrature_error(d);
        assert!(e <= 1e-13, "degree {d}: {e}");
    }
}

#[test]
fn converged_state_is_a_fixed_point() {
    for (name, eps) in [("test1b", 0.1), ("test2b", 0.01)] {
        let (change, tol, r1) = fixed_point_checks(name, 5, eps);
        assert!(change <= 10.0 * tol, "{name}: change {change}");
        assert!(r1 <= 1e-10, "{name}: R1 {r1}");
    }
}

#[test]
fn linearized_problem_h1_order() {
    let errs = linearized_h1_errors(&[4, 8, 16, 32], 0.5);
    assert!(errs.windows(2).all(|w| w[1].1 < w[0].1), "{errs:?}");
    let order = fitted_order(&errs);
    assert!(order >= 1.8, "order {order}, errors {errs:?}");
}

#[test]
fn both_linearizations_reach_the_same_solution() {
    let (eps, nx) = (0.01, 6);
    let sys = MixedSystem::new(builtin_problem("test2a").unwrap(), nx, 2, None).unwrap();
    let (a, rep) = sys.continuation_solve(eps, &NewtonOptions::default()).unwrap();
    assert!(rep.converged);
    let (b, res, ok) = phi_gradient_solve(nx, eps);
    assert!(ok && res <= 1e-9, "residual {res}");
    let diff = a.to_vec().iter().zip(b.to_vec()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-6, "{diff}");
}
