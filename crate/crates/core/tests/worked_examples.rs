//! Monte Carlo against the closed-form solutions, at moderate sample sizes.

use std::sync::Arc;

use statecon::estimator::estimate_grad_u;
use statecon::oracles::std_normal_cdf;
use statecon::verify::{
    cost_of_policy, discrete_survival_probability, reflection_bruteforce_u, theta_martingale_check,
};
use statecon::{
    estimate_u, ClosedFormSolution, ConstantField, ConstraintSet, CostFn, CostSpec, Error, FeedbackPolicy, McConfig,
    ProblemSpec, UFunction,
};

const Z: f64 = 4.0;

fn within(got: f64, want: f64, se: f64, extra: f64) -> bool {
    (got - want).abs() <= Z * se + extra
}

#[test]
fn example1_terminal_constraint() {
    let sol = ClosedFormSolution::example1(1.0).unwrap();
    let est = estimate_u(&sol.problem(), 0.0, &[-1.5], &McConfig::new(40_000, 0.005, 11)).unwrap();
    assert!(within(est.mean, std_normal_cdf(-1.5), est.std_error, 0.0), "{est:?}");
    assert_eq!(est.n_nonfinite, 0);
}

#[test]
fn example2_needs_the_bridge() {
    let sol = ClosedFormSolution::example2(1.0).unwrap();
    let cfg = McConfig::new(40_000, 0.005, 12);
    let target = sol.u(0.0, &[0.2]);
    let bridged = estimate_u(&sol.problem(), 0.0, &[0.2], &cfg).unwrap();
    assert!(within(bridged.mean, target, bridged.std_error, 0.005), "{bridged:?}");
    let plain = estimate_u(&sol.problem(), 0.0, &[0.2], &cfg.with_bridge(false)).unwrap();
    assert!(plain.mean - target > Z * plain.std_error, "{plain:?}");
}

#[test]
fn example3_slab() {
    let sol = ClosedFormSolution::example3(1.0, 0.2, -2.0, 2.0).unwrap();
    let cfg = McConfig::new(40_000, 0.005, 13);
    for x in [1.8, 2.3, -2.5] {
        let est = estimate_u(&sol.problem(), 0.0, &[x], &cfg).unwrap();
        assert!(within(est.mean, sol.u(0.0, &[x]), est.std_error, 0.0), "x = {x}: {est:?}");
    }
    // after the slab time nothing can be killed
    let late = estimate_u(&sol.problem(), 0.5, &[0.0], &cfg).unwrap();
    assert_eq!(late.mean, 1.0);
}

#[test]
fn forbidden_start_and_horizon_are_exact() {
    let problem = ClosedFormSolution::example2(1.0).unwrap().problem();
    let cfg = McConfig::new(100, 0.01, 1);
    assert_eq!(estimate_u(&problem, 0.3, &[-0.1], &cfg).unwrap().mean, 0.0);
    let at_t = estimate_u(&problem, 1.0, &[0.7], &cfg).unwrap();
    assert_eq!((at_t.mean, at_t.std_error), (1.0, 0.0));
}

#[test]
fn unconstrained_with_constant_running_cost() {
    let c = 0.8;
    let problem = ProblemSpec::new(
        Arc::new(ConstantField::brownian(2)),
        ConstraintSet::empty(2, 1.0),
        CostSpec {
            running: CostFn::Constant(c),
            terminal: CostFn::Zero,
        },
        1.0,
    )
    .unwrap();
    let est = estimate_u(&problem, 0.25, &[0.3, -0.1], &McConfig::new(1000, 0.01, 5)).unwrap();
    assert!((-2.0 * est.mean.ln() - c * 0.75).abs() < 1e-12);
}

#[test]
fn gradient_matches_closed_form() {
    let sol = ClosedFormSolution::example1(1.0).unwrap();
    let g = estimate_grad_u(&sol.problem(), 0.0, &[-0.5], None, &McConfig::new(40_000, 0.005, 21)).unwrap();
    let mut grad = [0.0];
    sol.grad_u(0.0, &[-0.5], &mut grad);
    let want = grad[0];
    // central difference at the default step adds O(h²) bias, negligible here
    assert!(within(g.gradient[0], want, g.std_error[0], 1e-3), "{g:?} vs {want}");
}

#[test]
fn gradient_probe_inside_forbidden_set_is_refused() {
    let sol = ClosedFormSolution::example2(1.0).unwrap();
    let err = estimate_grad_u(&sol.problem(), 0.0, &[1e-4], None, &McConfig::new(100, 0.01, 1)).unwrap_err();
    assert!(matches!(err, Error::PointOutsideC { .. }));
}

#[test]
fn reflection_bruteforce_matches_shifted_barrier() {
    let dt = 0.002;
    let est = reflection_bruteforce_u(0.2, 1.0, &McConfig::new(20_000, dt, 31)).unwrap();
    let want = discrete_survival_probability(0.2, 1.0, dt);
    // the shift formula is itself an O(dt) approximation
    assert!(within(est.mean, want, est.std_error, 0.003), "{est:?} vs {want}");
}

#[test]
fn martingale_at_checkpoints() {
    let sol = ClosedFormSolution::example1(1.0).unwrap();
    let report = theta_martingale_check(
        &sol.problem(),
        Some(&sol as &dyn UFunction),
        0.0,
        &[0.5],
        &[0.25, 0.5, 0.75],
        &McConfig::new(20_000, 0.005, 41),
    )
    .unwrap();
    assert!(report.max_target_z() <= Z, "{report:?}");
    assert!(report.max_pairwise_z() <= Z, "{report:?}");
}

#[test]
fn martingale_without_oracle_needs_a_closed_form() {
    let sol = ClosedFormSolution::example2(1.0).unwrap();
    let err = theta_martingale_check(&sol.problem(), None, 0.0, &[1.0], &[0.5], &McConfig::new(10, 0.01, 1)).unwrap_err();
    assert_eq!(err, Error::RequiresUOracle);
}

#[test]
fn optimal_policy_beats_doing_nothing_in_the_unconstrained_case() {
    let sol = ClosedFormSolution::unconstrained(Arc::new(ConstantField::brownian(1)), 1.0, 0.0, 0.0).unwrap();
    let cfg = McConfig::new(2000, 0.01, 3);
    let opt = cost_of_policy(&sol.problem(), &sol.policy(), 0.0, &[0.0], &cfg).unwrap();
    let zero = cost_of_policy(&sol.problem(), &FeedbackPolicy::zero(1), 0.0, &[0.0], &cfg).unwrap();
    assert_eq!(opt.estimate.mean, 0.0);
    assert_eq!(zero.estimate.mean, 0.0);
    assert_eq!(opt.violation_fraction, 0.0);
}

#[test]
fn optimal_control_keeps_example1_paths_positive() {
    let sol = ClosedFormSolution::example1(1.0).unwrap();
    let report = cost_of_policy(&sol.problem(), &sol.policy(), 0.0, &[-1.5], &McConfig::new(2000, 0.005, 7)).unwrap();
    // the drift blows up near the end only for paths still below zero, so
    // violations stay a small discretisation effect
    assert!(report.violation_fraction < 0.1, "{report:?}");
    let v = sol.v(0.0, &[-1.5]);
    assert!(within(report.estimate.mean, v, report.estimate.std_error, 0.1 * v), "{report:?} vs {v}");
}
