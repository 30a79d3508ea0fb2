//! Integrators and trajectory diagnostics: convergence orders, first-order vs
//! classical agreement on a hand-checkable system, residual scaling.

use descartes::cartesian::ConstraintSystem;
use descartes::dynamics::{
    constraint_drift, integrate_classical, integrate_field, integrate_first_order,
    integrate_newton, lagrange_residual, monitor, IntegratorConfig,
};
use descartes::error::DescartesError;
use descartes::exprlang::{parse, Expr};
use descartes::geometry::{MetricField, OneFormField};

/// Pendulum as a plain first-order field on (angle, angular velocity).
fn pendulum_field() -> Vec<Expr> {
    vec![parse("x2").unwrap(), parse("-sin(x1)").unwrap()]
}

/// The helical-frame system: identity metric, one given constraint
/// sin(x1)ẋ2 − cos(x1)ẋ3 = 0, constant multipliers. Its first-order field is
/// v = (c3, c2 cos x1, c2 sin x1), and the motion is also a genuine inertial
/// motion of the constrained particle (the transported multipliers vanish and
/// ½‖v‖² is constant).
fn helical_system(c2: f64, c3: f64) -> ConstraintSystem {
    let forms = vec![
        OneFormField::new(vec![
            Expr::Num(0.0),
            parse("sin(x1)").unwrap(),
            parse("-cos(x1)").unwrap(),
        ]),
        OneFormField::new(vec![
            Expr::Num(0.0),
            parse("cos(x1)").unwrap(),
            parse("sin(x1)").unwrap(),
        ]),
        OneFormField::new(vec![Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0)]),
    ];
    ConstraintSystem::new(
        3,
        1,
        forms,
        vec![Expr::Num(c2), Expr::Num(c3)],
        MetricField::identity(3),
        None,
    )
    .unwrap()
}

/// Closed form of the helical motion from x0 = (a, y0, z0):
/// x1 = a + c3 t, x2 = y0 + (c2/c3)(sin x1 − sin a), x3 = z0 − (c2/c3)(cos x1 − cos a).
fn helical_exact(x0: &[f64], c2: f64, c3: f64, t: f64) -> [f64; 3] {
    let x1 = x0[0] + c3 * t;
    [
        x1,
        x0[1] + c2 / c3 * (x1.sin() - x0[0].sin()),
        x0[2] - c2 / c3 * (x1.cos() - x0[0].cos()),
    ]
}

#[test]
fn rk4_is_fourth_order() {
    let field = pendulum_field();
    let x0 = [1.1, 0.0];
    let t_end = 2.0;
    // Reference from a much finer run.
    let reference = integrate_field(&field, &x0, &IntegratorConfig::rk4(1e-4, t_end, 20000))
        .unwrap();
    let xr = &reference.final_state().unwrap().x;
    let mut errs = Vec::new();
    for dt in [4e-2, 2e-2, 1e-2] {
        let traj =
            integrate_field(&field, &x0, &IntegratorConfig::rk4(dt, t_end, (t_end / dt) as usize))
                .unwrap();
        let xf = &traj.final_state().unwrap().x;
        let err: f64 = xf
            .iter()
            .zip(xr)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        errs.push(err);
    }
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(
            (3.7..=4.3).contains(&slope),
            "RK4 convergence slope {slope}, errors {errs:?}"
        );
    }
}

#[test]
fn rk45_meets_tolerance_on_known_solution() {
    // Harmonic oscillator: x1'' = −x1 via the first-order embedding.
    let field = vec![parse("x2").unwrap(), parse("-x1").unwrap()];
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 10.0, 0.1);
    let traj = integrate_field(&field, &[1.0, 0.0], &cfg).unwrap();
    assert!(traj.error.is_none());
    assert_eq!(traj.samples.len(), 101);
    for s in &traj.samples {
        assert!((s.x[0] - s.t.cos()).abs() < 1e-7, "t = {}", s.t);
        assert!((s.x[1] + s.t.sin()).abs() < 1e-7, "t = {}", s.t);
        // Samples land on the uniform grid.
        let k = (s.t / 0.1).round();
        assert!((s.t - 0.1 * k).abs() < 1e-9);
    }
}

#[test]
fn first_order_run_keeps_constraints_to_solver_accuracy() {
    let sys = helical_system(1.3, 0.7);
    let cfg = IntegratorConfig::rk4(1e-3, 5.0, 100);
    let traj = integrate_first_order(&sys, &[0.2, 0.0, 0.5], &cfg).unwrap();
    assert!(traj.error.is_none());
    assert!(constraint_drift(&traj) < 1e-13);
    // And the integration itself tracks the closed form.
    for s in &traj.samples {
        let want = helical_exact(&[0.2, 0.0, 0.5], 1.3, 0.7, s.t);
        for k in 0..3 {
            assert!(
                (s.x[k] - want[k]).abs() < 1e-9,
                "t = {}, coordinate {k}",
                s.t
            );
        }
    }
}

#[test]
fn classical_and_first_order_routes_agree() {
    let sys = helical_system(1.3, 0.7);
    let x0 = [0.2, 0.0, 0.5];
    let v0 = sys.velocity(&x0).unwrap();
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 5.0, 0.05);
    let first = integrate_first_order(&sys, &x0, &cfg).unwrap();
    let classical = integrate_classical(&sys, &x0, &v0, &cfg).unwrap();
    assert_eq!(first.samples.len(), classical.samples.len());
    let mut max_gap: f64 = 0.0;
    for (a, b) in first.samples.iter().zip(&classical.samples) {
        assert!((a.t - b.t).abs() < 1e-12);
        for k in 0..3 {
            max_gap = max_gap.max((a.x[k] - b.x[k]).abs());
        }
    }
    assert!(max_gap < 1e-6, "route gap {max_gap:e}");
    // Classical route with projection keeps the constraint tight.
    assert!(constraint_drift(&classical) < 1e-10);
    // Reaction multipliers are recorded.
    assert!(classical.samples.iter().all(|s| s.mu.len() == 1));
}

#[test]
fn classical_rejects_inconsistent_initial_velocity() {
    let sys = helical_system(1.0, 1.0);
    let bad_v0 = [0.0, 1.0, 0.0]; // Ω(v) = sin(0.2) ≠ 0 at x1 = 0.2
    let cfg = IntegratorConfig::rk4(1e-3, 1.0, 10);
    assert!(matches!(
        integrate_classical(&sys, &[0.2, 0.0, 0.0], &bad_v0, &cfg),
        Err(DescartesError::InconsistentInput { .. })
    ));
}

#[test]
fn lagrange_residual_is_second_order_in_the_sampling_step() {
    let sys = helical_system(1.3, 0.7);
    let x0 = [0.2, 0.0, 0.5];
    let mut maxima = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3] {
        let cfg = IntegratorConfig::rk4(dt, 2.0, 1);
        let traj = integrate_first_order(&sys, &x0, &cfg).unwrap();
        let rows = lagrange_residual(&sys, &traj).unwrap();
        let max = rows
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, r| acc.max(r.abs()));
        maxima.push(max);
    }
    assert!(maxima[2] < 1e-4, "residual at dt = 1e-3: {:e}", maxima[2]);
    for w in maxima.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(
            (1.8..=2.2).contains(&slope),
            "residual slope {slope}, maxima {maxima:?}"
        );
    }
}

#[test]
fn newton_route_reproduces_harmonic_motion() {
    let force = vec![parse("-x1").unwrap()];
    let metric = MetricField::identity(1);
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12, 6.0, 0.05);
    let traj = integrate_newton(&metric, &force, &[1.0], &[0.0], &cfg).unwrap();
    for s in &traj.samples {
        assert!((s.x[0] - s.t.cos()).abs() < 1e-7);
    }
}

#[test]
fn newton_route_handles_curved_metrics() {
    // Plane in polar-style coordinates: G = diag(1, x1²), no force. Circular
    // motion at radius r has x2'' = 0 and radial equation x1'' = x1·(x2')².
    // Start at rest radially with angular speed ω: r stays only if x1'' = rω²
    // is balanced — instead check energy conservation along a generic run.
    let metric = MetricField::diagonal(vec![Expr::Num(1.0), parse("x1^2").unwrap()]);
    let force = vec![Expr::Num(0.0), Expr::Num(0.0)];
    let cfg = IntegratorConfig::rk45(1e-11, 1e-13, 3.0, 0.05);
    let traj = integrate_newton(&metric, &force, &[1.0, 0.0], &[0.1, 0.9], &cfg).unwrap();
    let stats = monitor(
        &traj,
        &[
            (
                "energy".to_string(),
                parse("0.5*(v1^2 + x1^2*v2^2)").unwrap(),
            ),
            ("angular".to_string(), parse("x1^2*v2").unwrap()),
        ],
    )
    .unwrap();
    for s in &stats {
        assert!(
            s.max_abs_deviation < 1e-8,
            "{} drifted by {:e}",
            s.name,
            s.max_abs_deviation
        );
    }
}

#[test]
fn monitors_report_initial_value_and_drift() {
    let field = pendulum_field();
    let cfg = IntegratorConfig::rk4(1e-3, 10.0, 100);
    let traj = integrate_field(&field, &[1.1, 0.0], &cfg).unwrap();
    let stats = monitor(
        &traj,
        &[(
            "energy".to_string(),
            parse("0.5*x2^2 - cos(x1)").unwrap(),
        )],
    )
    .unwrap();
    let e = &stats[0];
    assert!((e.initial - (0.0 - 1.1_f64.cos())).abs() < 1e-12);
    assert!(e.max_abs_deviation < 1e-10);
    assert!(e.relative_drift < 1e-9);
}

#[test]
fn frame_singularity_truncates_with_marker() {
    // The auxiliary form (cos x1, sin x1) turns parallel to the given form
    // (0, 1) as x1 → π/2, so det M = −cos x1 → 0 while both rows keep unit
    // norm. With λ = cos²x1 the field is v = (cos x1, 0): x1 creeps toward
    // π/2 and |det| crosses the scaled threshold in finite time.
    let forms = vec![
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(1.0)]),
        OneFormField::new(vec![parse("cos(x1)").unwrap(), parse("sin(x1)").unwrap()]),
    ];
    let sys = ConstraintSystem::new(
        2,
        1,
        forms,
        vec![parse("cos(x1)^2").unwrap()],
        MetricField::identity(2),
        None,
    )
    .unwrap();
    let cfg = IntegratorConfig::rk4(1e-2, 40.0, 10);
    let traj = integrate_first_order(&sys, &[0.0, 0.0], &cfg).unwrap();
    assert!(traj.truncated());
    assert!(matches!(
        traj.error,
        Some(DescartesError::FrameSingular { .. })
    ));
    assert!(!traj.samples.is_empty());
    let last = traj.final_state().unwrap();
    assert!(last.x[0] < std::f64::consts::FRAC_PI_2);
}
