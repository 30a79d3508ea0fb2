//! Inverse-problem routes: force synthesis from orbit families, potential
//! recovery (exactness, orthogonal surfaces, separable families), and the
//! conic-family profiles.

use descartes::dynamics::{integrate_newton, IntegratorConfig};
use descartes::exprlang::{parse, Env, Expr};
use descartes::geometry::{rot3, MetricField};
use descartes::inverse::{
    adaptive_simpson, antiderivative, bertrand_h_m2_closed, bertrand_u_term, bertrand_xi,
    dainelli_force, dainelli_force_2d, exactness_check, joukovski_orthogonal_coords,
    joukovski_potential, line_integrate_h, stackel_potential, BertrandCircular, BertrandProfile,
    ForceField, JoukovskiMode, OrbitFamily,
};

fn pe(src: &str) -> Expr {
    parse(src).unwrap_or_else(|e| panic!("parse `{src}`: {e}"))
}

fn grid2(xs: &[f64], ys: &[f64]) -> Vec<Vec<f64>> {
    let mut g = Vec::new();
    for &x in xs {
        for &y in ys {
            g.push(vec![x, y]);
        }
    }
    g
}

fn grid3(xs: &[f64], ys: &[f64], zs: &[f64]) -> Vec<Vec<f64>> {
    let mut g = Vec::new();
    for &x in xs {
        for &y in ys {
            for &z in zs {
                g.push(vec![x, y, z]);
            }
        }
    }
    g
}

fn max_force_gap(a: &ForceField, b: &ForceField, grid: &[Vec<f64>]) -> f64 {
    let mut max = 0.0_f64;
    for x in grid {
        let fa = a.eval(x).unwrap();
        let fb = b.eval(x).unwrap();
        for k in 0..fa.len() {
            max = max.max((fa[k] - fb[k]).abs());
        }
    }
    max
}

// ---------------------------------------------------------------- Dainelli --

#[test]
fn planar_closed_formulas_match_the_general_machinery() {
    let f = pe("x1^2 + x1*x2 + x2^3");
    let lambda = pe("1 + 0.3*x1 - 0.1*x2");
    let closed = dainelli_force_2d(&f, &lambda);
    let family = OrbitFamily::new(2, vec![f], lambda).unwrap();
    let general = dainelli_force(&family).unwrap();
    let grid = grid2(&[-0.9, -0.3, 0.4, 1.1], &[-0.7, 0.2, 0.8, 1.3]);
    assert!(max_force_gap(&closed, &general, &grid) < 1e-10);
    // The decomposition is a decomposition: gradient + reaction = force.
    for x in &grid {
        let env = Env::point(x);
        for k in 0..2 {
            let total = general.components[k].eval(&env).unwrap();
            let parts = general.gradient_part[k].eval(&env).unwrap()
                + general.reaction_part[k].eval(&env).unwrap();
            assert!((total - parts).abs() < 1e-12);
        }
    }
}

#[test]
fn circular_family_at_unit_speed_gives_the_centripetal_force() {
    // f = x² + y², λ = 1: every circle traced at speed 2r needs F = −4x.
    let f = pe("x1^2 + x2^2");
    let closed = dainelli_force_2d(&f, &Expr::Num(1.0));
    let family = OrbitFamily::new(2, vec![f], Expr::Num(1.0)).unwrap();
    let general = dainelli_force(&family).unwrap();
    for x in grid2(&[-1.0, 0.5, 1.5], &[-0.8, 0.3, 1.2]) {
        let fv = closed.eval(&x).unwrap();
        assert!((fv[0] + 4.0 * x[0]).abs() < 1e-12);
        assert!((fv[1] + 4.0 * x[1]).abs() < 1e-12);
        let gv = general.eval(&x).unwrap();
        assert!((gv[0] + 4.0 * x[0]).abs() < 1e-12);
        assert!((gv[1] + 4.0 * x[1]).abs() < 1e-12);
    }
}

#[test]
fn three_dimensional_force_has_the_rotational_form() {
    // In dimension three the reaction part of F = ∂(½‖v‖²) + ι_v dσ can be
    // rewritten through rot v: λ(df₂(rot v) df₁ − df₁(rot v) df₂).
    let f1 = pe("x1^2 + x2*x3");
    let f2 = pe("x2 - 0.4*x3^2");
    let lambda = pe("1 + 0.2*x1");
    let family =
        OrbitFamily::new(3, vec![f1.clone(), f2.clone()], lambda.clone()).unwrap();
    let force = dainelli_force(&family).unwrap();
    let metric = MetricField::identity(3);
    let v = family.velocity_sym().unwrap();
    let rot = rot3(&metric, &v).unwrap();
    let grid = grid3(&[-0.6, 0.3, 0.9], &[-0.5, 0.4, 1.0], &[-0.7, 0.2, 0.8]);
    for x in &grid {
        let env = Env::point(x);
        let lam = lambda.eval(&env).unwrap();
        let rotv: Vec<f64> = rot.iter().map(|c| c.eval(&env).unwrap()).collect();
        let mut df1_rot = 0.0;
        let mut df2_rot = 0.0;
        let mut df1 = [0.0; 3];
        let mut df2 = [0.0; 3];
        for k in 0..3 {
            df1[k] = f1.diff(k).eval(&env).unwrap();
            df2[k] = f2.diff(k).eval(&env).unwrap();
            df1_rot += df1[k] * rotv[k];
            df2_rot += df2[k] * rotv[k];
        }
        for k in 0..3 {
            let grad = force.gradient_part[k].eval(&env).unwrap();
            let expected = grad + lam * (df2_rot * df1[k] - df1_rot * df2[k]);
            let got = force.components[k].eval(&env).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "rotational form mismatch at {x:?}: {got} vs {expected}"
            );
        }
    }
}

#[test]
fn planar_family_lifted_to_space_reduces_to_the_planar_force() {
    // Orbits cut out by x3 = c1 and H(x1, x2) = c2 move in horizontal planes
    // under exactly the planar force of H.
    let h = pe("x1^2 - x2^2 + x1*x2");
    let lambda = pe("1 + 0.25*x1 + 0.1*x2");
    let family = OrbitFamily::new(
        3,
        vec![pe("x3"), h.clone()],
        lambda.clone(),
    )
    .unwrap();
    let spatial = dainelli_force(&family).unwrap();
    let planar = dainelli_force_2d(&h, &lambda);
    // Closed planar formulas, spelled out: F = ∂(½λ²‖∂H‖²) − λμ ∂H with
    // μ = ∂₁(λ∂₁H) + ∂₂(λ∂₂H).
    let hx = h.diff(0);
    let hy = h.diff(1);
    let half = Expr::half(Expr::mul(
        Expr::square(lambda.clone()),
        Expr::add(Expr::square(hx.clone()), Expr::square(hy.clone())),
    ));
    let mu = Expr::add(
        Expr::mul(lambda.clone(), hx.clone()).diff(0),
        Expr::mul(lambda.clone(), hy.clone()).diff(1),
    );
    let lam_mu = Expr::mul(lambda.clone(), mu);
    let explicit = [
        Expr::sub(half.diff(0), Expr::mul(lam_mu.clone(), hx)),
        Expr::sub(half.diff(1), Expr::mul(lam_mu, hy)),
    ];
    for x in grid3(&[-0.8, 0.2, 0.9], &[-0.6, 0.35, 1.1], &[-0.5, 0.0, 0.7]) {
        let env = Env::point(&x);
        let fs = spatial.eval(&x).unwrap();
        let fp = planar.eval(&x[..2]).unwrap();
        assert!((fs[0] - fp[0]).abs() < 1e-9);
        assert!((fs[1] - fp[1]).abs() < 1e-9);
        assert!(fs[2].abs() < 1e-12, "vertical force must vanish");
        for k in 0..2 {
            let e = explicit[k].eval(&env).unwrap();
            assert!((fs[k] - e).abs() < 1e-9);
        }
    }
}

#[test]
fn family_construction_is_validated() {
    assert!(OrbitFamily::new(3, vec![pe("x1")], Expr::Num(1.0)).is_err());
    assert!(OrbitFamily::with_metric(
        2,
        vec![pe("x1")],
        Expr::Num(1.0),
        MetricField::identity(3)
    )
    .is_err());
    let fam = OrbitFamily::new(2, vec![pe("x1^2")], Expr::Num(1.0)).unwrap();
    assert!(fam.check_independence(&[1.0, 0.5]).is_ok());
    assert!(fam.check_independence(&[0.0, 0.5]).is_err());
}

// -------------------------------------------------------------- Exactness --

#[test]
fn line_integration_recovers_a_known_primitive() {
    // ρ = d(x²y + z).
    let rho = [pe("2*x1*x2"), pe("x1^2"), pe("1")];
    let base = [0.2, -0.4, 0.1];
    let target = [1.3, 0.8, -0.6];
    let prim = |p: &[f64]| p[0] * p[0] * p[1] + p[2];
    let got = line_integrate_h(&rho, &base, &target).unwrap();
    assert!((got - (prim(&target) - prim(&base))).abs() < 1e-9);
}

#[test]
fn exact_reaction_form_yields_a_potential() {
    // Orbits xz = c1, yz = c2 at λ = 1: the reaction form is exact and the
    // potential collapses to U = ½ z⁴ + const.
    let f1 = pe("x1*x3");
    let f2 = pe("x2*x3");
    let family = OrbitFamily::new(3, vec![f1.clone(), f2.clone()], Expr::Num(1.0)).unwrap();
    let grid = grid3(&[0.4, 0.9, 1.4], &[0.3, 0.8, 1.3], &[0.5, 1.0, 1.6]);
    let cert = exactness_check(&family, &grid, 1e-10).unwrap();
    assert!(cert.pass, "residual {:e}", cert.max_closedness_residual);

    // h from line integration matches the closed form −½(f₁² + f₂²) up to
    // the shared constant at the base point.
    let base = [1.0, 1.0, 1.0];
    let closed_h = |p: &[f64]| {
        let (a, b) = (p[0] * p[2], p[1] * p[2]);
        -0.5 * (a * a + b * b)
    };
    for target in &grid {
        let dh = line_integrate_h(&cert.rho, &base, target).unwrap();
        assert!((dh - (closed_h(target) - closed_h(&base))).abs() < 1e-8);
        // U = ½‖v‖² + h differs from ½z⁴ by a constant.
        let env = Env::point(target);
        let v = family.velocity_sym().unwrap();
        let speed2: f64 = v.iter().map(|c| c.eval(&env).unwrap().powi(2)).sum();
        let u = 0.5 * speed2 + closed_h(target);
        assert!((u - 0.5 * target[2].powi(4)).abs() < 1e-8);
    }
}

#[test]
fn non_exact_reaction_form_is_rejected() {
    // Circles traced with a speed factor varying across the pencil of
    // orbits: the reaction one-form has nonvanishing curl.
    let family = OrbitFamily::new(2, vec![pe("x1^2 + x2^2")], pe("x2")).unwrap();
    let grid = grid2(&[0.5, 1.0, 1.5], &[0.4, 0.9, 1.4]);
    let cert = exactness_check(&family, &grid, 1e-10).unwrap();
    assert!(!cert.pass);
    assert!(cert.max_closedness_residual > 1e-2);
}

#[test]
fn four_dimensional_coupled_oscillator_family_reports_closedness() {
    // Two planar particles with masses m₁, m₂ and the three mutual squared
    // distances as orbit constants.
    let m1 = 1.0;
    let m2 = 2.0;
    let metric = MetricField::diagonal(vec![
        Expr::Num(m1),
        Expr::Num(m1),
        Expr::Num(m2),
        Expr::Num(m2),
    ]);
    let fs = vec![
        pe("x1^2 + x2^2"),
        pe("x3^2 + x4^2"),
        pe("(x1 - x3)^2 + (x2 - x4)^2"),
    ];
    let family = OrbitFamily::with_metric(4, fs, Expr::Num(1.0), metric).unwrap();
    let mut grid = Vec::new();
    for &a in &[0.6, 1.1] {
        for &b in &[0.3, 0.9] {
            for &c in &[-0.4, 0.5] {
                for &d in &[0.7, 1.2] {
                    grid.push(vec![a, b, c, d]);
                }
            }
        }
    }
    let cert = exactness_check(&family, &grid, 1e-10).unwrap();
    assert_eq!(cert.samples, grid.len());
    assert!(cert.max_closedness_residual.is_finite());
    // At unit speed factor this family is not conservative.
    assert!(!cert.pass);
}

// -------------------------------------------------------------- Joukovski --

#[test]
fn orthogonal_surface_route_recovers_the_quartic_potential() {
    // Same xz/yz family; surfaces S = ½(x² + y² − z²) are orthogonal to the
    // orbits and the speed factor along them is ν = z.
    let f1 = pe("x1*x3");
    let f2 = pe("x2*x3");
    let s = pe("0.5*(x1^2 + x2^2 - x3^2)");
    let h0 = 0.7;
    let family = OrbitFamily::new(3, vec![f1, f2], Expr::Num(1.0)).unwrap();
    let grid = grid3(&[0.4, 0.9, 1.3], &[0.3, 0.8, 1.2], &[0.5, 1.0, 1.5]);
    let mode = JoukovskiMode::General {
        nu: pe("x3"),
        h: pe("-0.5*((x1*x3)^2 + (x2*x3)^2) - 0.7"),
    };
    let result = joukovski_potential(&family, &s, &mode, &grid).unwrap();
    assert!(result.certificate.as_ref().unwrap().pass);
    for x in &grid {
        let env = Env::point(x);
        let u = result.potential.eval(&env).unwrap();
        assert!((u - (0.5 * x[2].powi(4) - h0)).abs() < 1e-8);
    }
}

#[test]
fn constant_speed_factor_gives_the_radial_harmonic_potential() {
    let f1 = pe("x1*x3");
    let f2 = pe("x2*x3");
    let s = pe("0.5*(x1^2 + x2^2 - x3^2)");
    let c = 1.3;
    let h0 = 0.25;
    let family = OrbitFamily::new(3, vec![f1, f2], Expr::Num(1.0)).unwrap();
    let grid = grid3(&[0.4, 1.0], &[0.5, 1.1], &[0.6, 1.2]);
    let mode = JoukovskiMode::General {
        nu: Expr::Num(c),
        h: Expr::Num(-h0),
    };
    let result = joukovski_potential(&family, &s, &mode, &grid).unwrap();
    assert!(result.certificate.as_ref().unwrap().pass);
    for x in &grid {
        let env = Env::point(x);
        let u = result.potential.eval(&env).unwrap();
        let r2: f64 = x.iter().map(|a| a * a).sum();
        assert!((u - (0.5 * c * c * r2 - h0)).abs() < 1e-8);
        // F = ∂U at every grid point.
        for k in 0..3 {
            let f = result.force[k].eval(&env).unwrap();
            assert!((f - c * c * x[k]).abs() < 1e-8);
        }
    }
}

#[test]
fn exact_nu_mode_needs_no_side_condition() {
    // Φ(S) = S, so ν = 1 and U = ½‖∂S‖² − h₀ unconditionally.
    let f1 = pe("x1*x3");
    let f2 = pe("x2*x3");
    let s = pe("0.5*(x1^2 + x2^2 - x3^2)");
    let family = OrbitFamily::new(3, vec![f1, f2], Expr::Num(1.0)).unwrap();
    let grid = grid3(&[0.5, 1.1], &[0.4, 1.0], &[0.6, 1.3]);
    let mode = JoukovskiMode::ExactNu {
        phi: pe("x1"),
        h0: 0.5,
    };
    let result = joukovski_potential(&family, &s, &mode, &grid).unwrap();
    assert_eq!(result.route, "joukovski-exact-nu");
    assert!(result.certificate.as_ref().unwrap().pass);
    for x in &grid {
        let env = Env::point(x);
        let u = result.potential.eval(&env).unwrap();
        let r2: f64 = x.iter().map(|a| a * a).sum();
        assert!((u - (0.5 * r2 - 0.5)).abs() < 1e-10);
    }
}

#[test]
fn non_orthogonal_surfaces_are_rejected() {
    let family =
        OrbitFamily::new(3, vec![pe("x1*x3"), pe("x2*x3")], Expr::Num(1.0)).unwrap();
    let grid = grid3(&[0.5, 1.0], &[0.5, 1.0], &[0.5, 1.0]);
    let mode = JoukovskiMode::ExactNu {
        phi: pe("x1"),
        h0: 0.0,
    };
    let err = joukovski_potential(&family, &pe("x1"), &mode, &grid);
    assert!(err.is_err());
}

#[test]
fn wrong_h_fails_the_closedness_certificate() {
    let family =
        OrbitFamily::new(3, vec![pe("x1*x3"), pe("x2*x3")], Expr::Num(1.0)).unwrap();
    let grid = grid3(&[0.5, 1.0], &[0.5, 1.0], &[0.5, 1.0]);
    let mode = JoukovskiMode::General {
        nu: pe("x3"),
        h: pe("x1"),
    };
    assert!(joukovski_potential(&family, &pe("0.5*(x1^2 + x2^2 - x3^2)"), &mode, &grid).is_err());
}

// --------------------------------------------- Orthogonal coordinate route --

#[test]
fn antiderivative_handles_separable_integrands() {
    let cases = [
        ("3", 0, 0.5, 1.5),
        ("x1", 0, 0.5, 1.5),
        ("x1^3", 0, 0.2, 1.1),
        ("2*x1^2 + x1 - 4", 0, 0.3, 0.9),
        ("x2*x1^2", 0, 0.4, 1.2),
        ("x1^2/3", 0, 0.4, 1.3),
        ("x1*x1^2", 0, 0.5, 1.4),
    ];
    for (src, var, a, b) in cases {
        let e = pe(src);
        let prim = antiderivative(&e, var).unwrap_or_else(|| panic!("no primitive for {src}"));
        let num = adaptive_simpson(
            &|s| e.eval(&Env::point(&[s, 0.7])),
            a,
            b,
            1e-12,
        )
        .unwrap();
        let pa = prim.eval(&Env::point(&[a, 0.7])).unwrap();
        let pb = prim.eval(&Env::point(&[b, 0.7])).unwrap();
        assert!((pb - pa - num).abs() < 1e-9, "primitive of {src} is wrong");
    }
    assert!(antiderivative(&pe("sin(x1)"), 0).is_none());
    assert!(antiderivative(&pe("1/x1"), 0).is_none());
}

#[test]
fn coordinate_aligned_route_matches_the_surface_route_in_polar_form() {
    // Plane in polar coordinates (r, θ): metric diag(1, r²), orbits r = c,
    // orthogonal surfaces θ = c. h = k r², g = const.
    let k = 0.1;
    let g_const = 5.0;
    let metric = MetricField::diagonal(vec![Expr::Num(1.0), pe("x1^2")]);
    let h = pe("0.1*x1^2");
    let g = Expr::Num(g_const);
    let result = joukovski_orthogonal_coords(&metric, &h, &g).unwrap();
    let nu_sq = result
        .extras
        .iter()
        .find(|(n, _)| n == "nu_squared")
        .map(|(_, e)| e.clone())
        .unwrap();

    let grid = grid2(&[0.5, 0.8, 1.2, 1.5], &[0.0, 0.7, 1.4]);
    for x in &grid {
        let env = Env::point(x);
        let u = result.potential.eval(&env).unwrap();
        let r = x[0];
        // U = (g + ∫ h ∂ᵣ(r²) dr)/r² = (g + k r⁴ / 2)/r².
        let expected = (g_const + 0.5 * k * r.powi(4)) / (r * r);
        assert!((u - expected).abs() < 1e-10);
        // The speed factor closes the loop: U = ν²/(2 G₂₂) + h.
        let nu2 = nu_sq.eval(&env).unwrap();
        assert!(nu2 > 0.0);
        let hv = h.eval(&env).unwrap();
        assert!((u - (0.5 * nu2 / (r * r) + hv)).abs() < 1e-10);
    }

    // Cross-check against the orthogonal-surface route on the same data.
    let family = OrbitFamily::with_metric(2, vec![pe("x1")], pe("1"), metric).unwrap();
    let mode = JoukovskiMode::General {
        nu: Expr::sqrt(nu_sq),
        h: h.clone(),
    };
    let surface = joukovski_potential(&family, &pe("x2"), &mode, &grid).unwrap();
    for x in &grid {
        let env = Env::point(x);
        let a = result.potential.eval(&env).unwrap();
        let b = surface.potential.eval(&env).unwrap();
        assert!((a - b).abs() < 1e-8, "routes disagree at {x:?}: {a} vs {b}");
    }
}

#[test]
fn flat_last_coordinate_reduces_to_the_profile_alone() {
    let metric = MetricField::identity(2);
    let result =
        joukovski_orthogonal_coords(&metric, &pe("x1^2"), &pe("3*x2 + 1")).unwrap();
    for x in grid2(&[0.3, 1.0], &[-0.5, 0.8]) {
        let env = Env::point(&x);
        let u = result.potential.eval(&env).unwrap();
        assert!((u - (3.0 * x[1] + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn coordinate_route_preconditions_are_enforced() {
    let skew = MetricField::from_rows(vec![
        vec![Expr::Num(1.0), Expr::Num(0.5)],
        vec![Expr::Num(0.5), Expr::Num(2.0)],
    ]);
    assert!(joukovski_orthogonal_coords(&skew, &pe("x1"), &pe("x2")).is_err());
    let diag = MetricField::identity(2);
    assert!(joukovski_orthogonal_coords(&diag, &pe("x2"), &pe("x2")).is_err());
    assert!(joukovski_orthogonal_coords(&diag, &pe("x1"), &pe("x1")).is_err());
}

// ---------------------------------------------------------------- Stäckel --

#[test]
fn separable_matrix_sums_the_profiles() {
    // φ = [[1, 0], [−1, 1]] gives A = (1, 1), so U = Ψ₁ + Ψ₂.
    let phi = vec![
        vec![Expr::Num(1.0), Expr::Num(0.0)],
        vec![Expr::Num(-1.0), Expr::Num(1.0)],
    ];
    let psi = vec![pe("x1^3 - x1"), pe("sin(x2)")];
    let h0 = 0.4;
    let result = stackel_potential(&phi, &psi, &[h0, 0.0], None, h0).unwrap();
    for (name, a) in &result.extras {
        let v = a.eval(&Env::point(&[0.7, -0.3])).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{name} should be 1");
    }
    for x in grid2(&[-0.8, 0.2, 1.1], &[-0.9, 0.3, 1.2]) {
        let env = Env::point(&x);
        let u = result.potential.eval(&env).unwrap();
        let expected = (x[0].powi(3) - x[0]) + x[1].sin();
        assert!((u - expected).abs() < 1e-10);
    }
}

#[test]
fn bracket_and_coefficient_routes_agree_in_three_dimensions() {
    // Generic Stäckel matrix: with ν = 1 and α₁ = h₀ the bracket-ratio form
    // must coincide with Σₖ Aᵏ Ψₖ.
    let phi = vec![
        vec![pe("1 + x1^2"), pe("x1"), Expr::Num(1.0)],
        vec![pe("cos(x2)"), pe("2 - x2"), Expr::Num(1.0)],
        vec![pe("x3^2"), pe("exp(x3/4)"), Expr::Num(-1.0)],
    ];
    let psi = vec![pe("x1^2"), pe("sin(x2)"), pe("x3^3 - x3")];
    let h0 = 1.1;
    let result = stackel_potential(&phi, &psi, &[h0, 0.0, 0.0], None, h0).unwrap();
    for x in grid3(&[-0.6, 0.4, 1.0], &[-0.5, 0.3, 0.9], &[-0.7, 0.2, 0.8]) {
        let env = Env::point(&x);
        let u = result.potential.eval(&env).unwrap();
        let mut sum = 0.0;
        for k in 0..3 {
            let a = result.extras[k].1.eval(&env).unwrap();
            sum += a * psi[k].eval(&env).unwrap();
        }
        assert!((u - sum).abs() < 1e-10, "routes differ at {x:?}: {u} vs {sum}");
    }
}

#[test]
fn vanishing_profiles_give_the_zero_potential() {
    let phi = vec![
        vec![Expr::Num(1.0), Expr::Num(0.0)],
        vec![Expr::Num(-1.0), Expr::Num(1.0)],
    ];
    let psi = vec![Expr::Num(0.0), Expr::Num(0.0)];
    let result = stackel_potential(&phi, &psi, &[0.9, 0.0], None, 0.9).unwrap();
    for x in grid2(&[-1.0, 0.5], &[-0.4, 1.3]) {
        let u = result.potential.eval(&Env::point(&x)).unwrap();
        assert!(u.abs() < 1e-12);
    }
}

#[test]
fn stackel_inputs_are_validated() {
    let bad_phi = vec![
        vec![pe("x2"), Expr::Num(0.0)], // depends on the wrong coordinate
        vec![Expr::Num(-1.0), Expr::Num(1.0)],
    ];
    let psi = vec![pe("x1"), pe("x2")];
    assert!(stackel_potential(&bad_phi, &psi, &[0.0, 0.0], None, 0.0).is_err());
    let phi = vec![
        vec![Expr::Num(1.0), Expr::Num(0.0)],
        vec![Expr::Num(-1.0), Expr::Num(1.0)],
    ];
    let bad_psi = vec![pe("x2"), pe("x2")];
    assert!(stackel_potential(&phi, &bad_psi, &[0.0, 0.0], None, 0.0).is_err());
    assert!(stackel_potential(&phi, &psi, &[0.0], None, 0.0).is_err());
}

// -------------------------------------------------------- Orbit invariance --

fn max_drift(traj: &descartes::dynamics::Trajectory, f: impl Fn(&[f64]) -> f64) -> f64 {
    let first = f(&traj.samples[0].x);
    traj.samples
        .iter()
        .map(|s| (f(&s.x) - first).abs())
        .fold(0.0, f64::max)
}

#[test]
fn synthesized_forces_keep_their_orbits() {
    let cfg = IntegratorConfig::rk45(1e-12, 1e-12, 5.0, 0.05);
    let identity2 = MetricField::identity(2);
    let identity3 = MetricField::identity(3);

    // Circles under the planar construction.
    let circle = OrbitFamily::new(2, vec![pe("x1^2 + x2^2")], Expr::Num(1.0)).unwrap();
    let force = dainelli_force(&circle).unwrap();
    let x0 = [1.0, 0.0];
    let env = Env::point(&x0);
    let v0: Vec<f64> = force.velocity.iter().map(|c| c.eval(&env).unwrap()).collect();
    let traj = integrate_newton(&identity2, &force.components, &x0, &v0, &cfg).unwrap();
    assert!(traj.error.is_none());
    assert!(max_drift(&traj, |x| x[0] * x[0] + x[1] * x[1]) < 1e-6);

    // The xz/yz family under its quartic potential force.
    let spatial =
        OrbitFamily::new(3, vec![pe("x1*x3"), pe("x2*x3")], Expr::Num(1.0)).unwrap();
    let force = dainelli_force(&spatial).unwrap();
    let x0 = [1.0, 1.0, -1.0];
    let env = Env::point(&x0);
    let v0: Vec<f64> = force.velocity.iter().map(|c| c.eval(&env).unwrap()).collect();
    let traj = integrate_newton(&identity3, &force.components, &x0, &v0, &cfg).unwrap();
    assert!(max_drift(&traj, |x| x[0] * x[2]) < 1e-6);
    assert!(max_drift(&traj, |x| x[1] * x[2]) < 1e-6);

    // A separable potential: the separation constants fix the launch speed
    // componentwise, and the cross combination of the separated times is
    // conserved along the motion.
    let phi = vec![
        vec![Expr::Num(1.0), Expr::Num(0.0)],
        vec![Expr::Num(-1.0), Expr::Num(1.0)],
    ];
    let psi = vec![pe("0.5*x1^2"), pe("0.5*x2^2")];
    let (a1, a2) = (0.5, 1.5);
    let result = stackel_potential(&phi, &psi, &[a1, a2], None, a1).unwrap();
    let x0 = [0.3, 0.4];
    let k1 = |x: f64| x * x + 2.0 * a1;
    let k2 = |x: f64| x * x + 2.0 * (a2 - a1);
    let v0 = [k1(x0[0]).sqrt(), k2(x0[1]).sqrt()];
    let short = IntegratorConfig::rk45(1e-12, 1e-12, 2.0, 0.02);
    let traj = integrate_newton(&identity2, &result.force, &x0, &v0, &short).unwrap();
    let orbit = |x: &[f64]| {
        (x[0] / (2.0 * a1).sqrt()).asinh() - (x[1] / (2.0 * (a2 - a1)).sqrt()).asinh()
    };
    assert!(max_drift(&traj, orbit) < 1e-6);
}

// --------------------------------------------------------- Conic families --

#[test]
fn homogeneous_profiles_are_exact() {
    for &(j, b) in &[(-2, 0.5), (0, 0.5), (1, 0.5), (-2, 1.0), (0, 1.0), (1, 1.0)] {
        let profile = BertrandProfile::new(j, b, 0.0, 0.8).unwrap();
        for &tau in &[-0.6, -0.1, 0.0, 0.3, 0.7] {
            let h = profile.value(tau).unwrap();
            let xi = bertrand_xi(j, b, tau).unwrap();
            assert!((h - 0.8 * xi).abs() < 1e-10);
            assert!(profile.ode_residual(tau).unwrap().abs() < 1e-6);
        }
    }
}

#[test]
fn quadrature_profiles_satisfy_their_defining_equation() {
    for &j in &[-2_i32, 0, 1] {
        for &b in &[0.5, 1.0] {
            let profile = BertrandProfile::new(j, b, 1.0, 0.3).unwrap();
            for &tau in &[-0.5, 0.0, 0.4] {
                let res = profile.ode_residual(tau).unwrap();
                assert!(
                    res.abs() < 1e-6,
                    "profile ODE residual for j={j}, b={b} at tau={tau}: {res:e}"
                );
            }
        }
    }
}

#[test]
fn inverse_square_profile_matches_its_closed_form() {
    // For j = −2 and b ∉ {0, 1} the equation has an elementary solution;
    // the quadrature from τ = 0 fixes the homogeneous constant to
    // C = 2K/(1−b²).
    let (b, k) = (0.5, 1.0);
    let profile = BertrandProfile::new(-2, b, k, 0.0).unwrap();
    let c = 2.0 * k / (1.0 - b * b);
    for &tau in &[-0.6, -0.2, 0.3, 0.65] {
        let quad = profile.value(tau).unwrap();
        let closed = bertrand_h_m2_closed(b, k, c, tau).unwrap();
        assert!(
            (quad - closed).abs() < 1e-8,
            "j = -2 closed form mismatch at tau={tau}: {quad} vs {closed}"
        );
    }
}

#[test]
fn profile_domain_is_enforced() {
    assert!(BertrandProfile::new(1, 0.0, 1.0, 0.0).is_err());
    assert!(bertrand_xi(1, 0.0, 0.3).is_err());
    let profile = BertrandProfile::new(1, 0.5, 1.0, 0.0).unwrap();
    assert!(profile.value(1.5).is_err());
    assert!(profile.value(-1.0).is_err());
    assert!(bertrand_u_term(&profile, -1.0, 0.3).is_err());
}

#[test]
fn potential_terms_assemble_from_the_profiles() {
    // K = 0 terms reduce to the homogeneous profile times the conic factor.
    let profile = BertrandProfile::new(1, 0.5, 0.0, 0.7).unwrap();
    for &(r, tau) in &[(0.8, 0.2), (1.5, -0.4), (2.2, 0.6)] {
        let u = bertrand_u_term(&profile, r, tau).unwrap();
        let xi = bertrand_xi(1, 0.5, tau).unwrap();
        let expected = 0.5 * r * r * 0.7 * xi * (1.0 + 0.25 + tau);
        assert!((u - expected).abs() < 1e-12);
    }
    // The j = −1 term carries a logarithm of the conic.
    let log_profile = BertrandProfile::new(-1, 0.5, 2.0, 0.0).unwrap();
    let u = bertrand_u_term(&log_profile, 1.2, 0.3).unwrap();
    let h = log_profile.value(0.3).unwrap();
    let f: f64 = 1.2 * (1.0 + 0.5 * 0.3);
    let expected = 0.5 * h * (1.0 + 0.25 + 0.3) + 2.0 * f.ln();
    assert!((u - expected).abs() < 1e-10);
}

#[test]
fn circular_family_potential_matches_its_closed_form() {
    // Ψ = c, h = k r²: U = c/r² − k r²/2 and λ² = k r² + 2c/r².
    let (c, k) = (2.0, 0.6);
    let circ = BertrandCircular {
        psi: Expr::Num(c),
        h: pe("0.6*x1^2"),
        r_ref: 0.0,
    };
    for &r in &[0.6, 1.0, 1.7, 2.5] {
        let u = circ.potential(r, 0.3).unwrap();
        assert!((u - (c / (r * r) - 0.5 * k * r * r)).abs() < 1e-9);
        let l2 = circ.speed_squared(r, 0.3).unwrap();
        assert!((l2 - (k * r * r + 2.0 * c / (r * r))).abs() < 1e-9);
    }
    assert!(circ.potential(-0.5, 0.0).is_err());
}

#[test]
fn zero_data_gives_the_zero_circular_potential() {
    let circ = BertrandCircular {
        psi: Expr::Num(0.0),
        h: Expr::Num(0.0),
        r_ref: 1.0,
    };
    for &r in &[0.5, 1.0, 2.0] {
        assert!(circ.potential(r, 0.2).unwrap().abs() < 1e-14);
        assert!(circ.speed_squared(r, 0.2).unwrap().abs() < 1e-14);
    }
}

#[test]
fn circular_orbits_run_true_under_the_synthesized_force() {
    // Launch tangentially at the family speed: the orbit stays circular and
    // planar angular momentum is preserved.
    let (c, k) = (2.0, 0.6);
    let r0 = 1.3_f64;
    let lambda0 = (k * r0 * r0 + 2.0 * c / (r0 * r0)).sqrt();
    // Force function U(x, y) = c/r² − k r²/2 acting in the plane.
    let u = pe("2/(x1^2 + x2^2) - 0.3*(x1^2 + x2^2)");
    let force = [u.diff(0), u.diff(1)];
    let cfg = IntegratorConfig::rk45(1e-12, 1e-12, 5.0, 0.05);
    let traj = integrate_newton(
        &MetricField::identity(2),
        &force,
        &[r0, 0.0],
        &[0.0, lambda0],
        &cfg,
    )
    .unwrap();
    assert!(traj.error.is_none());
    let mut max_r = 0.0_f64;
    let mut max_l = 0.0_f64;
    for s in &traj.samples {
        let r = (s.x[0] * s.x[0] + s.x[1] * s.x[1]).sqrt();
        max_r = max_r.max((r - r0).abs());
        let l = s.x[0] * s.v[1] - s.x[1] * s.v[0];
        max_l = max_l.max((l - r0 * lambda0).abs());
    }
    assert!(max_r < 1e-8, "radius drift {max_r:e}");
    assert!(max_l < 1e-8, "angular momentum drift {max_l:e}");
}
