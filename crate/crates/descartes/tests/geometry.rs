//! Metric operations, exterior calculus and bracket identities.

use descartes::error::DescartesError;
use descartes::exprlang::{parse, Env, Expr};
use descartes::geometry::{
    cross3, d_one_form, det_expr, eval_vec, grad_covector, nambu_bracket, rot3, MetricField,
    OneFormField,
};
use descartes::rng::XorShift64Star;

fn random_point(rng: &mut XorShift64Star, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(0.3, 1.4)).collect()
}

/// A curved but safely positive-definite test metric on R³:
/// diag(2+sin x1, 3+x2², 1) with a small x1-dependent (1,2) coupling.
fn curved_metric3() -> MetricField {
    let mut g = MetricField::diagonal(vec![
        parse("2 + sin(x1)").unwrap(),
        parse("3 + x2^2").unwrap(),
        Expr::Num(1.0),
    ]);
    g.set(0, 1, parse("0.3*cos(x1)").unwrap());
    g
}

#[test]
fn det_expr_matches_numeric_determinant() {
    let mut rng = XorShift64Star::new(11);
    for n in 2..=4 {
        for _ in 0..20 {
            let m: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .collect();
            let sym: Vec<Vec<Expr>> = m
                .iter()
                .map(|row| row.iter().map(|&v| Expr::Num(v)).collect())
                .collect();
            let d_sym = det_expr(&sym).eval(&Env::point(&[])).unwrap();
            let d_num = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]).determinant();
            assert!(
                (d_sym - d_num).abs() < 1e-10 * (1.0 + d_num.abs()),
                "n={n}: {d_sym} vs {d_num}"
            );
        }
    }
}

#[test]
fn raise_after_lower_is_identity() {
    let g = curved_metric3();
    let mut rng = XorShift64Star::new(23);
    for _ in 0..50 {
        let x = random_point(&mut rng, 3);
        let u: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let u_sym: Vec<Expr> = u.iter().map(|&v| Expr::Num(v)).collect();
        let env = Env::point(&x);
        let p = eval_vec(&g.lower(&u_sym), &env).unwrap();
        let back = g.raise_at(&p, &env).unwrap();
        for k in 0..3 {
            assert!(
                (back[k] - u[k]).abs() < 1e-12 * (1.0 + u[k].abs()),
                "component {k}: {} vs {}",
                back[k],
                u[k]
            );
        }
    }
}

#[test]
fn symbolic_inverse_agrees_with_solve() {
    let g = curved_metric3();
    let inv = g.inverse_sym();
    let mut rng = XorShift64Star::new(31);
    for _ in 0..20 {
        let x = random_point(&mut rng, 3);
        let env = Env::point(&x);
        let gm = g.eval_spd(&env).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc += gm[(j, l)] * inv[l][k].eval(&env).unwrap();
                }
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-12, "G·G⁻¹ at ({j},{k}): {acc}");
            }
        }
    }
}

#[test]
fn non_spd_metric_is_rejected() {
    let g = MetricField::diagonal(vec![parse("x1 - 1").unwrap(), Expr::Num(1.0)]);
    let env = Env::point(&[0.5, 0.0]);
    assert!(matches!(
        g.eval_spd(&env),
        Err(DescartesError::SingularMetric { .. })
    ));
}

#[test]
fn exterior_derivative_of_a_gradient_vanishes() {
    // d(df) = 0: the two-form built from an exact one-form is zero.
    let fs = [
        "x1^2*x2 + sin(x3)",
        "exp(x1*x2)/(1 + x3^2)",
        "log(1 + x1^2 + x2^2) - x3*x1",
    ];
    let mut rng = XorShift64Star::new(41);
    for src in fs {
        let f = parse(src).unwrap();
        let df = OneFormField::new(grad_covector(&f, 3));
        let ddf = d_one_form(&df);
        for _ in 0..20 {
            let x = random_point(&mut rng, 3);
            let m = ddf.eval(&Env::point(&x)).unwrap();
            // Scale by the size of the first derivatives at the point.
            let scale = eval_vec(&df.comps, &Env::point(&x))
                .unwrap()
                .iter()
                .fold(1.0_f64, |a, b| a.max(b.abs()));
            assert!(m.amax() <= 1e-10 * scale, "d∘d residual {:e} for {src}", m.amax());
        }
    }
}

#[test]
fn two_form_is_antisymmetric_by_construction() {
    let p = OneFormField::new(vec![
        parse("x2*x3").unwrap(),
        parse("sin(x1) - x3^2").unwrap(),
        parse("x1*x2*x3").unwrap(),
    ]);
    let h = d_one_form(&p);
    let mut rng = XorShift64Star::new(43);
    let x = random_point(&mut rng, 3);
    let m = h.eval(&Env::point(&x)).unwrap();
    assert_eq!(m[(0, 0)], 0.0);
    for j in 0..3 {
        for k in 0..3 {
            assert_eq!(m[(j, k)], -m[(k, j)]);
        }
    }
}

#[test]
fn nambu_bracket_matches_dimension_two_convention() {
    // With N = 2 and f1 = x1, the bracket is the coordinate field (0, 1).
    let b = nambu_bracket(&[Expr::Coord(0)], 2).unwrap();
    assert!(b[0].is_zero());
    assert_eq!(b[1], Expr::Num(1.0));
}

#[test]
fn nambu_bracket_annihilates_its_arguments() {
    let mut rng = XorShift64Star::new(47);
    let cases: Vec<(usize, Vec<&str>)> = vec![
        (2, vec!["x1^2 + x2^2"]),
        (3, vec!["x1*x2 - x3", "x1 + sin(x2*x3)"]),
        (4, vec!["x1^2 + x2^2", "x3*x4", "x1*x4 - x2*x3"]),
    ];
    for (n, srcs) in cases {
        let fs: Vec<Expr> = srcs.iter().map(|s| parse(s).unwrap()).collect();
        let b = nambu_bracket(&fs, n).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, n);
            let env = Env::point(&x);
            let bv = eval_vec(&b, &env).unwrap();
            for f in &fs {
                let df = eval_vec(&grad_covector(f, n), &env).unwrap();
                let pairing: f64 = df.iter().zip(&bv).map(|(a, c)| a * c).sum();
                let scale = df.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
                    * bv.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
                assert!(
                    pairing.abs() <= 1e-10 * scale.max(1.0),
                    "df(bracket) = {pairing:e} for n={n}"
                );
            }
        }
    }
}

#[test]
fn nambu_bracket_is_antisymmetric_under_swaps() {
    let fs = [
        parse("x1*x2 - x3^2").unwrap(),
        parse("sin(x1) + x2*x3").unwrap(),
        parse("x1 + x2 + x4^2").unwrap(),
    ];
    let swapped = [fs[1].clone(), fs[0].clone(), fs[2].clone()];
    let b = nambu_bracket(&fs, 4).unwrap();
    let bs = nambu_bracket(&swapped, 4).unwrap();
    let mut rng = XorShift64Star::new(53);
    for _ in 0..20 {
        let x = random_point(&mut rng, 4);
        let env = Env::point(&x);
        let v1 = eval_vec(&b, &env).unwrap();
        let v2 = eval_vec(&bs, &env).unwrap();
        for k in 0..4 {
            assert!(
                (v1[k] + v2[k]).abs() <= 1e-12 * (1.0 + v1[k].abs()),
                "component {k}: {} vs {}",
                v1[k],
                v2[k]
            );
        }
    }
}

#[test]
fn curl_of_gradient_vanishes() {
    let g = MetricField::identity(3);
    let fs = ["x1^2*sin(x2) + x3", "exp(x1 - x2^2)*x3"];
    let mut rng = XorShift64Star::new(59);
    for src in fs {
        let f = parse(src).unwrap();
        let gradient = grad_covector(&f, 3); // identity metric: vector = covector
        let rot = rot3(&g, &gradient).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, 3);
            let vals = eval_vec(&rot, &Env::point(&x)).unwrap();
            for v in vals {
                assert!(v.abs() <= 1e-8, "rot grad component {v:e} for {src}");
            }
        }
    }
}

#[test]
fn helical_axis_fields_are_curl_eigenfields() {
    // Under the identity metric, a = (0, sin x1, −cos x1) has rot a = −a and
    // its mirror (0, sin x1, cos x1) has rot a = +a: both are eigenfields of
    // the curl with unit-length value everywhere.
    let cases = [
        (parse("-cos(x1)").unwrap(), -1.0),
        (parse("cos(x1)").unwrap(), 1.0),
    ];
    let mut rng = XorShift64Star::new(61);
    for (third, nu) in cases {
        let a = vec![Expr::Num(0.0), parse("sin(x1)").unwrap(), third];
        let rot = rot3(&MetricField::identity(3), &a).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, 3);
            let env = Env::point(&x);
            let ra = eval_vec(&rot, &env).unwrap();
            let av = eval_vec(&a, &env).unwrap();
            for k in 0..3 {
                assert!((ra[k] - nu * av[k]).abs() < 1e-12, "component {k}, ν={nu}");
            }
        }
    }
}

#[test]
fn curl_respects_the_metric_volume() {
    // For a conformally flat metric c²·Id, rot picks up 1/√(det G) = c⁻³
    // relative to the flat curl of the lowered (c²-scaled) field.
    let c2 = 4.0; // constant conformal factor c² = 4, √det G = 8
    let g = MetricField::diagonal(vec![
        Expr::Num(c2),
        Expr::Num(c2),
        Expr::Num(c2),
    ]);
    let u = vec![
        parse("x2*x3").unwrap(),
        parse("-x1*x3").unwrap(),
        parse("x1*x2").unwrap(),
    ];
    let rot_curved = rot3(&g, &u).unwrap();
    let flat = MetricField::identity(3);
    let rot_flat = rot3(&flat, &u).unwrap();
    let mut rng = XorShift64Star::new(67);
    let x = random_point(&mut rng, 3);
    let env = Env::point(&x);
    let rc = eval_vec(&rot_curved, &env).unwrap();
    let rf = eval_vec(&rot_flat, &env).unwrap();
    for k in 0..3 {
        // lowering multiplies by c², the volume divides by c³: net factor c⁻¹ = 1/2.
        assert!(
            (rc[k] - rf[k] * c2 / c2.powf(1.5)).abs() < 1e-12,
            "component {k}: {} vs {}",
            rc[k],
            rf[k]
        );
    }
}

#[test]
fn cross3_matches_hand_values() {
    let a = [Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0)];
    let b = [Expr::Num(0.0), Expr::Num(1.0), Expr::Num(0.0)];
    let c = cross3(&a, &b);
    let env = Env::point(&[]);
    assert_eq!(eval_vec(&c, &env).unwrap(), vec![0.0, 0.0, 1.0]);
}
