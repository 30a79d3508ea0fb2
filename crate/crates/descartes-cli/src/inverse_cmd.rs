//! The `inverse` command: synthesize forces or potentials from an orbit
//! family described in the `[inverse]` section of the spec file.

use anyhow::{anyhow, bail, Result};
use descartes::exprlang::{parse, Env, Expr};
use descartes::geometry::MetricField;
use descartes::inverse::{
    dainelli_force, exactness_check, joukovski_potential, line_integrate_h, stackel_potential,
    BertrandCircular, BertrandProfile, JoukovskiMode, OrbitFamily,
};
use descartes::rng::XorShift64Star;
use descartes::tolerances;
use serde_json::{json, Value};

use crate::plan::InverseSection;
use crate::report::{Check, Report};

pub struct InverseOutcome {
    pub artifact: Value,
    pub checks: Report,
}

fn need<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| anyhow!("inverse.{key}: required for this route"))
}

fn pexpr(src: &str, key: &str) -> Result<Expr> {
    parse(src).map_err(|e| anyhow!("inverse.{key}: {e}"))
}

fn sample_box(low: &[f64], high: &[f64], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = XorShift64Star::new(seed);
    (0..count)
        .map(|_| {
            low.iter()
                .zip(high)
                .map(|(a, b)| rng.uniform(*a, *b))
                .collect()
        })
        .collect()
}

fn family_from_section(sec: &InverseSection) -> Result<OrbitFamily> {
    let dim = *need(&sec.dim, "dim")?;
    let fs = need(&sec.functions, "functions")?
        .iter()
        .enumerate()
        .map(|(i, src)| pexpr(src, &format!("functions[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let lambda = match &sec.lambda {
        Some(src) => pexpr(src, "lambda")?,
        None => Expr::Num(1.0),
    };
    let metric = match &sec.metric_diagonal {
        Some(diag) => MetricField::diagonal(
            diag.iter()
                .enumerate()
                .map(|(i, src)| pexpr(src, &format!("metric_diagonal[{i}]")))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => MetricField::identity(dim),
    };
    Ok(OrbitFamily::with_metric(dim, fs, lambda, metric)?)
}

fn grid_for(sec: &InverseSection, dim: usize) -> Vec<Vec<f64>> {
    let low = sec.grid_low.clone().unwrap_or_else(|| vec![0.5; dim]);
    let high = sec.grid_high.clone().unwrap_or_else(|| vec![1.5; dim]);
    sample_box(&low, &high, sec.samples.unwrap_or(64), sec.seed.unwrap_or(0))
}

fn strs(exprs: &[Expr]) -> Vec<String> {
    exprs.iter().map(|e| format!("{e}")).collect()
}

pub fn run(route: &str, sec: &InverseSection) -> Result<InverseOutcome> {
    match route {
        "dainelli" => dainelli(sec),
        "suslov" => suslov(sec),
        "joukovski" => joukovski(sec),
        "stackel" => stackel(sec),
        "bertrand" => bertrand(sec),
        other => bail!(
            "unknown inverse route `{other}` (expected dainelli, suslov, joukovski, stackel, bertrand)"
        ),
    }
}

/// The general force: F = ∂(½‖v‖²) + ι_v dσ for v the family field.
fn dainelli(sec: &InverseSection) -> Result<InverseOutcome> {
    let family = family_from_section(sec)?;
    let grid = grid_for(sec, family.dim());
    let force = dainelli_force(&family)?;
    // Gate: the orbit functions must stay independent across the grid.
    let mut failures = 0usize;
    for x in &grid {
        if family.check_independence(x).is_err() {
            failures += 1;
        }
    }
    let cert = exactness_check(&family, &grid, tolerances::CONSISTENCY_GRID)?;
    let mut checks = Report::new();
    checks.insert(
        "family_independence".to_string(),
        Check::new(failures as f64, 0.5, grid.len()),
    );
    let artifact = json!({
        "route": "dainelli",
        "force": strs(&force.components),
        "gradient_part": strs(&force.gradient_part),
        "reaction_part": strs(&force.reaction_part),
        "velocity": strs(&force.velocity),
        "reaction_closedness_residual": cert.max_closedness_residual,
        "conservative": cert.pass,
    });
    Ok(InverseOutcome { artifact, checks })
}

/// Potential recovery when the reaction form is exact: U = ½‖v‖² + h.
fn suslov(sec: &InverseSection) -> Result<InverseOutcome> {
    let family = family_from_section(sec)?;
    let grid = grid_for(sec, family.dim());
    if grid.is_empty() {
        bail!("inverse.samples: empty evaluation grid");
    }
    let cert = exactness_check(&family, &grid, tolerances::CONSISTENCY_GRID)?;
    let mut checks = Report::new();
    checks.insert(
        "reaction_exactness".to_string(),
        Check::new(cert.max_closedness_residual, cert.tolerance, cert.samples),
    );
    let mut potential_values = Vec::new();
    if cert.pass {
        let v = family.velocity_sym()?;
        let base = &grid[0];
        for x in &grid {
            let env = Env::point(x);
            let mut speed2 = 0.0;
            for c in &v {
                speed2 += c.eval(&env)?.powi(2);
            }
            let h = line_integrate_h(&cert.rho, base, x)?;
            potential_values.push(json!({ "x": x, "u": 0.5 * speed2 + h }));
        }
    }
    let artifact = json!({
        "route": "suslov",
        "reaction_form": strs(&cert.rho),
        "exact": cert.pass,
        "potential_values": potential_values,
        "note": "u is determined up to the additive constant fixed at the first grid point",
    });
    Ok(InverseOutcome { artifact, checks })
}

fn joukovski(sec: &InverseSection) -> Result<InverseOutcome> {
    let family = family_from_section(sec)?;
    let grid = grid_for(sec, family.dim());
    let s = pexpr(need(&sec.surface, "surface")?, "surface")?;
    let mode = match (&sec.nu, &sec.h, &sec.phi) {
        (Some(nu), Some(h), None) => JoukovskiMode::General {
            nu: pexpr(nu, "nu")?,
            h: pexpr(h, "h")?,
        },
        (None, None, Some(phi)) => JoukovskiMode::ExactNu {
            phi: pexpr(phi, "phi")?,
            h0: sec.h0.unwrap_or(0.0),
        },
        _ => bail!("inverse: give either `nu` + `h` (general) or `phi` [+ `h0`] (exact)"),
    };
    let result = joukovski_potential(&family, &s, &mode, &grid)?;
    let cert = result.certificate.as_ref().expect("route always certifies");
    let mut checks = Report::new();
    checks.insert(
        "potential_certificate".to_string(),
        Check::new(cert.max_closedness_residual, cert.tolerance, cert.samples),
    );
    let artifact = json!({
        "route": result.route,
        "potential": format!("{}", result.potential),
        "force": strs(&result.force),
        "extras": result.extras.iter()
            .map(|(n, e)| (n.clone(), format!("{e}")))
            .collect::<std::collections::BTreeMap<_, _>>(),
    });
    Ok(InverseOutcome { artifact, checks })
}

fn stackel(sec: &InverseSection) -> Result<InverseOutcome> {
    let matrix = need(&sec.matrix, "matrix")?;
    let profiles = need(&sec.profiles, "profiles")?;
    let n = profiles.len();
    let phi = matrix
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(j, src)| pexpr(src, &format!("matrix[{k}][{j}]")))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let psi = profiles
        .iter()
        .enumerate()
        .map(|(k, src)| pexpr(src, &format!("profiles[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let alpha = sec.alpha.clone().unwrap_or_else(|| vec![0.0; n]);
    let nu = match &sec.nu {
        Some(src) => Some(pexpr(src, "nu")?),
        None => None,
    };
    let h0 = sec.h0.unwrap_or(0.0);
    let result = stackel_potential(&phi, &psi, &alpha, nu.as_ref(), h0)?;

    // Gate (for the ν = 1, α₁ = h₀ regime): the bracket-ratio potential must
    // equal Σₖ Aᵏ Ψₖ on the grid. With a nontrivial ν the check compares
    // against the same combination scaled by ν².
    let low = sec.grid_low.clone().unwrap_or_else(|| vec![-1.0; n]);
    let high = sec.grid_high.clone().unwrap_or_else(|| vec![1.0; n]);
    let grid = sample_box(&low, &high, sec.samples.unwrap_or(64), sec.seed.unwrap_or(0));
    let mut worst = 0.0_f64;
    for x in &grid {
        let env = Env::point(x);
        let u = result.potential.eval(&env)?;
        let mut sum = 0.0;
        for k in 0..n {
            sum += result.extras[k].1.eval(&env)? * psi[k].eval(&env)?;
        }
        let nu2 = match &nu {
            Some(e) => e.eval(&env)?.powi(2),
            None => 1.0,
        };
        let reference = nu2 * (sum + alpha[0]) - h0;
        worst = worst.max((u - reference).abs());
    }
    let mut checks = Report::new();
    checks.insert(
        "separable_routes".to_string(),
        Check::new(worst, 1e-10, grid.len()),
    );
    let artifact = json!({
        "route": "stackel",
        "potential": format!("{}", result.potential),
        "coefficients": result.extras.iter()
            .map(|(name, e)| (name.clone(), format!("{e}")))
            .collect::<std::collections::BTreeMap<_, _>>(),
    });
    Ok(InverseOutcome { artifact, checks })
}

fn bertrand(sec: &InverseSection) -> Result<InverseOutcome> {
    let b = *need(&sec.b, "b")?;
    if b == 0.0 {
        // Circular family: emit the potential and squared speed law on a
        // radial grid at τ = 0.
        let circ = BertrandCircular {
            psi: pexpr(need(&sec.psi, "psi")?, "psi")?,
            h: pexpr(need(&sec.h_of_r, "h_of_r")?, "h_of_r")?,
            r_ref: sec.r_ref.unwrap_or(1.0),
        };
        let (lo, hi) = (sec.r_low.unwrap_or(0.5), sec.r_high.unwrap_or(2.0));
        let count = sec.samples.unwrap_or(16).max(2);
        let mut rows = Vec::new();
        let mut min_speed_sq = f64::INFINITY;
        for i in 0..count {
            let r = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            let u = circ.potential(r, 0.0)?;
            let l2 = circ.speed_squared(r, 0.0)?;
            min_speed_sq = min_speed_sq.min(l2);
            rows.push(json!({ "r": r, "u": u, "speed_squared": l2 }));
        }
        let mut checks = Report::new();
        // The family only exists where the speed law is nonnegative.
        checks.insert(
            "speed_law_nonnegative".to_string(),
            Check::new((-min_speed_sq).max(0.0), 1e-12, count),
        );
        let artifact = json!({
            "route": "bertrand-circular",
            "potential_values": rows,
        });
        return Ok(InverseOutcome { artifact, checks });
    }

    // Conic family: the H_j profile by quadrature, gated by its ODE.
    let profile = BertrandProfile::new(
        *need(&sec.j, "j")?,
        b,
        sec.k.unwrap_or(0.0),
        sec.c.unwrap_or(0.0),
    )?;
    let count = sec.samples.unwrap_or(9).max(2);
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for i in 0..count {
        let tau = -0.8 + 1.6 * i as f64 / (count - 1) as f64;
        let h = profile.value(tau)?;
        let res = profile.ode_residual(tau)?;
        worst = worst.max(res.abs());
        rows.push(json!({ "tau": tau, "h": h, "ode_residual": res }));
    }
    let mut checks = Report::new();
    checks.insert(
        "profile_ode".to_string(),
        Check::new(worst, tolerances::PROFILE_ODE_GATE, count),
    );
    let artifact = json!({
        "route": "bertrand-conic",
        "j": profile.j,
        "b": profile.b,
        "profile_values": rows,
    });
    Ok(InverseOutcome { artifact, checks })
}
