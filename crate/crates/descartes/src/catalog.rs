//! Ready-made benchmark systems with multiplier presets, scalar multiplier
//! equations, invariant monitors and gated closed-form reference solutions.
//!
//! Every entry is a [`ConstraintSystem`] together with:
//!
//! * a parameter schema (names, defaults, admissible ranges);
//! * one or more named multiplier presets (admissible ones satisfy the
//!   transported-multiplier condition; deliberately inadmissible ones are
//!   kept as negative controls);
//! * the scalar first-order PDE the multipliers of that system must satisfy
//!   ([`multiplier_pde_residual`]), which vanishes on the same set as the
//!   general consistency residual up to a positive factor (the frame
//!   determinant, a mass, or a chart Jacobian such as sin z);
//! * monitored first integrals for trajectory verification;
//! * closed-form reference solutions, each run through a *substitution gate*
//!   ([`gate_reference`]) before it is trusted: the formula must actually
//!   satisfy the equations of motion numerically, otherwise it is kept only
//!   as a marked negative control.

use crate::cartesian::{ConstraintSystem, FrameEval};
use crate::dynamics::classical_residual;
use crate::error::{DescartesError, Result};
use crate::exprlang::{parse, Env, Expr};
use crate::geometry::{MetricField, OneFormField};
use crate::inverse::adaptive_simpson;
use crate::tolerances;

// -------------------------------------------------------------------------------
// Registry
// -------------------------------------------------------------------------------

/// One named parameter of a catalog system.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub min: f64,
    pub max: f64,
    pub doc: &'static str,
}

/// One multiplier preset of a catalog system.
#[derive(Debug, Clone)]
pub struct PresetSpec {
    pub name: &'static str,
    /// Whether the preset satisfies the admissibility condition (some are
    /// kept inadmissible on purpose, as negative controls).
    pub admissible: bool,
    pub summary: &'static str,
}

/// Descriptor of a catalog system (static data; no symbolic construction).
#[derive(Debug, Clone)]
pub struct SystemDescriptor {
    pub name: &'static str,
    pub summary: &'static str,
    pub dim: usize,
    pub constraints: usize,
    pub params: Vec<ParamSpec>,
    pub presets: Vec<PresetSpec>,
    pub default_preset: &'static str,
}

fn p(name: &'static str, default: f64, min: f64, max: f64, doc: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default,
        min,
        max,
        doc,
    }
}

fn preset(name: &'static str, admissible: bool, summary: &'static str) -> PresetSpec {
    PresetSpec {
        name,
        admissible,
        summary,
    }
}

/// Names of all catalog systems, in the registry's fixed order.
pub fn system_names() -> &'static [&'static str] {
    &[
        "chaplygin_sleigh",
        "skate",
        "suslov",
        "gantmacher",
        "kepler_kummer",
        "axis_particle",
        "geodesic_homogeneous",
    ]
}

/// Descriptors for every catalog system, in a deterministic order.
pub fn list_systems() -> Vec<SystemDescriptor> {
    system_names()
        .iter()
        .map(|n| descriptor(n).expect("registry names are valid"))
        .collect()
}

/// Descriptor of a single system by name.
pub fn descriptor(name: &str) -> Result<SystemDescriptor> {
    let d = match name {
        "chaplygin_sleigh" => SystemDescriptor {
            name: "chaplygin_sleigh",
            summary: "knife-edge sleigh on the plane: heading angle plus center of mass, \
                      one nonholonomic constraint with lever arm eps",
            dim: 3,
            constraints: 1,
            params: vec![
                p("m", 2.0, 0.1, 100.0, "total mass"),
                p("ic", 1.0, 0.1, 100.0, "moment of inertia about the vertical axis"),
                p("eps", 0.5, 0.0, 5.0, "distance from center of mass to the knife edge"),
                p("c", 1.0, 0.01, 10.0, "multiplier amplitude"),
                p("c0", 0.2, -1.2, 1.2, "multiplier phase"),
            ],
            presets: vec![
                preset(
                    "inertial",
                    true,
                    "inertial motions: lambda2 = c sin(theta), lambda3 = c q cos(theta), \
                     theta = q eps x1 + c0",
                ),
                preset(
                    "uniform_bad",
                    false,
                    "constant multipliers; violates the multiplier equation (negative control)",
                ),
            ],
            default_preset: "inertial",
        },
        "skate" => SystemDescriptor {
            name: "skate",
            summary: "knife edge through the center of mass (eps = 0 sleigh) in a uniform \
                      in-plane force field",
            dim: 3,
            constraints: 1,
            params: vec![
                p("m", 1.0, 0.1, 100.0, "mass"),
                p("ic", 1.0, 0.1, 100.0, "moment of inertia"),
                p("g", 2.0, 0.0, 100.0, "force field strength"),
                p("c0", 1.0, 0.1, 10.0, "initial heading rate (nonzero)"),
                p("c1", 2.0, -100.0, 100.0, "translational integration constant"),
            ],
            presets: vec![
                preset(
                    "kappa",
                    true,
                    "admissible rescaling of the classical solution field: lambda2 = c0, \
                     lambda3 = c0^3 / (g sin x1 + c0 c1)",
                ),
                preset(
                    "classical",
                    false,
                    "the classical solution field itself (lambda2 = g sin x1 / c0 + c1, \
                     lambda3 = c0); parametrizes true motions but is not multiplier-admissible",
                ),
            ],
            default_preset: "kappa",
        },
        "suslov" => SystemDescriptor {
            name: "suslov",
            summary: "rigid body about a fixed point with the body-frame constraint \
                      omega_3 = 0, Euler-angle chart with guard sin(x3)",
            dim: 3,
            constraints: 1,
            params: vec![
                p("i1", 2.0, 0.1, 100.0, "principal moment of inertia 1"),
                p("i2", 3.0, 0.1, 100.0, "principal moment of inertia 2"),
                p("i3", 4.0, 0.1, 100.0, "principal moment of inertia 3"),
                p("m1", 0.8, -10.0, 10.0, "constant mu1 (preset `suslov`)"),
                p("m2", 0.6, -10.0, 10.0, "constant mu2 (preset `suslov`)"),
                p("b1", 0.2, -2.0, 2.0, "force strength (preset `kharlamova`)"),
                p("h", 2.0, 0.0, 100.0, "energy constant (preset `kharlamova`)"),
                p("cc", 0.5, -10.0, 10.0, "constant mu2 (preset `kharlamova`)"),
                p("eps", 0.5, 0.0, 10.0, "coupling strength (preset `clebsch_tisseran`)"),
            ],
            presets: vec![
                preset("suslov", true, "constant mu1, mu2 (free body)"),
                preset(
                    "kharlamova",
                    true,
                    "linear force field U = b1 gamma1 + const; mu2 constant, \
                     mu1 = sqrt(2 i2 b1 gamma1 + beta)",
                ),
                preset(
                    "clebsch_tisseran",
                    true,
                    "quadratic force field; mu1 = c1 gamma1, mu2 = c2 gamma2",
                ),
            ],
            default_preset: "suslov",
        },
        "gantmacher" => SystemDescriptor {
            name: "gantmacher",
            summary: "two mass points joined by a light rod in a vertical plane, midpoint \
                      velocity along the rod; four coordinates, two constraints",
            dim: 4,
            constraints: 2,
            params: vec![
                p("g", 9.81, 0.1, 100.0, "gravity"),
                p("h", 72.0, 0.1, 1000.0, "energy constant of the preset"),
                p("c3", 2.0, 0.1, 100.0, "rotation rate nu3"),
            ],
            presets: vec![preset(
                "g30",
                true,
                "nu3 = c3, nu4 = sqrt(2(h - g x3)/(x1^2 + x2^2) - c3^2)",
            )],
            default_preset: "g30",
        },
        "kepler_kummer" => SystemDescriptor {
            name: "kepler_kummer",
            summary: "free particle constrained to a conic section: plane and conic \
                      invariants as given constraints, tangent field as auxiliary form",
            dim: 3,
            constraints: 2,
            params: vec![
                p("b1", 0.3, -0.9, 0.9, "conic eccentricity vector, first component"),
                p("b2", 0.0, -0.9, 0.9, "conic eccentricity vector, second component"),
            ],
            presets: vec![preset(
                "conic",
                true,
                "v = [c x grad f] with f = r + (b, x); Kepler motions up to time reversal",
            )],
            default_preset: "conic",
        },
        "axis_particle" => SystemDescriptor {
            name: "axis_particle",
            summary: "unit-mass particle with the rotating-axis constraint \
                      sin(x1) v2 - cos(x1) v3 = 0",
            dim: 3,
            constraints: 1,
            params: vec![
                p("m", 1.0, 0.1, 100.0, "mass"),
                p("c1", 0.7, 0.01, 10.0, "axial rate (x1 velocity)"),
                p("c2", 1.3, -10.0, 10.0, "transversal speed"),
            ],
            presets: vec![preset("uniform", true, "constant multipliers; helical motions")],
            default_preset: "uniform",
        },
        "geodesic_homogeneous" => SystemDescriptor {
            name: "geodesic_homogeneous",
            summary: "geodesic flow on the degree-one homogeneous surface \
                      f = r + (b, x) = const",
            dim: 3,
            constraints: 1,
            params: vec![
                p("b1", 0.2, -0.9, 0.9, "surface vector, first component"),
                p("b2", 0.0, -0.9, 0.9, "surface vector, second component"),
                p("b3", 0.0, -0.9, 0.9, "surface vector, third component"),
                p("h0", 0.5, 0.01, 100.0, "energy level (half squared speed)"),
            ],
            presets: vec![preset(
                "meridian",
                true,
                "v = (G_f/g)(g x - f grad f) with G_f^2 = 2 h0 g / (g r^2 - f^2)",
            )],
            default_preset: "meridian",
        },
        other => {
            return Err(unknown_system(other));
        }
    };
    Ok(d)
}

/// Nearest registry name by edit distance (for error messages), if any
/// candidate is within distance 3.
pub fn suggest_name(input: &str) -> Option<&'static str> {
    system_names()
        .iter()
        .map(|n| (*n, edit_distance(input, n)))
        .filter(|(_, d)| *d <= 3)
        .min_by_key(|(_, d)| *d)
        .map(|(n, _)| n)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn unknown_system(name: &str) -> DescartesError {
    let hint = match suggest_name(name) {
        Some(s) => format!(" (did you mean `{s}`?)"),
        None => String::new(),
    };
    DescartesError::InconsistentInput {
        message: format!("unknown catalog system `{name}`{hint}"),
    }
}

// -------------------------------------------------------------------------------
// Building
// -------------------------------------------------------------------------------

/// How the auxiliary multipliers are chosen when building a system.
#[derive(Debug, Clone)]
pub enum LambdaSpec {
    /// The system's default preset.
    Default,
    /// A named preset from the descriptor.
    Preset(String),
    /// User-supplied multiplier expressions (N - M of them). Parameters are
    /// bound against the resolved parameter set.
    Custom(Vec<Expr>),
}

/// A fully assembled catalog system.
pub struct BuiltSystem {
    pub name: String,
    /// Preset name, or "custom" for user multipliers.
    pub preset: String,
    pub system: ConstraintSystem,
    /// Every schema parameter with its resolved value.
    pub params: Vec<(String, f64)>,
    /// Recommended initial point (guard-safe, frame-regular).
    pub initial: Vec<f64>,
    /// Named first-integral monitors over (x, v).
    pub monitors: Vec<(String, Expr)>,
}

impl std::fmt::Debug for BuiltSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltSystem")
            .field("name", &self.name)
            .field("preset", &self.preset)
            .field("params", &self.params)
            .field("initial", &self.initial)
            .finish_non_exhaustive()
    }
}

fn pe(src: &str) -> Expr {
    parse(src).expect("built-in expression parses")
}

fn bind(e: &Expr, params: &[(String, f64)]) -> Expr {
    let refs: Vec<(&str, f64)> = params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    e.bind_params(&refs)
}

fn resolve_params(spec: &[ParamSpec], overrides: &[(String, f64)]) -> Result<Vec<(String, f64)>> {
    for (name, _) in overrides {
        if !spec.iter().any(|s| s.name == name) {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "unknown parameter `{name}`; expected one of: {}",
                    spec.iter().map(|s| s.name).collect::<Vec<_>>().join(", ")
                ),
            });
        }
    }
    spec.iter()
        .map(|s| {
            let v = overrides
                .iter()
                .find(|(n, _)| n == s.name)
                .map(|(_, v)| *v)
                .unwrap_or(s.default);
            if !(s.min..=s.max).contains(&v) || !v.is_finite() {
                return Err(DescartesError::InconsistentInput {
                    message: format!(
                        "parameter `{}` = {v} out of bounds [{}, {}]",
                        s.name, s.min, s.max
                    ),
                });
            }
            Ok((s.name.to_string(), v))
        })
        .collect()
}

fn value(params: &[(String, f64)], name: &str) -> f64 {
    params
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| *v)
        .expect("resolved parameter present")
}

fn preset_name<'a>(
    spec: &LambdaSpec,
    descriptor: &'a SystemDescriptor,
) -> Result<Option<&'a str>> {
    match spec {
        LambdaSpec::Default => Ok(Some(descriptor.default_preset)),
        LambdaSpec::Preset(name) => descriptor
            .presets
            .iter()
            .find(|pr| pr.name == name)
            .map(|pr| Some(pr.name))
            .ok_or_else(|| DescartesError::InconsistentInput {
                message: format!(
                    "system `{}` has no preset `{name}`; available: {}",
                    descriptor.name,
                    descriptor
                        .presets
                        .iter()
                        .map(|pr| pr.name)
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            }),
        LambdaSpec::Custom(_) => Ok(None),
    }
}

/// Build a catalog system with the given multiplier choice and parameter
/// overrides. The returned system's frame is verified non-singular at the
/// recommended initial point.
pub fn build_system(
    name: &str,
    lambda: &LambdaSpec,
    overrides: &[(String, f64)],
) -> Result<BuiltSystem> {
    let desc = descriptor(name)?;
    let params = resolve_params(&desc.params, overrides)?;
    let chosen = preset_name(lambda, &desc)?;
    let custom = match lambda {
        LambdaSpec::Custom(exprs) => {
            if exprs.len() != desc.dim - desc.constraints {
                return Err(DescartesError::InconsistentInput {
                    message: format!(
                        "system `{name}` needs {} multiplier expressions, got {}",
                        desc.dim - desc.constraints,
                        exprs.len()
                    ),
                });
            }
            Some(exprs.iter().map(|e| bind(e, &params)).collect::<Vec<_>>())
        }
        _ => None,
    };

    let built = match name {
        "chaplygin_sleigh" => build_sleigh(&params, chosen, custom)?,
        "skate" => build_skate(&params, chosen, custom)?,
        "suslov" => build_suslov(&params, chosen, custom)?,
        "gantmacher" => build_gantmacher(&params, chosen, custom)?,
        "kepler_kummer" => build_kepler(&params, custom)?,
        "axis_particle" => build_axis(&params, custom)?,
        "geodesic_homogeneous" => build_geodesic(&params, custom)?,
        other => return Err(unknown_system(other)),
    };
    // Probe point must give a regular frame (and pass the guards).
    let _: FrameEval = built.system.frame_matrix(&built.initial)?;
    Ok(built)
}

struct Pieces {
    system: ConstraintSystem,
    initial: Vec<f64>,
    monitors: Vec<(String, Expr)>,
    preset: String,
}

fn finish(name: &str, params: Vec<(String, f64)>, pieces: Pieces) -> BuiltSystem {
    BuiltSystem {
        name: name.to_string(),
        preset: pieces.preset,
        system: pieces.system,
        params,
        initial: pieces.initial,
        monitors: pieces.monitors,
    }
}

// ---- Chaplygin sleigh -----------------------------------------------------------

fn sleigh_forms() -> Vec<OneFormField> {
    vec![
        OneFormField::new(vec![pe("eps"), pe("sin(x1)"), pe("-cos(x1)")]),
        OneFormField::new(vec![Expr::Num(0.0), pe("cos(x1)"), pe("sin(x1)")]),
        OneFormField::new(vec![Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0)]),
    ]
}

fn build_sleigh(
    params: &[(String, f64)],
    preset: Option<&str>,
    custom: Option<Vec<Expr>>,
) -> Result<BuiltSystem> {
    let (m, ic, eps) = (value(params, "m"), value(params, "ic"), value(params, "eps"));
    let q = (m / (ic + eps * eps * m)).sqrt();
    let mut all = params.to_vec();
    all.push(("q".to_string(), q));

    let (preset_label, lambdas, monitors): (String, Vec<Expr>, Vec<(String, Expr)>) =
        if let Some(custom) = custom {
            ("custom".to_string(), custom, Vec::new())
        } else {
            match preset.unwrap() {
                "inertial" => (
                    "inertial".to_string(),
                    vec![
                        bind(&pe("c*sin(q*eps*x1 + c0)"), &all),
                        bind(&pe("c*q*cos(q*eps*x1 + c0)"), &all),
                    ],
                    vec![(
                        "energy".to_string(),
                        bind(&pe("0.5*(ic*v1^2 + m*(v2^2 + v3^2))"), &all),
                    )],
                ),
                "uniform_bad" => (
                    "uniform_bad".to_string(),
                    vec![Expr::Num(1.0), Expr::Num(1.0)],
                    Vec::new(),
                ),
                other => unreachable!("preset {other} filtered earlier"),
            }
        };
    let forms = sleigh_forms()
        .into_iter()
        .map(|f| OneFormField::new(f.comps.iter().map(|e| bind(e, &all)).collect()))
        .collect();
    let metric = MetricField::diagonal(vec![Expr::Num(ic), Expr::Num(m), Expr::Num(m)]);
    let system = ConstraintSystem::new(3, 1, forms, lambdas, metric, None)?;
    Ok(finish(
        "chaplygin_sleigh",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![0.3, 0.0, 0.0],
            monitors,
            preset: preset_label,
        },
    ))
}

// ---- Chaplygin skate ------------------------------------------------------------

fn skate_forms() -> Vec<OneFormField> {
    vec![
        OneFormField::new(vec![Expr::Num(0.0), pe("sin(x1)"), pe("-cos(x1)")]),
        OneFormField::new(vec![Expr::Num(0.0), pe("cos(x1)"), pe("sin(x1)")]),
        OneFormField::new(vec![Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0)]),
    ]
}

fn build_skate(
    params: &[(String, f64)],
    preset: Option<&str>,
    custom: Option<Vec<Expr>>,
) -> Result<BuiltSystem> {
    let (m, ic) = (value(params, "m"), value(params, "ic"));
    let metric = MetricField::diagonal(vec![Expr::Num(ic), Expr::Num(m), Expr::Num(m)]);
    let forms = skate_forms();

    let (preset_label, lambdas, potential, monitors): (
        String,
        Vec<Expr>,
        Option<Expr>,
        Vec<(String, Expr)>,
    ) = if let Some(custom) = custom {
        ("custom".to_string(), custom, None, Vec::new())
    } else {
        match preset.unwrap() {
            "kappa" => {
                // Forced admissible preset: the potential equals the kinetic
                // energy along the field, U = (ic lambda3^2 + m lambda2^2)/2.
                let l2 = bind(&pe("c0"), params);
                let l3 = bind(&pe("c0^3/(g*sin(x1) + c0*c1)"), params);
                let u = bind(
                    &pe("0.5*(ic*(c0^3/(g*sin(x1) + c0*c1))^2 + m*c0^2)"),
                    params,
                );
                let level = bind(
                    &pe("0.5*(ic*v1^2 + m*(v2^2 + v3^2)) \
                         - 0.5*(ic*(c0^3/(g*sin(x1) + c0*c1))^2 + m*c0^2)"),
                    params,
                );
                (
                    "kappa".to_string(),
                    vec![l2, l3],
                    Some(u),
                    vec![("force_balance".to_string(), level)],
                )
            }
            "classical" => {
                let l2 = bind(&pe("g*sin(x1)/c0 + c1"), params);
                let l3 = bind(&pe("c0"), params);
                let u = bind(&pe("m*g*x2"), params);
                let energy = bind(
                    &pe("0.5*(ic*v1^2 + m*(v2^2 + v3^2)) - m*g*x2"),
                    params,
                );
                (
                    "classical".to_string(),
                    vec![l2, l3],
                    Some(u),
                    vec![("energy".to_string(), energy)],
                )
            }
            other => unreachable!("preset {other} filtered earlier"),
        }
    };
    let system = ConstraintSystem::new(3, 1, forms, lambdas, metric, potential)?;
    Ok(finish(
        "skate",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![0.3, 0.0, 0.0],
            monitors,
            preset: preset_label,
        },
    ))
}

// ---- Suslov rigid body ----------------------------------------------------------

/// The Poisson-sphere coordinates of a chart point: gamma1 = sin z sin x,
/// gamma2 = sin z cos x, gamma3 = cos z (with x = x1, z = x3).
pub fn suslov_gamma_of_chart(x: &[f64]) -> [f64; 3] {
    [
        x[2].sin() * x[0].sin(),
        x[2].sin() * x[0].cos(),
        x[2].cos(),
    ]
}

/// Invert the Poisson-sphere map on one of the two charts (sin z > 0 or
/// sin z < 0). The second chart coordinate (a cyclic angle) is set to zero.
/// Fails within `CHART_GUARD` of the chart locus gamma1 = gamma2 = 0.
pub fn suslov_chart_of_gamma(gamma: &[f64], negative_sin: bool) -> Result<[f64; 3]> {
    let rho = (gamma[0] * gamma[0] + gamma[1] * gamma[1]).sqrt();
    if rho < tolerances::CHART_GUARD {
        return Err(DescartesError::ChartSingular {
            chart: "suslov sin(x3)".to_string(),
            detail: format!("gamma1^2 + gamma2^2 = {:e} too small to invert", rho * rho),
        });
    }
    let s = if negative_sin { -1.0 } else { 1.0 };
    let x1 = (s * gamma[0]).atan2(s * gamma[1]);
    let x3 = (s * rho).atan2(gamma[2]);
    Ok([x1, 0.0, x3])
}

/// The reduced flow on the Poisson sphere for multiplier functions
/// mu1(gamma), mu2(gamma) (coordinates x1, x2, x3 read as gamma1..gamma3):
/// gamma1' = gamma3 mu1 / i2, gamma2' = gamma3 mu2 / i1,
/// gamma3' = -(gamma1 mu1 / i2 + gamma2 mu2 / i1).
pub fn suslov_gamma_field(mu1: &Expr, mu2: &Expr, i1: f64, i2: f64) -> Vec<Expr> {
    let g1 = Expr::Coord(0);
    let g2 = Expr::Coord(1);
    let g3 = Expr::Coord(2);
    vec![
        Expr::div(Expr::mul(g3.clone(), mu1.clone()), Expr::Num(i2)),
        Expr::div(Expr::mul(g3, mu2.clone()), Expr::Num(i1)),
        Expr::neg(Expr::add(
            Expr::div(Expr::mul(g1, mu1.clone()), Expr::Num(i2)),
            Expr::div(Expr::mul(g2, mu2.clone()), Expr::Num(i1)),
        )),
    ]
}

/// Build the quadrature family of admissible Suslov multipliers from a
/// generating function S(gamma1, gamma2), two free one-slot profiles and a
/// constant swirl:
///
/// ```text
/// mu1 = dS/dgamma1 + psi1(gamma2^2 + gamma3^2, gamma1) + omega gamma2,
/// mu2 = dS/dgamma2 + psi2(gamma1^2 + gamma3^2, gamma2) + omega gamma1.
/// ```
///
/// `s` reads x1, x2 as gamma1, gamma2; `psi1` reads x1 as its quadratic slot
/// and x2 as gamma1; `psi2` likewise with x2 as gamma2. Every member
/// satisfies the scalar multiplier equation of the system identically.
/// (The slot of psi1 must be gamma2^2 + gamma3^2 — the mirror of psi2's —
/// and the swirl must be constant; other combinations fail the equation.)
pub fn suslov_family_multipliers(
    s: &Expr,
    psi1: &Expr,
    psi2: &Expr,
    omega: f64,
) -> (Expr, Expr) {
    let g1 = Expr::Coord(0);
    let g2 = Expr::Coord(1);
    let g3 = Expr::Coord(2);
    let slot1 = Expr::add(Expr::square(g2.clone()), Expr::square(g3.clone()));
    let slot2 = Expr::add(Expr::square(g1.clone()), Expr::square(g3));
    let mu1 = Expr::add(
        Expr::add(s.diff(0), psi1.substitute_coords(&[slot1, g1.clone()])),
        Expr::mul(Expr::Num(omega), g2.clone()),
    );
    let mu2 = Expr::add(
        Expr::add(s.diff(1), psi2.substitute_coords(&[slot2, g2])),
        Expr::mul(Expr::Num(omega), g1),
    );
    (mu1, mu2)
}

/// Multiplier functions mu1(gamma), mu2(gamma) of a named Suslov preset
/// (coordinates x1..x3 read as gamma1..gamma3), with parameters resolved.
pub fn suslov_preset_multipliers(
    preset: &str,
    overrides: &[(String, f64)],
) -> Result<(Expr, Expr)> {
    let desc = descriptor("suslov")?;
    let params = resolve_params(&desc.params, overrides)?;
    let (i1, i2, i3) = (
        value(&params, "i1"),
        value(&params, "i2"),
        value(&params, "i3"),
    );
    match preset {
        "suslov" => Ok((
            Expr::Num(value(&params, "m1")),
            Expr::Num(value(&params, "m2")),
        )),
        "kharlamova" => {
            let (b1, h, cc) = (
                value(&params, "b1"),
                value(&params, "h"),
                value(&params, "cc"),
            );
            let beta = 2.0 * i2 * h - (i2 / i1) * cc * cc;
            let mu1 = Expr::sqrt(Expr::add(
                Expr::mul(Expr::Num(2.0 * i2 * b1), Expr::Coord(0)),
                Expr::Num(beta),
            ));
            Ok((mu1, Expr::Num(cc)))
        }
        "clebsch_tisseran" => {
            let eps = value(&params, "eps");
            let c1 = (eps * i2 * (i3 - i1)).sqrt();
            let c2 = (eps * i1 * (i3 - i2)).sqrt();
            Ok((
                Expr::mul(Expr::Num(c1), Expr::Coord(0)),
                Expr::mul(Expr::Num(c2), Expr::Coord(1)),
            ))
        }
        other => Err(DescartesError::InconsistentInput {
            message: format!("suslov has no preset `{other}`"),
        }),
    }
}

fn suslov_metric(params: &[(String, f64)]) -> MetricField {
    let mut g = MetricField::diagonal(vec![
        bind(&pe("i3"), params),
        bind(
            &pe("(i1*sin(x1)^2 + i2*cos(x1)^2)*sin(x3)^2 + i3*cos(x3)^2"),
            params,
        ),
        bind(&pe("i1*cos(x1)^2 + i2*sin(x1)^2"), params),
    ]);
    g.set(0, 1, bind(&pe("i3*cos(x3)"), params));
    g.set(1, 2, bind(&pe("(i1 - i2)*sin(x1)*cos(x1)*sin(x3)"), params));
    g
}

/// Chart multipliers (lambda2 = y-rate, lambda3 = z-rate) from gamma-space
/// multiplier functions, via the angular-velocity kinematics with omega3 = 0.
pub fn suslov_chart_multipliers(mu1: &Expr, mu2: &Expr, i1: f64, i2: f64) -> (Expr, Expr) {
    let gamma_map = [
        pe("sin(x3)*sin(x1)"),
        pe("sin(x3)*cos(x1)"),
        pe("cos(x3)"),
    ];
    let mu1c = mu1.substitute_coords(&gamma_map);
    let mu2c = mu2.substitute_coords(&gamma_map);
    let w1 = Expr::div(mu2c, Expr::Num(i1));
    let w2 = Expr::neg(Expr::div(mu1c, Expr::Num(i2)));
    let lam2 = Expr::div(
        Expr::add(
            Expr::mul(w1.clone(), pe("sin(x1)")),
            Expr::mul(w2.clone(), pe("cos(x1)")),
        ),
        pe("sin(x3)"),
    );
    let lam3 = Expr::sub(Expr::mul(w1, pe("cos(x1)")), Expr::mul(w2, pe("sin(x1)")));
    (lam2, lam3)
}

fn build_suslov(
    params: &[(String, f64)],
    preset: Option<&str>,
    custom: Option<Vec<Expr>>,
) -> Result<BuiltSystem> {
    let (i1, i2) = (value(params, "i1"), value(params, "i2"));
    let forms = vec![
        OneFormField::new(vec![Expr::Num(1.0), pe("cos(x3)"), Expr::Num(0.0)]),
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(1.0), Expr::Num(0.0)]),
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(0.0), Expr::Num(1.0)]),
    ];
    let metric = suslov_metric(params);

    let (preset_label, lambdas, potential, monitors): (
        String,
        Vec<Expr>,
        Option<Expr>,
        Vec<(String, Expr)>,
    ) = if let Some(custom) = custom {
        ("custom".to_string(), custom, None, Vec::new())
    } else {
        let preset = preset.unwrap();
        let (mu1, mu2) = suslov_preset_multipliers(preset, params)?;
        let (lam2, lam3) = suslov_chart_multipliers(&mu1, &mu2, i1, i2);
        let gamma_map = [
            pe("sin(x3)*sin(x1)"),
            pe("sin(x3)*cos(x1)"),
            pe("cos(x3)"),
        ];
        let mu1c = mu1.substitute_coords(&gamma_map);
        let mu2c = mu2.substitute_coords(&gamma_map);
        // Potential from the preset multipliers: U = mu1^2/(2 i2) + mu2^2/(2 i1),
        // which equals the kinetic energy along the field (up to a constant).
        let potential = Expr::add(
            Expr::div(Expr::square(mu1c.clone()), Expr::Num(2.0 * i2)),
            Expr::div(Expr::square(mu2c.clone()), Expr::Num(2.0 * i1)),
        );
        // Body angular velocities from chart velocities.
        let w1v = pe("v2*sin(x3)*sin(x1) + v3*cos(x1)");
        let w2v = pe("v2*sin(x3)*cos(x1) - v3*sin(x1)");
        let mut monitors = vec![
            (
                "spin1".to_string(),
                Expr::sub(Expr::mul(Expr::Num(i1), w1v.clone()), mu2c.clone()),
            ),
            (
                "spin2".to_string(),
                Expr::add(Expr::mul(Expr::Num(i2), w2v.clone()), mu1c.clone()),
            ),
            (
                "energy".to_string(),
                Expr::sub(
                    Expr::add(
                        Expr::mul(Expr::Num(0.5 * i1), Expr::square(w1v.clone())),
                        Expr::mul(Expr::Num(0.5 * i2), Expr::square(w2v.clone())),
                    ),
                    potential.clone(),
                ),
            ),
        ];
        let k4 = match preset {
            "suslov" => Expr::add(
                Expr::square(Expr::mul(Expr::Num(i1), w1v)),
                Expr::square(Expr::mul(Expr::Num(i2), w2v)),
            ),
            "kharlamova" => Expr::mul(
                Expr::Num(value(params, "b1") * i1),
                w1v,
            ),
            "clebsch_tisseran" => {
                let i3 = value(params, "i3");
                let eps = value(params, "eps");
                let quad = bind(
                    &pe("sin(x3)^2*sin(x1)^2/i1 + sin(x3)^2*cos(x1)^2/i2 + cos(x3)^2/i3"),
                    params,
                );
                Expr::sub(
                    Expr::mul(
                        Expr::Num(0.5),
                        Expr::add(
                            Expr::square(Expr::mul(Expr::Num(i1), w1v)),
                            Expr::square(Expr::mul(Expr::Num(i2), w2v)),
                        ),
                    ),
                    Expr::mul(Expr::Num(0.5 * eps * i1 * i2 * i3), quad),
                )
            }
            _ => unreachable!(),
        };
        monitors.push(("k4".to_string(), k4));
        (
            preset.to_string(),
            vec![lam2, lam3],
            Some(potential),
            monitors,
        )
    };

    let system = ConstraintSystem::new(3, 1, forms, lambdas, metric, potential)?
        .with_guards(vec![("suslov sin(x3)".to_string(), pe("sin(x3)"))]);
    Ok(finish(
        "suslov",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![0.4, 0.2, 1.0],
            monitors,
            preset: preset_label,
        },
    ))
}

// ---- Gantmacher rod -------------------------------------------------------------

fn gantmacher_forms() -> Vec<OneFormField> {
    vec![
        OneFormField::new(vec![pe("x1"), pe("x2"), Expr::Num(0.0), Expr::Num(0.0)]),
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(0.0), pe("x1"), pe("-x2")]),
        OneFormField::new(vec![pe("-x2"), pe("x1"), Expr::Num(0.0), Expr::Num(0.0)]),
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(0.0), pe("x2"), pe("x1")]),
    ]
}

fn build_gantmacher(
    params: &[(String, f64)],
    preset: Option<&str>,
    custom: Option<Vec<Expr>>,
) -> Result<BuiltSystem> {
    let forms = gantmacher_forms();
    let metric = MetricField::identity(4);
    let (preset_label, lambdas, potential, monitors): (
        String,
        Vec<Expr>,
        Option<Expr>,
        Vec<(String, Expr)>,
    ) = if let Some(custom) = custom {
        ("custom".to_string(), custom, None, Vec::new())
    } else {
        debug_assert_eq!(preset.unwrap(), "g30");
        // nu3 = c3, nu4 = sqrt(2(h - g x3)/(x1^2 + x2^2) - c3^2); lambda_j = nu_j (x1^2 + x2^2).
        let l3 = bind(&pe("c3*(x1^2 + x2^2)"), params);
        let l4 = bind(
            &pe("sqrt(2*(h - g*x3)/(x1^2 + x2^2) - c3^2)*(x1^2 + x2^2)"),
            params,
        );
        let u = bind(&pe("h - g*x3"), params);
        let monitors = vec![
            (
                "energy".to_string(),
                bind(&pe("0.5*(v1^2 + v2^2 + v3^2 + v4^2) + g*x3"), params),
            ),
            ("circle".to_string(), pe("x1^2 + x2^2")),
        ];
        ("g30".to_string(), vec![l3, l4], Some(u), monitors)
    };
    let system = ConstraintSystem::new(4, 2, forms, lambdas, metric, potential)?
        .with_guards(vec![(
            "gantmacher x1^2 + x2^2".to_string(),
            pe("x1^2 + x2^2"),
        )]);
    Ok(finish(
        "gantmacher",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![1.0, 0.0, 0.0, 0.0],
            monitors,
            preset: preset_label,
        },
    ))
}

// ---- Kepler / conic constrained particle ------------------------------------------

fn kepler_grad_f() -> Vec<Expr> {
    vec![
        pe("x1/sqrt(x1^2 + x2^2 + x3^2) + b1"),
        pe("x2/sqrt(x1^2 + x2^2 + x3^2) + b2"),
        pe("x3/sqrt(x1^2 + x2^2 + x3^2)"),
    ]
}

fn build_kepler(params: &[(String, f64)], custom: Option<Vec<Expr>>) -> Result<BuiltSystem> {
    let (b1, b2) = (value(params, "b1"), value(params, "b2"));
    let grad_f: Vec<Expr> = kepler_grad_f().iter().map(|e| bind(e, params)).collect();
    // Tangent covector (the in-plane rotation of grad f); used both as the
    // auxiliary frame row and, with lambda3 = |grad f x c|^2, as the field.
    let tangent = vec![
        Expr::neg(grad_f[1].clone()),
        grad_f[0].clone(),
        Expr::Num(0.0),
    ];
    let forms = vec![
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(0.0), Expr::Num(1.0)]),
        OneFormField::new(grad_f.clone()),
        OneFormField::new(tangent),
    ];
    let (preset_label, lambdas) = if let Some(custom) = custom {
        ("custom".to_string(), custom)
    } else {
        let l3 = Expr::add(
            Expr::square(grad_f[0].clone()),
            Expr::square(grad_f[1].clone()),
        );
        ("conic".to_string(), vec![l3])
    };
    let potential = bind(&pe("1/sqrt(x1^2 + x2^2 + x3^2)"), params);
    let monitors = vec![
        ("plane".to_string(), pe("x3")),
        (
            "conic".to_string(),
            bind(&pe("sqrt(x1^2 + x2^2 + x3^2) + b1*x1 + b2*x2"), params),
        ),
        (
            "energy".to_string(),
            pe("0.5*(v1^2 + v2^2 + v3^2) - 1/sqrt(x1^2 + x2^2 + x3^2)"),
        ),
    ];
    let system = ConstraintSystem::new(
        3,
        2,
        forms,
        lambdas,
        MetricField::identity(3),
        Some(potential),
    )?
    .with_guards(vec![(
        "kepler r^2".to_string(),
        pe("x1^2 + x2^2 + x3^2"),
    )]);

    // Initial point on the conic f = 1 in the plane x3 = 0: fix x1 and solve
    // r + b1 x1 + b2 x2 = 1 for x2 > 0 by Newton iteration.
    let x1 = -0.5_f64;
    let mut x2 = 1.0_f64;
    for _ in 0..60 {
        let r = (x1 * x1 + x2 * x2).sqrt();
        let val = r + b1 * x1 + b2 * x2 - 1.0;
        let slope = x2 / r + b2;
        x2 -= val / slope;
    }
    Ok(finish(
        "kepler_kummer",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![x1, x2, 0.0],
            monitors,
            preset: preset_label,
        },
    ))
}

// ---- Rotating-axis particle -------------------------------------------------------

fn build_axis(params: &[(String, f64)], custom: Option<Vec<Expr>>) -> Result<BuiltSystem> {
    let m = value(params, "m");
    let forms = vec![
        OneFormField::new(vec![Expr::Num(0.0), pe("sin(x1)"), pe("-cos(x1)")]),
        OneFormField::new(vec![Expr::Num(0.0), pe("cos(x1)"), pe("sin(x1)")]),
        OneFormField::new(vec![Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0)]),
    ];
    let metric = MetricField::diagonal(vec![Expr::Num(m), Expr::Num(m), Expr::Num(m)]);
    let (preset_label, lambdas, monitors) = if let Some(custom) = custom {
        ("custom".to_string(), custom, Vec::new())
    } else {
        (
            "uniform".to_string(),
            vec![
                Expr::Num(value(params, "c2")),
                Expr::Num(value(params, "c1")),
            ],
            vec![(
                "energy".to_string(),
                bind(&pe("0.5*m*(v1^2 + v2^2 + v3^2)"), params),
            )],
        )
    };
    let system = ConstraintSystem::new(3, 1, forms, lambdas, metric, None)?;
    Ok(finish(
        "axis_particle",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![0.2, 0.0, 0.5],
            monitors,
            preset: preset_label,
        },
    ))
}

// ---- Geodesics on a degree-one homogeneous surface ----------------------------------

fn build_geodesic(params: &[(String, f64)], custom: Option<Vec<Expr>>) -> Result<BuiltSystem> {
    let r = pe("sqrt(x1^2 + x2^2 + x3^2)");
    let f = bind(&pe("sqrt(x1^2 + x2^2 + x3^2) + b1*x1 + b2*x2 + b3*x3"), params);
    let grad_f: Vec<Expr> = (0..3).map(|k| f.diff(k)).collect();
    let g_expr = bind(
        &Expr::add(
            Expr::div(Expr::mul(Expr::Num(2.0), f.clone()), r.clone()),
            Expr::sub(pe("b1^2 + b2^2 + b3^2"), Expr::Num(1.0)),
        ),
        params,
    );
    // Pole guard: g r^2 - f^2 vanishes where the trajectory meets the surface's
    // symmetry axis and the field formula degenerates.
    let guard = Expr::sub(
        Expr::mul(g_expr.clone(), Expr::square(r.clone())),
        Expr::square(f.clone()),
    );
    let gf = Expr::sqrt(Expr::div(
        Expr::mul(bind(&pe("2*h0"), params), g_expr.clone()),
        guard.clone(),
    ));
    // v = (G_f / g)(g x - f grad f)
    let v: Vec<Expr> = (0..3)
        .map(|k| {
            Expr::mul(
                Expr::div(gf.clone(), g_expr.clone()),
                Expr::sub(
                    Expr::mul(g_expr.clone(), Expr::Coord(k)),
                    Expr::mul(f.clone(), grad_f[k].clone()),
                ),
            )
        })
        .collect();
    let forms = vec![
        OneFormField::new(grad_f),
        OneFormField::new(vec![Expr::Num(1.0), Expr::Num(0.0), Expr::Num(0.0)]),
        OneFormField::new(vec![Expr::Num(0.0), Expr::Num(0.0), Expr::Num(1.0)]),
    ];
    let (preset_label, lambdas) = if let Some(custom) = custom {
        ("custom".to_string(), custom)
    } else {
        ("meridian".to_string(), vec![v[0].clone(), v[2].clone()])
    };
    let cross_sq = pe("(x2*v3 - x3*v2)^2 + (x3*v1 - x1*v3)^2 + (x1*v2 - x2*v1)^2");
    let monitors = vec![
        (
            "clairaut".to_string(),
            Expr::mul(g_expr.clone(), cross_sq),
        ),
        ("speed".to_string(), pe("v1^2 + v2^2 + v3^2")),
        ("surface".to_string(), f.clone()),
    ];
    let system = ConstraintSystem::new(
        3,
        1,
        forms,
        lambdas,
        MetricField::identity(3),
        None,
    )?
    .with_guards(vec![("geodesic pole g r^2 - f^2".to_string(), guard)]);
    Ok(finish(
        "geodesic_homogeneous",
        params.to_vec(),
        Pieces {
            system,
            initial: vec![0.0, 10.0, 0.0],
            monitors,
            preset: preset_label,
        },
    ))
}

// -------------------------------------------------------------------------------
// Scalar multiplier equations
// -------------------------------------------------------------------------------

/// Evaluate the system-specific scalar first-order PDE that the auxiliary
/// multipliers must satisfy, at a point.
///
/// * `chaplygin_sleigh`, `skate`, `axis_particle`: `lambdas` are the chart
///   multipliers (lambda2, lambda3) over x1..x3;
/// * `gantmacher`: `lambdas` are (lambda3, lambda4) over x1..x4 (internally
///   rescaled by x1^2 + x2^2);
/// * `suslov`: `lambdas` are the multiplier functions (mu1, mu2) over the
///   Poisson-sphere coordinates (x1..x3 read as gamma1..gamma3), and `x` is
///   a point of that sphere.
///
/// The residual vanishes exactly where the general transported-multiplier
/// residual of the corresponding system vanishes, up to a positive factor
/// (frame determinant, mass, or the chart Jacobian sin x3).
pub fn multiplier_pde_residual(
    name: &str,
    lambdas: &[Expr],
    overrides: &[(String, f64)],
    x: &[f64],
) -> Result<f64> {
    let desc = descriptor(name)?;
    let params = resolve_params(&desc.params, overrides)?;
    let refs: Vec<(&str, f64)> = params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    let env = Env::with_params(x, &refs);
    let need = |want: usize| -> Result<()> {
        if lambdas.len() != want {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "`{name}` multiplier equation needs {want} expressions, got {}",
                    lambdas.len()
                ),
            });
        }
        Ok(())
    };
    match name {
        "chaplygin_sleigh" => {
            need(2)?;
            let (l2, l3) = (&lambdas[0], &lambdas[1]);
            let (m, ic, eps) = (value(&params, "m"), value(&params, "ic"), value(&params, "eps"));
            let j = ic + eps * eps * m;
            let sx = x[0].sin();
            let cx = x[0].cos();
            Ok(sx * (j * l3.diff(2).eval(&env)? + eps * m * l2.diff(1).eval(&env)?)
                + cx * (j * l3.diff(1).eval(&env)? - eps * m * l2.diff(2).eval(&env)?)
                - m * (l2.diff(0).eval(&env)? - eps * l3.eval(&env)?))
        }
        "skate" => {
            need(2)?;
            let (l2, l3) = (&lambdas[0], &lambdas[1]);
            let (m, ic) = (value(&params, "m"), value(&params, "ic"));
            let sx = x[0].sin();
            let cx = x[0].cos();
            Ok(ic * (sx * l3.diff(2).eval(&env)? + cx * l3.diff(1).eval(&env)?)
                - m * l2.diff(0).eval(&env)?)
        }
        "axis_particle" => {
            need(2)?;
            let (l2, l3) = (&lambdas[0], &lambdas[1]);
            let sx = x[0].sin();
            let cx = x[0].cos();
            Ok(sx * l3.diff(2).eval(&env)? + cx * l3.diff(1).eval(&env)?
                - l2.diff(0).eval(&env)?)
        }
        "gantmacher" => {
            need(2)?;
            let s = pe("x1^2 + x2^2");
            let nu3 = Expr::div(lambdas[0].clone(), s.clone());
            let nu4 = Expr::div(lambdas[1].clone(), s);
            Ok(x[1] * nu3.diff(2).eval(&env)? + x[0] * nu3.diff(3).eval(&env)?
                + x[1] * nu4.diff(0).eval(&env)?
                - x[0] * nu4.diff(1).eval(&env)?)
        }
        "suslov" => {
            need(2)?;
            let (mu1, mu2) = (&lambdas[0], &lambdas[1]);
            Ok(x[2] * (mu1.diff(1).eval(&env)? - mu2.diff(0).eval(&env)?)
                - x[1] * mu1.diff(2).eval(&env)?
                + x[0] * mu2.diff(2).eval(&env)?)
        }
        other => Err(DescartesError::InconsistentInput {
            message: format!("no scalar multiplier equation catalogued for `{other}`"),
        }),
    }
}

// -------------------------------------------------------------------------------
// Reference solutions and the substitution gate
// -------------------------------------------------------------------------------

type StateFn = Box<dyn Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync>;
type MuFn = Box<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// A closed-form solution t -> (x, v), optionally with its reaction
/// multipliers t -> mu (which routes the gate through the classical
/// second-order equations instead of the first-order field).
pub struct ReferenceSolution {
    pub label: String,
    pub notes: String,
    pub span: (f64, f64),
    state: StateFn,
    mu: Option<MuFn>,
}

impl ReferenceSolution {
    pub fn state_at(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        (self.state)(t)
    }

    pub fn multipliers_at(&self, t: f64) -> Option<Vec<f64>> {
        self.mu.as_ref().map(|f| f(t))
    }
}

impl std::fmt::Debug for ReferenceSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReferenceSolution")
            .field("label", &self.label)
            .field("span", &self.span)
            .finish_non_exhaustive()
    }
}

/// Outcome of running a reference solution through the substitution gate.
#[derive(Debug, Clone)]
pub struct GateReport {
    /// max |d/dt x_ref - v_ref| by five-point finite differences.
    pub max_state_residual: f64,
    /// max residual of the equations of motion: either |v_ref - v(x_ref)|
    /// against the first-order field, or the classical residual with the
    /// reference multipliers and finite-difference accelerations.
    pub max_equation_residual: f64,
    /// Both residuals below the substitution-gate tolerance.
    pub verified: bool,
    pub note: String,
}

/// A reference solution together with its gate verdict. Unverified entries
/// are returned too (marked), so negative controls stay visible; they must
/// never be used as ground truth.
#[derive(Debug)]
pub struct VerifiedReference {
    pub reference: ReferenceSolution,
    pub gate: GateReport,
}

/// Run a reference solution through the substitution gate against a system.
pub fn gate_reference(sys: &ConstraintSystem, r: &ReferenceSolution) -> Result<GateReport> {
    let h = 1e-3;
    let samples = 200;
    let (t0, t1) = r.span;
    let lo = t0 + 2.0 * h;
    let hi = t1 - 2.0 * h;
    let mut max_state: f64 = 0.0;
    let mut max_eq: f64 = 0.0;
    for i in 0..samples {
        let t = lo + (hi - lo) * (i as f64) / ((samples - 1) as f64);
        let (x, v) = r.state_at(t);
        let n = x.len();
        // Five-point derivative of the state.
        let stencil: Vec<(Vec<f64>, Vec<f64>)> = [-2.0, -1.0, 1.0, 2.0]
            .iter()
            .map(|k| r.state_at(t + k * h))
            .collect();
        for k in 0..n {
            let d = (-stencil[3].0[k] + 8.0 * stencil[2].0[k] - 8.0 * stencil[1].0[k]
                + stencil[0].0[k])
                / (12.0 * h);
            max_state = max_state.max((d - v[k]).abs());
        }
        // A formula that wanders out of the system's domain (guard zone,
        // square-root boundary, singular frame) cannot pass the gate; that is
        // a verdict, not an error.
        let eq = match r.multipliers_at(t) {
            Some(mu) => {
                // Classical route: finite-difference accelerations.
                let mut acc = vec![0.0; n];
                for k in 0..n {
                    acc[k] = (-stencil[3].1[k] + 8.0 * stencil[2].1[k] - 8.0 * stencil[1].1[k]
                        + stencil[0].1[k])
                        / (12.0 * h);
                }
                classical_residual(sys, &x, &v, &acc, &mu)
                    .map(|res| res.iter().fold(0.0_f64, |a, rk| a.max(rk.abs())))
            }
            None => {
                // First-order route: the state must ride the field.
                sys.velocity(&x).map(|field| {
                    field
                        .iter()
                        .zip(&v)
                        .fold(0.0_f64, |a, (fk, vk)| a.max((fk - vk).abs()))
                })
            }
        };
        match eq {
            Ok(e) => max_eq = max_eq.max(e),
            Err(_) => {
                max_eq = f64::INFINITY;
                break;
            }
        }
    }
    let verified = max_state < tolerances::SUBSTITUTION_GATE
        && max_eq < tolerances::SUBSTITUTION_GATE;
    Ok(GateReport {
        max_state_residual: max_state,
        max_equation_residual: max_eq,
        verified,
        note: if verified {
            "substitution gate passed".to_string()
        } else {
            "failed verbatim substitution; excluded from verification".to_string()
        },
    })
}

/// Closed-form reference solutions of a catalog system (possibly none),
/// each already run through the substitution gate.
pub fn reference_solutions(
    name: &str,
    overrides: &[(String, f64)],
) -> Result<Vec<VerifiedReference>> {
    match name {
        "chaplygin_sleigh" => sleigh_references(overrides),
        "skate" => skate_references(overrides),
        "gantmacher" => gantmacher_references(overrides),
        "axis_particle" => axis_references(overrides),
        "suslov" | "kepler_kummer" | "geodesic_homogeneous" => Ok(Vec::new()),
        other => Err(unknown_system(other)),
    }
}

/// First verified reference state of a system at time t (error if the system
/// has no gated reference).
pub fn reference_state(
    name: &str,
    overrides: &[(String, f64)],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let refs = reference_solutions(name, overrides)?;
    refs.iter()
        .find(|r| r.gate.verified)
        .map(|r| r.reference.state_at(t))
        .ok_or_else(|| DescartesError::InconsistentInput {
            message: format!("`{name}` has no gate-verified reference solution"),
        })
}

fn sleigh_references(overrides: &[(String, f64)]) -> Result<Vec<VerifiedReference>> {
    let built = build_system("chaplygin_sleigh", &LambdaSpec::Preset("inertial".into()), overrides)?;
    let (m, ic, eps, c, c0) = (
        value(&built.params, "m"),
        value(&built.params, "ic"),
        value(&built.params, "eps"),
        value(&built.params, "c"),
        value(&built.params, "c0"),
    );
    let j = ic + eps * eps * m;
    let q = (m / j).sqrt();
    let x10 = built.initial[0];
    let (y0, z0) = (built.initial[1], built.initial[2]);
    let theta0 = q * eps * x10 + c0;
    let a = eps * q * q * c; // heading relaxation rate
    let u0 = theta0.sin().atanh();
    let theta = move |t: f64| -> f64 {
        if a == 0.0 {
            theta0
        } else {
            (a * t + u0).tanh().asin()
        }
    };
    let x1_of_t = move |t: f64| -> f64 {
        if eps == 0.0 {
            x10 + c * q * c0.cos() * t
        } else {
            (theta(t) - c0) / (q * eps)
        }
    };
    let vel = move |t: f64| -> [f64; 3] {
        let th = theta(t);
        let x1 = x1_of_t(t);
        let (l2, l3) = (c * th.sin(), c * q * th.cos());
        [
            l3,
            l2 * x1.cos() - eps * l3 * x1.sin(),
            l2 * x1.sin() + eps * l3 * x1.cos(),
        ]
    };
    let state: StateFn = Box::new(move |t: f64| {
        let v = vel(t);
        let y = y0
            + adaptive_simpson(&|s| Ok(vel(s)[1]), 0.0, t, 1e-12)
                .expect("smooth quadrature converges");
        let z = z0
            + adaptive_simpson(&|s| Ok(vel(s)[2]), 0.0, t, 1e-12)
                .expect("smooth quadrature converges");
        (vec![x1_of_t(t), y, z], v.to_vec())
    });
    let reference = ReferenceSolution {
        label: "inertial".to_string(),
        notes: "heading angle relaxes along a gudermannian; translation by quadrature"
            .to_string(),
        span: (0.0, 5.0),
        state,
        mu: None,
    };
    let gate = gate_reference(&built.system, &reference)?;
    Ok(vec![VerifiedReference { reference, gate }])
}

fn skate_references(overrides: &[(String, f64)]) -> Result<Vec<VerifiedReference>> {
    let built = build_system("skate", &LambdaSpec::Preset("classical".into()), overrides)?;
    let (m, g, c0, c1) = (
        value(&built.params, "m"),
        value(&built.params, "g"),
        value(&built.params, "c0"),
        value(&built.params, "c1"),
    );
    let (x10, x20, x30) = (built.initial[0], built.initial[1], built.initial[2]);
    let state: StateFn = Box::new(move |t: f64| {
        let x1 = x10 + c0 * t;
        let x2 = x20 - g / (4.0 * c0 * c0) * ((2.0 * x1).cos() - (2.0 * x10).cos())
            + c1 / c0 * (x1.sin() - x10.sin());
        let x3 = x30 + g / (2.0 * c0) * t
            - g / (4.0 * c0 * c0) * ((2.0 * x1).sin() - (2.0 * x10).sin())
            - c1 / c0 * (x1.cos() - x10.cos());
        let d = g * x1.sin() / c0 + c1;
        (vec![x1, x2, x3], vec![c0, d * x1.cos(), d * x1.sin()])
    });
    let mu: MuFn = Box::new(move |t: f64| {
        let x1 = x10 + c0 * t;
        vec![-m * (2.0 * g * x1.sin() + c0 * c1)]
    });
    let reference = ReferenceSolution {
        label: "classical".to_string(),
        notes: "closed-form motion under the in-plane force, with reaction multiplier"
            .to_string(),
        span: (0.0, 5.0),
        state,
        mu: Some(mu),
    };
    let gate = gate_reference(&built.system, &reference)?;
    Ok(vec![VerifiedReference { reference, gate }])
}

fn gantmacher_references(overrides: &[(String, f64)]) -> Result<Vec<VerifiedReference>> {
    let built = build_system("gantmacher", &LambdaSpec::Default, overrides)?;
    let (g, h, nu3) = (
        value(&built.params, "g"),
        value(&built.params, "h"),
        value(&built.params, "c3"),
    );
    let r = (built.initial[0] * built.initial[0] + built.initial[1] * built.initial[1]).sqrt();
    let alpha0 = built.initial[1].atan2(built.initial[0]);
    let (u30, u40) = (built.initial[2], built.initial[3]);
    let nu4_0 = (2.0 * (h - g * u30) / (r * r) - nu3 * nu3).sqrt();
    let k = nu4_0 * r - (g / nu3) * alpha0.cos();

    // Corrected closed form (satisfies the classical equations).
    let state: StateFn = {
        let (g, nu3, k, r, alpha0, u30, u40) = (g, nu3, k, r, alpha0, u30, u40);
        Box::new(move |t: f64| {
            let al = alpha0 + nu3 * t;
            let w = (g / nu3) * al.cos() + k;
            let x = vec![
                r * al.cos(),
                r * al.sin(),
                u30 + g / (2.0 * nu3 * nu3) * (al.sin().powi(2) - alpha0.sin().powi(2))
                    - k / nu3 * (al.cos() - alpha0.cos()),
                u40 + g / (2.0 * nu3) * t
                    + g / (4.0 * nu3 * nu3) * ((2.0 * al).sin() - (2.0 * alpha0).sin())
                    + k / nu3 * (al.sin() - alpha0.sin()),
            ];
            let v = vec![
                -r * nu3 * al.sin(),
                r * nu3 * al.cos(),
                w * al.sin(),
                w * al.cos(),
            ];
            (x, v)
        })
    };
    let mu: MuFn = {
        let (g, nu3, k, r, alpha0) = (g, nu3, k, r, alpha0);
        Box::new(move |t: f64| {
            let al = alpha0 + nu3 * t;
            let w = (g / nu3) * al.cos() + k;
            vec![-nu3 * nu3, (g * al.cos() + w * nu3) / r]
        })
    };
    let corrected = ReferenceSolution {
        label: "g30".to_string(),
        notes: "circular rod rotation with quadrature-closed midpoint drift".to_string(),
        span: (0.0, 5.0),
        state,
        mu: Some(mu),
    };
    let gate_ok = gate_reference(&built.system, &corrected)?;

    // Alternate closed form with a secular term in u3 and a periodic u4.
    // It does not satisfy the equations of motion; kept as a marked negative
    // control for the substitution gate.
    let cbad = k / (2.0 * g).sqrt();
    let state_bad: StateFn = {
        let (g, nu3, r, alpha0, u30, h, cbad) = (g, nu3, r, alpha0, u30, h, cbad);
        Box::new(move |t: f64| {
            let al = alpha0 + nu3 * t;
            let sg2 = (2.0 * g).sqrt();
            let x = vec![
                r * al.cos(),
                r * al.sin(),
                u30 + g / (2.0 * nu3) * t - g / (4.0 * nu3 * nu3) * (2.0 * al).sin()
                    - sg2 * cbad / nu3 * al.cos(),
                -h + r * r * nu3 * nu3 / (2.0 * g)
                    + (g.sqrt() / (2.0_f64.sqrt() * nu3) * al.sin() + cbad).powi(2),
            ];
            let v = vec![
                -r * nu3 * al.sin(),
                r * nu3 * al.cos(),
                g / (2.0 * nu3) - g / (2.0 * nu3) * (2.0 * al).cos() + sg2 * cbad * al.sin(),
                2.0 * (g.sqrt() / (2.0_f64.sqrt() * nu3) * al.sin() + cbad)
                    * (g.sqrt() / 2.0_f64.sqrt())
                    * al.cos(),
            ];
            (x, v)
        })
    };
    let alternate = ReferenceSolution {
        label: "g30_alternate".to_string(),
        notes: "alternate closed form (secular drift in the wrong coordinate); negative \
                control, excluded from verification"
            .to_string(),
        span: (0.0, 5.0),
        state: state_bad,
        mu: None,
    };
    let gate_bad = gate_reference(&built.system, &alternate)?;
    Ok(vec![
        VerifiedReference {
            reference: corrected,
            gate: gate_ok,
        },
        VerifiedReference {
            reference: alternate,
            gate: gate_bad,
        },
    ])
}

fn axis_references(overrides: &[(String, f64)]) -> Result<Vec<VerifiedReference>> {
    let built = build_system("axis_particle", &LambdaSpec::Default, overrides)?;
    let (m, c1, c2) = (
        value(&built.params, "m"),
        value(&built.params, "c1"),
        value(&built.params, "c2"),
    );
    let (x10, y0, z0) = (built.initial[0], built.initial[1], built.initial[2]);
    let state: StateFn = Box::new(move |t: f64| {
        let x1 = x10 + c1 * t;
        (
            vec![
                x1,
                y0 + c2 / c1 * (x1.sin() - x10.sin()),
                z0 - c2 / c1 * (x1.cos() - x10.cos()),
            ],
            vec![c1, c2 * x1.cos(), c2 * x1.sin()],
        )
    });
    let mu: MuFn = Box::new(move |_t: f64| vec![-m * c1 * c2]);
    let reference = ReferenceSolution {
        label: "helical".to_string(),
        notes: "uniform rotation of the axis; helical translation".to_string(),
        span: (0.0, 5.0),
        state,
        mu: Some(mu),
    };
    let gate = gate_reference(&built.system, &reference)?;
    Ok(vec![VerifiedReference { reference, gate }])
}
