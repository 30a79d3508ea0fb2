//! Inverse problem of dynamics: synthesize the force field (or potential)
//! under which a prescribed family of orbits is traced.
//!
//! Routes:
//!
//! * [`dainelli_force_2d`] — the classical planar construction for one orbit
//!   function f(x, y) = c and a speed law λ;
//! * [`dainelli_force`] — the N-dimensional generalization: the orbit field
//!   v = λ{f_1, …, f_{N−1}, ∗} must be a motion, so the force is the
//!   covariant rate of v along itself, F = ∂(½‖v‖²) + ι_v dσ with σ = G·v;
//! * [`exactness_check`] — the reaction one-form ρ = ι_v dσ is closed iff F
//!   is a potential field; the scalar h with dh = ρ is recovered by line
//!   integration ([`line_integrate_h`]) and U = ½‖v‖² + h;
//! * [`joukovski_potential`] — orbits admitting an orthogonal surface family
//!   S = c: v = ν G⁻¹∂S, with the same exactness certificate;
//! * [`joukovski_orthogonal_coords`] — the coordinate-aligned special case for
//!   diagonal metrics, with symbolic antidifferentiation;
//! * [`stackel_potential`] — separable (Stäckel) families;
//! * Bertrand conic families: [`BertrandProfile`] (the H_j quadrature and its
//!   first-order ODE residual), [`bertrand_u_term`], and the circular-family
//!   potential [`BertrandCircular`].

use crate::error::{DescartesError, Result};
use crate::exprlang::{sum, Env, Expr};
use crate::geometry::{
    d_one_form, det_expr, grad_covector, nambu_bracket, MetricField, OneFormField,
};
use crate::tolerances;

// -------------------------------------------------------------------------------
// Quadrature
// -------------------------------------------------------------------------------

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`. Non-convergence (recursion depth exhausted before the local error
/// estimate drops below the budget) is an error, never a silent result.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(DescartesError::NonConvergence {
            what: format!(
                "adaptive Simpson exhausted recursion depth on [{a}, {b}] (error estimate {:e})",
                delta.abs() / 15.0
            ),
        });
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

// -------------------------------------------------------------------------------
// Orbit families and synthesized forces
// -------------------------------------------------------------------------------

/// An (N−1)-parametric family of orbits f_j(x) = c_j with a speed law λ(x)
/// and the kinetic metric of the mechanical system.
#[derive(Debug, Clone)]
pub struct OrbitFamily {
    dim: usize,
    fs: Vec<Expr>,
    lambda: Expr,
    metric: MetricField,
}

impl OrbitFamily {
    /// Family on flat space (identity metric).
    pub fn new(dim: usize, fs: Vec<Expr>, lambda: Expr) -> Result<Self> {
        Self::with_metric(dim, fs, lambda, MetricField::identity(dim))
    }

    pub fn with_metric(
        dim: usize,
        fs: Vec<Expr>,
        lambda: Expr,
        metric: MetricField,
    ) -> Result<Self> {
        if fs.len() + 1 != dim {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "an orbit family in dimension {dim} needs {} functions, got {}",
                    dim - 1,
                    fs.len()
                ),
            });
        }
        if metric.dim() != dim {
            return Err(DescartesError::InconsistentInput {
                message: format!("metric dimension {} does not match {dim}", metric.dim()),
            });
        }
        Ok(OrbitFamily {
            dim,
            fs,
            lambda,
            metric,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn functions(&self) -> &[Expr] {
        &self.fs
    }

    pub fn lambda(&self) -> &Expr {
        &self.lambda
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    /// The orbit field v = λ{f_1, …, f_{N−1}, ∗}: it annihilates every df_j,
    /// so its integral curves stay on the family.
    pub fn velocity_sym(&self) -> Result<Vec<Expr>> {
        let bracket = nambu_bracket(&self.fs, self.dim)?;
        Ok(bracket
            .into_iter()
            .map(|c| Expr::mul(self.lambda.clone(), c))
            .collect())
    }

    /// Non-degeneracy of the family at a point: the (N−1)-minors of the
    /// Jacobian (the components of the bracket) must not all vanish.
    pub fn check_independence(&self, x: &[f64]) -> Result<()> {
        let bracket = nambu_bracket(&self.fs, self.dim)?;
        let env = Env::point(x);
        let mut max = 0.0_f64;
        for c in &bracket {
            max = max.max(c.eval(&env)?.abs());
        }
        if max < tolerances::FRAME_SINGULAR_REL.sqrt() {
            return Err(DescartesError::InconsistentInput {
                message: format!("orbit functions are dependent at {x:?} (all minors ≈ 0)"),
            });
        }
        Ok(())
    }

    pub fn orbit_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let env = Env::point(x);
        self.fs.iter().map(|f| f.eval(&env)).collect()
    }
}

/// A synthesized force covector with its two-part decomposition:
/// F = ∂(½‖v‖²) + ι_v dσ (gradient part + reaction part).
#[derive(Debug, Clone)]
pub struct ForceField {
    pub components: Vec<Expr>,
    pub gradient_part: Vec<Expr>,
    pub reaction_part: Vec<Expr>,
    pub velocity: Vec<Expr>,
}

impl ForceField {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let env = Env::point(x);
        self.components.iter().map(|c| c.eval(&env)).collect()
    }
}

fn force_from_velocity(metric: &MetricField, v: Vec<Expr>) -> ForceField {
    let n = v.len();
    let half_speed = Expr::half(metric.inner(&v, &v));
    let gradient_part = grad_covector(&half_speed, n);
    let sigma = OneFormField::new(metric.lower(&v));
    let reaction = d_one_form(&sigma).contract(&v);
    let components = (0..n)
        .map(|k| Expr::add(gradient_part[k].clone(), reaction.comps[k].clone()))
        .collect();
    ForceField {
        components,
        gradient_part,
        reaction_part: reaction.comps,
        velocity: v,
    }
}

/// The most general position-dependent force generating an orbit family:
/// F = ∂(½‖v‖²) + ι_v dσ with v the orbit field and σ = G·v.
pub fn dainelli_force(family: &OrbitFamily) -> Result<ForceField> {
    Ok(force_from_velocity(&family.metric, family.velocity_sym()?))
}

/// The planar special case, assembled from the classical closed formulas
/// (force components in terms of the bracket {f, g} = f_x g_y − f_y g_x).
/// The decomposition record is the equivalent gradient-plus-reaction split
/// with reaction −λ(∂_x(λ f_x) + ∂_y(λ f_y)) df.
pub fn dainelli_force_2d(f: &Expr, lambda: &Expr) -> ForceField {
    let bracket = |a: &Expr, b: &Expr| {
        Expr::sub(
            Expr::mul(a.diff(0), b.diff(1)),
            Expr::mul(a.diff(1), b.diff(0)),
        )
    };
    let fx = f.diff(0);
    let fy = f.diff(1);
    let l2 = Expr::square(lambda.clone());
    let fl = bracket(f, lambda);
    // F_x = −λ²{f, f_y} − λ{f, λ} f_y,  F_y = λ²{f, f_x} + λ{f, λ} f_x.
    let f_x = Expr::neg(Expr::add(
        Expr::mul(l2.clone(), bracket(f, &fy)),
        Expr::mul(Expr::mul(lambda.clone(), fl.clone()), fy.clone()),
    ));
    let f_y = Expr::add(
        Expr::mul(l2.clone(), bracket(f, &fx)),
        Expr::mul(Expr::mul(lambda.clone(), fl), fx.clone()),
    );
    let v = vec![
        Expr::neg(Expr::mul(lambda.clone(), fy.clone())),
        Expr::mul(lambda.clone(), fx.clone()),
    ];
    let half_speed = Expr::half(Expr::add(
        Expr::square(v[0].clone()),
        Expr::square(v[1].clone()),
    ));
    let gradient_part = grad_covector(&half_speed, 2);
    let mu = Expr::add(
        Expr::mul(lambda.clone(), fx.clone()).diff(0),
        Expr::mul(lambda.clone(), fy.clone()).diff(1),
    );
    let scale = Expr::neg(Expr::mul(lambda.clone(), mu));
    let reaction_part = vec![
        Expr::mul(scale.clone(), fx),
        Expr::mul(scale, fy),
    ];
    ForceField {
        components: vec![f_x, f_y],
        gradient_part,
        reaction_part,
        velocity: v,
    }
}

// -------------------------------------------------------------------------------
// Exactness (potential) certificates
// -------------------------------------------------------------------------------

/// Result of testing a reaction one-form for closedness on a grid.
#[derive(Debug, Clone)]
pub struct ExactnessCertificate {
    /// The reaction one-form ρ = ι_v dσ (componentwise Exprs).
    pub rho: Vec<Expr>,
    /// max over grid points and index pairs of |∂_p ρ_q − ∂_q ρ_p|.
    pub max_closedness_residual: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Closedness of the reaction one-form of an orbit family on a grid. When it
/// passes, the synthesized force is a potential field with
/// U = ½‖v‖² + h, dh = ρ (h recoverable by [`line_integrate_h`]).
pub fn exactness_check(
    family: &OrbitFamily,
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<ExactnessCertificate> {
    let force = dainelli_force(family)?;
    closedness_certificate(force.reaction_part, grid, tol)
}

fn closedness_certificate(
    rho: Vec<Expr>,
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<ExactnessCertificate> {
    let n = rho.len();
    let d = d_one_form(&OneFormField::new(rho.clone()));
    let mut max = 0.0_f64;
    for x in grid {
        let env = Env::point(x);
        for p in 0..n {
            for q in (p + 1)..n {
                max = max.max(d.entry(p, q).eval(&env)?.abs());
            }
        }
    }
    Ok(ExactnessCertificate {
        rho,
        max_closedness_residual: max,
        samples: grid.len(),
        tolerance: tol,
        pass: max < tol,
    })
}

/// Recover h(target) − h(base) for a closed one-form ρ by line integration
/// along the coordinate-aligned path that adjusts one coordinate at a time
/// (coordinate k varies with coordinates < k already at the target).
pub fn line_integrate_h(rho: &[Expr], base: &[f64], target: &[f64]) -> Result<f64> {
    let n = rho.len();
    let mut point = base.to_vec();
    let mut total = 0.0;
    for k in 0..n {
        let (a, b) = (base[k], target[k]);
        let comp = &rho[k];
        let probe = point.clone();
        total += adaptive_simpson(
            &|s| {
                let mut p = probe.clone();
                p[k] = s;
                comp.eval(&Env::point(&p))
            },
            a,
            b,
            tolerances::QUADRATURE_TOL,
        )?;
        point[k] = target[k];
    }
    Ok(total)
}

// -------------------------------------------------------------------------------
// Potentials
// -------------------------------------------------------------------------------

/// A synthesized potential with its verification artifacts.
#[derive(Debug, Clone)]
pub struct PotentialResult {
    pub potential: Expr,
    pub route: &'static str,
    /// ∂U componentwise (the force covector of the potential).
    pub force: Vec<Expr>,
    pub certificate: Option<ExactnessCertificate>,
    /// Route-specific named auxiliaries (e.g. ν² for the orthogonal-
    /// coordinate route, the A^k coefficients for the Stäckel route).
    pub extras: Vec<(String, Expr)>,
}

/// How the speed factor ν of the Joukovski route is supplied.
#[derive(Debug, Clone)]
pub enum JoukovskiMode {
    /// Arbitrary ν with a user-proposed h (a function of the orbit
    /// constants, written in the coordinates); valid iff the certificate
    /// passes, and then U = ½‖v‖² + h.
    General { nu: Expr, h: Expr },
    /// ν = Φ′(S) (Φ an expression in x1, read as the S-slot): the associated
    /// one-form is exact, no condition applies, and U = ½‖∂Φ(S)‖² − h₀.
    ExactNu { phi: Expr, h0: f64 },
}

/// Potential for an orbit family that admits an orthogonal surface family
/// S(x) = c: the orbit field is v = ν G⁻¹∂S.
///
/// Preconditions: (∂S, ∂f_j)_G = 0 at every grid point (checked). In general
/// mode the certificate additionally verifies dh = ι_v dσ on the grid, which
/// is this chart's form of the closedness condition.
pub fn joukovski_potential(
    family: &OrbitFamily,
    s: &Expr,
    mode: &JoukovskiMode,
    grid: &[Vec<f64>],
) -> Result<PotentialResult> {
    let n = family.dim;
    let metric = &family.metric;
    let grad_s_vec = metric.grad_vector(s);
    // Orthogonality of the surfaces to the orbits.
    for x in grid {
        let env = Env::point(x);
        for (j, f) in family.fs.iter().enumerate() {
            let mut ip = 0.0;
            for k in 0..n {
                ip += f.diff(k).eval(&env)? * grad_s_vec[k].eval(&env)?;
            }
            if ip.abs() > tolerances::SURFACE_ORTHOGONALITY {
                return Err(DescartesError::InconsistentInput {
                    message: format!(
                        "surface is not orthogonal to orbit function {} at {x:?} \
                         (inner product {ip:e})",
                        j + 1
                    ),
                });
            }
        }
    }
    let (nu, u_tail, route) = match mode {
        JoukovskiMode::General { nu, h } => (nu.clone(), h.clone(), "joukovski"),
        JoukovskiMode::ExactNu { phi, h0 } => (
            phi.diff(0).substitute_coords(&[s.clone()]),
            Expr::Num(-h0),
            "joukovski-exact-nu",
        ),
    };
    let v: Vec<Expr> = grad_s_vec
        .iter()
        .map(|c| Expr::mul(nu.clone(), c.clone()))
        .collect();
    let force = force_from_velocity(metric, v.clone());
    let potential = Expr::add(Expr::half(metric.inner(&v, &v)), u_tail);
    let force_of_u = grad_covector(&potential, n);
    // Certificate: the machinery force coincides with ∂U on the grid.
    let mut max = 0.0_f64;
    for x in grid {
        let env = Env::point(x);
        for k in 0..n {
            max = max
                .max((force.components[k].eval(&env)? - force_of_u[k].eval(&env)?).abs());
        }
    }
    let certificate = ExactnessCertificate {
        rho: force.reaction_part.clone(),
        max_closedness_residual: max,
        samples: grid.len(),
        tolerance: tolerances::SUBSTITUTION_GATE,
        pass: max < tolerances::SUBSTITUTION_GATE,
    };
    if !certificate.pass && matches!(mode, JoukovskiMode::General { .. }) {
        return Err(DescartesError::InconsistentInput {
            message: format!(
                "proposed h does not match the reaction form (residual {max:e}); \
                 the closedness condition fails for this nu"
            ),
        });
    }
    Ok(PotentialResult {
        potential,
        route,
        force: force_of_u,
        certificate: Some(certificate),
        extras: vec![("nu".to_string(), nu)],
    })
}

/// Symbolic antiderivative of `e` in coordinate `var`, for integrands that
/// are (sums of) products of a var-free factor and a power of the variable.
/// Returns None when the structure does not separate.
pub fn antiderivative(e: &Expr, var: usize) -> Option<Expr> {
    use crate::exprlang::BinOp;
    match e {
        Expr::Bin(BinOp::Add, a, b) => Some(Expr::add(
            antiderivative(a, var)?,
            antiderivative(b, var)?,
        )),
        Expr::Bin(BinOp::Sub, a, b) => Some(Expr::sub(
            antiderivative(a, var)?,
            antiderivative(b, var)?,
        )),
        Expr::Neg(inner) => antiderivative(inner, var).map(Expr::neg),
        _ => {
            let (coeff, k) = separate_power(e, var)?;
            if (k + 1.0).abs() < 1e-12 {
                return None; // would be a logarithm; out of scope for this helper
            }
            let power = if k == 0.0 {
                Expr::Coord(var)
            } else {
                Expr::div(
                    Expr::powc(Expr::Coord(var), k + 1.0),
                    Expr::Num(k + 1.0),
                )
            };
            Some(Expr::mul(coeff, power))
        }
    }
}

/// Factor `e` as coeff · x_var^k with coeff free of x_var, when possible.
fn separate_power(e: &Expr, var: usize) -> Option<(Expr, f64)> {
    use crate::exprlang::BinOp;
    if !e.depends_on(var) {
        return Some((e.clone(), 0.0));
    }
    match e {
        Expr::Coord(v) if *v == var => Some((Expr::Num(1.0), 1.0)),
        Expr::Neg(inner) => {
            let (c, k) = separate_power(inner, var)?;
            Some((Expr::neg(c), k))
        }
        Expr::Bin(BinOp::Mul, a, b) => {
            let (ca, ka) = separate_power(a, var)?;
            let (cb, kb) = separate_power(b, var)?;
            Some((Expr::mul(ca, cb), ka + kb))
        }
        Expr::Bin(BinOp::Div, a, b) => {
            let (ca, ka) = separate_power(a, var)?;
            let (cb, kb) = separate_power(b, var)?;
            Some((Expr::div(ca, cb), ka - kb))
        }
        Expr::Pow(base, k) => {
            if matches!(base.as_ref(), Expr::Coord(v) if *v == var) {
                Some((Expr::Num(1.0), *k))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Potential for coordinate-aligned orbits x^j = c_j (j < N) on a diagonal
/// metric, the orthogonal family being the level sets of x^N:
///
/// ```text
/// U = (1/G_NN) (g(x^N) + Σ_j ∫ h ∂G_NN/∂x^j dx^j),
/// ν² = 2 g(x^N) − 2 G_NN h + Σ_j 2 ∫ h ∂G_NN/∂x^j dx^j.
/// ```
///
/// `h` may depend on x^1..x^{N−1} and `g` on x^N only. The ∫ terms are built
/// by symbolic antidifferentiation; an error is returned when the integrand
/// does not separate.
pub fn joukovski_orthogonal_coords(
    metric: &MetricField,
    h: &Expr,
    g: &Expr,
) -> Result<PotentialResult> {
    let n = metric.dim();
    for j in 0..n {
        for k in 0..n {
            if j != k && !metric.entry(j, k).is_zero() {
                return Err(DescartesError::InconsistentInput {
                    message: "the orthogonal-coordinate route needs a diagonal metric"
                        .to_string(),
                });
            }
        }
    }
    if h.depends_on(n - 1) {
        return Err(DescartesError::InconsistentInput {
            message: format!("h must not depend on x{n}"),
        });
    }
    for j in 0..n - 1 {
        if g.depends_on(j) {
            return Err(DescartesError::InconsistentInput {
                message: format!("g must depend on x{n} only"),
            });
        }
    }
    let g_nn = metric.entry(n - 1, n - 1).clone();
    let mut terms = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let integrand = Expr::mul(h.clone(), g_nn.diff(j));
        let term = antiderivative(&integrand, j).ok_or_else(|| {
            DescartesError::InconsistentInput {
                message: format!(
                    "no symbolic antiderivative in x{} for `{integrand}`",
                    j + 1
                ),
            }
        })?;
        terms.push(term);
    }
    let total = sum(terms.iter().cloned());
    let potential = Expr::div(Expr::add(g.clone(), total.clone()), g_nn.clone());
    let nu_sq = Expr::add(
        Expr::sub(
            Expr::mul(Expr::Num(2.0), g.clone()),
            Expr::mul(Expr::Num(2.0), Expr::mul(g_nn, h.clone())),
        ),
        Expr::mul(Expr::Num(2.0), total),
    );
    let force = grad_covector(&potential, n);
    Ok(PotentialResult {
        potential,
        route: "joukovski-orthogonal",
        force,
        certificate: None,
        extras: vec![("nu_squared".to_string(), nu_sq)],
    })
}

/// Stäckel-type potential from the per-coordinate matrix φ (φ[k][j] is the
/// k-th coordinate entry of the j-th function, depending on x^{k+1} only),
/// profiles Ψ_k(x^{k+1}), constants α, an optional factor ν (an expression
/// in the coordinates; 1 when omitted) and the energy constant h₀:
///
/// ```text
/// U = ν² ({φ_1,…,φ_{N−1}, Ψ} / {φ_1,…,φ_{N−1}, φ_N} + α_1) − h₀.
/// ```
///
/// With ν = 1 and α_1 = h₀ this reduces to U = Σ_k A^k Ψ_k, the classical
/// separable form; the A^k are returned among the extras.
pub fn stackel_potential(
    phi: &[Vec<Expr>],
    psi: &[Expr],
    alpha: &[f64],
    nu: Option<&Expr>,
    h0: f64,
) -> Result<PotentialResult> {
    let n = psi.len();
    if phi.len() != n || phi.iter().any(|row| row.len() != n) || alpha.len() != n {
        return Err(DescartesError::InconsistentInput {
            message: format!("stackel data must be square of size {n}"),
        });
    }
    for (k, row) in phi.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            for other in 0..n {
                if other != k && e.depends_on(other) {
                    return Err(DescartesError::InconsistentInput {
                        message: format!(
                            "phi[{}][{}] must depend on x{} only",
                            k + 1,
                            j + 1,
                            k + 1
                        ),
                    });
                }
            }
        }
        if psi[k].max_coord().map(|c| c != k).unwrap_or(false) || (0..n).any(|o| o != k && psi[k].depends_on(o)) {
            return Err(DescartesError::InconsistentInput {
                message: format!("psi[{}] must depend on x{} only", k + 1, k + 1),
            });
        }
    }
    // Rows of the bracket determinant: gradients of φ_1..φ_{N−1}, then the
    // closing row (Ψ gradient for the numerator, φ_N gradient for the
    // denominator, e_k for the A^k coefficients).
    let upper: Vec<Vec<Expr>> = (0..n - 1)
        .map(|j| (0..n).map(|k| phi[k][j].clone()).collect())
        .collect();
    let with_last = |last: Vec<Expr>| -> Vec<Vec<Expr>> {
        let mut rows = upper.clone();
        rows.push(last);
        rows
    };
    let denom = det_expr(&with_last((0..n).map(|k| phi[k][n - 1].clone()).collect()));
    let numer = det_expr(&with_last(psi.to_vec()));
    let mut extras = Vec::new();
    for k in 0..n {
        let mut e_k = vec![Expr::Num(0.0); n];
        e_k[k] = Expr::Num(1.0);
        extras.push((
            format!("A{}", k + 1),
            Expr::div(det_expr(&with_last(e_k)), denom.clone()),
        ));
    }
    let ratio = Expr::div(numer, denom);
    let nu_sq = match nu {
        Some(e) => Expr::square(e.clone()),
        None => Expr::Num(1.0),
    };
    let potential = Expr::sub(
        Expr::mul(nu_sq, Expr::add(ratio, Expr::Num(alpha[0]))),
        Expr::Num(h0),
    );
    let force = grad_covector(&potential, n);
    Ok(PotentialResult {
        potential,
        route: "stackel",
        force,
        certificate: None,
        extras,
    })
}

// -------------------------------------------------------------------------------
// Bertrand conic families
// -------------------------------------------------------------------------------

/// The radial/angular profile H_j(τ) of the conic-family potential with
/// eccentricity b ≠ 0, evaluated by quadrature from τ = 0:
///
/// ```text
/// H_j(τ) = ξ_j(τ) (C_j − (2 K_j / b) ∫₀^τ (1+bτ')^j / ((1−τ'²) ξ_j(τ')) dτ'),
/// ξ_j(τ) = (1−τ)^{(j+1)/2 + (j+3)/(2b)} (1+τ)^{(j+1)/2 − (j+3)/(2b)}.
/// ```
#[derive(Debug, Clone, Copy)]
pub struct BertrandProfile {
    pub j: i32,
    pub b: f64,
    pub k_j: f64,
    pub c_j: f64,
}

/// The homogeneous factor ξ_j(τ).
pub fn bertrand_xi(j: i32, b: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if b == 0.0 {
        return Err(DescartesError::InconsistentInput {
            message: "xi_j needs nonzero eccentricity b".to_string(),
        });
    }
    let jf = f64::from(j);
    let p = (jf + 1.0) / 2.0 + (jf + 3.0) / (2.0 * b);
    let q = (jf + 1.0) / 2.0 - (jf + 3.0) / (2.0 * b);
    Ok((1.0 - tau).powf(p) * (1.0 + tau).powf(q))
}

fn check_tau(tau: f64) -> Result<()> {
    let lim = 1.0 - tolerances::ENDPOINT_INSET;
    if !(-lim..=lim).contains(&tau) {
        return Err(DescartesError::Domain {
            message: format!("tau = {tau} outside (−1+δ, 1−δ)"),
            at: "bertrand profile".to_string(),
        });
    }
    Ok(())
}

impl BertrandProfile {
    pub fn new(j: i32, b: f64, k_j: f64, c_j: f64) -> Result<Self> {
        if b == 0.0 {
            return Err(DescartesError::InconsistentInput {
                message: "the H_j route needs b ≠ 0 (use the circular route for b = 0)"
                    .to_string(),
            });
        }
        Ok(BertrandProfile { j, b, k_j, c_j })
    }

    /// H_j(τ) by adaptive quadrature.
    pub fn value(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let xi = bertrand_xi(self.j, self.b, tau)?;
        if self.k_j == 0.0 {
            return Ok(self.c_j * xi);
        }
        let (j, b) = (self.j, self.b);
        let integral = adaptive_simpson(
            &|t| {
                let x = bertrand_xi(j, b, t)?;
                Ok((1.0 + b * t).powi(j) / ((1.0 - t * t) * x))
            },
            0.0,
            tau,
            tolerances::QUADRATURE_TOL,
        )?;
        Ok(xi * (self.c_j - 2.0 * self.k_j / self.b * integral))
    }

    /// Residual of the defining first-order ODE,
    /// b(1−τ²)H′ + ((j+1)bτ + j + 3)H + 2K_j(1+bτ)^j, with H′ from a
    /// five-point finite difference on the quadrature output.
    pub fn ode_residual(&self, tau: f64) -> Result<f64> {
        let h = 1e-4;
        check_tau(tau - 2.0 * h)?;
        check_tau(tau + 2.0 * h)?;
        let hm2 = self.value(tau - 2.0 * h)?;
        let hm1 = self.value(tau - h)?;
        let hp1 = self.value(tau + h)?;
        let hp2 = self.value(tau + 2.0 * h)?;
        let dh = (-hp2 + 8.0 * hp1 - 8.0 * hm1 + hm2) / (12.0 * h);
        let hv = self.value(tau)?;
        let jf = f64::from(self.j);
        Ok(self.b * (1.0 - tau * tau) * dh
            + ((jf + 1.0) * self.b * tau + jf + 3.0) * hv
            + 2.0 * self.k_j * (1.0 + self.b * tau).powi(self.j))
    }
}

/// Closed form of H_{−2} for b ∉ {0, 1}:
/// C (1−τ)^{(1−b)/(2b)} / (1+τ)^{(1+b)/(2b)} − 2K / ((bτ+1)(1−b²)).
pub fn bertrand_h_m2_closed(b: f64, k: f64, c: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if b == 0.0 || (b - 1.0).abs() < 1e-12 {
        return Err(DescartesError::InconsistentInput {
            message: "closed form of H_{-2} needs b not in {0, 1}".to_string(),
        });
    }
    let hom = c * (1.0 - tau).powf((1.0 - b) / (2.0 * b))
        / (1.0 + tau).powf((1.0 + b) / (2.0 * b));
    Ok(hom - 2.0 * k / ((b * tau + 1.0) * (1.0 - b * b)))
}

/// One term U_j(r, τ) of the conic-family potential:
/// ½ r^{j+1} H_j(τ)(1 + b² + 2bτ) + K_j f^{j+1}/(j+1) for j ≠ −1
/// (K_j ln|f| for j = −1), with f = r(1 + bτ).
pub fn bertrand_u_term(profile: &BertrandProfile, r: f64, tau: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(DescartesError::Domain {
            message: format!("r = {r} must be positive"),
            at: "bertrand potential term".to_string(),
        });
    }
    let h = profile.value(tau)?;
    let b = profile.b;
    let f = r * (1.0 + b * tau);
    let angular = 1.0 + b * b + 2.0 * b * tau;
    let jf = f64::from(profile.j);
    let tail = if profile.j == -1 {
        profile.k_j * f.abs().ln()
    } else {
        profile.k_j * f.powf(jf + 1.0) / (jf + 1.0)
    };
    Ok(0.5 * r.powf(jf + 1.0) * h * angular + tail)
}

/// The b = 0 (circular family) potential:
/// U(r, τ) = Ψ(τ)/r² − (2/r²) ∫_{r_ref}^r h(ρ) ρ dρ, together with the speed
/// law λ²(r, τ) = 2h(r) − (4/r²) ∫ h ρ dρ + 2Ψ(τ)/r².
pub struct BertrandCircular {
    /// Ψ as an expression in x1 (read as τ).
    pub psi: Expr,
    /// h as an expression in x1 (read as r).
    pub h: Expr,
    pub r_ref: f64,
}

impl BertrandCircular {
    fn integral(&self, r: f64) -> Result<f64> {
        let h = &self.h;
        adaptive_simpson(
            &|s| Ok(h.eval(&Env::point(&[s]))? * s),
            self.r_ref,
            r,
            tolerances::QUADRATURE_TOL,
        )
    }

    pub fn potential(&self, r: f64, tau: f64) -> Result<f64> {
        if r <= 0.0 {
            return Err(DescartesError::Domain {
                message: format!("r = {r} must be positive"),
                at: "circular-family potential".to_string(),
            });
        }
        let psi = self.psi.eval(&Env::point(&[tau]))?;
        Ok(psi / (r * r) - 2.0 / (r * r) * self.integral(r)?)
    }

    /// Squared speed of the family member through (r, τ).
    pub fn speed_squared(&self, r: f64, tau: f64) -> Result<f64> {
        let psi = self.psi.eval(&Env::point(&[tau]))?;
        let hv = self.h.eval(&Env::point(&[r]))?;
        Ok(2.0 * hv - 4.0 / (r * r) * self.integral(r)? + 2.0 * psi / (r * r))
    }
}
