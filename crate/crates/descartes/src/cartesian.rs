//! The constraint-frame machinery: first-order velocity fields from linear
//! velocity constraints, structure matrices and transported multipliers.
//!
//! A system is posed on an N-dimensional configuration space with M given
//! constraint one-forms Ω_1..Ω_M. The frame is completed by N−M auxiliary
//! one-forms Ω_{M+1}..Ω_N and multiplier functions λ_{M+1}..λ_N; the
//! first-order field is
//!
//! ```text
//! v(x) = M(x)⁻¹ λ̃(x),   M[j][k] = Ω_j(∂_k),   λ̃ = (0,…,0, λ_{M+1},…,λ_N)ᵀ,
//! ```
//!
//! so that Ω_j(v) = 0 for the given constraints and Ω_j(v) = λ_j for the
//! auxiliary ones. Whether the integral curves of v are genuine motions of
//! the constrained mechanical system is a pointwise-checkable property of the
//! multipliers: the transported multipliers Λ_{M+1}..Λ_N (see
//! [`ConstraintSystem::lambda_vector`]) must vanish, and for forced systems
//! d(½‖v‖²) must equal the force covector. Those residuals are what this
//! module computes; it never attempts to *solve* the admissibility equations.

use crate::error::{DescartesError, Result};
use crate::exprlang::{sum, Env, Expr};
use crate::geometry::{d_one_form, det_expr, eval_vec, rot3, MetricField, OneFormField, TwoFormMatrix};
use crate::tolerances;
use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

/// A constrained system with a completed constraint frame.
///
/// All component functions must already have their parameters bound to
/// numbers ([`Expr::bind_params`]); evaluation environments carry coordinates
/// (and, for monitors, velocities) only.
#[derive(Debug)]
pub struct ConstraintSystem {
    n: usize,
    m: usize,
    forms: Vec<OneFormField>,
    lambdas: Vec<Expr>,
    metric: MetricField,
    potential: Option<Expr>,
    /// Named chart-singularity guards: evaluation aborts with
    /// [`DescartesError::ChartSingular`] when |g(x)| < `CHART_GUARD`.
    guards: Vec<(String, Expr)>,
    // Lazily built symbolic pipeline (cheap to skip for purely numeric use).
    v_sym: OnceLock<Vec<Expr>>,
    sigma_sym: OnceLock<Vec<Expr>>,
    h_sym: OnceLock<TwoFormMatrix>,
    a_sym: OnceLock<Vec<Vec<Expr>>>,
    upsilon_sym: OnceLock<Expr>,
}

impl ConstraintSystem {
    /// `forms` holds all N one-forms: the M given constraints first, then the
    /// N−M auxiliary forms. `lambdas` are the N−M multiplier functions for
    /// the auxiliary forms, in the same order.
    pub fn new(
        n: usize,
        m: usize,
        forms: Vec<OneFormField>,
        lambdas: Vec<Expr>,
        metric: MetricField,
        potential: Option<Expr>,
    ) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(DescartesError::InconsistentInput {
                message: format!("need 1 ≤ M < N, got M = {m}, N = {n}"),
            });
        }
        if forms.len() != n {
            return Err(DescartesError::InconsistentInput {
                message: format!("expected {n} one-forms (given + auxiliary), got {}", forms.len()),
            });
        }
        if let Some(bad) = forms.iter().find(|f| f.dim() != n) {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "every one-form must have {n} components, found one with {}",
                    bad.dim()
                ),
            });
        }
        if lambdas.len() != n - m {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "expected {} multiplier functions, got {}",
                    n - m,
                    lambdas.len()
                ),
            });
        }
        if metric.dim() != n {
            return Err(DescartesError::InconsistentInput {
                message: format!("metric dimension {} ≠ N = {n}", metric.dim()),
            });
        }
        Ok(ConstraintSystem {
            n,
            m,
            forms,
            lambdas,
            metric,
            potential,
            guards: Vec::new(),
            v_sym: OnceLock::new(),
            sigma_sym: OnceLock::new(),
            h_sym: OnceLock::new(),
            a_sym: OnceLock::new(),
            upsilon_sym: OnceLock::new(),
        })
    }

    /// Build a system whose frame is the exact coframe df_1..df_N with only
    /// the last multiplier nonzero (the Nambu-reduction setting: the given
    /// constraints are the level sets of f_1..f_{M=N−1}).
    pub fn from_exact_forms(
        fs: Vec<Expr>,
        lambda_n: Expr,
        metric: MetricField,
        potential: Option<Expr>,
    ) -> Result<Self> {
        let n = fs.len();
        let forms = fs
            .iter()
            .map(|f| OneFormField::new(crate::geometry::grad_covector(f, n)))
            .collect();
        ConstraintSystem::new(n, n - 1, forms, vec![lambda_n], metric, potential)
    }

    /// Attach named chart-singularity guards. Evaluation of the frame (and
    /// everything built on it) fails with [`DescartesError::ChartSingular`]
    /// wherever some |g(x)| drops below `CHART_GUARD`, so integrations are
    /// truncated *before* the chart formulas lose meaning.
    pub fn with_guards(mut self, guards: Vec<(String, Expr)>) -> Self {
        self.guards = guards;
        self
    }

    pub fn guards(&self) -> &[(String, Expr)] {
        &self.guards
    }

    /// Check every chart guard at a point.
    pub fn check_guards(&self, x: &[f64]) -> Result<()> {
        let env = Env::point(x);
        for (name, g) in &self.guards {
            let val = g.eval(&env)?;
            if val.abs() < tolerances::CHART_GUARD {
                return Err(DescartesError::ChartSingular {
                    chart: name.clone(),
                    detail: format!("guard value {val:e} at {x:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn constraint_count(&self) -> usize {
        self.m
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn potential(&self) -> Option<&Expr> {
        self.potential.as_ref()
    }

    pub fn forms(&self) -> &[OneFormField] {
        &self.forms
    }

    pub fn lambdas(&self) -> &[Expr] {
        &self.lambdas
    }

    /// λ̃ = (0,…,0, λ_{M+1},…,λ_N) as expressions.
    pub fn lambda_tilde_sym(&self) -> Vec<Expr> {
        let mut out = vec![Expr::Num(0.0); self.m];
        out.extend(self.lambdas.iter().cloned());
        out
    }

    // ---- frame ---------------------------------------------------------------

    /// Frame rows as expressions: row j is Ω_j in the coordinate basis.
    pub fn frame_rows_sym(&self) -> Vec<Vec<Expr>> {
        self.forms.iter().map(|f| f.comps.clone()).collect()
    }

    /// Symbolic frame determinant Υ = det M.
    pub fn upsilon_sym(&self) -> &Expr {
        self.upsilon_sym
            .get_or_init(|| det_expr(&self.frame_rows_sym()))
    }

    /// Evaluate the frame matrix at a point, rejecting degenerate frames:
    /// |det M| must exceed `FRAME_SINGULAR_REL` times the product of row norms.
    pub fn frame_matrix(&self, x: &[f64]) -> Result<FrameEval> {
        self.check_guards(x)?;
        let env = Env::point(x);
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for (j, form) in self.forms.iter().enumerate() {
            for k in 0..n {
                m[(j, k)] = form.comps[k].eval(&env)?;
            }
        }
        let det = m.clone().lu().determinant();
        let scale: f64 = (0..n).map(|j| m.row(j).norm()).product();
        let threshold = tolerances::FRAME_SINGULAR_REL * scale;
        if det.abs() <= threshold {
            return Err(DescartesError::FrameSingular {
                point: x.to_vec(),
                det,
                threshold,
            });
        }
        Ok(FrameEval {
            matrix: m,
            upsilon: det,
        })
    }

    // ---- velocity field --------------------------------------------------------

    /// Symbolic first-order field, by Cramer's rule over the frame: component
    /// k is det(M with column k replaced by λ̃) / Υ, with the division kept as
    /// an exact AST node.
    pub fn velocity_sym(&self) -> &[Expr] {
        self.v_sym.get_or_init(|| {
            let rows = self.frame_rows_sym();
            let lt = self.lambda_tilde_sym();
            let ups = self.upsilon_sym().clone();
            (0..self.n)
                .map(|k| {
                    let mut replaced = rows.clone();
                    for (j, row) in replaced.iter_mut().enumerate() {
                        row[k] = lt[j].clone();
                    }
                    Expr::div(det_expr(&replaced), ups.clone())
                })
                .collect()
        })
    }

    /// First-order field at a point, computed by two independent routes
    /// (LU solve of M v = λ̃, and Cramer's rule with numeric determinants).
    /// Disagreement beyond `VELOCITY_ROUTE_REL` is an internal error.
    pub fn velocity(&self, x: &[f64]) -> Result<Vec<f64>> {
        let frame = self.frame_matrix(x)?;
        let env = Env::point(x);
        let mut lt = vec![0.0; self.m];
        for l in &self.lambdas {
            lt.push(l.eval(&env)?);
        }
        let rhs = DVector::from_column_slice(&lt);
        let solved = frame
            .matrix
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| DescartesError::FrameSingular {
                point: x.to_vec(),
                det: frame.upsilon,
                threshold: 0.0,
            })?;

        // Independent route: Cramer's rule, column by column.
        let scale = solved.amax().max(1.0);
        for k in 0..self.n {
            let mut replaced = frame.matrix.clone();
            for j in 0..self.n {
                replaced[(j, k)] = lt[j];
            }
            let cramer = replaced.lu().determinant() / frame.upsilon;
            if (cramer - solved[k]).abs() > tolerances::VELOCITY_ROUTE_REL * scale {
                return Err(DescartesError::InternalInconsistency {
                    message: format!(
                        "velocity routes disagree at {:?}: solve gave {}, determinants gave {} (component {})",
                        x,
                        solved[k],
                        cramer,
                        k + 1
                    ),
                });
            }
        }
        Ok(solved.as_slice().to_vec())
    }

    // ---- structure matrix ------------------------------------------------------

    /// Momentum one-form σ = G·v as expressions.
    pub fn sigma_sym(&self) -> &[Expr] {
        self.sigma_sym
            .get_or_init(|| self.metric.lower(self.velocity_sym()))
    }

    /// H = dσ.
    pub fn h_sym(&self) -> &TwoFormMatrix {
        self.h_sym
            .get_or_init(|| d_one_form(&OneFormField::new(self.sigma_sym().to_vec())))
    }

    /// Kinetic energy along the field: ½‖v‖² = ½ σ(v), as an expression.
    pub fn half_speed_sym(&self) -> Expr {
        Expr::half(sum(
            self.sigma_sym()
                .iter()
                .zip(self.velocity_sym())
                .map(|(s, v)| Expr::mul(s.clone(), v.clone())),
        ))
    }

    /// Symbolic structure matrix A = M⁻ᵀ H M⁻¹ (so that H = Mᵀ A M). Entries
    /// carry exact divisions by Υ via the adjugate; intended for N ≤ 4.
    pub fn structure_matrix_sym(&self) -> &Vec<Vec<Expr>> {
        self.a_sym.get_or_init(|| {
            let n = self.n;
            let minv = self.frame_inverse_sym();
            let h = self.h_sym();
            let mut a = vec![vec![Expr::Num(0.0); n]; n];
            for j in 0..n {
                for k in 0..n {
                    // (M⁻ᵀ H M⁻¹)[j][k] = Σ_{p,q} M⁻¹[p][j] H[p][q] M⁻¹[q][k]
                    a[j][k] = sum((0..n).flat_map(|p| {
                        let minv = &minv;
                        let h_entry: Vec<Expr> = (0..n).map(|q| h.entry(p, q)).collect();
                        (0..n).map(move |q| {
                            Expr::mul(
                                minv[p][j].clone(),
                                Expr::mul(h_entry[q].clone(), minv[q][k].clone()),
                            )
                        })
                    }));
                }
            }
            a
        })
    }

    /// Symbolic inverse of the frame matrix (adjugate divided by Υ).
    fn frame_inverse_sym(&self) -> Vec<Vec<Expr>> {
        let n = self.n;
        let rows = self.frame_rows_sym();
        let ups = self.upsilon_sym().clone();
        let mut inv = vec![vec![Expr::Num(0.0); n]; n];
        for j in 0..n {
            for k in 0..n {
                let minor: Vec<Vec<Expr>> = rows
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| *r != k)
                    .map(|(_, row)| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, e)| e.clone())
                            .collect()
                    })
                    .collect();
                let cof = det_expr(&minor);
                let signed = if (j + k) % 2 == 0 {
                    cof
                } else {
                    Expr::neg(cof)
                };
                inv[j][k] = Expr::div(signed, ups.clone());
            }
        }
        inv
    }

    /// Numeric structure matrix at a point: A = M⁻ᵀ H M⁻¹ by linear solves.
    pub fn structure_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let frame = self.frame_matrix(x)?;
        let env = Env::point(x);
        let h = self.h_sym().eval(&env)?;
        // A = M⁻ᵀ H M⁻¹, via two triangular solves against Mᵀ:
        // X = H M⁻¹ satisfies Mᵀ Xᵀ = Hᵀ, and then Mᵀ A = X.
        let mt_lu = frame.matrix.transpose().lu();
        let hm_inv = mt_lu
            .solve(&h.transpose())
            .ok_or_else(|| DescartesError::FrameSingular {
                point: x.to_vec(),
                det: frame.upsilon,
                threshold: 0.0,
            })?
            .transpose(); // H M⁻¹
        let a = mt_lu
            .solve(&hm_inv)
            .ok_or_else(|| DescartesError::FrameSingular {
                point: x.to_vec(),
                det: frame.upsilon,
                threshold: 0.0,
            })?;
        Ok(a)
    }

    // ---- transported multipliers -------------------------------------------------

    /// Transported multipliers Λ at a point, computed by two independent
    /// routes and cross-checked:
    ///
    /// * route 1: Λ_k = Σ_j A_jk λ̃_j (structure matrix applied to λ̃);
    /// * route 2: τ_q = Σ_p v^p H_pq (interior product ι_v H), then solve
    ///   Mᵀ Λ = τ.
    ///
    /// Disagreement beyond `LAMBDA_ROUTE_REL` (relative to the larger norm)
    /// is an internal error.
    pub fn lambda_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let frame = self.frame_matrix(x)?;
        let env = Env::point(x);
        let a = self.structure_matrix(x)?;
        let mut lt = vec![0.0; self.m];
        for l in &self.lambdas {
            lt.push(l.eval(&env)?);
        }
        let route1 = a.transpose() * DVector::from_column_slice(&lt);

        let v = self.velocity(x)?;
        let h = self.h_sym().eval(&env)?;
        let tau = h.transpose() * DVector::from_column_slice(&v); // τ_q = Σ_p v^p H_pq
        let route2 = frame
            .matrix
            .transpose()
            .lu()
            .solve(&tau)
            .ok_or_else(|| DescartesError::FrameSingular {
                point: x.to_vec(),
                det: frame.upsilon,
                threshold: 0.0,
            })?;

        let scale = route1.amax().max(route2.amax()).max(1.0);
        let gap = (&route1 - &route2).amax();
        if gap > tolerances::LAMBDA_ROUTE_REL * scale {
            return Err(DescartesError::InternalInconsistency {
                message: format!(
                    "multiplier routes disagree at {:?}: |Δ| = {gap:e} (scale {scale:e})",
                    x
                ),
            });
        }
        Ok(route1.as_slice().to_vec())
    }

    /// Admissibility residual: the transported multipliers of the auxiliary
    /// forms, (Λ_{M+1}, …, Λ_N). All zero (to tolerance) means the integral
    /// curves of v satisfy the classical constrained equations of motion.
    pub fn consistency_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.lambda_vector(x)?[self.m..].to_vec())
    }

    /// Reaction covector R_k = Σ_{j ≤ M} Λ_j Ω_j(∂_k) at a point.
    pub fn reaction_covector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lambda = self.lambda_vector(x)?;
        let env = Env::point(x);
        let mut out = vec![0.0; self.n];
        for (j, form) in self.forms.iter().take(self.m).enumerate() {
            let row = eval_vec(&form.comps, &env)?;
            for k in 0..self.n {
                out[k] += lambda[j] * row[k];
            }
        }
        Ok(out)
    }

    /// Symbolic transported multipliers Λ_k = Σ_j A_jk λ̃_j.
    pub fn lambda_vector_sym(&self) -> Vec<Expr> {
        let a = self.structure_matrix_sym();
        let lt = self.lambda_tilde_sym();
        (0..self.n)
            .map(|k| sum((0..self.n).map(|j| Expr::mul(a[j][k].clone(), lt[j].clone()))))
            .collect()
    }

    /// Symbolic reaction covector Σ_{j ≤ M} Λ_j Ω_j.
    pub fn reaction_covector_sym(&self) -> Vec<Expr> {
        let lambda = self.lambda_vector_sym();
        (0..self.n)
            .map(|k| {
                sum(self
                    .forms
                    .iter()
                    .take(self.m)
                    .enumerate()
                    .map(|(j, form)| Expr::mul(lambda[j].clone(), form.comps[k].clone())))
            })
            .collect()
    }

    /// Values Ω_j(u) for the given constraints at a point, for an arbitrary
    /// velocity u (used to monitor constraint drift along trajectories).
    pub fn constraint_values(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let env = Env::point(x);
        self.forms
            .iter()
            .take(self.m)
            .map(|form| {
                let row = eval_vec(&form.comps, &env)?;
                Ok(row.iter().zip(u).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

/// Frame matrix evaluated at a point.
#[derive(Debug, Clone)]
pub struct FrameEval {
    pub matrix: DMatrix<f64>,
    pub upsilon: f64,
}

/// Completion of M given one-forms to a full frame by coordinate forms dx^k,
/// chosen greedily to maximize the frame volume at a probe point: at each
/// step the coordinate whose basis covector most enlarges the Gram
/// determinant of the rows is appended. The auxiliary forms this produces are
/// a default, not an optimum over all of space.
pub fn complete_frame(
    given: &[OneFormField],
    n: usize,
    probe: &[f64],
) -> Result<Vec<OneFormField>> {
    let env = Env::point(probe);
    let m = given.len();
    let mut rows: Vec<Vec<f64>> = given
        .iter()
        .map(|f| eval_vec(&f.comps, &env))
        .collect::<Result<_>>()?;
    let mut chosen: Vec<usize> = Vec::new();
    for _ in m..n {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..n {
            if chosen.contains(&k) {
                continue;
            }
            let mut trial = rows.clone();
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            trial.push(e);
            let r = trial.len();
            let mat = DMatrix::from_fn(r, n, |i, j| trial[i][j]);
            let gram = (&mat * mat.transpose()).determinant();
            if best.map_or(true, |(_, g)| gram > g) {
                best = Some((k, gram));
            }
        }
        let (k, gram) = best.expect("candidate coordinate always exists");
        if gram <= 0.0 {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "cannot complete the frame at probe {probe:?}: given forms are degenerate"
                ),
            });
        }
        chosen.push(k);
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push(e);
    }
    let mut out = given.to_vec();
    for k in chosen {
        let comps = (0..n)
            .map(|i| Expr::Num(if i == k { 1.0 } else { 0.0 }))
            .collect();
        out.push(OneFormField::new(comps));
    }
    Ok(out)
}

/// 3-dimensional cross field [a × w] with Euclidean components, together with
/// its admissibility residual (a, rot [a × w]) as an expression.
#[derive(Debug, Clone)]
pub struct CrossField3 {
    pub v: Vec<Expr>,
    pub residual: Expr,
}

/// Build v = [a × w] (componentwise Euclidean cross product) and the pairing
/// (a, rot v) under the identity metric, which vanishes identically exactly
/// when v annihilates the constraint a·ẋ = 0 admissibly.
pub fn cross_field_3d(a: &[Expr], w: &[Expr]) -> Result<CrossField3> {
    if a.len() != 3 || w.len() != 3 {
        return Err(DescartesError::InconsistentInput {
            message: "cross_field_3d requires two 3-component fields".to_string(),
        });
    }
    let v = crate::geometry::cross3(a, w);
    let g = MetricField::identity(3);
    let rot = rot3(&g, &v)?;
    let residual = sum(a.iter().zip(&rot).map(|(ai, ri)| Expr::mul(ai.clone(), ri.clone())));
    Ok(CrossField3 { v, residual })
}

/// Alignment residual ‖[v × rot v]‖ (Euclidean) at a point: zero exactly when
/// the field is parallel to its own curl.
pub fn kummer_residual(v: &[Expr], x: &[f64]) -> Result<f64> {
    if v.len() != 3 {
        return Err(DescartesError::InconsistentInput {
            message: "kummer_residual requires a 3-component field".to_string(),
        });
    }
    let g = MetricField::identity(3);
    let rot = rot3(&g, v)?;
    let cross = crate::geometry::cross3(v, &rot);
    let env = Env::point(x);
    let vals = eval_vec(&cross, &env)?;
    Ok(vals.iter().map(|c| c * c).sum::<f64>().sqrt())
}
