//! Time integration and trajectory diagnostics.
//!
//! Two routes to the same motions:
//!
//! * [`integrate_first_order`] — integrate ẋ = v(x), the first-order field of
//!   a [`ConstraintSystem`];
//! * [`integrate_classical`] — integrate the second-order constrained
//!   equations of motion (mass matrix + reaction multipliers, solved as a
//!   per-step augmented linear system).
//!
//! [`lagrange_residual`] measures, sample by sample, how far a trajectory is
//! from satisfying the classical equations, and [`monitor`] tracks arbitrary
//! scalar expressions (energies, first integrals) along a run.
//!
//! Integrators: classic fixed-step RK4 and the Dormand–Prince embedded 4(5)
//! pair with standard step control. Adaptive runs are resampled onto a
//! uniform output grid by cubic Hermite interpolation of the accepted steps.

use crate::cartesian::ConstraintSystem;
use crate::error::{DescartesError, Result};
use crate::exprlang::{Env, Expr};
use crate::geometry::{eval_vec, MetricField};
use crate::tolerances;
use nalgebra::{DMatrix, DVector};

// -------------------------------------------------------------------------------
// Configuration and trajectory containers
// -------------------------------------------------------------------------------

/// Integration method and its step parameters.
#[derive(Debug, Clone)]
pub enum Method {
    Rk4 {
        dt: f64,
    },
    Rk45 {
        rtol: f64,
        atol: f64,
        h_min: f64,
        h_max: f64,
        h_init: f64,
    },
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    /// Re-project velocities onto the constraint distribution after every
    /// accepted step of a classical run.
    pub projection: bool,
    /// Spacing of the uniform output grid.
    pub output_dt: f64,
}

impl IntegratorConfig {
    /// Fixed-step RK4; samples land every `stride`-th step.
    pub fn rk4(dt: f64, t_end: f64, stride: usize) -> Self {
        IntegratorConfig {
            method: Method::Rk4 { dt },
            t_end,
            projection: true,
            output_dt: dt * stride.max(1) as f64,
        }
    }

    /// Dormand–Prince 4(5) with the given tolerances; dense output on a
    /// uniform grid with spacing `output_dt`.
    pub fn rk45(rtol: f64, atol: f64, t_end: f64, output_dt: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk45 {
                rtol,
                atol,
                h_min: 1e-12,
                h_max: t_end,
                h_init: output_dt.min(t_end / 100.0).max(1e-6),
            },
            t_end,
            projection: true,
            output_dt,
        }
    }
}

/// One output sample of a run.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Reaction multipliers (classical runs only; empty otherwise).
    pub mu: Vec<f64>,
    /// Ω_j(v) for the given constraints, j = 1..M.
    pub drift: Vec<f64>,
}

/// A (possibly truncated) trajectory. If integration hit an error mid-run
/// (frame degeneracy, chart guard), the samples gathered so far are kept and
/// the error is recorded instead of being swallowed.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub error: Option<DescartesError>,
}

impl Trajectory {
    pub fn truncated(&self) -> bool {
        self.error.is_some()
    }

    pub fn final_state(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

// -------------------------------------------------------------------------------
// Raw stepping machinery (shared by all entry points)
// -------------------------------------------------------------------------------

struct Node {
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
}

struct RawRun {
    nodes: Vec<Node>,
    error: Option<DescartesError>,
}

fn rk4_step(
    f: &mut dyn FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let n = y.len();
    let mut tmp = vec![0.0; n];
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = f(t + 0.5 * h, &tmp)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = f(t + 0.5 * h, &tmp)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    let k4 = f(t + h, &tmp)?;
    Ok((0..n)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

// Dormand–Prince 4(5) tableau.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th- and 4th-order weights (error estimator).
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate with per-step error control; `post_step` runs after every
/// accepted step (projection hooks). Nodes record (t, y, ẏ) for dense output.
fn integrate_raw(
    f: &mut dyn FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    post_step: &mut dyn FnMut(f64, &mut Vec<f64>) -> Result<()>,
    y0: Vec<f64>,
    cfg: &IntegratorConfig,
) -> Result<RawRun> {
    let n = y0.len();
    let mut nodes: Vec<Node> = Vec::new();
    let mut t = 0.0;
    let mut y = y0;
    let mut dy = f(t, &y)?;
    nodes.push(Node {
        t,
        y: y.clone(),
        dy: dy.clone(),
    });

    let run_error;
    match cfg.method {
        Method::Rk4 { dt } => {
            if !(dt > 0.0) {
                return Err(DescartesError::InconsistentInput {
                    message: format!("rk4 step must be positive, got {dt}"),
                });
            }
            loop {
                if t >= cfg.t_end - 1e-12 * cfg.t_end.max(1.0) {
                    run_error = None;
                    break;
                }
                let h = dt.min(cfg.t_end - t);
                let attempt = (|| -> Result<(Vec<f64>, Vec<f64>)> {
                    let mut y_new = rk4_step(f, t, &y, &dy, h)?;
                    post_step(t + h, &mut y_new)?;
                    let dy_new = f(t + h, &y_new)?;
                    Ok((y_new, dy_new))
                })();
                match attempt {
                    Ok((y_new, dy_new)) => {
                        t += h;
                        y = y_new;
                        dy = dy_new;
                        nodes.push(Node {
                            t,
                            y: y.clone(),
                            dy: dy.clone(),
                        });
                    }
                    Err(e) => {
                        run_error = Some(e);
                        break;
                    }
                }
            }
        }
        Method::Rk45 {
            rtol,
            atol,
            h_min,
            h_max,
            h_init,
        } => {
            let mut h = h_init.clamp(h_min, h_max);
            let mut err_out = None;
            loop {
                if t >= cfg.t_end - 1e-12 * cfg.t_end.max(1.0) {
                    break;
                }
                h = h.min(cfg.t_end - t);
                // One Dormand–Prince attempt; k1 is the stored derivative (FSAL).
                let mut ks: Vec<Vec<f64>> = Vec::with_capacity(7);
                ks.push(dy.clone());
                let mut failed = None;
                for stage in 0..6 {
                    let mut ytmp = y.clone();
                    for (j, a) in DP_A[stage].iter().enumerate() {
                        if *a != 0.0 {
                            for i in 0..n {
                                ytmp[i] += h * a * ks[j][i];
                            }
                        }
                    }
                    match f(t + DP_C[stage] * h, &ytmp) {
                        Ok(k) => ks.push(k),
                        Err(e) => {
                            failed = Some(e);
                            break;
                        }
                    }
                }
                if let Some(e) = failed {
                    err_out = Some(e);
                    break;
                }
                // 5th-order solution is the last stage state (FSAL property):
                // y5 = y + h Σ a7j kj, already formed as the stage-7 input.
                let mut y5 = y.clone();
                for (j, a) in DP_A[5].iter().enumerate() {
                    if *a != 0.0 {
                        for i in 0..n {
                            y5[i] += h * a * ks[j][i];
                        }
                    }
                }
                let mut err_norm = 0.0;
                for i in 0..n {
                    let mut e = 0.0;
                    for (j, d) in DP_E.iter().enumerate() {
                        e += d * ks[j][i];
                    }
                    e *= h;
                    let sc = atol + rtol * y[i].abs().max(y5[i].abs());
                    err_norm += (e / sc) * (e / sc);
                }
                err_norm = (err_norm / n as f64).sqrt();

                if err_norm <= 1.0 {
                    let accepted = (|| -> Result<(Vec<f64>, Vec<f64>)> {
                        let mut y_new = y5;
                        post_step(t + h, &mut y_new)?;
                        let dy_new = f(t + h, &y_new)?;
                        Ok((y_new, dy_new))
                    })();
                    match accepted {
                        Ok((y_new, dy_new)) => {
                            t += h;
                            y = y_new;
                            dy = dy_new;
                            nodes.push(Node {
                                t,
                                y: y.clone(),
                                dy: dy.clone(),
                            });
                        }
                        Err(e) => {
                            err_out = Some(e);
                            break;
                        }
                    }
                }
                let factor = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (h * factor).clamp(h_min, h_max);
                if err_norm > 1.0 && h <= h_min {
                    err_out = Some(DescartesError::NonConvergence {
                        what: format!(
                            "adaptive step underflow at t = {t}: error {err_norm} at minimum step {h_min}"
                        ),
                    });
                    break;
                }
            }
            run_error = err_out;
        }
    }
    Ok(RawRun {
        nodes,
        error: run_error,
    })
}

/// Cubic Hermite value on [t0, t1] with endpoint values/slopes.
fn hermite(t: f64, n0: &Node, n1: &Node, i: usize) -> f64 {
    let h = n1.t - n0.t;
    if h == 0.0 {
        return n0.y[i];
    }
    let s = (t - n0.t) / h;
    let (y0, y1, d0, d1) = (n0.y[i], n1.y[i], n0.dy[i] * h, n1.dy[i] * h);
    let s2 = s * s;
    let s3 = s2 * s;
    y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * (s3 - 2.0 * s2 + s)
        + y1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * (s3 - s2)
}

/// Resample accepted nodes onto the uniform output grid.
fn resample(raw: &RawRun, cfg: &IntegratorConfig) -> Vec<(f64, Vec<f64>)> {
    let nodes = &raw.nodes;
    if nodes.is_empty() {
        return Vec::new();
    }
    let t_last = nodes.last().unwrap().t;
    let dim = nodes[0].y.len();
    let mut out = Vec::new();
    let mut seg = 0;
    let mut k = 0usize;
    loop {
        let t = (k as f64) * cfg.output_dt;
        if t > t_last + 1e-9 * cfg.output_dt {
            break;
        }
        let t = t.min(t_last);
        // Advance so that nodes[seg].t ≤ t ≤ nodes[seg+1].t when possible.
        while seg + 2 < nodes.len() && nodes[seg + 1].t < t {
            seg += 1;
        }
        let y = if nodes.len() == 1 {
            nodes[0].y.clone()
        } else {
            let (n0, n1) = (&nodes[seg], &nodes[seg + 1]);
            (0..dim).map(|i| hermite(t, n0, n1, i)).collect()
        };
        out.push((t, y));
        k += 1;
    }
    out
}

// -------------------------------------------------------------------------------
// First-order runs
// -------------------------------------------------------------------------------

/// Integrate the first-order field ẋ = v(x) of a constraint system. Each
/// sample records the field value and the given-constraint values Ω_j(v).
pub fn integrate_first_order(
    sys: &ConstraintSystem,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut f = |_t: f64, y: &[f64]| sys.velocity(y);
    let mut post = |_t: f64, _y: &mut Vec<f64>| Ok(());
    let raw = integrate_raw(&mut f, &mut post, x0.to_vec(), cfg)?;
    let mut samples = Vec::new();
    for (t, x) in resample(&raw, cfg) {
        let v = sys.velocity(&x)?;
        let drift = sys.constraint_values(&x, &v)?;
        samples.push(Sample {
            t,
            x,
            v,
            mu: Vec::new(),
            drift,
        });
    }
    Ok(Trajectory {
        samples,
        error: raw.error,
    })
}

/// Integrate a plain symbolic first-order field ẋ^k = w^k(x) (no constraint
/// system attached); used for reduced flows and similar auxiliary dynamics.
pub fn integrate_field(field: &[Expr], x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    let mut f = |_t: f64, y: &[f64]| eval_vec(field, &Env::point(y));
    let mut post = |_t: f64, _y: &mut Vec<f64>| Ok(());
    let raw = integrate_raw(&mut f, &mut post, x0.to_vec(), cfg)?;
    let samples = resample(&raw, cfg)
        .into_iter()
        .map(|(t, x)| {
            let v = eval_vec(field, &Env::point(&x)).unwrap_or_default();
            Sample {
                t,
                x,
                v,
                mu: Vec::new(),
                drift: Vec::new(),
            }
        })
        .collect();
    Ok(Trajectory {
        samples,
        error: raw.error,
    })
}

// -------------------------------------------------------------------------------
// Classical second-order runs
// -------------------------------------------------------------------------------

/// Precomputed symbolic data for the second-order equations of motion.
struct ClassicalProblem<'a> {
    sys: &'a ConstraintSystem,
    n: usize,
    m: usize,
    /// ∂G/∂x^l, each as a full n×n matrix of expressions.
    dg: Vec<Vec<Vec<Expr>>>,
    /// ∂α_jk/∂x^l for the given constraint rows.
    dalpha: Vec<Vec<Vec<Expr>>>,
    /// ∂U/∂x^k (force-function convention: this enters the RHS with +).
    du: Vec<Expr>,
}

impl<'a> ClassicalProblem<'a> {
    fn new(sys: &'a ConstraintSystem) -> Self {
        let n = sys.dim();
        let m = sys.constraint_count();
        let g_rows = sys.metric().rows();
        let dg = (0..n)
            .map(|l| {
                g_rows
                    .iter()
                    .map(|row| row.iter().map(|e| e.diff(l)).collect())
                    .collect()
            })
            .collect();
        let dalpha = (0..n)
            .map(|l| {
                sys.forms()[..m]
                    .iter()
                    .map(|form| form.comps.iter().map(|e| e.diff(l)).collect())
                    .collect()
            })
            .collect();
        let du = match sys.potential() {
            Some(u) => (0..n).map(|k| u.diff(k)).collect(),
            None => vec![Expr::Num(0.0); n],
        };
        ClassicalProblem {
            sys,
            n,
            m,
            dg,
            dalpha,
            du,
        }
    }

    /// Solve the augmented system [[G, −αᵀ],[α, 0]]·[ẍ; μ] = [F; c] at (x, v).
    fn accel(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.sys.check_guards(x)?;
        let env = Env::point(x);
        let (n, m) = (self.n, self.m);
        let g = self.sys.metric().eval_spd(&env)?;
        let mut alpha = DMatrix::zeros(m, n);
        for (j, form) in self.sys.forms()[..m].iter().enumerate() {
            for k in 0..n {
                alpha[(j, k)] = form.comps[k].eval(&env)?;
            }
        }
        // ∂G/∂x^l evaluated once each.
        let mut dg_num = Vec::with_capacity(n);
        for l in 0..n {
            let mut mat = DMatrix::zeros(n, n);
            for j in 0..n {
                for k in 0..n {
                    mat[(j, k)] = self.dg[l][j][k].eval(&env)?;
                }
            }
            dg_num.push(mat);
        }
        let vv = DVector::from_column_slice(v);
        // F_k = ∂_k U + ½ vᵀ(∂_k G)v − Σ_l v^l ((∂_l G) v)_k
        let mut rhs = DVector::zeros(n + m);
        for k in 0..n {
            let mut fk = self.du[k].eval(&env)?;
            fk += 0.5 * (vv.transpose() * &dg_num[k] * &vv)[(0, 0)];
            for l in 0..n {
                let col = &dg_num[l] * &vv;
                fk -= v[l] * col[k];
            }
            rhs[k] = fk;
        }
        // Constraint rows: α ẍ = −Σ_k (Σ_l ∂_l α_jk v^l) v^k.
        for j in 0..m {
            let mut cj = 0.0;
            for k in 0..n {
                let mut dkj = 0.0;
                for l in 0..n {
                    dkj += self.dalpha[l][j][k].eval(&env)? * v[l];
                }
                cj -= dkj * v[k];
            }
            rhs[n + j] = cj;
        }
        let mut aug = DMatrix::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&g);
        aug.view_mut((0, n), (n, m)).copy_from(&(-alpha.transpose()));
        aug.view_mut((n, 0), (m, n)).copy_from(&alpha);
        let sol = aug
            .lu()
            .solve(&rhs)
            .ok_or_else(|| DescartesError::InternalInconsistency {
                message: format!("augmented mass/constraint solve failed at {x:?}"),
            })?;
        Ok((
            sol.as_slice()[..n].to_vec(),
            sol.as_slice()[n..].to_vec(),
        ))
    }

    /// G-orthogonal projection of v onto the constraint distribution:
    /// v ← v − G⁻¹αᵀ (α G⁻¹ αᵀ)⁻¹ α v.
    fn project(&self, x: &[f64], v: &mut [f64]) -> Result<()> {
        let env = Env::point(x);
        let (n, m) = (self.n, self.m);
        let g = self.sys.metric().eval_spd(&env)?;
        let mut alpha = DMatrix::zeros(m, n);
        for (j, form) in self.sys.forms()[..m].iter().enumerate() {
            for k in 0..n {
                alpha[(j, k)] = form.comps[k].eval(&env)?;
            }
        }
        let g_lu = g.lu();
        let ginv_at = g_lu
            .solve(&alpha.transpose())
            .ok_or_else(|| DescartesError::SingularMetric {
                detail: format!("projection solve failed at {x:?}"),
            })?;
        let s = &alpha * &ginv_at; // α G⁻¹ αᵀ, m×m SPD
        let av = &alpha * DVector::from_column_slice(v);
        let w = s
            .lu()
            .solve(&av)
            .ok_or_else(|| DescartesError::InternalInconsistency {
                message: format!("constraint Gram matrix singular at {x:?}"),
            })?;
        let corr = &ginv_at * w;
        for k in 0..n {
            v[k] -= corr[k];
        }
        Ok(())
    }
}

/// Integrate the classical second-order constrained equations from (x0, v0).
/// Preconditions: Ω_j(v0) = 0 for every given constraint (within
/// `CLASSICAL_PRECONDITION`, scaled by |Ω_j||v0|). Reaction multipliers μ are
/// recorded per sample. With `cfg.projection`, velocities are re-projected
/// onto the constraint distribution (G-orthogonally) after every accepted
/// step, which suppresses the secular part of the constraint drift.
pub fn integrate_classical(
    sys: &ConstraintSystem,
    x0: &[f64],
    v0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = sys.dim();
    let env0 = Env::point(x0);
    for (j, form) in sys.forms()[..sys.constraint_count()].iter().enumerate() {
        let row = eval_vec(&form.comps, &env0)?;
        let val: f64 = row.iter().zip(v0).map(|(a, b)| a * b).sum();
        let scale = row.iter().map(|a| a * a).sum::<f64>().sqrt()
            * v0.iter().map(|a| a * a).sum::<f64>().sqrt();
        if val.abs() > tolerances::CLASSICAL_PRECONDITION * scale.max(1.0) {
            return Err(DescartesError::InconsistentInput {
                message: format!(
                    "initial velocity violates constraint {}: Ω(v0) = {val:e}",
                    j + 1
                ),
            });
        }
    }

    let problem = ClassicalProblem::new(sys);
    let mut f = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (x, v) = y.split_at(n);
        let (acc, _mu) = problem.accel(x, v)?;
        let mut dy = v.to_vec();
        dy.extend(acc);
        Ok(dy)
    };
    let project = cfg.projection;
    let mut post = |_t: f64, y: &mut Vec<f64>| -> Result<()> {
        if project {
            let (x, v) = y.split_at_mut(n);
            problem.project(x, v)?;
        }
        Ok(())
    };
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(v0);
    let raw = integrate_raw(&mut f, &mut post, y0, cfg)?;

    let mut samples = Vec::new();
    for (t, y) in resample(&raw, cfg) {
        let (x, v) = y.split_at(n);
        let mut v = v.to_vec();
        if project {
            // Interpolated output states get the same treatment as accepted
            // steps; otherwise dense-output error re-introduces drift.
            problem.project(x, &mut v)?;
        }
        let (_acc, mu) = problem.accel(x, &v)?;
        let drift = sys.constraint_values(x, &v)?;
        samples.push(Sample {
            t,
            x: x.to_vec(),
            v,
            mu,
            drift,
        });
    }
    Ok(Trajectory {
        samples,
        error: raw.error,
    })
}

/// Integrate an unconstrained second-order system G(x)ẍ = F(x) + metric
/// velocity terms, where `force` holds the covector components F_k(x).
/// With the identity metric this is plain ẍ = F. Used for orbit-invariance
/// checks of synthesized forces.
pub fn integrate_newton(
    metric: &MetricField,
    force: &[Expr],
    x0: &[f64],
    v0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = metric.dim();
    let g_rows = metric.rows();
    let dg: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|l| {
            g_rows
                .iter()
                .map(|row| row.iter().map(|e| e.diff(l)).collect())
                .collect()
        })
        .collect();
    let identity = metric.is_identity();

    let mut f = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (x, v) = y.split_at(n);
        let env = Env::point(x);
        let fv = eval_vec(force, &env)?;
        let acc: Vec<f64> = if identity {
            fv
        } else {
            let g = metric.eval_spd(&env)?;
            let vv = DVector::from_column_slice(v);
            let mut rhs = DVector::from_column_slice(&fv);
            for k in 0..n {
                let mut dgk = DMatrix::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        dgk[(a, b)] = dg[k][a][b].eval(&env)?;
                    }
                }
                rhs[k] += 0.5 * (vv.transpose() * &dgk * &vv)[(0, 0)];
            }
            for l in 0..n {
                let mut dgl = DMatrix::zeros(n, n);
                for a in 0..n {
                    for b in 0..n {
                        dgl[(a, b)] = dg[l][a][b].eval(&env)?;
                    }
                }
                let col = &dgl * &vv;
                for k in 0..n {
                    rhs[k] -= v[l] * col[k];
                }
            }
            g.lu()
                .solve(&rhs)
                .ok_or_else(|| DescartesError::SingularMetric {
                    detail: format!("mass matrix solve failed at {x:?}"),
                })?
                .as_slice()
                .to_vec()
        };
        let mut dy = v.to_vec();
        dy.extend(acc);
        Ok(dy)
    };
    let mut post = |_t: f64, _y: &mut Vec<f64>| Ok(());
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(v0);
    let raw = integrate_raw(&mut f, &mut post, y0, cfg)?;
    let samples = resample(&raw, cfg)
        .into_iter()
        .map(|(t, y)| {
            let (x, v) = y.split_at(n);
            Sample {
                t,
                x: x.to_vec(),
                v: v.to_vec(),
                mu: Vec::new(),
                drift: Vec::new(),
            }
        })
        .collect();
    Ok(Trajectory {
        samples,
        error: raw.error,
    })
}

// -------------------------------------------------------------------------------
// Diagnostics
// -------------------------------------------------------------------------------

/// Residual of the classical equations of motion along a trajectory.
///
/// At each interior sample, the momentum p = G(x)v is differentiated by a
/// central difference over the sample times, and the residual covector
///
/// ```text
/// r_k = ṗ_k − ½ vᵀ(∂_k G)v − ∂_k(½‖v‖²) − Σ_{j ≤ M} Λ_j Ω_j(∂_k)
/// ```
///
/// is evaluated (∂_k(½‖v‖²) symbolically from the system's field). For an
/// admissible multiplier preset this vanishes as O(Δt²) of the sampling step.
/// Returns the residual rows, one per interior sample.
pub fn lagrange_residual(sys: &ConstraintSystem, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
    let n = sys.dim();
    let hs = sys.half_speed_sym();
    let dhs: Vec<Expr> = (0..n).map(|k| hs.diff(k)).collect();
    let g_rows = sys.metric().rows();
    let dg: Vec<Vec<Vec<Expr>>> = (0..n)
        .map(|l| {
            g_rows
                .iter()
                .map(|row| row.iter().map(|e| e.diff(l)).collect())
                .collect()
        })
        .collect();

    let samples = &traj.samples;
    if samples.len() < 3 {
        return Err(DescartesError::InconsistentInput {
            message: "lagrange_residual needs at least three samples".to_string(),
        });
    }
    let momentum = |s: &Sample| -> Result<Vec<f64>> {
        let env = Env::point(&s.x);
        let g = sys.metric().eval_unchecked(&env)?;
        let p = g * DVector::from_column_slice(&s.v);
        Ok(p.as_slice().to_vec())
    };

    let mut out = Vec::with_capacity(samples.len() - 2);
    for i in 1..samples.len() - 1 {
        let (prev, cur, next) = (&samples[i - 1], &samples[i], &samples[i + 1]);
        let p_prev = momentum(prev)?;
        let p_next = momentum(next)?;
        let dt2 = next.t - prev.t;
        let env = Env::point(&cur.x);
        let reaction = sys.reaction_covector(&cur.x)?;
        let mut row = Vec::with_capacity(n);
        for k in 0..n {
            let pdot = (p_next[k] - p_prev[k]) / dt2;
            let mut dkt = 0.0;
            for a in 0..n {
                for b in 0..n {
                    dkt += 0.5 * dg[k][a][b].eval(&env)? * cur.v[a] * cur.v[b];
                }
            }
            let dhalf = dhs[k].eval(&env)?;
            row.push(pdot - dkt - dhalf - reaction[k]);
        }
        out.push(row);
    }
    Ok(out)
}

/// Pointwise residual of the classical second-order equations at a fully
/// specified state (x, v, ẍ, μ):
///
/// ```text
/// r_k = Σ_l G_kl ẍ^l + Σ_l v^l ((∂_l G) v)_k − ½ vᵀ(∂_k G)v − ∂_k U − Σ_j μ_j Ω_j(∂_k)
/// ```
///
/// with U the system's force function (zero if absent). Used to gate
/// closed-form reference solutions: the caller supplies accelerations (for
/// example by finite differences of a printed formula) and the residual must
/// vanish if the formula really solves the equations of motion.
pub fn classical_residual(
    sys: &ConstraintSystem,
    x: &[f64],
    v: &[f64],
    acc: &[f64],
    mu: &[f64],
) -> Result<Vec<f64>> {
    let n = sys.dim();
    let m = sys.constraint_count();
    if v.len() != n || acc.len() != n || mu.len() != m {
        return Err(DescartesError::InconsistentInput {
            message: format!(
                "classical_residual: expected v, acc of length {n} and mu of length {m}"
            ),
        });
    }
    sys.check_guards(x)?;
    let env = Env::point(x);
    let g = sys.metric().eval_unchecked(&env)?;
    let g_rows = sys.metric().rows();
    let vv = DVector::from_column_slice(v);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut r = 0.0;
        for l in 0..n {
            r += g[(k, l)] * acc[l];
        }
        // Metric velocity terms: Σ_l v^l ((∂_l G)v)_k − ½ vᵀ(∂_k G)v.
        for l in 0..n {
            let mut dgl = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    dgl[(a, b)] = g_rows[a][b].diff(l).eval(&env)?;
                }
            }
            let col = &dgl * &vv;
            r += v[l] * col[k];
            if l == k {
                r -= 0.5 * (vv.transpose() * &dgl * &vv)[(0, 0)];
            }
        }
        if let Some(u) = sys.potential() {
            r -= u.diff(k).eval(&env)?;
        }
        for (j, form) in sys.forms()[..m].iter().enumerate() {
            r -= mu[j] * form.comps[k].eval(&env)?;
        }
        out.push(r);
    }
    Ok(out)
}

/// Largest |Ω_j(v)| over all samples and given constraints.
pub fn constraint_drift(traj: &Trajectory) -> f64 {
    traj.samples
        .iter()
        .flat_map(|s| s.drift.iter())
        .fold(0.0, |acc, d| acc.max(d.abs()))
}

/// Statistics of a monitored expression along a trajectory.
#[derive(Debug, Clone)]
pub struct MonitorStats {
    pub name: String,
    pub initial: f64,
    pub max_abs_deviation: f64,
    pub relative_drift: f64,
}

/// Track scalar expressions over the extended variables (x1..xN bound to the
/// sample coordinates, v1..vN to the sample velocities).
pub fn monitor(traj: &Trajectory, exprs: &[(String, Expr)]) -> Result<Vec<MonitorStats>> {
    let mut out = Vec::with_capacity(exprs.len());
    for (name, expr) in exprs {
        let mut initial = f64::NAN;
        let mut max_dev: f64 = 0.0;
        for (i, s) in traj.samples.iter().enumerate() {
            let env = Env::extended(&s.x, &s.v, &[]);
            let val = expr.eval(&env)?;
            if i == 0 {
                initial = val;
            } else {
                max_dev = max_dev.max((val - initial).abs());
            }
        }
        out.push(MonitorStats {
            name: name.clone(),
            initial,
            max_abs_deviation: max_dev,
            relative_drift: max_dev / initial.abs().max(1e-12),
        });
    }
    Ok(out)
}
