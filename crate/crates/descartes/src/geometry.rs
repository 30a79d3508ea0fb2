//! Metrics, differential forms and the first-order differential operators the
//! constraint machinery is built from.
//!
//! All objects hold symbolic component functions ([`Expr`]) in Cartesian-style
//! coordinates `x1..xN`; numeric evaluation happens on demand at a point.

use crate::error::{DescartesError, Result};
use crate::exprlang::{sum, Env, Expr};
use nalgebra::{DMatrix, DVector};

/// Evaluate a slice of expressions at a point.
pub fn eval_vec(exprs: &[Expr], env: &Env) -> Result<Vec<f64>> {
    exprs.iter().map(|e| e.eval(env)).collect()
}

/// Determinant of a square matrix of expressions, by cofactor expansion along
/// the row with the most literal zeros. The result is exact symbolically;
/// zero entries are pruned so sparse frames stay compact.
pub fn det_expr(m: &[Vec<Expr>]) -> Expr {
    let n = m.len();
    debug_assert!(m.iter().all(|row| row.len() == n));
    match n {
        0 => Expr::Num(1.0),
        1 => m[0][0].clone(),
        2 => Expr::sub(
            Expr::mul(m[0][0].clone(), m[1][1].clone()),
            Expr::mul(m[0][1].clone(), m[1][0].clone()),
        ),
        _ => {
            let pivot_row = (0..n)
                .max_by_key(|&r| m[r].iter().filter(|e| e.is_zero()).count())
                .unwrap();
            let mut acc = Expr::Num(0.0);
            for col in 0..n {
                if m[pivot_row][col].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Expr>> = m
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| *r != pivot_row)
                    .map(|(_, row)| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != col)
                            .map(|(_, e)| e.clone())
                            .collect()
                    })
                    .collect();
                let term = Expr::mul(m[pivot_row][col].clone(), det_expr(&minor));
                acc = if (pivot_row + col) % 2 == 0 {
                    Expr::add(acc, term)
                } else {
                    Expr::sub(acc, term)
                };
            }
            acc
        }
    }
}

/// Gradient covector: (∂f/∂x1, …, ∂f/∂xN).
pub fn grad_covector(f: &Expr, n: usize) -> Vec<Expr> {
    (0..n).map(|k| f.diff(k)).collect()
}

// -------------------------------------------------------------------------------
// Metric
// -------------------------------------------------------------------------------

/// Symmetric metric coefficient field G(x). Only the upper triangle is stored;
/// symmetry therefore holds by construction.
#[derive(Debug, Clone)]
pub struct MetricField {
    n: usize,
    /// Row-major upper triangle: entry (j,k), j ≤ k, at index j*n − j(j−1)/2 + (k−j).
    upper: Vec<Expr>,
}

impl MetricField {
    pub fn identity(n: usize) -> Self {
        let mut upper = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for k in j..n {
                upper.push(Expr::Num(if j == k { 1.0 } else { 0.0 }));
            }
        }
        MetricField { n, upper }
    }

    pub fn diagonal(entries: Vec<Expr>) -> Self {
        let n = entries.len();
        let mut g = MetricField::identity(n);
        for (j, e) in entries.into_iter().enumerate() {
            g.set(j, j, e);
        }
        g
    }

    /// Build from an explicit full matrix; the strictly lower triangle is
    /// ignored (the upper triangle defines both halves).
    pub fn from_rows(rows: Vec<Vec<Expr>>) -> Self {
        let n = rows.len();
        let mut g = MetricField::identity(n);
        for (j, row) in rows.into_iter().enumerate() {
            assert_eq!(row.len(), n, "metric rows must have length n");
            for (k, e) in row.into_iter().enumerate() {
                if k >= j {
                    g.set(j, k, e);
                }
            }
        }
        g
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, j: usize, k: usize) -> usize {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        j * self.n - j * (j + 1) / 2 + k
    }

    pub fn entry(&self, j: usize, k: usize) -> &Expr {
        &self.upper[self.idx(j, k)]
    }

    pub fn set(&mut self, j: usize, k: usize, e: Expr) {
        let i = self.idx(j, k);
        self.upper[i] = e;
    }

    pub fn is_identity(&self) -> bool {
        let mut iter = 0;
        for j in 0..self.n {
            for k in j..self.n {
                let want = if j == k { 1.0 } else { 0.0 };
                if !matches!(self.upper[iter], Expr::Num(v) if v == want) {
                    return false;
                }
                iter += 1;
            }
        }
        true
    }

    /// Full symmetric matrix of expressions.
    pub fn rows(&self) -> Vec<Vec<Expr>> {
        (0..self.n)
            .map(|j| (0..self.n).map(|k| self.entry(j, k).clone()).collect())
            .collect()
    }

    /// Evaluate at a point and verify positive definiteness via Cholesky.
    pub fn eval_spd(&self, env: &Env) -> Result<DMatrix<f64>> {
        let m = self.eval_unchecked(env)?;
        if nalgebra::Cholesky::new(m.clone()).is_none() {
            return Err(DescartesError::SingularMetric {
                detail: format!(
                    "Cholesky factorization failed at {:?}",
                    env.coords
                ),
            });
        }
        Ok(m)
    }

    /// Evaluate at a point without the positive-definiteness check.
    pub fn eval_unchecked(&self, env: &Env) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                let v = self.entry(j, k).eval(env)?;
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        Ok(m)
    }

    /// Symbolic index lowering: p_k = Σ_j G_kj u^j.
    pub fn lower(&self, u: &[Expr]) -> Vec<Expr> {
        assert_eq!(u.len(), self.n);
        (0..self.n)
            .map(|k| {
                sum((0..self.n).map(|j| Expr::mul(self.entry(k, j).clone(), u[j].clone())))
            })
            .collect()
    }

    /// Numeric index raising at a point: solve G u = p.
    pub fn raise_at(&self, p: &[f64], env: &Env) -> Result<Vec<f64>> {
        let g = self.eval_spd(env)?;
        let rhs = DVector::from_column_slice(p);
        let sol = g
            .lu()
            .solve(&rhs)
            .ok_or_else(|| DescartesError::SingularMetric {
                detail: format!("linear solve failed at {:?}", env.coords),
            })?;
        Ok(sol.as_slice().to_vec())
    }

    /// Symbolic inverse via the adjugate. Intended for the small dimensions
    /// (N ≤ 4) this crate works in; entries share the symbolic determinant.
    pub fn inverse_sym(&self) -> Vec<Vec<Expr>> {
        let n = self.n;
        let rows = self.rows();
        let det = det_expr(&rows);
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
                inv[j][k] = Expr::div(signed, det.clone());
            }
        }
        inv
    }

    /// Symbolic determinant.
    pub fn det_sym(&self) -> Expr {
        det_expr(&self.rows())
    }

    /// Symbolic gradient vector G⁻¹ ∇f.
    pub fn grad_vector(&self, f: &Expr) -> Vec<Expr> {
        let df = grad_covector(f, self.n);
        let inv = self.inverse_sym();
        (0..self.n)
            .map(|k| sum((0..self.n).map(|j| Expr::mul(inv[k][j].clone(), df[j].clone()))))
            .collect()
    }

    /// Symbolic inner product of two vectors: Σ G_jk a^j b^k.
    pub fn inner(&self, a: &[Expr], b: &[Expr]) -> Expr {
        sum((0..self.n).flat_map(|j| {
            (0..self.n).map(move |k| {
                Expr::mul(
                    self.entry(j, k).clone(),
                    Expr::mul(a[j].clone(), b[k].clone()),
                )
            })
        }))
    }
}

// -------------------------------------------------------------------------------
// Forms and fields
// -------------------------------------------------------------------------------

/// One-form p = Σ p_k dx^k.
#[derive(Debug, Clone)]
pub struct OneFormField {
    pub comps: Vec<Expr>,
}

impl OneFormField {
    pub fn new(comps: Vec<Expr>) -> Self {
        OneFormField { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    /// Pairing with a vector field: p(u) = Σ p_k u^k.
    pub fn apply(&self, u: &[Expr]) -> Expr {
        sum(self
            .comps
            .iter()
            .zip(u)
            .map(|(p, v)| Expr::mul(p.clone(), v.clone())))
    }
}

/// Vector field u = Σ u^k ∂_k.
#[derive(Debug, Clone)]
pub struct VectorFieldDef {
    pub comps: Vec<Expr>,
}

impl VectorFieldDef {
    pub fn new(comps: Vec<Expr>) -> Self {
        VectorFieldDef { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }
}

/// Exterior derivative of a one-form, H_jk = ∂_j p_k − ∂_k p_j.
/// Only the strict upper triangle is stored, so antisymmetry is structural.
#[derive(Debug, Clone)]
pub struct TwoFormMatrix {
    n: usize,
    /// Entries (j,k) with j < k, row-major.
    upper: Vec<Expr>,
}

impl TwoFormMatrix {
    fn idx(&self, j: usize, k: usize) -> usize {
        debug_assert!(j < k && k < self.n);
        j * self.n - j * (j + 1) / 2 + (k - j - 1)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry H_jk, with the antisymmetric sign applied for j > k.
    pub fn entry(&self, j: usize, k: usize) -> Expr {
        use std::cmp::Ordering;
        match j.cmp(&k) {
            Ordering::Equal => Expr::Num(0.0),
            Ordering::Less => self.upper[self.idx(j, k)].clone(),
            Ordering::Greater => Expr::neg(self.upper[self.idx(k, j)].clone()),
        }
    }

    /// Evaluate the full antisymmetric matrix at a point.
    pub fn eval(&self, env: &Env) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in (j + 1)..n {
                let v = self.upper[self.idx(j, k)].eval(env)?;
                m[(j, k)] = v;
                m[(k, j)] = -v;
            }
        }
        Ok(m)
    }

    /// Interior product (ι_u H)_k = Σ_j u^j H_jk as a one-form.
    pub fn contract(&self, u: &[Expr]) -> OneFormField {
        let n = self.n;
        OneFormField::new(
            (0..n)
                .map(|k| sum((0..n).map(|j| Expr::mul(u[j].clone(), self.entry(j, k)))))
                .collect(),
        )
    }
}

/// Exterior derivative of a one-form via symbolic differentiation.
pub fn d_one_form(p: &OneFormField) -> TwoFormMatrix {
    let n = p.dim();
    let mut upper = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for k in (j + 1)..n {
            upper.push(Expr::sub(p.comps[k].diff(j), p.comps[j].diff(k)));
        }
    }
    TwoFormMatrix { n, upper }
}

// -------------------------------------------------------------------------------
// Curl and bracket
// -------------------------------------------------------------------------------

/// Curl of a 3-dimensional vector field with respect to a metric:
/// lower the field to p = G·u, then
/// rot u = (∂₂p₃ − ∂₃p₂, ∂₃p₁ − ∂₁p₃, ∂₁p₂ − ∂₂p₁) / √(det G).
pub fn rot3(g: &MetricField, u: &[Expr]) -> Result<Vec<Expr>> {
    if g.dim() != 3 || u.len() != 3 {
        return Err(DescartesError::InconsistentInput {
            message: format!(
                "rot3 requires dimension 3, got metric dim {} and field dim {}",
                g.dim(),
                u.len()
            ),
        });
    }
    let p = g.lower(u);
    let raw = [
        Expr::sub(p[2].diff(1), p[1].diff(2)),
        Expr::sub(p[0].diff(2), p[2].diff(0)),
        Expr::sub(p[1].diff(0), p[0].diff(1)),
    ];
    if g.is_identity() {
        return Ok(raw.to_vec());
    }
    let scale = Expr::sqrt(g.det_sym());
    Ok(raw
        .into_iter()
        .map(|e| Expr::div(e, scale.clone()))
        .collect())
}

/// Nambu-Jacobi bracket of N−1 functions on an N-dimensional space.
///
/// The k-th component (1-based k) is (−1)^(N+k) times the minor of the
/// (N−1)×N Jacobian matrix obtained by deleting column k. The resulting field
/// annihilates every df_j: df_j(bracket) = 0 identically.
pub fn nambu_bracket(fs: &[Expr], n: usize) -> Result<Vec<Expr>> {
    if fs.len() + 1 != n {
        return Err(DescartesError::InconsistentInput {
            message: format!(
                "nambu_bracket needs N−1 = {} functions for N = {}, got {}",
                n - 1,
                n,
                fs.len()
            ),
        });
    }
    let jac: Vec<Vec<Expr>> = fs.iter().map(|f| grad_covector(f, n)).collect();
    let mut comps = Vec::with_capacity(n);
    for k in 0..n {
        let minor: Vec<Vec<Expr>> = jac
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != k)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let det = det_expr(&minor);
        // (−1)^(N + k + 1) with zero-based k equals (−1)^(N + k) with 1-based k.
        let sign_positive = (n + k + 1) % 2 == 0;
        comps.push(if sign_positive { det } else { Expr::neg(det) });
    }
    Ok(comps)
}

/// Euclidean cross product of two symbolic 3-vectors (component formula).
pub fn cross3(a: &[Expr], b: &[Expr]) -> Vec<Expr> {
    assert_eq!(a.len(), 3);
    assert_eq!(b.len(), 3);
    vec![
        Expr::sub(
            Expr::mul(a[1].clone(), b[2].clone()),
            Expr::mul(a[2].clone(), b[1].clone()),
        ),
        Expr::sub(
            Expr::mul(a[2].clone(), b[0].clone()),
            Expr::mul(a[0].clone(), b[2].clone()),
        ),
        Expr::sub(
            Expr::mul(a[0].clone(), b[1].clone()),
            Expr::mul(a[1].clone(), b[0].clone()),
        ),
    ]
}
