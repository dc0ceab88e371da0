//! Dense strictly convex quadratic programs.
//!
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  c_i' x <= r_i   or   c_i' x >= r_i
//! ```
//!
//! Solved with a dual active-set method in the style of Goldfarb and Idnani:
//! start from the unconstrained minimiser `-P^-1 q`, repeatedly add the most
//! violated row, and drop rows whose multiplier would turn negative. Each
//! step solves the equality-constrained subproblem of the current active set
//! through its KKT system. The iterates stay dual feasible, so when a
//! violated row cannot be added by any dual step the primal problem is
//! infeasible and this is reported as a status, not an error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::certificates::Sense;

const SYMMETRY_TOL: f64 = 1e-12;
const VIOLATION_TOL: f64 = 1e-11;
const STEP_TOL: f64 = 1e-13;
const DEPENDENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("cost matrix is {rows}x{cols}, expected {dim}x{dim}")]
    Dimension { rows: usize, cols: usize, dim: usize },
    #[error("row {0} has the wrong number of coefficients")]
    RowDimension(usize),
    #[error("cost matrix is not symmetric")]
    NotSymmetric,
    #[error("cost matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("problem data contains non-finite values")]
    NonFinite,
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpRow {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
    pub sense: Sense,
}

impl QpRow {
    pub fn le(coeffs: &[f64], rhs: f64) -> Self {
        Self {
            coeffs: DVector::from_column_slice(coeffs),
            rhs,
            sense: Sense::LessEq,
        }
    }

    pub fn ge(coeffs: &[f64], rhs: f64) -> Self {
        Self {
            coeffs: DVector::from_column_slice(coeffs),
            rhs,
            sense: Sense::GreaterEq,
        }
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let lhs = self.coeffs.dot(x);
        match self.sense {
            Sense::LessEq => (lhs - self.rhs).max(0.0),
            Sense::GreaterEq => (self.rhs - lhs).max(0.0),
        }
    }

    /// The row in `a' x <= b` form.
    pub fn as_upper(&self) -> (DVector<f64>, f64) {
        match self.sense {
            Sense::LessEq => (self.coeffs.clone(), self.rhs),
            Sense::GreaterEq => (-&self.coeffs, -self.rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub rows: Vec<QpRow>,
}

impl QpProblem {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        Self {
            p,
            q,
            rows: Vec::new(),
        }
    }

    pub fn with_row(mut self, row: QpRow) -> Self {
        self.rows.push(row);
        self
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.rows
            .iter()
            .map(|r| r.violation(x))
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<Cholesky<f64, Dyn>, QpError> {
        let n = self.dim();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(QpError::Dimension {
                rows: self.p.nrows(),
                cols: self.p.ncols(),
                dim: n,
            });
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(QpError::RowDimension(i));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(QpError::NonFinite);
            }
        }
        if self.p.iter().chain(self.q.iter()).any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        if (&self.p - self.p.transpose()).amax() > SYMMETRY_TOL {
            return Err(QpError::NotSymmetric);
        }
        Cholesky::new(self.p.clone()).ok_or(QpError::NotPositiveDefinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Optimal point, or the last iterate when infeasible.
    pub x: DVector<f64>,
    /// Indices of the rows in the final active set, ascending.
    pub active_set: Vec<usize>,
    /// One non-negative multiplier per row (zero for inactive rows), with
    /// `P x + q + sum_i lambda_i a_i = 0` for the rows written as `a_i' x <= b_i`.
    pub multipliers: Vec<f64>,
    pub objective: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Row normalised to `n' x >= b` with `|n| = 1`.
struct NormalRow {
    n: DVector<f64>,
    b: f64,
    scale: f64,
}

fn normalise(row: &QpRow) -> Option<NormalRow> {
    let (a, ub) = row.as_upper();
    let norm = a.norm();
    if norm == 0.0 {
        return None;
    }
    Some(NormalRow {
        n: -a / norm,
        b: -ub / norm,
        scale: norm,
    })
}

pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let chol = problem.validate()?;
    let n = problem.dim();
    let m = problem.rows.len();

    // Rows with all-zero coefficients are either vacuous or make the problem
    // infeasible outright.
    let mut trivially_infeasible = false;
    let normal: Vec<Option<NormalRow>> = problem
        .rows
        .iter()
        .map(|r| {
            let nr = normalise(r);
            if nr.is_none() && r.violation(&DVector::zeros(n)) > VIOLATION_TOL {
                trivially_infeasible = true;
            }
            nr
        })
        .collect();

    let mut x = -chol.solve(&problem.q);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();

    let finish = |status: QpStatus, x: DVector<f64>, active: &[usize], u: &[f64]| {
        let mut multipliers = vec![0.0; m];
        let mut sorted = Vec::with_capacity(active.len());
        for (&i, &ui) in active.iter().zip(u) {
            let scale = normal[i].as_ref().map_or(1.0, |r| r.scale);
            multipliers[i] = ui / scale;
            sorted.push(i);
        }
        sorted.sort_unstable();
        QpSolution {
            status,
            objective: problem.objective(&x),
            x,
            active_set: sorted,
            multipliers,
        }
    };

    if trivially_infeasible {
        return Ok(finish(QpStatus::Infeasible, x, &active, &u));
    }

    let max_iter = 20 * (n + m + 1) * (m + 1);
    let mut iter = 0;
    loop {
        // most violated inactive row, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for (i, nr) in normal.iter().enumerate() {
            let Some(nr) = nr else { continue };
            if active.contains(&i) {
                continue;
            }
            let s = nr.n.dot(&x) - nr.b;
            if s < -VIOLATION_TOL && pick.is_none_or(|(_, best)| s < best) {
                pick = Some((i, s));
            }
        }
        let Some((p, _)) = pick else {
            if let Some((xr, ur)) = refine(problem, &chol, &normal, &active) {
                x = xr;
                u = ur;
            }
            return Ok(finish(QpStatus::Optimal, x, &active, &u));
        };
        let np = &normal[p].as_ref().expect("picked rows are normalised").n;
        let bp = normal[p].as_ref().expect("picked rows are normalised").b;
        let mut up = 0.0;

        loop {
            iter += 1;
            if iter > max_iter {
                return Err(QpError::IterationLimit);
            }
            let (z, r, independent) = step_directions(&chol, &normal, &active, np);

            // largest dual step keeping active multipliers non-negative
            let r_floor = STEP_TOL * r.amax().max(1.0);
            let mut t1 = f64::INFINITY;
            let mut drop_k = None;
            for (k, (&rk, &uk)) in r.iter().zip(&u).enumerate() {
                if rk > r_floor {
                    let t = uk / rk;
                    if t < t1 {
                        t1 = t;
                        drop_k = Some(k);
                    }
                }
            }

            let zn = z.dot(np);
            if active.len() >= n || independent <= DEPENDENT_TOL || zn <= 0.0 {
                // dependent row: only the dual can move
                let Some(k) = drop_k else {
                    return Ok(finish(QpStatus::Infeasible, x, &active, &u));
                };
                for (uj, rj) in u.iter_mut().zip(r.iter()) {
                    *uj -= t1 * rj;
                }
                up += t1;
                active.remove(k);
                u.remove(k);
                continue;
            }

            let sp = np.dot(&x) - bp;
            let t2 = (-sp / zn).max(0.0);
            let t = t1.min(t2);
            x += &z * t;
            for (uj, rj) in u.iter_mut().zip(r.iter()) {
                *uj -= t * rj;
            }
            up += t;

            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let k = drop_k.expect("finite partial step has a blocking row");
            active.remove(k);
            u.remove(k);
        }
    }
}

/// Re-solve the equality-constrained problem on the final active set in one
/// shot, which removes the round-off accumulated over the dual steps. The
/// result is only used when it stays primal and dual feasible.
fn refine(
    problem: &QpProblem,
    chol: &Cholesky<f64, Dyn>,
    normal: &[Option<NormalRow>],
    active: &[usize],
) -> Option<(DVector<f64>, Vec<f64>)> {
    if active.is_empty() {
        return None;
    }
    let dim = problem.dim();
    let k = active.len();
    let mut nmat = DMatrix::zeros(dim, k);
    let mut b = DVector::zeros(k);
    for (col, &i) in active.iter().enumerate() {
        let nr = normal[i].as_ref()?;
        nmat.set_column(col, &nr.n);
        b[col] = nr.b;
    }
    // P x + q = N u,  N' x = b. With P = L L' and J = L^-1 N = Q R this is
    // u = R^-1 (R^-T b + Q' c), x = L^-T (J u - c), c = L^-1 q, which keeps
    // the conditioning of R instead of squaring it.
    let l = chol.l();
    let j = l.solve_lower_triangular(&nmat)?;
    let qr = j.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let solve_kkt = |rx: &DVector<f64>, rb: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        // P dx - N du = rx,  N' dx = rb
        let c = l.solve_lower_triangular(rx)?;
        let rtb = r.tr_solve_upper_triangular(rb)?;
        let du = r.solve_upper_triangular(&(rtb - q.transpose() * &c))?;
        let dx = l.transpose().solve_upper_triangular(&(&j * &du + c))?;
        Some((dx, du))
    };
    let (mut x, mut u) = solve_kkt(&-&problem.q, &b)?;
    for _ in 0..3 {
        let r1 = &nmat * &u - &problem.p * &x - &problem.q;
        let r2 = &b - nmat.transpose() * &x;
        let (dx, du) = solve_kkt(&r1, &r2)?;
        x += dx;
        u += du;
    }
    // rows are unit normals, so a few ulps of |x| is the best any point can do
    let tol = VIOLATION_TOL.max(8.0 * f64::EPSILON * x.amax());
    let primal_ok = normal
        .iter()
        .flatten()
        .all(|nr| nr.n.dot(&x) - nr.b >= -tol.max(8.0 * f64::EPSILON * nr.b.abs()));
    let dual_ok = u.iter().all(|&ui| ui >= 0.0);
    (primal_ok && dual_ok).then(|| (x, u.iter().copied().collect()))
}

/// Primal direction `z` and dual direction `r` for adding row `np` to the
/// active set: `z = P^-1 (np - N r)` with `N' z = 0`. Also returns the
/// relative norm of the part of `np` (in the `P^-1` metric) that is
/// independent of the active normals.
///
/// Works on `J = L^-1 N` with `P = L L'` and a QR factorisation of `J`, so
/// the projection keeps full precision even for nearly parallel rows.
fn step_directions(
    chol: &Cholesky<f64, Dyn>,
    normal: &[Option<NormalRow>],
    active: &[usize],
    np: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, f64) {
    let l = chol.l();
    let d = l
        .solve_lower_triangular(np)
        .expect("Cholesky factor is invertible");
    let d_norm = d.norm();
    let k = active.len();
    let (w, r) = if k == 0 {
        (d, DVector::zeros(0))
    } else {
        let dim = np.len();
        let mut nmat = DMatrix::zeros(dim, k);
        for (col, &i) in active.iter().enumerate() {
            nmat.set_column(col, &normal[i].as_ref().expect("active rows are normalised").n);
        }
        let j = l
            .solve_lower_triangular(&nmat)
            .expect("Cholesky factor is invertible");
        let qr = j.qr();
        let q = qr.q();
        let qtd = q.transpose() * &d;
        let w = &d - &q * &qtd;
        let r = qr
            .r()
            .solve_upper_triangular(&qtd)
            .unwrap_or_else(|| DVector::zeros(k));
        (w, r)
    };
    let z = l
        .transpose()
        .solve_upper_triangular(&w)
        .expect("Cholesky factor is invertible");
    let independent = if d_norm > 0.0 { w.norm() / d_norm } else { 0.0 };
    (z, r, independent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktFailure {
    NotOptimal,
    PrimalFeasibility,
    DualFeasibility,
    Stationarity,
    ComplementarySlackness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub primal_violation: f64,
    pub min_multiplier: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub failures: Vec<KktFailure>,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const KKT_PRIMAL_TOL: f64 = 1e-8;
pub const KKT_DUAL_TOL: f64 = 1e-9;
pub const KKT_STATIONARITY_TOL: f64 = 1e-7;
pub const KKT_COMPLEMENTARITY_TOL: f64 = 1e-7;

/// Check the KKT conditions of `solution` against `problem`.
pub fn kkt_check(problem: &QpProblem, solution: &QpSolution) -> KktReport {
    let x = &solution.x;
    let mut grad = &problem.p * x + &problem.q;
    let mut complementarity = 0.0;
    for (row, &lambda) in problem.rows.iter().zip(&solution.multipliers) {
        let (a, b) = row.as_upper();
        grad += &a * lambda;
        complementarity += lambda * (a.dot(x) - b);
    }
    let primal_violation = problem.max_violation(x);
    let min_multiplier = solution
        .multipliers
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let stationarity = grad.amax();

    let mut failures = Vec::new();
    if solution.status != QpStatus::Optimal {
        failures.push(KktFailure::NotOptimal);
    }
    if primal_violation > KKT_PRIMAL_TOL {
        failures.push(KktFailure::PrimalFeasibility);
    }
    if min_multiplier < -KKT_DUAL_TOL {
        failures.push(KktFailure::DualFeasibility);
    }
    if stationarity >= KKT_STATIONARITY_TOL {
        failures.push(KktFailure::Stationarity);
    }
    if complementarity.abs() >= KKT_COMPLEMENTARITY_TOL {
        failures.push(KktFailure::ComplementarySlackness);
    }
    KktReport {
        primal_violation,
        min_multiplier,
        stationarity,
        complementarity: complementarity.abs(),
        failures,
    }
}
