//! Small dense QP for the slack-relaxed safety filter.
//!
//! ```text
//! min  ½‖u − u_ref‖² + ½ k_δ ‖δ‖²
//! s.t. a_rᵀu + δ_r ≤ b_r      (one signed slack per row)
//!      u_min ≤ u ≤ u_max       (hard box)
//! ```
//!
//! Solved with a primal active-set method. The Hessian is diagonal, so each
//! equality-constrained subproblem reduces to a Cholesky solve on the Gram
//! matrix of the working constraints. Constraint indices: rows first
//! (`0..m`), then the six upper bounds (`m..m+6`), then the six lower bounds
//! (`m+6..m+12`).

use thiserror::Error;

use crate::mathcore::Vec6;
use crate::Real;

/// Upper limit on slacked rows (6 power + 6 input).
pub const MAX_ROWS: usize = 12;
/// Iteration cap; each working-set change counts as one iteration.
pub const MAX_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("slack weight must be positive")]
    InvalidSlackWeight,
    #[error("constraint row {0} is not finite")]
    NonFiniteRow(usize),
    #[error("reference is not finite")]
    NonFiniteReference,
    #[error("box bound {0} is empty or not finite")]
    InvalidBox(usize),
    #[error("too many constraint rows: {0} > {MAX_ROWS}")]
    TooManyRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpRow<T> {
    pub a: Vec6<T>,
    pub b: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    pub u_ref: Vec6<T>,
    pub rows: Vec<QpRow<T>>,
    pub slack_weight: T,
    pub u_min: Vec6<T>,
    pub u_max: Vec6<T>,
}

impl<T: Real> QpProblem<T> {
    /// Problem with a symmetric box `|u_i| ≤ bound_i` and no rows.
    pub fn new(u_ref: Vec6<T>, bound: Vec6<T>, slack_weight: T) -> Self {
        Self { u_ref, rows: Vec::new(), slack_weight, u_min: -bound, u_max: bound }
    }

    pub fn push_row(&mut self, a: Vec6<T>, b: T) {
        self.rows.push(QpRow { a, b });
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len() + 12
    }

    pub fn validate(&self) -> Result<(), QpError> {
        if !(self.slack_weight > T::zero()) || !self.slack_weight.is_finite() {
            return Err(QpError::InvalidSlackWeight);
        }
        if self.rows.len() > MAX_ROWS {
            return Err(QpError::TooManyRows(self.rows.len()));
        }
        if !self.u_ref.is_finite() {
            return Err(QpError::NonFiniteReference);
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.a.is_finite() || !row.b.is_finite() {
                return Err(QpError::NonFiniteRow(r));
            }
        }
        for j in 0..6 {
            let (lo, hi) = (self.u_min[j], self.u_max[j]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(QpError::InvalidBox(j));
            }
        }
        Ok(())
    }

    /// Objective value at `(u, δ)`.
    pub fn objective(&self, u: &Vec6<T>, delta: &[T]) -> T {
        let du = *u - self.u_ref;
        let dd: T = delta.iter().map(|d| *d * *d).sum();
        T::half() * (du.norm_squared() + self.slack_weight * dd)
    }

    /// Absolute tolerance on constraint `k` at `x`. Local to the constraint so
    /// that a far-away row or a loose box does not blunt the others.
    fn tol(&self, k: usize, x: &[T]) -> T {
        let m = self.rows.len();
        let lhs = if k < m { (0..6).fold(x[6 + k].abs(), |s, j| s + (self.rows[k].a[j] * x[j]).abs()) } else { self.g_dot(k, x).abs() };
        T::epsilon() * T::lit(100.0) * (T::one() + lhs.max(self.h(k).abs()))
    }

    fn n_vars(&self) -> usize {
        6 + self.rows.len()
    }

    /// `g_kᵀx`.
    fn g_dot(&self, k: usize, x: &[T]) -> T {
        let m = self.rows.len();
        if k < m {
            self.rows[k].a.dot(&Vec6::from_fn(|j| x[j])) + x[6 + k]
        } else if k < m + 6 {
            x[k - m]
        } else {
            -x[k - m - 6]
        }
    }

    fn h(&self, k: usize) -> T {
        let m = self.rows.len();
        if k < m {
            self.rows[k].b
        } else if k < m + 6 {
            self.u_max[k - m]
        } else {
            -self.u_min[k - m - 6]
        }
    }

    /// `x ← x + c·W⁻¹g_k`.
    fn add_winv_g(&self, k: usize, c: T, x: &mut [T]) {
        let m = self.rows.len();
        if k < m {
            for j in 0..6 {
                x[j] += c * self.rows[k].a[j];
            }
            x[6 + k] += c / self.slack_weight;
        } else if k < m + 6 {
            x[k - m] += c;
        } else {
            x[k - m - 6] -= c;
        }
    }

    /// `g_kᵀ W⁻¹ g_l`.
    fn gram(&self, k: usize, l: usize) -> T {
        let mut e = vec![T::zero(); self.n_vars()];
        self.add_winv_g(l, T::one(), &mut e);
        self.g_dot(k, &e)
    }

    fn x0(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.n_vars()];
        for j in 0..6 {
            x[j] = self.u_ref[j];
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub u: Vec6<T>,
    /// One slack per row, `a_rᵀu + δ_r ≤ b_r`.
    pub delta: Vec<T>,
    /// Working-set constraint indices, ascending.
    pub active_set: Vec<usize>,
    /// Multipliers for every constraint (zero when inactive).
    pub multipliers: Vec<T>,
    pub kkt_residual: T,
    pub iterations: usize,
    pub status: QpStatus,
}

impl<T: Real> QpSolution<T> {
    pub fn objective(&self, p: &QpProblem<T>) -> T {
        p.objective(&self.u, &self.delta)
    }

    /// True if any row carries a nonzero slack.
    pub fn slack_active(&self) -> bool {
        self.delta.iter().any(|d| *d != T::zero())
    }
}

/// Reusable solver workspace; keeps the last active set for warm starts.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    warm: Vec<usize>,
    warm_rows: usize,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve<T: Real>(&mut self, p: &QpProblem<T>) -> Result<QpSolution<T>, QpError> {
        let warm = if self.warm_rows == p.rows.len() { self.warm.clone() } else { Vec::new() };
        let sol = solve_from(p, &warm)?;
        self.warm = sol.active_set.clone();
        self.warm_rows = p.rows.len();
        Ok(sol)
    }
}

/// Cold-start solve.
pub fn solve<T: Real>(p: &QpProblem<T>) -> Result<QpSolution<T>, QpError> {
    solve_from(p, &[])
}

struct Eqp<T> {
    x: Vec<T>,
    mu: Vec<T>,
}

/// Minimizer of the objective on `g_kᵀx = h_k, k ∈ set`.
fn solve_eqp<T: Real>(p: &QpProblem<T>, set: &[usize]) -> Option<Eqp<T>> {
    let k = set.len();
    let x0 = p.x0();
    let mut rhs: Vec<T> = set.iter().map(|&c| p.g_dot(c, &x0) - p.h(c)).collect();
    let mut g = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let v = p.gram(set[i], set[j]);
            g[i * k + j] = v;
            g[j * k + i] = v;
        }
    }
    cholesky(&mut g, k)?;
    cholesky_solve(&g, &mut rhs, k);
    let mut x = x0;
    for (i, &c) in set.iter().enumerate() {
        p.add_winv_g(c, -rhs[i], &mut x);
    }
    // One step of iterative refinement: the Gram matrix gets ill-conditioned
    // when a slacked row and a box bound act on the same variable.
    let mut r: Vec<T> = set.iter().map(|&c| p.g_dot(c, &x) - p.h(c)).collect();
    cholesky_solve(&g, &mut r, k);
    for (i, &c) in set.iter().enumerate() {
        p.add_winv_g(c, -r[i], &mut x);
        rhs[i] += r[i];
    }
    Some(Eqp { x, mu: rhs })
}

/// In-place lower Cholesky factor of an SPD `n×n` matrix.
fn cholesky<T: Real>(a: &mut [T], n: usize) -> Option<()> {
    let mut diag_max = T::zero();
    for i in 0..n {
        diag_max = diag_max.max(a[i * n + i].abs());
    }
    let floor = diag_max * T::epsilon() * T::lit(1e3);
    for j in 0..n {
        let mut d = a[j * n + j];
        for l in 0..j {
            d -= a[j * n + l] * a[j * n + l];
        }
        if !(d > floor) {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for l in 0..j {
                s -= a[i * n + l] * a[j * n + l];
            }
            a[i * n + j] = s / d;
        }
    }
    Some(())
}

fn cholesky_solve<T: Real>(l: &[T], b: &mut [T], n: usize) {
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * n + j] * b[j];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= l[j * n + i] * b[j];
        }
        b[i] = s / l[i * n + i];
    }
}

fn feasible<T: Real>(p: &QpProblem<T>, x: &[T], strict: bool) -> bool {
    (0..p.n_constraints()).all(|k| p.g_dot(k, x) <= p.h(k) + if strict { T::zero() } else { p.tol(k, x) })
}

fn max_abs<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn finish<T: Real>(p: &QpProblem<T>, x: Vec<T>, mut set: Vec<usize>, mu_set: &[T], iterations: usize, status: QpStatus) -> QpSolution<T> {
    let mut multipliers = vec![T::zero(); p.n_constraints()];
    for (i, &c) in set.iter().enumerate() {
        multipliers[c] = mu_set.get(i).copied().unwrap_or_else(T::zero);
    }
    set.sort_unstable();
    let m = p.rows.len();
    let mut sol = QpSolution {
        // The box is hard; this only removes round-off on active bounds.
        u: Vec6::from_fn(|j| x[j].max(p.u_min[j]).min(p.u_max[j])),
        delta: x[6..6 + m].to_vec(),
        active_set: set,
        multipliers,
        kkt_residual: T::zero(),
        iterations,
        status,
    };
    sol.kkt_residual = kkt_check(p, &sol);
    sol
}

/// Solve starting from a candidate working set (ignored if inconsistent).
pub fn solve_from<T: Real>(p: &QpProblem<T>, warm: &[usize]) -> Result<QpSolution<T>, QpError> {
    p.validate()?;
    let nc = p.n_constraints();
    let x0 = p.x0();
    if feasible(p, &x0, true) {
        return Ok(finish(p, x0, Vec::new(), &[], 0, QpStatus::Optimal));
    }

    // Starting point: warm working set if its subproblem solution is feasible,
    // otherwise the clamped reference with minimal slacks.
    let mut set: Vec<usize> = Vec::new();
    let mut x: Vec<T> = Vec::new();
    let warm: Vec<usize> = warm.iter().copied().filter(|&c| c < nc).collect();
    if !warm.is_empty() {
        if let Some(eq) = solve_eqp(p, &warm) {
            if feasible(p, &eq.x, false) {
                set = warm;
                x = eq.x;
            }
        }
    }
    if x.is_empty() {
        x = p.x0();
        for j in 0..6 {
            x[j] = x[j].max(p.u_min[j]).min(p.u_max[j]);
        }
        let u = Vec6::from_fn(|j| x[j]);
        for (r, row) in p.rows.iter().enumerate() {
            x[6 + r] = (row.b - row.a.dot(&u)).min(T::zero());
        }
    }

    let mut mu: Vec<T> = Vec::new();
    for iter in 0..MAX_ITER {
        let Some(eq) = solve_eqp(p, &set) else {
            return Ok(finish(p, x, set, &mu, iter, QpStatus::MaxIterations));
        };
        mu = eq.mu;
        let step: Vec<T> = eq.x.iter().zip(&x).map(|(a, b)| *a - *b).collect();
        let step_tol = T::epsilon() * T::lit(100.0) * (T::one() + max_abs(&x).max(max_abs(&eq.x)));
        if max_abs(&step) > step_tol {
            let mut alpha = T::one();
            let mut blocking = None;
            for c in 0..nc {
                if set.contains(&c) {
                    continue;
                }
                let gp = p.g_dot(c, &step);
                if gp > T::zero() {
                    let ratio = ((p.h(c) - p.g_dot(c, &x)) / gp).max(T::zero());
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(c);
                    }
                }
            }
            if let Some(c) = blocking {
                for (xi, si) in x.iter_mut().zip(&step) {
                    *xi += alpha * *si;
                }
                set.push(c);
                mu.push(T::zero());
                continue;
            }
        }
        // Full step reached the subproblem minimizer: check the multipliers.
        x = eq.x;
        let mu_tol = T::epsilon() * T::lit(100.0) * (T::one() + max_abs(&x).max(max_abs(&mu)));
        let mut worst: Option<usize> = None;
        for i in 0..set.len() {
            if mu[i] < -mu_tol && worst.is_none_or(|w| mu[i] < mu[w] || (mu[i] == mu[w] && set[i] < set[w])) {
                worst = Some(i);
            }
        }
        match worst {
            None => return Ok(finish(p, x, set, &mu, iter + 1, QpStatus::Optimal)),
            Some(i) => {
                set.remove(i);
                mu.remove(i);
            }
        }
    }
    Ok(finish(p, x, set, &mu, MAX_ITER, QpStatus::MaxIterations))
}

/// Largest of the stationarity, primal-feasibility, complementarity and
/// dual-feasibility residuals. Slack stationarity is measured in `W⁻¹` units.
pub fn kkt_check<T: Real>(p: &QpProblem<T>, sol: &QpSolution<T>) -> T {
    let m = p.rows.len();
    let mut x = vec![T::zero(); p.n_vars()];
    for j in 0..6 {
        x[j] = sol.u[j];
    }
    for r in 0..m {
        x[6 + r] = sol.delta.get(r).copied().unwrap_or_else(T::zero);
    }
    // W⁻¹ (W(x − x0) + Gᵀμ) = x − x0 + W⁻¹Gᵀμ
    let mut stat = x.clone();
    for j in 0..6 {
        stat[j] -= p.u_ref[j];
    }
    let mut res = T::zero();
    for k in 0..p.n_constraints() {
        let mu = sol.multipliers.get(k).copied().unwrap_or_else(T::zero);
        p.add_winv_g(k, mu, &mut stat);
        let slack = p.g_dot(k, &x) - p.h(k);
        res = res.max(slack.max(T::zero())).max((mu * slack).abs()).max(-mu);
    }
    stat.iter().fold(res, |r, s| r.max(s.abs()))
}
