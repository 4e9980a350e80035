//! Helpers shared by the integration tests: an independent QP oracle and a
//! generator of random safety-filter-shaped QPs.

#![allow(dead_code, clippy::needless_range_loop)]

use powerflow_safety::mathcore::Vec6;
use powerflow_safety::qp::QpProblem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense constraint form `G x ≤ h` over `x = [u, δ]`, matching the solver's
/// constraint ordering (rows, upper bounds, lower bounds).
fn dense(p: &QpProblem<f64>) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let m = p.rows.len();
    let n = 6 + m;
    let mut g = Vec::new();
    let mut h = Vec::new();
    for (r, row) in p.rows.iter().enumerate() {
        let mut gi = vec![0.0; n];
        gi[..6].copy_from_slice(&row.a.0);
        gi[6 + r] = 1.0;
        g.push(gi);
        h.push(row.b);
    }
    for j in 0..6 {
        let mut gi = vec![0.0; n];
        gi[j] = 1.0;
        g.push(gi);
        h.push(p.u_max[j]);
    }
    for j in 0..6 {
        let mut gi = vec![0.0; n];
        gi[j] = -1.0;
        g.push(gi);
        h.push(-p.u_min[j]);
    }
    let mut w = vec![1.0; 6];
    w.extend(std::iter::repeat_n(p.slack_weight, m));
    (g, h, w)
}

/// Householder least squares `min ‖A z − b‖` for a column subset of `A`.
fn lstsq(a: &[Vec<f64>], cols: &[usize], b: &[f64]) -> Vec<f64> {
    let rows = a.len();
    let k = cols.len();
    let mut q: Vec<Vec<f64>> = (0..rows).map(|i| cols.iter().map(|&c| a[i][c]).collect()).collect();
    let mut rhs = b.to_vec();
    for j in 0..k {
        let norm: f64 = (j..rows).map(|i| q[i][j] * q[i][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if q[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..rows).map(|i| q[i][j]).collect();
        v[0] -= alpha;
        let vn: f64 = v.iter().map(|x| x * x).sum();
        if vn == 0.0 {
            continue;
        }
        for c in j..k {
            let s: f64 = (j..rows).map(|i| v[i - j] * q[i][c]).sum::<f64>() * 2.0 / vn;
            for i in j..rows {
                q[i][c] -= s * v[i - j];
            }
        }
        let s: f64 = (j..rows).map(|i| v[i - j] * rhs[i]).sum::<f64>() * 2.0 / vn;
        for i in j..rows {
            rhs[i] -= s * v[i - j];
        }
    }
    let mut z = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = rhs[j];
        for c in (j + 1)..k {
            s -= q[j][c] * z[c];
        }
        z[j] = if q[j][j] != 0.0 { s / q[j][j] } else { 0.0 };
    }
    z
}

/// Lawson–Hanson non-negative least squares.
fn nnls(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let rows = a.len();
    let cols = a[0].len();
    let mut x = vec![0.0; cols];
    let mut passive: Vec<usize> = Vec::new();
    let tol = 1e-13;
    let residual = |x: &[f64]| -> Vec<f64> { (0..rows).map(|i| b[i] - (0..cols).map(|j| a[i][j] * x[j]).sum::<f64>()).collect() };
    for _ in 0..(3 * cols + 10) {
        let r = residual(&x);
        let w: Vec<f64> = (0..cols).map(|j| (0..rows).map(|i| a[i][j] * r[i]).sum()).collect();
        let cand = (0..cols).filter(|j| !passive.contains(j)).max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap().then(j.cmp(&i)));
        match cand {
            Some(j) if w[j] > tol => passive.push(j),
            _ => break,
        }
        loop {
            let z = lstsq(a, &passive, b);
            if z.iter().all(|v| *v > 0.0) {
                for (i, &c) in passive.iter().enumerate() {
                    x[c] = z[i];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (i, &c) in passive.iter().enumerate() {
                if z[i] <= 0.0 {
                    alpha = alpha.min(x[c] / (x[c] - z[i]));
                }
            }
            for (i, &c) in passive.iter().enumerate() {
                x[c] += alpha * (z[i] - x[c]);
            }
            passive.retain(|&c| x[c] > tol);
            for c in 0..cols {
                if !passive.contains(&c) {
                    x[c] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    x
}

/// Oracle solution `(u, δ)` via the least-distance reformulation solved by
/// NNLS. Independent of the primal active-set solver under test.
pub fn oracle_ldp(p: &QpProblem<f64>) -> (Vec6<f64>, Vec<f64>) {
    let (g, h, w) = dense(p);
    let n = w.len();
    let mc = g.len();
    let mut x0 = vec![0.0; n];
    x0[..6].copy_from_slice(&p.u_ref.0);
    // y = W^{1/2}(x − x0); constraints −G W^{-1/2} y ≥ −(h − G x0).
    let mut mat = vec![vec![0.0; mc]; n + 1];
    for k in 0..mc {
        let gx0: f64 = (0..n).map(|j| g[k][j] * x0[j]).sum();
        for j in 0..n {
            mat[j][k] = -g[k][j] / w[j].sqrt();
        }
        mat[n][k] = -(h[k] - gx0);
    }
    let mut d = vec![0.0; n + 1];
    d[n] = 1.0;
    let z = nnls(&mat, &d);
    // Polish on the identified active set; NNLS alone loses digits when
    // slacks are large.
    let set: Vec<usize> = (0..mc).filter(|&k| z[k] > 0.0).collect();
    let (xp, _) = eqp(&g, &h, &w, &x0, &set);
    (Vec6::from_fn(|j| xp[j]), xp[6..].to_vec())
}

/// Minimizer on the equality set `G_S x = h_S` with its multipliers.
fn eqp(g: &[Vec<f64>], h: &[f64], w: &[f64], x0: &[f64], set: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = w.len();
    let k = set.len();
    let gram: Vec<Vec<f64>> = set.iter().map(|&a| set.iter().map(|&b| (0..n).map(|j| g[a][j] * g[b][j] / w[j]).sum()).collect()).collect();
    let rhs: Vec<f64> = set.iter().map(|&a| (0..n).map(|j| g[a][j] * x0[j]).sum::<f64>() - h[a]).collect();
    let cols: Vec<usize> = (0..k).collect();
    let mut mu = if k == 0 { Vec::new() } else { lstsq(&gram, &cols, &rhs) };
    let solve_x =
        |mu: &[f64]| -> Vec<f64> { (0..n).map(|j| x0[j] - set.iter().zip(mu).map(|(&a, mu)| g[a][j] * mu).sum::<f64>() / w[j]).collect() };
    let mut x = solve_x(&mu);
    // Refine: the Gram matrix is badly conditioned when a slacked row and a
    // bound act on the same variable.
    for _ in 0..2 {
        if k == 0 {
            break;
        }
        let res: Vec<f64> = set.iter().map(|&a| (0..n).map(|j| g[a][j] * x[j]).sum::<f64>() - h[a]).collect();
        let d = lstsq(&gram, &cols, &res);
        for (m, dm) in mu.iter_mut().zip(&d) {
            *m += dm;
        }
        x = solve_x(&mu);
    }
    (x, mu)
}

/// Brute-force oracle: enumerate working sets (each box pair contributes at
/// most one bound) in order of size and return the first KKT point.
pub fn oracle_enumerate(p: &QpProblem<f64>) -> Option<(Vec6<f64>, Vec<f64>)> {
    let (g, h, w) = dense(p);
    let n = w.len();
    let m = p.rows.len();
    let mut x0 = vec![0.0; n];
    x0[..6].copy_from_slice(&p.u_ref.0);
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for rmask in 0u32..(1 << m) {
        for code in 0..729u32 {
            let mut set: Vec<usize> = (0..m).filter(|r| rmask & (1 << r) != 0).collect();
            let mut c = code;
            for j in 0..6 {
                match c % 3 {
                    1 => set.push(m + j),
                    2 => set.push(m + 6 + j),
                    _ => {}
                }
                c /= 3;
            }
            sets.push(set);
        }
    }
    sets.sort_by_key(|s| s.len());
    for set in sets {
        let (x, mu) = eqp(&g, &h, &w, &x0, &set);
        let scale = 1.0 + h.iter().chain(&x0).fold(0.0f64, |m, v| m.max(v.abs()));
        let mu_scale = 1.0 + mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let eq_ok = set.iter().all(|&a| ((0..n).map(|j| g[a][j] * x[j]).sum::<f64>() - h[a]).abs() < 1e-9 * scale);
        let feas = (0..g.len()).all(|a| (0..n).map(|j| g[a][j] * x[j]).sum::<f64>() <= h[a] + 1e-9 * scale);
        if eq_ok && feas && mu.iter().all(|v| *v >= -1e-9 * mu_scale) {
            return Some((Vec6::from_fn(|j| x[j]), x[6..].to_vec()));
        }
    }
    None
}

/// Random QP shaped like the safety filter: up to 12 slacked rows plus the
/// jerk box. About one in eight problems is unconstrained at `u_ref`.
pub fn random_qp(rng: &mut ChaCha8Rng, max_rows: usize) -> QpProblem<f64> {
    let u_ref: Vec6<f64> = Vec6::from_fn(|_| rng.gen_range(-150.0..150.0));
    let bound: Vec6<f64> = Vec6::from_fn(|_| rng.gen_range(1.0..120.0));
    let mut p = QpProblem::new(u_ref, bound, 1e6);
    let m = rng.gen_range(0..=max_rows);
    let unconstrained = rng.gen_ratio(1, 8);
    for _ in 0..m {
        let mut a = Vec6::zeros();
        // Mostly diagonal rows like the CBF assembly, some dense.
        if rng.gen_bool(0.7) {
            a[rng.gen_range(0..6)] = rng.gen_range(-3.0..3.0);
        } else {
            a = Vec6::from_fn(|_| rng.gen_range(-2.0..2.0));
        }
        let b = if unconstrained { a.dot(&u_ref) + rng.gen_range(0.0..10.0) } else { rng.gen_range(-200.0..200.0) };
        p.push_row(a, b);
    }
    if unconstrained {
        p.u_max = Vec6::from_fn(|j| u_ref[j].abs() + bound[j]);
        p.u_min = -p.u_max;
    }
    p
}
