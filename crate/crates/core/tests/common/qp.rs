//! Reference solver for the primal epsilon-SVR with a log-barrier interior
//! point method.
//!
//! ```text
//! min ½‖w‖² + C Σ (ξ_i + ξ*_i)
//!   ξ_i  ≥ e_i - ε,   ξ*_i ≥ -e_i - ε,   ξ_i, ξ*_i ≥ 0,   e_i = w·x_i + b - y_i
//! ```
//!
//! The slack blocks of the Newton system are diagonal, so each step solves
//! only a `(d + 1) × (d + 1)` Schur complement.

use nalgebra::{DMatrix, DVector};

pub struct QpSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

struct State {
    z: Vec<f64>,
    xi: Vec<f64>,
    xs: Vec<f64>,
}

fn residuals(x: &[Vec<f64>], y: &[f64], z: &[f64]) -> Vec<f64> {
    let d = z.len() - 1;
    x.iter()
        .zip(y)
        .map(|(row, t)| z[d] + row.iter().zip(z).map(|(a, w)| a * w).sum::<f64>() - t)
        .collect()
}

fn objective(st: &State, c: f64) -> f64 {
    let d = st.z.len() - 1;
    0.5 * st.z[..d].iter().map(|w| w * w).sum::<f64>()
        + c * (st.xi.iter().sum::<f64>() + st.xs.iter().sum::<f64>())
}

fn barrier(st: &State, x: &[Vec<f64>], y: &[f64], c: f64, eps: f64, t: f64) -> Option<f64> {
    let e = residuals(x, y, &st.z);
    let mut logs = 0.0;
    for i in 0..y.len() {
        let s = [
            st.xi[i] - e[i] + eps,
            st.xs[i] + e[i] + eps,
            st.xi[i],
            st.xs[i],
        ];
        if s.iter().any(|v| *v <= 0.0) {
            return None;
        }
        logs += s.iter().map(|v| v.ln()).sum::<f64>();
    }
    Some(t * objective(st, c) - logs)
}

pub fn solve(x: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> QpSolution {
    let n = y.len();
    let d = x[0].len();
    let mut st = State {
        z: vec![0.0; d + 1],
        xi: vec![0.0; n],
        xs: vec![0.0; n],
    };
    let e0 = residuals(x, y, &st.z);
    for i in 0..n {
        st.xi[i] = (e0[i] - eps).max(0.0) + 1.0;
        st.xs[i] = (-e0[i] - eps).max(0.0) + 1.0;
    }

    let mut t = 1.0;
    let m = 4.0 * n as f64;
    loop {
        for _ in 0..200 {
            let e = residuals(x, y, &st.z);
            let mut gz = vec![0.0; d + 1];
            for j in 0..d {
                gz[j] = t * st.z[j];
            }
            let mut s_mat = DMatrix::<f64>::zeros(d + 1, d + 1);
            for j in 0..d {
                s_mat[(j, j)] = t;
            }
            let mut rhs = DVector::<f64>::zeros(d + 1);
            let mut parts = Vec::with_capacity(n);
            for i in 0..n {
                let s1 = st.xi[i] - e[i] + eps;
                let s2 = st.xs[i] + e[i] + eps;
                let s3 = st.xi[i];
                let s4 = st.xs[i];
                let g_xi = t * c - 1.0 / s1 - 1.0 / s3;
                let g_xs = t * c - 1.0 / s2 - 1.0 / s4;
                let (q1, q3, q2, q4) = (s1 * s1, s3 * s3, s2 * s2, s4 * s4);
                let weight = 1.0 / (q1 + q3) + 1.0 / (q2 + q4);
                let coef_g = g_xi * q3 / (q1 + q3) - g_xs * q4 / (q2 + q4);
                let a: Vec<f64> = x[i].iter().cloned().chain(std::iter::once(1.0)).collect();
                for p in 0..=d {
                    gz[p] += a[p] * (1.0 / s1 - 1.0 / s2);
                    rhs[p] -= a[p] * coef_g;
                    for q in 0..=d {
                        s_mat[(p, q)] += weight * a[p] * a[q];
                    }
                }
                parts.push((a, g_xi, g_xs, q1, q2, q3, q4));
            }
            for p in 0..=d {
                rhs[p] -= gz[p];
            }
            let dz = match s_mat.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => s_mat.lu().solve(&rhs).expect("singular Schur complement"),
            };
            let mut dxi = vec![0.0; n];
            let mut dxs = vec![0.0; n];
            for (i, (a, g_xi, g_xs, q1, q2, q3, q4)) in parts.iter().enumerate() {
                let adz: f64 = a.iter().zip(dz.iter()).map(|(u, v)| u * v).sum();
                dxi[i] = (-g_xi * q1 * q3 + adz * q3) / (q1 + q3);
                dxs[i] = (-g_xs * q2 * q4 - adz * q4) / (q2 + q4);
            }

            let decrement: f64 = -(gz.iter().zip(dz.iter()).map(|(g, v)| g * v).sum::<f64>()
                + parts.iter().zip(&dxi).map(|(p, v)| p.1 * v).sum::<f64>()
                + parts.iter().zip(&dxs).map(|(p, v)| p.2 * v).sum::<f64>());
            if decrement / 2.0 < 1e-12 {
                break;
            }

            let base = barrier(&st, x, y, c, eps, t).expect("iterate left the feasible set");
            let mut step = 1.0;
            loop {
                let cand = State {
                    z: st
                        .z
                        .iter()
                        .zip(dz.iter())
                        .map(|(a, b)| a + step * b)
                        .collect(),
                    xi: st.xi.iter().zip(&dxi).map(|(a, b)| a + step * b).collect(),
                    xs: st.xs.iter().zip(&dxs).map(|(a, b)| a + step * b).collect(),
                };
                if let Some(v) = barrier(&cand, x, y, c, eps, t) {
                    if v <= base - 0.25 * step * decrement {
                        st = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-20 {
                    break;
                }
            }
            if step < 1e-20 {
                break;
            }
        }
        if m / t < 1e-10 * objective(&st, c).max(1.0) {
            break;
        }
        t *= 8.0;
    }
    QpSolution {
        weights: st.z[..d].to_vec(),
        bias: st.z[d],
        objective: objective(&st, c),
    }
}
