//! Sequential minimal optimisation for the epsilon-SVR dual with a linear
//! kernel and an unpenalised intercept.
//!
//! The dual is written over `2n` variables `α_t ∈ [0, C]`, where `t < n`
//! carries sign `+1` and `t ≥ n` sign `-1` for sample `t mod n`:
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  Σ s_t α_t = 0,   Q_st = s_s s_t K(x_s, x_t)
//! p_t = ε - y_t (t < n),   p_t = ε + y_t (t ≥ n)
//! ```
//!
//! Each step picks a maximal-violating pair with second-order working set
//! selection, solves the two-variable sub-problem in closed form and
//! updates the gradient. The loop stops once the violation gap drops below
//! `tol`.

const TAU: f64 = 1e-12;

pub(crate) struct DualSolution {
    /// `α_i - α*_i` per sample.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Outer iterations, each worth `n` pair updates.
    pub iterations: usize,
    pub converged: bool,
    pub gap: f64,
}

struct Problem<'a> {
    n: usize,
    gram: &'a [f64],
}

impl Problem<'_> {
    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn idx(&self, t: usize) -> usize {
        if t < self.n {
            t
        } else {
            t - self.n
        }
    }

    #[inline]
    fn kernel(&self, s: usize, t: usize) -> f64 {
        self.gram[self.idx(s) * self.n + self.idx(t)]
    }

    #[inline]
    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.kernel(s, t)
    }
}

fn dual_objective(alpha: &[f64], grad: &[f64], p: &[f64]) -> f64 {
    // ½αᵀQα + pᵀα = ½ Σ α_t (G_t + p_t)
    0.5 * alpha
        .iter()
        .zip(grad)
        .zip(p)
        .map(|((a, g), p)| a * (g + p))
        .sum::<f64>()
}

/// Solves the dual for a precomputed row-major `n × n` Gram matrix.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve(
    gram: &[f64],
    y: &[f64],
    c: f64,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> DualSolution {
    let n = y.len();
    let l = 2 * n;
    let prob = Problem { n, gram };
    let p: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                epsilon - y[t]
            } else {
                epsilon + y[t - n]
            }
        })
        .collect();
    let qd: Vec<f64> = (0..l).map(|t| prob.kernel(t, t)).collect();
    let mut alpha = vec![0.0; l];
    let mut grad = p.clone();

    // one outer iteration is n pair updates, i.e. one pass over the samples
    let max_steps = max_iter.saturating_mul(n.max(1));
    let mut steps = 0usize;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    let mut last_obj = 0.0_f64;

    while steps < max_steps {
        // i: maximal violator from the "up" set
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            if prob.sign(t) > 0.0 {
                if alpha[t] < c && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = t;
                }
            } else if alpha[t] > 0.0 && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = t;
            }
        }

        // j: second-order choice from the "low" set
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        if i_sel != usize::MAX {
            let ki = &gram[prob.idx(i_sel) * n..][..n];
            let qdi = qd[i_sel];
            for k in 0..n {
                // positive half: t = k, s_t = +1
                if alpha[k] > 0.0 {
                    let grad_diff = gmax + grad[k];
                    gmax2 = gmax2.max(grad[k]);
                    if grad_diff > 0.0 {
                        let quad = qdi + qd[k] - 2.0 * ki[k];
                        let quad = if quad > 0.0 { quad } else { TAU };
                        let obj = -(grad_diff * grad_diff) / quad;
                        if obj <= best_obj {
                            best_obj = obj;
                            j_sel = k;
                        }
                    }
                }
            }
            for k in 0..n {
                // negative half: t = n + k, s_t = -1
                let t = n + k;
                if alpha[t] < c {
                    let grad_diff = gmax - grad[t];
                    gmax2 = gmax2.max(-grad[t]);
                    if grad_diff > 0.0 {
                        let quad = qdi + qd[t] - 2.0 * ki[k];
                        let quad = if quad > 0.0 { quad } else { TAU };
                        let obj = -(grad_diff * grad_diff) / quad;
                        if obj <= best_obj {
                            best_obj = obj;
                            j_sel = t;
                        }
                    }
                }
            }
        }

        gap = gmax + gmax2;
        if gap < tol || j_sel == usize::MAX {
            converged = true;
            break;
        }

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = prob.q(i, j);
        if prob.sign(i) != prob.sign(j) {
            let quad = qd[i] + qd[j] + 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = qd[i] + qd[j] - 2.0 * qij;
            let quad = if quad > 0.0 { quad } else { TAU };
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        if cfg!(debug_assertions) {
            // exact change of the quadratic objective for this pair update
            let lin = grad[i] * di + grad[j] * dj;
            let quad = 0.5 * (qd[i] * di * di + qd[j] * dj * dj) + qij * di * dj;
            // gradients carry accumulated rounding, so scale by their size
            let scale = (grad[i].abs() + grad[j].abs() + 1.0) * (di.abs() + dj.abs()) + quad.abs();
            debug_assert!(
                lin + quad
                    <= 1e-9 * scale + 4.0 * f64::EPSILON * (1.0 + grad[i].abs() + grad[j].abs()),
                "pair update increased the dual objective by {}",
                lin + quad
            );
        }
        let ui = prob.sign(i) * di;
        let uj = prob.sign(j) * dj;
        let ki = &gram[prob.idx(i) * n..][..n];
        let kj = &gram[prob.idx(j) * n..][..n];
        let (pos, neg) = grad.split_at_mut(n);
        for k in 0..n {
            let v = ui * ki[k] + uj * kj[k];
            pos[k] += v;
            neg[k] -= v;
        }
        steps += 1;

        if cfg!(test) {
            let obj = dual_objective(&alpha, &grad, &p);
            assert!(
                obj <= last_obj + 1e-9 * (1.0 + last_obj.abs()),
                "dual objective increased: {last_obj} -> {obj}"
            );
            last_obj = obj;
        }
    }

    // intercept from free variables, else the midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = prob.sign(t) * grad[t];
        let s = prob.sign(t);
        if alpha[t] >= c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };

    let coef = (0..n).map(|k| alpha[k] - alpha[k + n]).collect();
    let iterations = steps.div_ceil(n.max(1));
    DualSolution {
        coef,
        bias: -rho,
        iterations,
        converged,
        gap,
    }
}
