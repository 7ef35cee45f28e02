//! Shared generators and independent reference implementations for the
//! integration tests. Nothing here calls into the code under test except to
//! obtain inputs.

#![allow(
    dead_code,
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::neg_cmp_op_on_partial_ord
)]

pub mod criteria;
pub mod qp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Test signals of mixed texture: iid noise, quarter-step random walks with
/// many exact ties and zeros, smooth AR(1) series and quantised sinusoids.
pub fn oracle_signals(seed: u64, count: usize, min_len: usize, max_len: usize) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let n = r.random_range(min_len..=max_len);
            match i % 4 {
                0 => (0..n)
                    .map(|_| r.sample::<f64, _>(StandardNormal) * 3.0)
                    .collect(),
                1 => {
                    let mut v = 0.0;
                    (0..n)
                        .map(|_| {
                            v += 0.25 * r.random_range(-1..=1) as f64;
                            v
                        })
                        .collect()
                }
                2 => {
                    let phi = r.random_range(0.7..0.99);
                    let mut v: f64 = 0.0;
                    (0..n)
                        .map(|_| {
                            v = phi * v + r.sample::<f64, _>(StandardNormal);
                            v
                        })
                        .collect()
                }
                _ => {
                    let f = r.random_range(0.005..0.05);
                    (0..n)
                        .map(|t| {
                            let s = (t as f64 * f * std::f64::consts::TAU).sin() * 4.0
                                + r.random_range(-0.5..0.5);
                            (s * 2.0).round() / 2.0
                        })
                        .collect()
                }
            }
        })
        .collect()
}

// ---- feature oracle ----

fn naive_mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

fn naive_quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    if lo + 1 >= s.len() {
        return s[lo];
    }
    let frac = pos - lo as f64;
    s[lo] + frac * (s[lo + 1] - s[lo])
}

fn naive_sample_entropy(x: &[f64], m: usize, r: f64) -> f64 {
    let n = x.len();
    if n < m + 2 {
        return 0.0;
    }
    let count = |len: usize| -> u64 {
        let mut c = 0;
        for i in 0..n - m {
            for j in 0..n - m {
                if i == j {
                    continue;
                }
                let mut dist: f64 = 0.0;
                for k in 0..len {
                    dist = dist.max((x[i + k] - x[j + k]).abs());
                }
                if dist <= r {
                    c += 1;
                }
            }
        }
        c
    };
    let b = count(m);
    let a = count(m + 1);
    if a == 0 || b == 0 {
        0.0
    } else {
        -((a as f64) / (b as f64)).ln()
    }
}

/// Every feature from its textbook definition, in canonical column order.
pub fn naive_features(
    x: &[f64],
    peak_support: usize,
    level: f64,
    saen_m: usize,
    saen_r: f64,
) -> [f64; 24] {
    let n = x.len();
    let nf = n as f64;
    let mean = naive_mean(x);
    let constant = x.iter().all(|v| *v == x[0]);

    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let pop_std = if constant { 0.0 } else { (ss / nf).sqrt() };
    let sample_std = (ss / (nf - 1.0)).sqrt();

    // bias-adjusted moment coefficients written via the sample std
    let skew = if constant || n < 3 {
        0.0
    } else {
        let s3: f64 = x.iter().map(|v| ((v - mean) / sample_std).powi(3)).sum();
        nf / ((nf - 1.0) * (nf - 2.0)) * s3
    };
    let kurt = if constant || n < 4 {
        0.0
    } else {
        let s4: f64 = x.iter().map(|v| ((v - mean) / sample_std).powi(4)).sum();
        nf * (nf + 1.0) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0)) * s4
            - 3.0 * (nf - 1.0).powi(2) / ((nf - 2.0) * (nf - 3.0))
    };

    let abs_e: f64 = x.iter().map(|v| v * v).sum();
    let saen = naive_sample_entropy(x, saen_m, saen_r * pop_std);

    let diffs: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let asoc: f64 = diffs.iter().map(|d| d.abs()).sum();
    let mach = asoc / nf;
    let mch = diffs.iter().sum::<f64>() / (nf - 1.0);
    let mut msdc = 0.0;
    for i in 0..n.saturating_sub(2) {
        msdc += 0.5 * (x[i + 2] - 2.0 * x[i + 1] + x[i]);
    }
    msdc /= 2.0 * (nf - 1.0);

    let run = |above: bool| {
        let mut best = 0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && (if above { x[j] > mean } else { x[j] < mean }) {
                j += 1;
            }
            best = best.max(j - i);
            i = j + 1;
        }
        best as f64 / nf
    };
    let lsame = run(true);
    let lsbme = run(false);

    let mut repeated = 0;
    for i in 0..n {
        if (0..n).any(|j| j != i && x[j] == x[i]) {
            repeated += 1;
        }
    }
    let preda = repeated as f64 / nf;

    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let flmi = x.iter().position(|v| *v == min).unwrap() as f64 / nf;
    let llmi = (x.iter().rposition(|v| *v == min).unwrap() + 1) as f64 / nf;
    let flma = x.iter().position(|v| *v == max).unwrap() as f64 / nf;
    let llma = (x.iter().rposition(|v| *v == max).unwrap() + 1) as f64 / nf;

    // samples exactly at the level are dropped, then sign flips counted
    let signs: Vec<bool> = x
        .iter()
        .filter(|v| **v != level)
        .map(|v| *v > level)
        .collect();
    let crm = signs.windows(2).filter(|w| w[0] != w[1]).count();

    let mut peaks = 0;
    for i in 0..n {
        if i < peak_support || i + peak_support >= n {
            continue;
        }
        let left = &x[i - peak_support..i];
        let right = &x[i + 1..=i + peak_support];
        if left.iter().chain(right).all(|v| x[i] > *v) {
            peaks += 1;
        }
    }
    let cbme = x.iter().filter(|v| **v < mean).count();

    [
        pop_std,
        naive_quantile(x, 0.05),
        naive_quantile(x, 0.25),
        naive_quantile(x, 0.50),
        naive_quantile(x, 0.75),
        naive_quantile(x, 0.95),
        skew,
        kurt,
        abs_e,
        saen,
        asoc,
        mach,
        mch,
        msdc,
        lsame,
        lsbme,
        preda,
        flmi,
        llmi,
        flma,
        llma,
        crm as f64,
        peaks as f64,
        cbme as f64,
    ]
}

// ---- statistics oracle ----

pub fn naive_pearson(x: &[f64], z: &[f64]) -> f64 {
    let mx = naive_mean(x);
    let mz = naive_mean(z);
    let cov: f64 = x.iter().zip(z).map(|(a, b)| (a - mx) * (b - mz)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vz: f64 = z.iter().map(|b| (b - mz).powi(2)).sum();
    cov / (vx.sqrt() * vz.sqrt())
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Two-tailed Student-t tail probability by quadrature. With `x = tan θ`
/// the density becomes `cos^(ν-1) θ / (cos² θ + sin² θ / ν)^((ν+1)/2)` up
/// to a constant, which is smooth and bounded on `[0, π/2]`; the constant
/// cancels by integrating the same function over the whole half-line.
pub fn t_two_tailed_by_quadrature(t: f64, df: f64) -> f64 {
    let g = |theta: f64| {
        let (s, c) = theta.sin_cos();
        if c <= 0.0 {
            return 0.0;
        }
        ((df - 1.0) * c.ln() - (df + 1.0) / 2.0 * (c * c + s * s / df).ln()).exp()
    };
    let half = std::f64::consts::FRAC_PI_2;
    let theta0 = t.abs().atan();
    let tail = integrate(g, theta0, half, 1e-14);
    let total = integrate(g, 0.0, half, 1e-14);
    (tail / total).min(1.0)
}

/// Pairs `(x, z)` with random length and random true correlation.
pub fn random_pairs(seed: u64, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.random_range(5..=300);
            let rho: f64 = r.random_range(-0.9..0.9);
            let noise = Normal::new(0.0, 1.0).unwrap();
            let x: Vec<f64> = (0..n).map(|_| noise.sample(&mut r)).collect();
            let z: Vec<f64> = x
                .iter()
                .map(|v| rho * v + (1.0 - rho * rho).sqrt() * noise.sample(&mut r))
                .collect();
            (x, z)
        })
        .collect()
}

// ---- regression helpers ----

/// Gaussian design with `y = x·w + b + N(0, σ)`.
pub fn linear_dataset(
    seed: u64,
    n: usize,
    w: &[f64],
    b: f64,
    sigma: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..w.len()).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let y = x
        .iter()
        .map(|row| {
            let clean: f64 = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            if sigma > 0.0 {
                clean + sigma * r.sample::<f64, _>(StandardNormal)
            } else {
                clean
            }
        })
        .collect();
    (x, y)
}

pub fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}
