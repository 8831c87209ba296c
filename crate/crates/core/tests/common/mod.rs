//! Independent reference implementations used by several test targets.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &[(f64, f64)]) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        total += rule
            .iter()
            .map(|&(x, w)| w * f(mid + 0.5 * h * x))
            .sum::<f64>()
            * 0.5
            * h;
    }
    total
}

/// Student-t quantile by quadrature: with `t = sqrt(df) tan θ`,
/// `P(|T| < t) = ∫_0^θ cos^{df-1} / ∫_0^{π/2} cos^{df-1}`; θ found by bisection.
pub fn t_quantile_oracle(p: f64, df: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile_oracle(1.0 - p, df);
    }
    let rule = gauss_legendre(20);
    let f = |u: f64| u.cos().powf(df - 1.0);
    let total = integrate(f, 0.0, FRAC_PI_2, 64, &rule);
    let target = 2.0 * p - 1.0;
    // Upper tail ∫_θ^{π/2}.
    let tail_target = (1.0 - target) * total;
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let tail = integrate(f, mid, FRAC_PI_2, 16, &rule);
        if tail > tail_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    df.sqrt() * (0.5 * (lo + hi)).tan()
}

/// Direct generalized ESD: recompute statistics from scratch at every step.
pub fn naive_esd(
    series: &[f64],
    alpha: f64,
    k_max: usize,
    robust: bool,
    crit: impl Fn(usize, usize, f64) -> f64,
) -> Vec<usize> {
    let n = series.len();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    let mut r = Vec::new();
    let mut lam = Vec::new();
    for i in 1..=k_max {
        let vals: Vec<f64> = alive.iter().map(|&j| series[j]).collect();
        let (mut center, mut scale) = (f64::NAN, 0.0);
        if robust {
            let med = median(&vals);
            let dev: Vec<f64> = vals.iter().map(|v| (v - med).abs()).collect();
            let mad = median(&dev);
            if mad > 0.0 {
                center = med;
                scale = 1.4826 * mad;
            }
        }
        if !(scale > 0.0) {
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
            center = mean;
            scale = var.sqrt();
        }
        if !(scale > 0.0) {
            break;
        }
        let mut best = 0;
        for (pos, &j) in alive.iter().enumerate() {
            let d = (series[j] - center).abs();
            let bd = (series[alive[best]] - center).abs();
            if d > bd || (d == bd && j < alive[best]) {
                best = pos;
            }
        }
        let j = alive.remove(best);
        r.push((series[j] - center).abs() / scale);
        lam.push(crit(n, i, alpha));
        removed.push(j);
    }
    let count = (0..r.len())
        .rev()
        .find(|&i| r[i] > lam[i])
        .map_or(0, |i| i + 1);
    let mut out = removed[..count].to_vec();
    out.sort_unstable();
    out
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

pub fn flagged(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i)
        .collect()
}
