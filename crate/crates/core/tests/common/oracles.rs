//! Slow, independent reference implementations used to check the library's
//! special functions. Nothing here shares code with `metapool::optim`.

use std::f64::consts::PI;

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
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
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// ln Γ(x) for x > 0 by recurrence up to x ≥ 20 and the Stirling series.
pub fn ln_gamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

/// Smallest x in `[lo, hi]` with `cdf(x) >= p`, by bisection.
pub fn bisect<F: Fn(f64) -> f64>(cdf: F, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub fn normal_cdf(x: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
    let half = integrate(&pdf, 0.0, x.abs(), 1e-14);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

pub fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
}

/// Gamma CDF by quadrature; suitable for shape ≥ 1.
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    integrate(&|t| gamma_pdf(t, shape, rate), 0.0, x, 1e-14)
}

pub fn gamma_quantile(p: f64, shape: f64, rate: f64) -> f64 {
    let hi = (shape + 40.0 * shape.sqrt() + 40.0) / rate;
    bisect(|x| gamma_cdf(x, shape, rate), p, 0.0, hi)
}

pub fn t_pdf(x: f64, df: f64) -> f64 {
    let c = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
    (c - 0.5 * (df + 1.0) * (1.0 + x * x / df).ln()).exp()
}

pub fn t_cdf(x: f64, df: f64) -> f64 {
    let half = integrate(&|t| t_pdf(t, df), 0.0, x.abs(), 1e-14);
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

pub fn t_quantile(p: f64, df: f64) -> f64 {
    bisect(|x| t_cdf(x, df), p, -1e3, 1e3)
}

/// Equal-variance REML closed form: max(0, sample variance of y - v).
pub fn reml_equal_variance(y: &[f64], v: f64) -> f64 {
    let k = y.len() as f64;
    let mean = y.iter().sum::<f64>() / k;
    let s2 = y.iter().map(|yi| (yi - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (s2 - v).max(0.0)
}
