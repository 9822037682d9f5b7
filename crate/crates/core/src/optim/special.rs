//! Special functions used across the pipeline.
//!
//! Everything here is built from three primitives: the log-gamma function
//! (Lanczos), the regularized incomplete gamma function (series plus Lentz
//! continued fraction) and the regularized incomplete beta function
//! (continued fraction). Quantile functions invert their CDF with a
//! bracketed Newton/Halley iteration that falls back to bisection whenever a
//! step would leave the bracket.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_SERIES_ITERS: usize = 200_000;

const LANCZOS_G: f64 = 7.0;
// published coefficients, kept digit for digit
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Lower regularized incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Upper regularized incomplete gamma function Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (a * x.ln() - x - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_SERIES_ITERS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_SERIES_ITERS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h * gamma_prefactor(a, x)
}

/// Regularized incomplete beta function I_x(a, b).
pub fn beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cont_frac(a, b, x) / a
    } else {
        1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_SERIES_ITERS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let half_sq = 0.5 * x * x;
    if x < 0.0 {
        0.5 * gamma_q(0.5, half_sq)
    } else {
        0.5 + 0.5 * gamma_p(0.5, half_sq)
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} not in (0, 1)")))
    }
}

// Acklam's rational approximation (relative error ~1.2e-9), polished below.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverse standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work in the lower tail so the CDF residual keeps full precision.
    if p > 0.5 {
        return Ok(-normal_quantile(1.0 - p)?);
    }
    let mut x = acklam(p);
    for _ in 0..3 {
        let e = normal_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Gamma CDF with the shape/rate parameterisation.
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> f64 {
    gamma_p(shape, x * rate)
}

/// Gamma density with the shape/rate parameterisation.
pub fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z = x * rate;
    ((shape - 1.0) * z.ln() - z - ln_gamma(shape)).exp() * rate
}

/// Inverse gamma CDF (shape/rate parameterisation).
pub fn gamma_quantile(p: f64, shape: f64, rate: f64) -> Result<f64> {
    check_probability(p)?;
    if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!(
            "gamma parameters shape={shape}, rate={rate} must be positive and finite"
        )));
    }
    Ok(unit_gamma_quantile(p, shape) / rate)
}

fn unit_gamma_quantile(p: f64, a: f64) -> f64 {
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    // Residual is computed on the tail holding the smaller probability.
    let resid = |x: f64| {
        if upper {
            target - gamma_q(a, x)
        } else {
            gamma_p(a, x) - target
        }
    };

    // Wilson-Hilferty start, with the small-x power series for tiny shapes.
    let z = normal_quantile(p).unwrap_or(0.0);
    let c = 1.0 / (9.0 * a);
    let wh = a * (1.0 - c + z * c.sqrt()).powi(3);
    let mut x = if wh > 0.0 && a > 0.5 {
        wh
    } else {
        ((p.ln() + ln_gamma(a + 1.0)) / a).exp()
    };
    if !(x.is_finite() && x > 0.0) {
        x = a.max(1e-300);
    }

    // Bracket the root.
    let mut lo = 0.0_f64;
    let mut hi = x;
    if resid(x) < 0.0 {
        lo = x;
        let mut probe = x.max(1e-300);
        loop {
            probe = probe * 2.0 + 1.0;
            if resid(probe) >= 0.0 {
                hi = probe;
                break;
            }
            lo = probe;
            if !probe.is_finite() {
                return f64::INFINITY;
            }
        }
    }

    for _ in 0..200 {
        let f = resid(x);
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let dens = ((a - 1.0) * x.ln() - x - ln_gamma(a)).exp();
        let mut next = f64::NAN;
        if dens > 0.0 && dens.is_finite() {
            let dx = f / dens;
            let curv = (a - 1.0) / x - 1.0;
            let denom = 1.0 - 0.5 * dx * curv;
            next = if denom.abs() > 0.1 { x - dx / denom } else { x - dx };
        }
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo > 0.0 && hi.is_finite() && hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * x + 1.0
            };
        }
        let converged = (next - x).abs() <= 1e-15 * x.abs() || (hi - lo) <= 1e-15 * hi;
        x = next;
        if converged {
            break;
        }
    }
    x
}

/// Student-t CDF with `df` degrees of freedom (any positive real).
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_inc(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t density.
pub fn t_pdf(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (1.0 + t * t / df).ln()).exp()
}

/// Inverse Student-t CDF.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_probability(p)?;
    if !(df > 0.0) || df.is_nan() {
        return Err(Error::Domain(format!("degrees of freedom {df} must be positive")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-t_quantile(1.0 - p, df)?);
    }
    // closed forms
    if df == 1.0 {
        return Ok((PI * (p - 0.5)).tan());
    }
    if df == 2.0 {
        return Ok((2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt());
    }

    // Lower tail residual: t_cdf(t) for t < 0 is the small tail, computed directly.
    let resid = |t: f64| t_cdf(t, df) - p;

    let z = normal_quantile(p)?;
    let z3 = z * z * z;
    let mut x = z + (z3 + z) / (4.0 * df) + (5.0 * z3 * z * z + 16.0 * z3 + 3.0 * z) / (96.0 * df * df);
    if !(x.is_finite() && x < 0.0) {
        x = z;
    }

    let mut lo = x;
    let mut hi = x;
    if resid(x) > 0.0 {
        while resid(lo) > 0.0 {
            lo = lo * 2.0 - 1.0;
            if !lo.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
        }
    } else {
        hi = 0.0;
    }

    for _ in 0..200 {
        let f = resid(x);
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let dens = t_pdf(x, df);
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let converged = (next - x).abs() <= 1e-14 * x.abs().max(1.0) || (hi - lo) <= 1e-14;
        x = next;
        if converged {
            break;
        }
    }
    Ok(x)
}

/// `erf` via the incomplete gamma function; used by tests and diagnostics.
pub fn erf(x: f64) -> f64 {
    let g = gamma_p(0.5, x * x);
    if x < 0.0 {
        -g
    } else {
        g
    }
}
