//! Random-effects pooling.
//!
//! Model: each model estimate `y_i = theta_i + e_i` with `e_i ~ N(0, v_i)`
//! and `theta_i ~ N(theta, tau2)`. The between-model variance `tau2` is
//! estimated by restricted maximum likelihood using the usual
//! inverse-variance weights `1 / (v_i + tau2)`. The caller's weighting then
//! only decides how the pooled estimate and its variance are formed:
//!
//! * `Equal`: `a_i = 1/k`, so `theta_hat` is the plain mean of the `y_i`;
//! * `InverseVariance`: `a_i = 1 / (v_i + tau2)`.
//!
//! For both, `Var(theta_hat) = sum a_i^2 (v_i + tau2) / (sum a_i)^2`.
//!
//! The Knapp-Hartung variant multiplies that variance by
//! `s2 = Q_w / (k - 1)`, with `Q_w` the inverse-variance weighted residual
//! sum of squares around `theta_hat`, and swaps the normal quantile for a
//! Student-t quantile with `k - 1` degrees of freedom. Prediction intervals
//! add `tau2` to the variance under the square root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{normal_quantile, t_quantile};
use crate::types::{FittedSummary, OutcomeMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Weighting {
    Equal,
    InverseVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntervalMethod {
    Wald,
    #[serde(rename = "KNHA")]
    Knha,
}

impl IntervalMethod {
    /// Label used in reports and plots.
    pub fn label(self) -> &'static str {
        match self {
            IntervalMethod::Wald => "REML",
            IntervalMethod::Knha => "REML+KNHA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub weighting: Weighting,
    pub method: IntervalMethod,
    pub alpha: f64,
    /// Floor the Knapp-Hartung scale factor at 1.
    pub knha_truncate: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            weighting: Weighting::Equal,
            method: IntervalMethod::Wald,
            alpha: 0.10,
            knha_truncate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau2Estimate {
    pub tau2: f64,
    pub se_tau2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolResult {
    pub theta_hat: f64,
    pub se_theta: f64,
    pub tau2: f64,
    pub se_tau2: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub cr_low: f64,
    pub cr_high: f64,
    pub k: usize,
    pub method: IntervalMethod,
    pub weighting: Weighting,
    pub alpha: f64,
    /// Knapp-Hartung scale factor actually applied.
    pub knha_scale: Option<f64>,
    /// A lower bound was raised to zero for a nonnegative measure.
    pub clamped_low: bool,
    /// Models that entered the pool, in input order.
    pub model_ids: Vec<String>,
}

/// Restricted log-likelihood of the random-effects model at `tau2`.
pub fn restricted_log_likelihood(y: &[f64], v: &[f64], tau2: f64) -> f64 {
    let (mut sw, mut swy, mut sum_log) = (0.0, 0.0, 0.0);
    for (yi, vi) in y.iter().zip(v) {
        let w = 1.0 / (vi + tau2);
        sw += w;
        swy += w * yi;
        sum_log += (vi + tau2).ln();
    }
    let mean = swy / sw;
    let rss: f64 = y
        .iter()
        .zip(v)
        .map(|(yi, vi)| (yi - mean).powi(2) / (vi + tau2))
        .sum();
    -0.5 * (sum_log + sw.ln() + rss)
}

// Derivative of the restricted log-likelihood with respect to tau2.
fn reml_score(y: &[f64], v: &[f64], tau2: f64) -> f64 {
    let w: Vec<f64> = v.iter().map(|vi| 1.0 / (vi + tau2)).collect();
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sw2: f64 = w.iter().map(|w| w * w).sum();
    let swr: f64 = w
        .iter()
        .zip(y)
        .map(|(w, y)| w * w * (y - mean).powi(2))
        .sum();
    0.5 * (swr - sw + sw2 / sw)
}

/// Expected (Fisher) information for tau2 under REML.
fn reml_information(v: &[f64], tau2: f64) -> f64 {
    let w: Vec<f64> = v.iter().map(|vi| 1.0 / (vi + tau2)).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|w| w * w).sum();
    let sw3: f64 = w.iter().map(|w| w * w * w).sum();
    0.5 * (sw2 - 2.0 * sw3 / sw + (sw2 / sw).powi(2))
}

fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Upper end of the tau2 search bracket.
pub fn search_bound(y: &[f64], v: &[f64]) -> f64 {
    let max_v = v.iter().cloned().fold(0.0, f64::max);
    10.0 * sample_variance(y).max(max_v)
}

fn check_inputs(y: &[f64], v: &[f64]) -> Result<()> {
    if y.len() != v.len() {
        return Err(Error::InvalidConfig(format!(
            "{} estimates but {} variances",
            y.len(),
            v.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::TooFewModels(y.len()));
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("estimates must be finite".into()));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Domain("variances must be positive and finite".into()));
    }
    Ok(())
}

/// REML estimate of the between-model variance and its standard error.
///
/// The restricted likelihood is scanned on a mixed linear/logarithmic grid
/// over `[0, B]` with `B = 10 max(var(y), max v)`. The best grid cell is
/// refined by bisection on the score when the score changes sign inside
/// it, by golden-section search otherwise.
pub fn reml_tau2(y: &[f64], v: &[f64]) -> Result<Tau2Estimate> {
    check_inputs(y, v)?;
    let ll = |t: f64| restricted_log_likelihood(y, v, t);
    let bound = search_bound(y, v);

    let mut grid = vec![0.0];
    grid.extend((1..=240).map(|i| bound * 10f64.powf(-12.0 + 12.0 * i as f64 / 240.0)));
    grid.extend((1..200).map(|i| bound * i as f64 / 200.0));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // the two grids share points up to rounding; a near-duplicate would
    // make the refinement cell degenerate
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(b.abs()));

    let values: Vec<f64> = grid.iter().map(|&t| ll(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, x)| if *x > values[b] { i } else { b });

    let mut candidates = vec![grid[best]];
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    if hi > lo {
        let (s_lo, s_hi) = (reml_score(y, v, lo), reml_score(y, v, hi));
        if s_lo > 0.0 && s_hi < 0.0 {
            candidates.push(bisect_score(y, v, lo, hi));
        } else {
            candidates.push(golden_max(&ll, lo, hi));
        }
    }
    let mut tau2 = candidates
        .into_iter()
        .fold(f64::NAN, |b, t| if b.is_nan() || ll(t) > ll(b) { t } else { b })
        .max(0.0);
    // A non-positive score at zero makes the boundary a local maximum; an
    // interior point only beats it by more than rounding noise.
    if tau2 > 0.0 && reml_score(y, v, 0.0) <= 0.0 {
        let at_zero = ll(0.0);
        if ll(tau2) <= at_zero + 1e-13 * at_zero.abs().max(1.0) {
            tau2 = 0.0;
        }
    }

    let info = reml_information(v, tau2);
    let se_tau2 = if info > 0.0 { (1.0 / info).sqrt() } else { f64::INFINITY };
    Ok(Tau2Estimate { tau2, se_tau2 })
}

fn bisect_score(y: &[f64], v: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reml_score(y, v, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if d - c <= f64::EPSILON * b.abs() {
            break;
        }
    }
    0.5 * (a + b)
}

/// Pool estimates given a between-model variance estimate.
pub fn pool(
    y: &[f64],
    v: &[f64],
    tau: Tau2Estimate,
    cfg: &PoolConfig,
    nonnegative_measure: bool,
) -> Result<PoolResult> {
    check_inputs(y, v)?;
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha {} must lie in (0, 1)",
            cfg.alpha
        )));
    }
    if !(tau.tau2 >= 0.0) {
        return Err(Error::Domain(format!("tau2 {} must be nonnegative", tau.tau2)));
    }
    let k = y.len();
    let tau2 = tau.tau2;
    let total: Vec<f64> = v.iter().map(|vi| vi + tau2).collect();

    let a: Vec<f64> = match cfg.weighting {
        Weighting::Equal => vec![1.0 / k as f64; k],
        Weighting::InverseVariance => total.iter().map(|t| 1.0 / t).collect(),
    };
    let sa: f64 = a.iter().sum();
    let theta = match cfg.weighting {
        Weighting::Equal => y.iter().sum::<f64>() / k as f64,
        Weighting::InverseVariance => a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>() / sa,
    };
    let var_wald = a
        .iter()
        .zip(&total)
        .map(|(a, t)| a * a * t)
        .sum::<f64>()
        / (sa * sa);

    let (var, quantile, knha_scale) = match cfg.method {
        IntervalMethod::Wald => (var_wald, normal_quantile(1.0 - cfg.alpha / 2.0)?, None),
        IntervalMethod::Knha => {
            let q_w: f64 = y
                .iter()
                .zip(&total)
                .map(|(y, t)| (y - theta).powi(2) / t)
                .sum();
            let mut s2 = q_w / (k as f64 - 1.0);
            if cfg.knha_truncate {
                s2 = s2.max(1.0);
            }
            (
                s2 * var_wald,
                t_quantile(1.0 - cfg.alpha / 2.0, k as f64 - 1.0)?,
                Some(s2),
            )
        }
    };

    let ci_half = quantile * var.sqrt();
    let cr_half = quantile * (var + tau2).sqrt();
    let mut out = PoolResult {
        theta_hat: theta,
        se_theta: var.sqrt(),
        tau2,
        se_tau2: tau.se_tau2,
        ci_low: theta - ci_half,
        ci_high: theta + ci_half,
        cr_low: theta - cr_half,
        cr_high: theta + cr_half,
        k,
        method: cfg.method,
        weighting: cfg.weighting,
        alpha: cfg.alpha,
        knha_scale,
        clamped_low: false,
        model_ids: Vec::new(),
    };
    if nonnegative_measure {
        if out.ci_low < 0.0 {
            out.ci_low = 0.0;
            out.clamped_low = true;
        }
        if out.cr_low < 0.0 {
            out.cr_low = 0.0;
            out.clamped_low = true;
        }
    }
    Ok(out)
}

/// Variance given to a zero-variance (point mass) summary before pooling.
pub fn variance_floor(y: f64) -> f64 {
    (1e-6 * y.abs().max(1.0)).powi(2)
}

/// Estimate tau2 and pool one (measure, region) group of fitted summaries.
pub fn combine_region(summaries: &[FittedSummary], cfg: &PoolConfig) -> Result<PoolResult> {
    if summaries.len() < 2 {
        return Err(Error::TooFewModels(summaries.len()));
    }
    let first = &summaries[0];
    if let Some(odd) = summaries
        .iter()
        .find(|s| s.measure != first.measure || s.region_id != first.region_id)
    {
        return Err(Error::InvalidConfig(format!(
            "cannot pool {} / {} with {} / {}",
            first.measure, first.region_id, odd.measure, odd.region_id
        )));
    }
    let measure: OutcomeMeasure = first.measure;
    let y: Vec<f64> = summaries.iter().map(|s| s.y_hat).collect();
    let v: Vec<f64> = summaries
        .iter()
        .map(|s| {
            let v = s.se_hat * s.se_hat;
            if v > 0.0 {
                v
            } else {
                log::warn!(
                    "{} / {} / {}: zero standard error, flooring its variance",
                    s.measure,
                    s.region_id,
                    s.model_id
                );
                variance_floor(s.y_hat)
            }
        })
        .collect();

    let tau = reml_tau2(&y, &v)?;
    let mut out = pool(&y, &v, tau, cfg, measure.nonnegative())?;
    out.model_ids = summaries.iter().map(|s| s.model_id.clone()).collect();
    Ok(out)
}
