//! Turning reported percentiles into a (mean, standard error) pair.
//!
//! Every record first gets a conservative standard error from the wider of its
//! two 90% half-gaps and a Bowley (quartile) skewness. Records whose skewness
//! magnitude stays within the threshold are summarised by a normal
//! distribution: the median and the conservative standard error. Records past
//! the threshold are summarised by the mean and standard deviation of a gamma
//! distribution fitted to the percentiles with the particle swarm minimizer.
//!
//! The gamma fit works on a transformed copy of the percentiles:
//!
//! * negatively skewed records are reflected (`x -> -x`) so the long tail
//!   points right;
//! * if the lowest transformed percentile is not strictly positive, the
//!   values are shifted so it sits `shift_margin * (Q95 - Q5)` above zero;
//! * values are divided by `Q95 - Q5` so the search box and the tolerance
//!   do not depend on the measurement units.
//!
//! The fitted mean and standard deviation are mapped back through the same
//! transformations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{gamma_quantile, normal_quantile, pso_minimize, GammaFitConfig};
use crate::types::{FitPath, FittedSummary, Percentiles, QuantileSet};

/// Search box for the gamma parameters, in units of Q(95) - Q(5).
pub const SHAPE_BOUNDS: (f64, f64) = (1e-3, 1e6);
pub const RATE_BOUNDS: (f64, f64) = (1e-6, 1e9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepConfig {
    /// Two-sided level of the reported outer interval (0.10 for 5%..95%).
    pub alpha: f64,
    pub skew_threshold: f64,
    pub gamma_fit: GammaFitConfig,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            skew_threshold: 0.5,
            gamma_fit: GammaFitConfig::default(),
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !(self.skew_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "skew threshold {} must be positive",
                self.skew_threshold
            )));
        }
        self.gamma_fit.validate()
    }
}

/// Parameters of a gamma distribution fitted to percentiles, with its
/// back-transformed mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFitResult {
    /// Shape of the fitted gamma (unitless).
    pub shape: f64,
    /// Rate in inverse measure units.
    pub rate: f64,
    /// Location of the gamma origin on the original scale.
    pub offset: f64,
    pub reflected: bool,
    pub mean: f64,
    pub sd: f64,
    /// Sum of squared quantile residuals, relative to (Q95 - Q5)^2.
    pub objective_value: f64,
    /// RMS quantile residual relative to Q95 - Q5.
    pub rms_residual: f64,
    pub iterations: usize,
}

/// Conservative standard error: the wider 90% half-gap over z(1 - alpha/2).
pub fn conservative_se(q: &Percentiles, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let upper = (q.q95() - q.q50()).abs();
    let lower = (q.q50() - q.q5()).abs();
    Ok(upper.max(lower) / z)
}

/// Bowley's quartile skewness, bounded in [-1, 1].
pub fn bowley_skewness(q: &Percentiles) -> Result<f64> {
    let iqr = q.q75() - q.q25();
    if iqr <= 0.0 {
        return Err(Error::ZeroIqr);
    }
    let sk = (q.q75() + q.q25() - 2.0 * q.q50()) / iqr;
    // rounding can push a median sitting on a quartile just past the bound
    Ok(sk.clamp(-1.0, 1.0))
}

/// Summarise one record, choosing the normal or gamma path by skewness
/// unless the record carries a forced path.
pub fn fit_summary(q: &QuantileSet, cfg: &PrepConfig) -> Result<FittedSummary> {
    cfg.validate()?;
    let p = &q.q;
    let se_star = conservative_se(p, cfg.alpha)?;
    let mut out = FittedSummary {
        model_id: q.model_id.clone(),
        region_id: q.region_id.clone(),
        measure: q.measure,
        y_hat: p.q50(),
        se_hat: se_star,
        sk: None,
        se_star,
        path: FitPath::Normal,
        degenerate: false,
        forced: false,
    };

    let sk = match bowley_skewness(p) {
        Ok(sk) => sk,
        Err(Error::ZeroIqr) => {
            out.degenerate = true;
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    out.sk = Some(sk);

    let path = match q.forced_path {
        Some(path) => {
            out.forced = true;
            path
        }
        None if sk.abs() > cfg.skew_threshold => FitPath::Gamma,
        None => FitPath::Normal,
    };
    if path == FitPath::Gamma {
        let fit = fit_gamma_to_quantiles(p, &cfg.gamma_fit)?;
        out.y_hat = fit.mean;
        out.se_hat = fit.sd;
        out.path = FitPath::Gamma;
    }
    Ok(out)
}

/// Least-squares gamma fit to the configured percentile levels.
pub fn fit_gamma_to_quantiles(q: &Percentiles, cfg: &GammaFitConfig) -> Result<GammaFitResult> {
    cfg.validate()?;
    let sk = bowley_skewness(q)?;
    let spread = q.q95() - q.q5();
    let reflected = sk < 0.0;
    let sign = if reflected { -1.0 } else { 1.0 };

    // Transformed targets: (probability level, value) after reflection.
    let mut targets: Vec<(f64, f64)> = cfg
        .levels
        .iter()
        .map(|&lvl| {
            let x = q.at_level(lvl).expect("levels validated");
            let p = f64::from(lvl) / 100.0;
            if reflected {
                (1.0 - p, -x)
            } else {
                (p, x)
            }
        })
        .collect();
    let lowest = if reflected { -q.q95() } else { q.q5() };
    let shift = if lowest <= 0.0 {
        lowest - cfg.shift_margin * spread
    } else {
        0.0
    };
    for t in &mut targets {
        t.1 = (t.1 - shift) / spread;
    }

    let objective = |theta: &[f64]| -> f64 {
        let shape = theta[0].exp();
        let rate = theta[1].exp();
        let mut sum = 0.0;
        for &(p, target) in &targets {
            match gamma_quantile(p, shape, rate) {
                Ok(v) if v.is_finite() => sum += (v - target).powi(2),
                _ => return f64::INFINITY,
            }
        }
        sum
    };

    // Moment seed from the transformed median and conservative SE.
    let mid = (sign * q.q50() - shift) / spread;
    let sd = conservative_se(q, 0.10)? / spread;
    let mut seeds = Vec::new();
    if mid > 0.0 && sd > 0.0 {
        let shape = (mid / sd).powi(2);
        let rate = mid / (sd * sd);
        seeds.push(vec![shape.ln(), rate.ln()]);
    }

    let lower = [SHAPE_BOUNDS.0.ln(), RATE_BOUNDS.0.ln()];
    let upper = [SHAPE_BOUNDS.1.ln(), RATE_BOUNDS.1.ln()];
    let best = pso_minimize(objective, &lower, &upper, cfg, &seeds)?;

    if !best.value.is_finite() {
        return Err(Error::GammaFitFailure(
            "objective is not finite anywhere the swarm searched".into(),
        ));
    }
    let rms = (best.value / targets.len() as f64).sqrt();
    if rms > cfg.max_rms_residual {
        return Err(Error::GammaFitFailure(format!(
            "RMS quantile residual {rms:.3e} (relative to Q95-Q5) exceeds {:.3e} after {} iterations",
            cfg.max_rms_residual, best.iterations
        )));
    }

    let shape = best.argmin[0].exp();
    let rate_std = best.argmin[1].exp();
    // back to original units
    let rate = rate_std / spread;
    let offset = sign * shift;
    let mean = offset + sign * shape / rate;
    let sd = shape.sqrt() / rate;
    Ok(GammaFitResult {
        shape,
        rate,
        offset,
        reflected,
        mean,
        sd,
        objective_value: best.value,
        rms_residual: rms,
        iterations: best.iterations,
    })
}
