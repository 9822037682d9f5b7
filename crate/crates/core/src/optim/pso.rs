//! Box-constrained particle swarm minimizer (constriction coefficients,
//! global-best topology).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iterations without an improvement larger than `tolerance` before stopping.
pub const STALL_ITERS: usize = 50;

/// Swarm settings. The defaults are the Clerc-Kennedy constriction values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFitConfig {
    pub swarm_size: usize,
    pub max_iters: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Minimum improvement of the best objective that resets the stall counter.
    pub tolerance: f64,
    pub seed: u64,
    /// Percentile levels (in percent) matched by the gamma fit.
    pub levels: Vec<u8>,
    /// Largest acceptable RMS quantile residual, relative to Q(95) - Q(5).
    pub max_rms_residual: f64,
    /// Gap left below the lowest percentile when a shift is needed, as a
    /// fraction of Q(95) - Q(5).
    pub shift_margin: f64,
}

impl Default for GammaFitConfig {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            max_iters: 500,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            tolerance: 1e-10,
            seed: 0,
            levels: vec![5, 50, 95],
            max_rms_residual: 0.1,
            shift_margin: 0.1,
        }
    }
}

impl GammaFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidConfig("swarm_size must be at least 2".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be nonnegative".into()));
        }
        if !(self.shift_margin > 0.0) {
            return Err(Error::InvalidConfig("shift_margin must be positive".into()));
        }
        if self.levels.len() < 2 {
            return Err(Error::InvalidConfig("gamma fit needs at least 2 levels".into()));
        }
        if let Some(bad) = self.levels.iter().find(|l| ![5, 25, 50, 75, 95].contains(*l)) {
            return Err(Error::InvalidConfig(format!(
                "fit level {bad} is not one of 5, 25, 50, 75, 95"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `objective` over the box `[lower, upper]`.
///
/// `seeds` are starting positions placed before the random particles; they are
/// clamped to the box. Non-finite objective values are treated as +inf.
pub fn pso_minimize<F>(
    objective: F,
    lower: &[f64],
    upper: &[f64],
    cfg: &GammaFitConfig,
    seeds: &[Vec<f64>],
) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = lower.len();
    if dim == 0 || upper.len() != dim {
        return Err(Error::InvalidBounds(format!(
            "lower has {} components, upper has {}",
            lower.len(),
            upper.len()
        )));
    }
    for (j, (lo, hi)) in lower.iter().zip(upper).enumerate() {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidBounds(format!(
                "component {j}: [{lo}, {hi}] is empty or unbounded"
            )));
        }
    }
    if cfg.swarm_size < 2 {
        return Err(Error::InvalidConfig("swarm_size must be at least 2".into()));
    }

    let eval = |x: &[f64]| {
        let v = objective(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let clamp = |x: &mut [f64]| {
        for j in 0..dim {
            x[j] = x[j].clamp(lower[j], upper[j]);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, h)| h - l).collect();

    let mut pos: Vec<Vec<f64>> = Vec::with_capacity(cfg.swarm_size);
    for s in seeds.iter().take(cfg.swarm_size) {
        let mut p = s.clone();
        p.resize(dim, 0.0);
        clamp(&mut p);
        pos.push(p);
    }
    while pos.len() < cfg.swarm_size {
        pos.push((0..dim).map(|j| rng.gen_range(lower[j]..upper[j])).collect());
    }
    let mut vel: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|_| {
            (0..dim)
                .map(|j| 0.25 * width[j] * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();

    let mut best_pos = pos.clone();
    let mut best_val: Vec<f64> = pos.iter().map(|p| eval(p)).collect();
    let mut g = argmin(&best_val);
    let mut g_pos = best_pos[g].clone();
    let mut g_val = best_val[g];

    let mut stall = 0;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let before = g_val;
        for i in 0..cfg.swarm_size {
            for j in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = cfg.inertia * vel[i][j]
                    + cfg.cognitive * r1 * (best_pos[i][j] - pos[i][j])
                    + cfg.social * r2 * (g_pos[j] - pos[i][j]);
                vel[i][j] = v.clamp(-width[j], width[j]);
                pos[i][j] += vel[i][j];
                if pos[i][j] < lower[j] {
                    pos[i][j] = lower[j];
                    vel[i][j] = 0.0;
                } else if pos[i][j] > upper[j] {
                    pos[i][j] = upper[j];
                    vel[i][j] = 0.0;
                }
            }
            let v = eval(&pos[i]);
            if v < best_val[i] {
                best_val[i] = v;
                best_pos[i].clone_from(&pos[i]);
                if v < g_val {
                    g_val = v;
                    g_pos.clone_from(&pos[i]);
                }
            }
        }
        g = argmin(&best_val);
        debug_assert_eq!(best_val[g], g_val);

        if before - g_val > cfg.tolerance {
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_ITERS {
                break;
            }
        }
    }

    Ok(PsoOutcome {
        argmin: g_pos,
        value: g_val,
        iterations,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut k = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[k] {
            k = i;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere() {
        let cfg = GammaFitConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        let out = pso_minimize(
            |x| x.iter().map(|v| v * v).sum(),
            &[-5.0, -5.0],
            &[5.0, 5.0],
            &cfg,
            &[],
        )
        .unwrap();
        assert!(out.argmin.iter().all(|v| v.abs() < 1e-6), "{:?}", out);
    }

    #[test]
    fn rosenbrock() {
        let cfg = GammaFitConfig {
            tolerance: 0.0,
            max_iters: 2000,
            ..Default::default()
        };
        let out = pso_minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-2.0, -2.0],
            &[2.0, 2.0],
            &cfg,
            &[],
        )
        .unwrap();
        assert!(out.value < 1e-6, "{:?}", out);
        assert!((out.argmin[0] - 1.0).abs() < 1e-2 && (out.argmin[1] - 1.0).abs() < 2e-2);
    }

    #[test]
    fn one_dimensional_quadratic() {
        let cfg = GammaFitConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        let out = pso_minimize(|x| (x[0] - 3.0).powi(2), &[0.0], &[10.0], &cfg, &[]).unwrap();
        assert!((out.argmin[0] - 3.0).abs() < 1e-8, "{:?}", out);
    }

    #[test]
    fn minimum_on_the_boundary_stays_inside() {
        let out = pso_minimize(
            |x| x[0] + x[1],
            &[1.0, -2.0],
            &[4.0, 3.0],
            &GammaFitConfig::default(),
            &[],
        )
        .unwrap();
        assert_eq!(out.argmin, vec![1.0, -2.0]);
    }

    #[test]
    fn invalid_bounds() {
        let cfg = GammaFitConfig::default();
        assert!(matches!(
            pso_minimize(|_| 0.0, &[1.0], &[1.0], &cfg, &[]),
            Err(Error::InvalidBounds(_))
        ));
        assert!(matches!(
            pso_minimize(|_| 0.0, &[0.0, 0.0], &[1.0], &cfg, &[]),
            Err(Error::InvalidBounds(_))
        ));
        assert!(matches!(
            pso_minimize(|_| 0.0, &[], &[], &cfg, &[]),
            Err(Error::InvalidBounds(_))
        ));
    }

    #[test]
    fn same_seed_same_answer() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] + 1.1).powi(4) + x[0].sin();
        let cfg = GammaFitConfig {
            seed: 42,
            ..Default::default()
        };
        let a = pso_minimize(f, &[-3.0, -3.0], &[3.0, 3.0], &cfg, &[]).unwrap();
        let b = pso_minimize(f, &[-3.0, -3.0], &[3.0, 3.0], &cfg, &[]).unwrap();
        assert_eq!(a.argmin[0].to_bits(), b.argmin[0].to_bits());
        assert_eq!(a.argmin[1].to_bits(), b.argmin[1].to_bits());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
