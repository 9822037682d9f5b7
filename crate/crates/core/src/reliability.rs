//! Region reliability score (0-3) for pooled R(t).
//!
//! Two signals are banded into low / mid / high and looked up in a 3x3
//! table: the mean daily deaths over the last ten days (a proxy for case
//! numbers) and the coefficient of variation of case counts across the
//! region's sub-areas (a measure of spatial clustering). Higher deaths and
//! lower clustering mean a more trustworthy R(t).
//!
//! | score | reading                                               |
//! |-------|-------------------------------------------------------|
//! | 0     | highly unlikely to be homogeneous; clustered outbreak |
//! | 1     | unlikely to be homogeneous                            |
//! | 2     | likely homogeneous, a good measure for the region     |
//! | 3     | highly likely homogeneous                             |
//!
//! The thresholds and the table are configuration; the defaults are a
//! reasonable starting point, not calibrated values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days averaged by [`death_proxy`].
pub const DEATH_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Low,
    Mid,
    High,
}

impl Band {
    fn index(self) -> usize {
        match self {
            Band::Low => 0,
            Band::Mid => 1,
            Band::High => 2,
        }
    }

    fn of(value: f64, (lo, hi): (f64, f64)) -> Band {
        if value < lo {
            Band::Low
        } else if value < hi {
            Band::Mid
        } else {
            Band::High
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSignal {
    pub region_id: String,
    /// Deaths per day, oldest first.
    pub daily_deaths: Vec<f64>,
    /// Case counts per sub-area.
    pub subarea_cases: Vec<f64>,
}

impl RegionSignal {
    pub fn new(
        region_id: impl Into<String>,
        daily_deaths: Vec<f64>,
        subarea_cases: Vec<f64>,
    ) -> Result<Self> {
        if daily_deaths.len() < DEATH_WINDOW {
            return Err(Error::TooShort {
                needed: DEATH_WINDOW,
                got: daily_deaths.len(),
            });
        }
        if subarea_cases.len() < 2 {
            return Err(Error::TooFewSubareas(subarea_cases.len()));
        }
        if daily_deaths
            .iter()
            .chain(&subarea_cases)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Domain(
                "deaths and case counts must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            region_id: region_id.into(),
            daily_deaths,
            subarea_cases,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityConfig {
    /// Deaths/day splitting low|mid and mid|high.
    pub death_thresholds: (f64, f64),
    /// Coefficient of variation splitting low|mid and mid|high.
    pub heterogeneity_thresholds: (f64, f64),
    /// `score_table[death_band][heterogeneity_band]`.
    pub score_table: [[u8; 3]; 3],
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        Self {
            death_thresholds: (2.0, 10.0),
            heterogeneity_thresholds: (0.5, 1.0),
            score_table: [[1, 0, 0], [2, 2, 1], [3, 2, 1]],
        }
    }
}

impl ReliabilityConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("death", self.death_thresholds),
            ("heterogeneity", self.heterogeneity_thresholds),
        ] {
            if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} thresholds ({lo}, {hi}) must be nonnegative and strictly increasing"
                )));
            }
        }
        if self.score_table.iter().flatten().any(|&s| s > 3) {
            return Err(Error::InvalidConfig("score table entries must be 0..=3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityScore {
    pub score: u8,
    pub death_band: Band,
    pub heterogeneity_band: Band,
    pub death_proxy: f64,
    /// `None` when every sub-area reported zero cases.
    pub heterogeneity: Option<f64>,
}

/// Mean of the most recent ten daily death counts.
pub fn death_proxy(daily_deaths: &[f64]) -> Result<f64> {
    if daily_deaths.len() < DEATH_WINDOW {
        return Err(Error::TooShort {
            needed: DEATH_WINDOW,
            got: daily_deaths.len(),
        });
    }
    let recent = &daily_deaths[daily_deaths.len() - DEATH_WINDOW..];
    Ok(recent.iter().sum::<f64>() / DEATH_WINDOW as f64)
}

/// Coefficient of variation (population SD over mean) of sub-area cases.
///
/// All-zero input returns `f64::INFINITY`, which always lands in the
/// highest heterogeneity band.
pub fn heterogeneity(subarea_cases: &[f64]) -> Result<f64> {
    if subarea_cases.len() < 2 {
        return Err(Error::TooFewSubareas(subarea_cases.len()));
    }
    let n = subarea_cases.len() as f64;
    let mean = subarea_cases.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let var = subarea_cases.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

pub fn reliability_score(signal: &RegionSignal, cfg: &ReliabilityConfig) -> Result<ReliabilityScore> {
    cfg.validate()?;
    let deaths = death_proxy(&signal.daily_deaths)?;
    let het = heterogeneity(&signal.subarea_cases)?;
    let death_band = Band::of(deaths, cfg.death_thresholds);
    let heterogeneity_band = Band::of(het, cfg.heterogeneity_thresholds);
    Ok(ReliabilityScore {
        score: cfg.score_table[death_band.index()][heterogeneity_band.index()],
        death_band,
        heterogeneity_band,
        death_proxy: deaths,
        heterogeneity: het.is_finite().then_some(het),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn death_proxy_examples() {
        assert_eq!(death_proxy(&[5.0; 10]).unwrap(), 5.0);
        assert_eq!(death_proxy(&[0.0; 10]).unwrap(), 0.0);
        let mut v = vec![100.0, 200.0];
        v.extend((1..=10).map(f64::from));
        assert_eq!(death_proxy(&v).unwrap(), 5.5);
        assert_eq!(
            death_proxy(&[1.0; 9]),
            Err(Error::TooShort { needed: 10, got: 9 })
        );
    }

    #[test]
    fn heterogeneity_examples() {
        assert_eq!(heterogeneity(&[10.0; 4]).unwrap(), 0.0);
        let clustered = heterogeneity(&[0.0, 0.0, 0.0, 40.0]).unwrap();
        assert!((clustered - 300f64.sqrt() / 10.0).abs() < 1e-12);
        assert!((heterogeneity(&[4.0, 6.0]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(heterogeneity(&[0.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(heterogeneity(&[3.0]), Err(Error::TooFewSubareas(1)));
    }

    fn signal(deaths: f64, cases: Vec<f64>) -> RegionSignal {
        RegionSignal::new("x", vec![deaths; 10], cases).unwrap()
    }

    #[test]
    fn default_table_corners() {
        let cfg = ReliabilityConfig::default();
        let s = reliability_score(&signal(25.0, vec![10.0, 11.0, 9.0]), &cfg).unwrap();
        assert_eq!((s.death_band, s.heterogeneity_band, s.score), (Band::High, Band::Low, 3));
        let s = reliability_score(&signal(0.5, vec![0.0, 0.0, 0.0, 40.0]), &cfg).unwrap();
        assert_eq!((s.death_band, s.heterogeneity_band, s.score), (Band::Low, Band::High, 0));
        // CV of (4, 12) is 0.5
        let s = reliability_score(&signal(5.0, vec![4.0, 12.0]), &cfg).unwrap();
        assert_eq!((s.death_band, s.heterogeneity_band, s.score), (Band::Mid, Band::Mid, 2));
    }

    #[test]
    fn all_zero_cases_is_worst_band() {
        let s = reliability_score(&signal(50.0, vec![0.0; 5]), &ReliabilityConfig::default())
            .unwrap();
        assert_eq!(s.heterogeneity_band, Band::High);
        assert_eq!(s.heterogeneity, None);
    }

    #[test]
    fn bad_signals_and_configs() {
        assert!(matches!(
            RegionSignal::new("x", vec![1.0; 3], vec![1.0, 2.0]),
            Err(Error::TooShort { .. })
        ));
        assert!(matches!(
            RegionSignal::new("x", vec![1.0; 10], vec![1.0]),
            Err(Error::TooFewSubareas(1))
        ));
        assert!(matches!(
            RegionSignal::new("x", vec![-1.0; 10], vec![1.0, 2.0]),
            Err(Error::Domain(_))
        ));
        let cfg = ReliabilityConfig {
            death_thresholds: (5.0, 5.0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ReliabilityConfig {
            score_table: [[4, 0, 0], [0; 3], [0; 3]],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_both_signals(
            d1 in 0.0f64..40.0, d2 in 0.0f64..40.0,
            cases1 in proptest::collection::vec(0.0f64..100.0, 2..8),
            scale in 0.0f64..3.0,
        ) {
            let cfg = ReliabilityConfig::default();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a = reliability_score(&signal(lo, cases1.clone()), &cfg).unwrap();
            let b = reliability_score(&signal(hi, cases1.clone()), &cfg).unwrap();
            prop_assert!(a.score <= b.score);
            prop_assert!(a.score <= 3 && b.score <= 3);

            // spreading cases away from their mean raises the CV
            let mean = cases1.iter().sum::<f64>() / cases1.len() as f64;
            let spread: Vec<f64> = cases1.iter().map(|c| (mean + (1.0 + scale) * (c - mean)).max(0.0)).collect();
            let c = reliability_score(&signal(lo, cases1.clone()), &cfg).unwrap();
            let d = reliability_score(&signal(lo, spread), &cfg).unwrap();
            if d.heterogeneity.unwrap_or(f64::INFINITY) >= c.heterogeneity.unwrap_or(f64::INFINITY) {
                prop_assert!(d.score <= c.score);
            }
        }
    }
}
