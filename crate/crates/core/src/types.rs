//! Core records: outcome measures, validated percentile sets, fitted
//! summaries and the dataset container.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The percentile levels every candidate model reports, in percent.
pub const LEVELS: [u8; 5] = [5, 25, 50, 75, 95];

/// Quantity being pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeMeasure {
    /// Effective reproduction number R(t).
    #[serde(rename = "R")]
    ReproductionNumber,
    /// Daily exponential growth rate r.
    #[serde(rename = "r")]
    GrowthRate,
    /// New daily infections I.
    #[serde(rename = "I")]
    DailyInfections,
}

impl OutcomeMeasure {
    pub const ALL: [OutcomeMeasure; 3] = [
        OutcomeMeasure::ReproductionNumber,
        OutcomeMeasure::GrowthRate,
        OutcomeMeasure::DailyInfections,
    ];

    /// Counts cannot be negative; the other measures are unbounded.
    pub fn nonnegative(self) -> bool {
        matches!(self, OutcomeMeasure::DailyInfections)
    }

    /// Short tag used in files: `R`, `r` or `I`.
    pub fn tag(self) -> &'static str {
        match self {
            OutcomeMeasure::ReproductionNumber => "R",
            OutcomeMeasure::GrowthRate => "r",
            OutcomeMeasure::DailyInfections => "I",
        }
    }

    /// Natural reference line for plots: 1 for R(t), 0 for r, none for I.
    pub fn reference_line(self) -> Option<f64> {
        match self {
            OutcomeMeasure::ReproductionNumber => Some(1.0),
            OutcomeMeasure::GrowthRate => Some(0.0),
            OutcomeMeasure::DailyInfections => None,
        }
    }
}

impl fmt::Display for OutcomeMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for OutcomeMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(OutcomeMeasure::ReproductionNumber),
            "r" => Ok(OutcomeMeasure::GrowthRate),
            "I" => Ok(OutcomeMeasure::DailyInfections),
            other => Err(Error::InvalidConfig(format!(
                "unknown measure tag {other:?} (expected R, r or I)"
            ))),
        }
    }
}

/// Five validated percentiles Q(5), Q(25), Q(50), Q(75), Q(95).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Percentiles([f64; 5]);

impl Percentiles {
    pub fn values(&self) -> [f64; 5] {
        self.0
    }

    pub fn q5(&self) -> f64 {
        self.0[0]
    }

    pub fn q25(&self) -> f64 {
        self.0[1]
    }

    pub fn q50(&self) -> f64 {
        self.0[2]
    }

    pub fn q75(&self) -> f64 {
        self.0[3]
    }

    pub fn q95(&self) -> f64 {
        self.0[4]
    }

    /// Value at one of the five reported levels.
    pub fn at_level(&self, level: u8) -> Option<f64> {
        LEVELS.iter().position(|&l| l == level).map(|i| self.0[i])
    }

    /// All five values coincide.
    pub fn is_point_mass(&self) -> bool {
        self.0.iter().all(|&v| v == self.0[0])
    }
}

/// Ordering and finiteness only; use [`validate_quantiles`] for the sign
/// check of count measures.
impl TryFrom<[f64; 5]> for Percentiles {
    type Error = Error;

    fn try_from(raw: [f64; 5]) -> Result<Self> {
        validate_quantiles(raw, OutcomeMeasure::GrowthRate)
    }
}

/// Checks ordering, finiteness and sign for one set of five percentiles.
pub fn validate_quantiles(raw: [f64; 5], measure: OutcomeMeasure) -> Result<Percentiles> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(raw));
    }
    if raw.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::NonMonotone(raw));
    }
    if measure.nonnegative() && raw[0] < 0.0 {
        return Err(Error::NegativeForCountMeasure(raw[0]));
    }
    Ok(Percentiles(raw))
}

/// Which distribution produced a fitted summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitPath {
    Normal,
    Gamma,
}

impl fmt::Display for FitPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitPath::Normal => "normal",
            FitPath::Gamma => "gamma",
        })
    }
}

impl FromStr for FitPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(FitPath::Normal),
            "gamma" => Ok(FitPath::Gamma),
            other => Err(Error::InvalidConfig(format!(
                "unknown fit path {other:?} (expected normal or gamma)"
            ))),
        }
    }
}

/// One candidate model's reported percentiles for one (measure, region).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileSet {
    pub model_id: String,
    pub region_id: String,
    pub measure: OutcomeMeasure,
    pub q: Percentiles,
    /// Bypasses the skewness gate when set.
    pub forced_path: Option<FitPath>,
}

impl QuantileSet {
    pub fn new(
        model_id: impl Into<String>,
        region_id: impl Into<String>,
        measure: OutcomeMeasure,
        raw: [f64; 5],
    ) -> Result<Self> {
        Ok(Self {
            model_id: model_id.into(),
            region_id: region_id.into(),
            measure,
            q: validate_quantiles(raw, measure)?,
            forced_path: None,
        })
    }

    pub fn with_forced_path(mut self, path: FitPath) -> Self {
        self.forced_path = Some(path);
        self
    }

    pub fn key(&self) -> (OutcomeMeasure, &str, &str) {
        (self.measure, &self.region_id, &self.model_id)
    }
}

/// Per-model (mean, standard error) approximation with fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSummary {
    pub model_id: String,
    pub region_id: String,
    pub measure: OutcomeMeasure,
    pub y_hat: f64,
    pub se_hat: f64,
    /// Bowley skewness; `None` when the interquartile range is zero.
    pub sk: Option<f64>,
    pub se_star: f64,
    pub path: FitPath,
    /// Zero interquartile range: treated as a point mass.
    pub degenerate: bool,
    /// The path was chosen by the caller rather than the skewness gate.
    pub forced: bool,
}

/// All records, keyed by (measure, region, model).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    records: Vec<QuantileSet>,
    keys: HashSet<(OutcomeMeasure, String, String)>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: QuantileSet) -> Result<()> {
        let key = (
            record.measure,
            record.region_id.clone(),
            record.model_id.clone(),
        );
        if !self.keys.insert(key) {
            return Err(Error::DuplicateKey {
                measure: record.measure.to_string(),
                region: record.region_id,
                model: record.model_id,
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[QuantileSet] {
        &self.records
    }

    /// Distinct (measure, region) pairs in order of first appearance.
    pub fn groups(&self) -> Vec<(OutcomeMeasure, String)> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert((r.measure, r.region_id.as_str())) {
                out.push((r.measure, r.region_id.clone()));
            }
        }
        out
    }
}

impl TryFrom<Vec<QuantileSet>> for Dataset {
    type Error = Error;

    fn try_from(records: Vec<QuantileSet>) -> Result<Self> {
        let mut ds = Dataset::new();
        for r in records {
            ds.insert(r)?;
        }
        Ok(ds)
    }
}

/// Every record reported for `(measure, region)`, in insertion order.
pub fn group_for_pooling(
    ds: &Dataset,
    measure: OutcomeMeasure,
    region: &str,
) -> Result<Vec<QuantileSet>> {
    let group: Vec<QuantileSet> = ds
        .records
        .iter()
        .filter(|r| r.measure == measure && r.region_id == region)
        .cloned()
        .collect();
    if group.is_empty() {
        return Err(Error::EmptyGroup {
            measure: measure.to_string(),
            region: region.to_string(),
        });
    }
    Ok(group)
}
