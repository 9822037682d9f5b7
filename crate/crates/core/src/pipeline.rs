//! End-to-end run used by the `metapool` binary: read quantile and signal
//! CSVs, fit and pool every (measure, region) group, write the reports.
//!
//! Input columns are `measure,region,model,q5,q25,q50,q75,q95`, with an
//! optional `fit` column (`auto`, `normal` or `gamma`; empty means `auto`)
//! that forces a fitting path for a row. The optional signals file has
//! columns `region,daily_deaths,subarea_cases`, each list separated by `;`.
//!
//! Output layout under the chosen directory:
//!
//! ```text
//! results.json     pooled results, one record per group and method
//! results.csv      the same records as CSV
//! summaries.json   every fitted per-model summary
//! plots/*.svg      one forest plot per pooled group
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{combine_region, IntervalMethod, PoolConfig, PoolResult, Weighting};
use crate::prep::{fit_summary, PrepConfig};
use crate::reliability::{reliability_score, RegionSignal, ReliabilityConfig, ReliabilityScore};
use crate::report::{build_forest, render_svg, serialize_results, ResultRecord};
use crate::types::{Dataset, FitPath, FittedSummary, OutcomeMeasure, QuantileSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodChoice {
    Wald,
    Knha,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> &'static [IntervalMethod] {
        match self {
            MethodChoice::Wald => &[IntervalMethod::Wald],
            MethodChoice::Knha => &[IntervalMethod::Knha],
            MethodChoice::Both => &[IntervalMethod::Wald, IntervalMethod::Knha],
        }
    }
}

impl FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wald" => Ok(MethodChoice::Wald),
            "knha" => Ok(MethodChoice::Knha),
            "both" => Ok(MethodChoice::Both),
            _ => Err(Error::InvalidConfig(format!(
                "unknown interval method {s:?} (expected wald, knha or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub weighting: Weighting,
    pub method: MethodChoice,
    pub seed: u64,
    pub skew_threshold: f64,
    pub knha_truncate: bool,
    pub input: PathBuf,
    pub signals: Option<PathBuf>,
    pub out: PathBuf,
    /// Fail on gamma-fit failures and on groups too small to pool.
    pub strict: bool,
    pub reliability: ReliabilityConfig,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            alpha: 0.10,
            weighting: Weighting::Equal,
            method: MethodChoice::Both,
            seed: 0,
            skew_threshold: 0.5,
            knha_truncate: false,
            input: input.into(),
            signals: None,
            out: out.into(),
            strict: false,
            reliability: ReliabilityConfig::default(),
        }
    }

    pub fn prep_config(&self) -> PrepConfig {
        let mut cfg = PrepConfig {
            alpha: self.alpha,
            skew_threshold: self.skew_threshold,
            ..PrepConfig::default()
        };
        cfg.gamma_fit.seed = self.seed;
        cfg
    }

    pub fn pool_config(&self, method: IntervalMethod) -> PoolConfig {
        PoolConfig {
            weighting: self.weighting,
            method,
            alpha: self.alpha,
            knha_truncate: self.knha_truncate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prep_config().validate()?;
        self.reliability.validate()
    }
}

/// Process exit status for an error returned by [`run`].
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GammaFitFailure(_) => 3,
        Error::TooFewModels(_) => 4,
        Error::Io(_) => 1,
        _ => 2,
    }
}

const REQUIRED: [&str; 8] = ["measure", "region", "model", "q5", "q25", "q50", "q75", "q95"];

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn column_index(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, 1, format!("missing column `{name}`")))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn read_row(
    path: &Path,
    rdr_result: std::result::Result<csv::StringRecord, csv::Error>,
) -> Result<(u64, csv::StringRecord)> {
    match rdr_result {
        Ok(rec) => Ok((rec.position().map_or(0, |p| p.line()), rec)),
        Err(e) => {
            let line = e.position().map_or(0, |p| p.line());
            Err(parse_err(path, line, e.to_string()))
        }
    }
}

/// Reads and validates a quantile CSV.
pub fn parse_input_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<usize> = REQUIRED
        .iter()
        .map(|c| column_index(path, &headers, c))
        .collect::<Result<_>>()?;
    let fit_col = headers.iter().position(|h| h == "fit");

    let mut ds = Dataset::new();
    for row in rdr.records() {
        let (line, rec) = read_row(path, row)?;
        let field = |i: usize| rec.get(cols[i]).unwrap_or("");
        let measure: OutcomeMeasure = field(0)
            .parse()
            .map_err(|e: Error| parse_err(path, line, e.to_string()))?;
        let (region, model) = (field(1), field(2));
        if region.is_empty() || model.is_empty() {
            return Err(parse_err(path, line, "region and model must be nonempty"));
        }
        let mut raw = [0.0; 5];
        for (j, slot) in raw.iter_mut().enumerate() {
            let text = field(3 + j);
            *slot = text.parse().map_err(|_| {
                parse_err(path, line, format!("{}: {text:?} is not a number", REQUIRED[3 + j]))
            })?;
        }
        let mut q = QuantileSet::new(model, region, measure, raw).map_err(|e| {
            parse_err(path, line, format!("{measure}/{region}/{model}: {e}"))
        })?;
        if let Some(c) = fit_col {
            match rec.get(c).unwrap_or("") {
                "" | "auto" => {}
                other => {
                    let p: FitPath = other
                        .parse()
                        .map_err(|e: Error| parse_err(path, line, e.to_string()))?;
                    q = q.with_forced_path(p);
                }
            }
        }
        ds.insert(q)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
    }
    Ok(ds)
}

fn parse_list(path: &Path, line: u64, name: &str, text: &str) -> Result<Vec<f64>> {
    text.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| parse_err(path, line, format!("{name}: {t:?} is not a number")))
        })
        .collect()
}

/// Reads the optional region-signal CSV, keyed by region.
pub fn parse_signals_csv(path: &Path) -> Result<HashMap<String, RegionSignal>> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<usize> = ["region", "daily_deaths", "subarea_cases"]
        .iter()
        .map(|c| column_index(path, &headers, c))
        .collect::<Result<_>>()?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let (line, rec) = read_row(path, row)?;
        let region = rec.get(cols[0]).unwrap_or("").to_string();
        let deaths = parse_list(path, line, "daily_deaths", rec.get(cols[1]).unwrap_or(""))?;
        let cases = parse_list(path, line, "subarea_cases", rec.get(cols[2]).unwrap_or(""))?;
        let signal = RegionSignal::new(region.clone(), deaths, cases)
            .map_err(|e| parse_err(path, line, format!("{region}: {e}")))?;
        if out.insert(region.clone(), signal).is_some() {
            return Err(parse_err(path, line, format!("duplicate region {region:?}")));
        }
    }
    Ok(out)
}

/// Everything computed for one (measure, region) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupOutcome {
    pub measure: OutcomeMeasure,
    pub region: String,
    pub summaries: Vec<FittedSummary>,
    /// One entry per requested method; empty when the group was skipped.
    pub results: Vec<PoolResult>,
    pub reliability: Option<ReliabilityScore>,
    /// Models reporting this measure elsewhere but not for this region.
    pub missing_models: Vec<String>,
    /// Models whose gamma fit failed and were summarised on the normal path.
    pub gamma_fallbacks: Vec<String>,
    pub skipped: bool,
}

/// Fit and pool one group.
pub fn process_group(
    records: &[QuantileSet],
    signal: Option<&RegionSignal>,
    cfg: &RunConfig,
) -> Result<GroupOutcome> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty group".into()))?;
    let prep = cfg.prep_config();
    let mut summaries = Vec::with_capacity(records.len());
    let mut gamma_fallbacks = Vec::new();
    for q in records {
        match fit_summary(q, &prep) {
            Ok(s) => summaries.push(s),
            Err(Error::GammaFitFailure(msg)) if !cfg.strict => {
                log::warn!(
                    "{}/{}/{}: gamma fit failed ({msg}); using the normal path",
                    q.measure,
                    q.region_id,
                    q.model_id
                );
                let normal = q.clone().with_forced_path(FitPath::Normal);
                summaries.push(fit_summary(&normal, &prep)?);
                gamma_fallbacks.push(q.model_id.clone());
            }
            Err(Error::GammaFitFailure(msg)) => {
                return Err(Error::GammaFitFailure(format!(
                    "{}/{}/{}: {msg}",
                    q.measure, q.region_id, q.model_id
                )))
            }
            Err(e) => return Err(e),
        }
    }

    let mut outcome = GroupOutcome {
        measure: first.measure,
        region: first.region_id.clone(),
        summaries,
        results: Vec::new(),
        reliability: None,
        missing_models: Vec::new(),
        gamma_fallbacks,
        skipped: false,
    };
    if records.len() < 2 {
        if cfg.strict {
            return Err(Error::TooFewModels(records.len()));
        }
        log::info!(
            "{}/{}: skipped, only {} model reported",
            outcome.measure,
            outcome.region,
            records.len()
        );
        outcome.skipped = true;
        return Ok(outcome);
    }
    for &method in cfg.method.methods() {
        outcome
            .results
            .push(combine_region(&outcome.summaries, &cfg.pool_config(method))?);
    }
    if outcome.measure == OutcomeMeasure::ReproductionNumber {
        if let Some(sig) = signal {
            outcome.reliability = Some(reliability_score(sig, &cfg.reliability)?);
        }
    }
    Ok(outcome)
}

/// Everything a run produced, in group order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub groups: Vec<GroupOutcome>,
    pub records: Vec<ResultRecord>,
    /// Relative paths of the SVG files, one per pooled group.
    pub plots: Vec<PathBuf>,
}

fn measure_slug(m: OutcomeMeasure) -> &'static str {
    // distinct even on case-insensitive file systems
    match m {
        OutcomeMeasure::ReproductionNumber => "Rt",
        OutcomeMeasure::GrowthRate => "growth",
        OutcomeMeasure::DailyInfections => "infections",
    }
}

fn file_stem(m: OutcomeMeasure, region: &str) -> String {
    let region: String = region
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{}_{}", measure_slug(m), region)
}

/// Runs the whole pipeline and writes the output tree.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let ds = parse_input_csv(&cfg.input)?;
    let signals = match &cfg.signals {
        Some(p) => parse_signals_csv(p)?,
        None => HashMap::new(),
    };

    let mut by_group: BTreeMap<(usize, OutcomeMeasure, String), Vec<QuantileSet>> = BTreeMap::new();
    let order: HashMap<(OutcomeMeasure, String), usize> = ds
        .groups()
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, i))
        .collect();
    let mut models_by_measure: HashMap<OutcomeMeasure, Vec<String>> = HashMap::new();
    for r in ds.records() {
        let idx = order[&(r.measure, r.region_id.clone())];
        by_group
            .entry((idx, r.measure, r.region_id.clone()))
            .or_default()
            .push(r.clone());
        let seen = models_by_measure.entry(r.measure).or_default();
        if !seen.contains(&r.model_id) {
            seen.push(r.model_id.clone());
        }
    }
    let groups: Vec<Vec<QuantileSet>> = by_group.into_values().collect();

    let mut outcomes: Vec<GroupOutcome> = groups
        .par_iter()
        .map(|recs| process_group(recs, signals.get(&recs[0].region_id), cfg))
        .collect::<Result<_>>()?;

    for g in &mut outcomes {
        let present: HashSet<&str> = g.summaries.iter().map(|s| s.model_id.as_str()).collect();
        g.missing_models = models_by_measure[&g.measure]
            .iter()
            .filter(|m| !present.contains(m.as_str()))
            .cloned()
            .collect();
        if !g.missing_models.is_empty() {
            log::info!(
                "{}/{}: pooled without {}",
                g.measure,
                g.region,
                g.missing_models.join(", ")
            );
        }
    }

    let records: Vec<ResultRecord> = outcomes
        .iter()
        .flat_map(|g| {
            g.results.iter().map(|r| {
                ResultRecord::new(g.measure, g.region.clone(), r, g.reliability.as_ref().map(|s| s.score))
            })
        })
        .collect();

    let plots = write_outputs(cfg, &outcomes, &records)?;
    Ok(RunReport {
        groups: outcomes,
        records,
        plots,
    })
}

fn write_outputs(
    cfg: &RunConfig,
    outcomes: &[GroupOutcome],
    records: &[ResultRecord],
) -> Result<Vec<PathBuf>> {
    let plot_dir = cfg.out.join("plots");
    fs::create_dir_all(&plot_dir)?;
    let (json, csv) = serialize_results(records)?;
    fs::write(cfg.out.join("results.json"), json)?;
    fs::write(cfg.out.join("results.csv"), csv)?;
    let summaries: Vec<&FittedSummary> = outcomes.iter().flat_map(|g| &g.summaries).collect();
    let mut text = serde_json::to_string_pretty(&summaries)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize summaries: {e}")))?;
    text.push('\n');
    fs::write(cfg.out.join("summaries.json"), text)?;

    let svgs: Vec<Option<String>> = outcomes
        .par_iter()
        .map(|g| {
            if g.skipped {
                return Ok(None);
            }
            let rows = build_forest(&g.summaries, &g.results, cfg.alpha)?;
            let title = format!("{} / {}", g.measure, g.region);
            render_svg(&rows, &title, g.measure.reference_line()).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut used = HashSet::new();
    let mut plots = Vec::new();
    for (g, svg) in outcomes.iter().zip(svgs) {
        let Some(svg) = svg else { continue };
        let stem = file_stem(g.measure, &g.region);
        let mut name = format!("{stem}.svg");
        let mut n = 2;
        while !used.insert(name.to_ascii_lowercase()) {
            name = format!("{stem}_{n}.svg");
            n += 1;
        }
        let rel = PathBuf::from("plots").join(&name);
        fs::write(cfg.out.join(&rel), svg)?;
        plots.push(rel);
    }
    Ok(plots)
}

/// Fixed-width table of the pooled results, one line per record.
pub fn summary_table(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<7} {:<16} {:>3} {:<6} {:<32} {:>10} {:>4}",
        "measure", "region", "k", "method", "estimate (CI) [CR]", "tau2", "rel"
    );
    for r in &report.records {
        let method = match r.method {
            IntervalMethod::Wald => "Wald",
            IntervalMethod::Knha => "KNHA",
        };
        let _ = writeln!(
            s,
            "{:<7} {:<16} {:>3} {:<6} {:<32} {:>10.6} {:>4}",
            r.measure.tag(),
            r.region,
            r.k,
            method,
            r.echo,
            r.tau2,
            r.reliability.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    for g in report.groups.iter().filter(|g| g.skipped) {
        let _ = writeln!(
            s,
            "{:<7} {:<16} {:>3} skipped: fewer than 2 models",
            g.measure.tag(),
            g.region,
            g.summaries.len()
        );
    }
    s
}
