//! Forest-plot rows, SVG rendering and JSON/CSV serialization of pooled
//! results.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{IntervalMethod, PoolResult, Weighting};
use crate::optim::normal_quantile;
use crate::types::{FittedSummary, OutcomeMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Model,
    CombinedCI,
    CombinedCR,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub label: String,
    pub center: f64,
    pub low: f64,
    pub high: f64,
    pub kind: RowKind,
}

/// Label of the combined rows for a pooling method.
pub fn combined_label(method: IntervalMethod) -> String {
    format!("Combined ({})", method.label())
}

/// One `Model` row per summary, then a `CombinedCI` and a `CombinedCR` row
/// per pooled result.
///
/// Model rows span `y_hat ± z(1 - alpha/2) * se_hat`, with the lower bound
/// raised to zero for count measures.
pub fn build_forest(
    summaries: &[FittedSummary],
    results: &[PoolResult],
    alpha: f64,
) -> Result<Vec<ForestRow>> {
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let mut rows = Vec::with_capacity(summaries.len() + 2 * results.len());
    for s in summaries {
        let mut low = s.y_hat - z * s.se_hat;
        if s.measure.nonnegative() {
            low = low.max(0.0).min(s.y_hat);
        }
        rows.push(ForestRow {
            label: s.model_id.clone(),
            center: s.y_hat,
            low,
            high: s.y_hat + z * s.se_hat,
            kind: RowKind::Model,
        });
    }
    for r in results {
        let label = combined_label(r.method);
        rows.push(ForestRow {
            label: label.clone(),
            center: r.theta_hat,
            low: r.ci_low,
            high: r.ci_high,
            kind: RowKind::CombinedCI,
        });
        rows.push(ForestRow {
            label,
            center: r.theta_hat,
            low: r.cr_low,
            high: r.cr_high,
            kind: RowKind::CombinedCR,
        });
    }
    Ok(rows)
}

/// Fixed SVG layout, in pixels.
pub mod layout {
    pub const WIDTH: f64 = 720.0;
    pub const PLOT_LEFT: f64 = 200.0;
    pub const PLOT_WIDTH: f64 = 460.0;
    pub const TOP: f64 = 48.0;
    pub const ROW_HEIGHT: f64 = 24.0;
    pub const AXIS_HEIGHT: f64 = 44.0;
    pub const TICKS: usize = 5;
    /// Fraction of the data range added on each side of the x axis.
    pub const PAD: f64 = 0.05;
}

/// Data range mapped onto the plot width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XScale {
    pub min: f64,
    pub max: f64,
}

impl XScale {
    pub fn fit(rows: &[ForestRow], reference: Option<f64>) -> XScale {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in rows {
            lo = lo.min(r.low);
            hi = hi.max(r.high);
        }
        if let Some(x) = reference {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let span = hi - lo;
        let pad = if span > 0.0 {
            layout::PAD * span
        } else {
            0.5 * lo.abs().max(1.0)
        };
        XScale {
            min: lo - pad,
            max: hi + pad,
        }
    }

    pub fn to_px(&self, x: f64) -> f64 {
        layout::PLOT_LEFT + (x - self.min) / (self.max - self.min) * layout::PLOT_WIDTH
    }

    pub fn from_px(&self, px: f64) -> f64 {
        self.min + (px - layout::PLOT_LEFT) / layout::PLOT_WIDTH * (self.max - self.min)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Renders a static forest plot.
///
/// Each row becomes exactly one element with `class="interval"`: a line for
/// model rows and prediction intervals, a shaded rect for combined confidence
/// intervals. A combined CI and the CR that follows it share one line of the
/// plot, as in a conventional forest plot. Output depends only on the input.
pub fn render_svg(rows: &[ForestRow], title: &str, reference: Option<f64>) -> Result<String> {
    use layout::*;
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let scale = XScale::fit(rows, reference);

    // assign a plot line to each row
    let mut line_of = Vec::with_capacity(rows.len());
    let mut lines = 0usize;
    for (i, r) in rows.iter().enumerate() {
        let shares = r.kind == RowKind::CombinedCR
            && i > 0
            && rows[i - 1].kind == RowKind::CombinedCI
            && rows[i - 1].label == r.label;
        if !shares {
            lines += 1;
        }
        line_of.push(lines - 1);
    }
    let y_of = |line: usize| TOP + (line as f64 + 0.5) * ROW_HEIGHT;
    let plot_bottom = TOP + lines as f64 * ROW_HEIGHT;
    let height = plot_bottom + AXIS_HEIGHT;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<g class="plot" data-x-min="{}" data-x-max="{}" data-plot-left="{PLOT_LEFT}" data-plot-width="{PLOT_WIDTH}">"#,
        scale.min, scale.max
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    if let Some(x) = reference {
        let px = scale.to_px(x);
        let _ = writeln!(
            s,
            r##"<line class="reference" x1="{px:.3}" y1="{TOP}" x2="{px:.3}" y2="{plot_bottom}" stroke="#888" stroke-dasharray="4 3"/>"##
        );
    }

    for (i, r) in rows.iter().enumerate() {
        let y = y_of(line_of[i]);
        let (x1, x2, xc) = (scale.to_px(r.low), scale.to_px(r.high), scale.to_px(r.center));
        if i == 0 || line_of[i] != line_of[i - 1] {
            let _ = writeln!(
                s,
                r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{}</text>"#,
                PLOT_LEFT - 8.0,
                y + 4.0,
                escape(&r.label)
            );
        }
        match r.kind {
            RowKind::Model => {
                let _ = writeln!(
                    s,
                    r##"<line class="interval" data-kind="model" x1="{x1:.3}" y1="{y:.3}" x2="{x2:.3}" y2="{y:.3}" stroke="#1f4e79" stroke-width="2"/>"##
                );
                let _ = writeln!(
                    s,
                    r##"<circle cx="{xc:.3}" cy="{y:.3}" r="3.5" fill="#1f4e79"/>"##
                );
            }
            RowKind::CombinedCI => {
                let _ = writeln!(
                    s,
                    r##"<rect class="interval" data-kind="ci" x="{x1:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="#c0504d" fill-opacity="0.35"/>"##,
                    y - 0.3 * ROW_HEIGHT,
                    x2 - x1,
                    0.6 * ROW_HEIGHT
                );
                let _ = writeln!(
                    s,
                    r##"<path d="M {xc:.3} {:.3} L {:.3} {y:.3} L {xc:.3} {:.3} L {:.3} {y:.3} Z" fill="#c0504d"/>"##,
                    y - 6.0,
                    xc + 6.0,
                    y + 6.0,
                    xc - 6.0
                );
            }
            RowKind::CombinedCR => {
                let _ = writeln!(
                    s,
                    r##"<line class="interval" data-kind="cr" x1="{x1:.3}" y1="{y:.3}" x2="{x2:.3}" y2="{y:.3}" stroke="#7f1d1d" stroke-width="1.5"/>"##
                );
                for x in [x1, x2] {
                    let _ = writeln!(
                        s,
                        r##"<line x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="#7f1d1d" stroke-width="1.5"/>"##,
                        y - 5.0,
                        y + 5.0
                    );
                }
            }
        }
    }

    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{PLOT_LEFT}" y1="{plot_bottom}" x2="{}" y2="{plot_bottom}" stroke="#000"/>"##,
        PLOT_LEFT + PLOT_WIDTH
    );
    for t in 0..TICKS {
        let v = scale.min + (scale.max - scale.min) * t as f64 / (TICKS - 1) as f64;
        let px = scale.to_px(v);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.3}" y1="{plot_bottom}" x2="{px:.3}" y2="{:.3}" stroke="#000"/>"##,
            plot_bottom + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.3}" y="{:.3}" text-anchor="middle">{}</text>"#,
            plot_bottom + 19.0,
            tick_label(v)
        );
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

fn tick_label(v: f64) -> String {
    let t = format!("{v:.3}");
    if t.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000".to_string()
    } else {
        t
    }
}

/// Two-decimal formatting that never prints `-0.00`.
pub fn fmt2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// `theta (ci_lo, ci_hi) [cr_lo, cr_hi]` rounded to two decimals.
pub fn echo(result: &PoolResult) -> String {
    format!(
        "{} ({}, {}) [{}, {}]",
        fmt2(result.theta_hat),
        fmt2(result.ci_low),
        fmt2(result.ci_high),
        fmt2(result.cr_low),
        fmt2(result.cr_high)
    )
}

/// One pooled result as written to disk. Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub measure: OutcomeMeasure,
    pub region: String,
    pub k: usize,
    pub weighting: Weighting,
    pub method: IntervalMethod,
    pub theta_hat: f64,
    pub se: f64,
    pub tau2: f64,
    pub se_tau2: f64,
    pub ci: [f64; 2],
    pub cr: [f64; 2],
    pub clamped_low: bool,
    /// Reliability score 0-3 when region signals were supplied.
    pub reliability: Option<u8>,
    pub echo: String,
}

impl ResultRecord {
    pub fn new(
        measure: OutcomeMeasure,
        region: impl Into<String>,
        result: &PoolResult,
        reliability: Option<u8>,
    ) -> Self {
        Self {
            measure,
            region: region.into(),
            k: result.k,
            weighting: result.weighting,
            method: result.method,
            theta_hat: result.theta_hat,
            se: result.se_theta,
            tau2: result.tau2,
            se_tau2: result.se_tau2,
            ci: [result.ci_low, result.ci_high],
            cr: [result.cr_low, result.cr_high],
            clamped_low: result.clamped_low,
            reliability,
            echo: echo(result),
        }
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "measure",
    "region",
    "k",
    "weighting",
    "method",
    "theta_hat",
    "se",
    "tau2",
    "se_tau2",
    "ci_low",
    "ci_high",
    "cr_low",
    "cr_high",
    "clamped_low",
    "reliability",
    "echo",
];

fn weighting_tag(w: Weighting) -> &'static str {
    match w {
        Weighting::Equal => "Equal",
        Weighting::InverseVariance => "InverseVariance",
    }
}

fn method_tag(m: IntervalMethod) -> &'static str {
    match m {
        IntervalMethod::Wald => "Wald",
        IntervalMethod::Knha => "KNHA",
    }
}

/// Pretty-printed JSON array of records.
pub fn to_json(records: &[ResultRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(records)
        .map_err(|e| Error::InvalidConfig(format!("cannot serialize results: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_json(text: &str) -> Result<Vec<ResultRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<json>".into(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

/// CSV with a header row; numbers at full (round-trip) precision.
pub fn to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.measure.tag().to_string(),
            r.region.clone(),
            r.k.to_string(),
            weighting_tag(r.weighting).to_string(),
            method_tag(r.method).to_string(),
            r.theta_hat.to_string(),
            r.se.to_string(),
            r.tau2.to_string(),
            r.se_tau2.to_string(),
            r.ci[0].to_string(),
            r.ci[1].to_string(),
            r.cr[0].to_string(),
            r.cr[1].to_string(),
            r.clamped_low.to_string(),
            r.reliability.map(|s| s.to_string()).unwrap_or_default(),
            r.echo.clone(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// JSON and CSV renderings of the same records.
pub fn serialize_results(records: &[ResultRecord]) -> Result<(String, String)> {
    Ok((to_json(records)?, to_csv(records)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FitPath;

    fn summary(model: &str, y: f64, se: f64, measure: OutcomeMeasure) -> FittedSummary {
        FittedSummary {
            model_id: model.into(),
            region_id: "region10".into(),
            measure,
            y_hat: y,
            se_hat: se,
            sk: Some(0.0),
            se_star: se,
            path: FitPath::Normal,
            degenerate: se == 0.0,
            forced: false,
        }
    }

    fn pooled(method: IntervalMethod) -> PoolResult {
        PoolResult {
            theta_hat: 0.8024,
            se_theta: 0.0316,
            tau2: 0.000428,
            se_tau2: 0.000556,
            ci_low: 0.7415,
            ci_high: 0.8597,
            cr_low: 0.7306,
            cr_high: 0.8706,
            k: 11,
            method,
            weighting: Weighting::Equal,
            alpha: 0.1,
            knha_scale: Some(1.2),
            clamped_low: false,
            model_ids: vec![],
        }
    }

    #[test]
    fn model_row_matches_normal_interval() {
        let rows = build_forest(
            &[summary("model1", 0.74, 0.0790, OutcomeMeasure::ReproductionNumber)],
            &[],
            0.10,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].low - (0.74 - 1.6448536269514722 * 0.0790)).abs() < 1e-12);
        assert!((rows[0].low - 0.610).abs() < 5e-4 && (rows[0].high - 0.870).abs() < 5e-4);
    }

    #[test]
    fn degenerate_row_has_zero_width() {
        let rows = build_forest(
            &[summary("m", 0.9, 0.0, OutcomeMeasure::ReproductionNumber)],
            &[],
            0.10,
        )
        .unwrap();
        assert_eq!((rows[0].low, rows[0].center, rows[0].high), (0.9, 0.9, 0.9));
    }

    #[test]
    fn count_rows_clamp_at_zero() {
        let rows = build_forest(
            &[summary("m", 10.0, 100.0, OutcomeMeasure::DailyInfections)],
            &[],
            0.10,
        )
        .unwrap();
        assert_eq!(rows[0].low, 0.0);
    }

    #[test]
    fn combined_rows_and_labels() {
        let rows = build_forest(
            &[],
            &[pooled(IntervalMethod::Wald), pooled(IntervalMethod::Knha)],
            0.10,
        )
        .unwrap();
        let labels: Vec<_> = rows.iter().map(|r| (r.label.as_str(), r.kind)).collect();
        assert_eq!(
            labels,
            vec![
                ("Combined (REML)", RowKind::CombinedCI),
                ("Combined (REML)", RowKind::CombinedCR),
                ("Combined (REML+KNHA)", RowKind::CombinedCI),
                ("Combined (REML+KNHA)", RowKind::CombinedCR),
            ]
        );
    }

    #[test]
    fn svg_one_interval_per_row_and_deterministic() {
        let rows = build_forest(
            &[summary("a<b", 0.74, 0.079, OutcomeMeasure::ReproductionNumber)],
            &[],
            0.10,
        )
        .unwrap();
        let a = render_svg(&rows, "R & co", Some(1.0)).unwrap();
        let b = render_svg(&rows, "R & co", Some(1.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matches(r#"class="interval""#).count(), 1);
        assert!(a.contains("a&lt;b") && a.contains("R &amp; co"));
        assert!(a.contains(r#"class="reference""#));
        let none = render_svg(&rows, "I", None).unwrap();
        assert!(!none.contains(r#"class="reference""#));
        assert_eq!(render_svg(&[], "x", None), Err(Error::EmptyRows));
    }

    #[test]
    fn echo_matches_table_format() {
        assert_eq!(
            echo(&pooled(IntervalMethod::Knha)),
            "0.80 (0.74, 0.86) [0.73, 0.87]"
        );
        assert_eq!(fmt2(-0.001), "0.00");
    }

    #[test]
    fn empty_csv_is_header_only() {
        let csv = to_csv(&[]).unwrap();
        assert_eq!(csv, format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_quotes_fields_with_commas() {
        let rec = ResultRecord::new(
            OutcomeMeasure::ReproductionNumber,
            "North, East",
            &pooled(IntervalMethod::Wald),
            Some(2),
        );
        let csv = to_csv(&[rec]).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.starts_with(r#"R,"North, East",11,Equal,Wald,0.8024,"#), "{line}");
        assert!(line.ends_with(r#",false,2,"0.80 (0.74, 0.86) [0.73, 0.87]""#), "{line}");
    }

    #[test]
    fn json_key_order_and_fixed_point() {
        let recs = vec![
            ResultRecord::new(
                OutcomeMeasure::ReproductionNumber,
                "region10",
                &pooled(IntervalMethod::Knha),
                None,
            ),
            ResultRecord::new(
                OutcomeMeasure::DailyInfections,
                "region1",
                &pooled(IntervalMethod::Wald),
                Some(3),
            ),
        ];
        let json = to_json(&recs).unwrap();
        let keys: Vec<usize> = [
            "\"measure\"", "\"region\"", "\"k\"", "\"weighting\"", "\"method\"",
            "\"theta_hat\"", "\"se\"", "\"tau2\"", "\"se_tau2\"", "\"ci\"", "\"cr\"",
            "\"clamped_low\"", "\"reliability\"", "\"echo\"",
        ]
        .iter()
        .map(|k| json.find(k).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back = parse_json(&json).unwrap();
        assert_eq!(back, recs);
        assert_eq!(to_json(&back).unwrap(), json);
    }
}
