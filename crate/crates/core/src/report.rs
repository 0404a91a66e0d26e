//! Report emission: CSV summary, full JSON, SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelKind;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::unlearn::Method;

/// Column order of the CSV summary.
pub const CSV_COLUMNS: [&str; 10] = [
    "method",
    "edr",
    "snr_db",
    "channel",
    "seed",
    "clean_acc",
    "backdoor_acc",
    "mse_clean",
    "mse_erased",
    "runtime_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: Method,
    pub edr: f64,
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub seed: u64,
    pub clean_acc: f64,
    pub backdoor_acc: f64,
    pub mse_clean: f64,
    pub mse_erased: f64,
    pub runtime_s: f64,
}

impl From<&MetricsReport> for CsvRow {
    fn from(r: &MetricsReport) -> Self {
        CsvRow {
            method: r.method,
            edr: r.edr,
            snr_db: r.snr_db,
            channel: r.channel,
            seed: r.seed,
            clean_acc: r.clean_acc,
            backdoor_acc: r.backdoor_acc,
            mse_clean: r.mse_clean,
            mse_erased: r.mse_erased,
            runtime_s: r.runtime_s,
        }
    }
}

pub fn to_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        w.serialize(CsvRow::from(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::contract(format!("CSV writer produced invalid UTF-8: {e}")))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Format {
            offset: 0,
            message: format!("unexpected CSV header {header:?}"),
        });
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn to_json(reports: &[MetricsReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn parse_json(text: &str) -> Result<Vec<MetricsReport>> {
    Ok(serde_json::from_str(text)?)
}

type Metric = (&'static str, fn(&MetricsReport) -> f64);

const METRICS: [Metric; 5] = [
    ("clean_acc", |r| r.clean_acc),
    ("backdoor_acc", |r| r.backdoor_acc),
    ("mse_clean", |r| r.mse_clean),
    ("mse_erased", |r| r.mse_erased),
    ("runtime_s", |r| r.runtime_s),
];

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

/// The axis the charts sweep over: EDR when it varies, else SNR, else seed.
fn swept_axis(reports: &[MetricsReport]) -> (&'static str, fn(&MetricsReport) -> f64) {
    let distinct = |f: fn(&MetricsReport) -> f64| {
        let mut v: Vec<u64> = reports.iter().map(|r| f(r).to_bits()).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    if distinct(|r| r.edr) > 1 {
        ("edr", |r| r.edr)
    } else if distinct(|r| r.snr_db) > 1 {
        ("snr_db", |r| r.snr_db)
    } else {
        ("seed", |r| r.seed as f64)
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One line chart per metric, stacked vertically. Each series is a
/// `(method, channel)` pair averaged over the remaining dimensions.
pub fn to_svg(reports: &[MetricsReport]) -> String {
    const W: f64 = 560.0;
    const H: f64 = 220.0;
    const PAD: f64 = 50.0;
    let (axis, x_of) = swept_axis(reports);
    let mut series: BTreeMap<(String, String), BTreeMap<u64, Vec<&MetricsReport>>> = BTreeMap::new();
    for r in reports {
        series
            .entry((r.method.to_string(), r.channel.to_string()))
            .or_default()
            .entry(x_of(r).to_bits())
            .or_default()
            .push(r);
    }
    let total_h = H * METRICS.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total_h}" font-family="sans-serif" font-size="11">"#
    );
    let (x_lo, x_hi) = span(reports.iter().map(x_of));
    for (k, (name, metric)) in METRICS.iter().enumerate() {
        let top = k as f64 * H;
        let (y_lo, y_hi) = span(reports.iter().map(metric));
        let px = |x: f64| PAD + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * PAD);
        let py = |y: f64| top + H - PAD + -(y - y_lo) / (y_hi - y_lo) * (H - 1.5 * PAD);
        let _ = writeln!(
            svg,
            r#"<g><text x="{}" y="{}" font-weight="bold">{name} vs {axis}</text>"#,
            PAD,
            top + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{t}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
            b = top + H - PAD,
            r = W - PAD,
            t = top + PAD / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{PAD}" y="{}">{x_lo:.3}</text><text x="{}" y="{}" text-anchor="end">{x_hi:.3}</text>"#,
            top + H - PAD + 14.0,
            W - PAD,
            top + H - PAD + 14.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{y_lo:.4}</text><text x="{}" y="{}" text-anchor="end">{y_hi:.4}</text>"#,
            PAD - 4.0,
            py(y_lo),
            PAD - 4.0,
            py(y_hi) + 4.0
        );
        for (s, ((method, channel), points)) in series.iter().enumerate() {
            let colour = PALETTE[s % PALETTE.len()];
            let coords: Vec<String> = points
                .iter()
                .map(|(&x_bits, rows)| {
                    let y = rows.iter().map(|r| metric(r)).sum::<f64>() / rows.len() as f64;
                    format!("{:.2},{:.2}", px(f64::from_bits(x_bits)), py(y))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{colour}">{method} / {channel}</text>"#,
                W - PAD - 110.0,
                top + 18.0 + 12.0 * s as f64
            );
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `reports` to `path` in `format`.
pub fn emit_report(reports: &[MetricsReport], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let body = match format {
        ReportFormat::Json => to_json(reports)?,
        ReportFormat::Csv => to_csv(reports)?,
        ReportFormat::Svg => to_svg(reports),
    };
    fs::write(path, body)?;
    Ok(())
}
