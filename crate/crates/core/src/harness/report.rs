use std::fmt::Write as _;
use std::str::FromStr;

use super::run::{METRIC_FID, METRIC_MS_SSIM};
use super::{canonical_json, HarnessError, RunResults};
use crate::agreement::{AggregateRow, METRIC_ALIGNMENT, METRIC_EXPERT, METRIC_F1};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

/// Table columns: metric key, header, decimals, whether to show ± std.
const COLUMNS: [(&str, &str, usize, bool); 5] = [
    (METRIC_FID, "FID ↓", 2, false),
    (METRIC_MS_SSIM, "MS-SSIM ↓", 3, true),
    (METRIC_ALIGNMENT, "Alignment ↑", 3, true),
    (METRIC_F1, "RadGraph-F1 ↑", 3, true),
    (METRIC_EXPERT, "Expert score ↑", 3, true),
];

const MISSING: &str = "n/a";

/// Renders run results. JSON is the full canonical result document; CSV
/// holds the aggregate rows at full precision; Markdown is the per-finding
/// comparison table.
pub fn emit_report(results: &RunResults, format: ReportFormat) -> Result<Vec<u8>, HarnessError> {
    if results.aggregates.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    let text = match format {
        ReportFormat::Json => canonical_json(results),
        ReportFormat::Csv => aggregates_csv(&results.aggregates),
        ReportFormat::Markdown => markdown(results),
    };
    Ok(text.into_bytes())
}

fn aggregates_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["finding", "metric", "mean", "std", "n"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.finding.clone(),
            r.metric_name.clone(),
            format!("{:?}", r.mean),
            format!("{:?}", r.std),
            r.n.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Reads the CSV form back into aggregate rows.
pub fn parse_report_csv(bytes: &[u8]) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut reader = csv::Reader::from_reader(bytes);
    let schema = |e: &dyn std::fmt::Display| HarnessError::Schema(e.to_string());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| schema(&e))?;
        if record.len() != 5 {
            return Err(HarnessError::Schema(format!("expected 5 fields, got {}", record.len())));
        }
        rows.push(AggregateRow {
            finding: record[0].to_string(),
            metric_name: record[1].to_string(),
            mean: record[2].parse().map_err(|e| schema(&e))?,
            std: record[3].parse().map_err(|e| schema(&e))?,
            n: record[4].parse().map_err(|e| schema(&e))?,
        });
    }
    Ok(rows)
}

fn display_finding(f: &str) -> String {
    let mut chars = f.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn markdown(results: &RunResults) -> String {
    let mut findings: Vec<&str> = Vec::new();
    for r in &results.aggregates {
        if !findings.contains(&r.finding.as_str()) {
            findings.push(&r.finding);
        }
    }
    let mut out = String::new();
    out.push_str("| Finding |");
    for (_, header, _, _) in COLUMNS {
        let _ = write!(out, " {header} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(COLUMNS.len()));
    out.push('\n');
    for finding in findings {
        let _ = write!(out, "| {} |", display_finding(finding));
        for (metric, _, decimals, with_std) in COLUMNS {
            let row = results
                .aggregates
                .iter()
                .find(|r| r.finding == finding && r.metric_name == metric);
            let cell = match row {
                Some(r) if with_std => format!("{:.decimals$} ± {:.decimals$}", r.mean, r.std),
                Some(r) => format!("{:.decimals$}", r.mean),
                None => MISSING.to_string(),
            };
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    if let Some(tau) = &results.tau {
        let variant = match results.tau_variant {
            crate::agreement::TauVariant::A => "τ_a",
            crate::agreement::TauVariant::B => "τ_b",
        };
        out.push('\n');
        for (metric, t) in tau {
            let _ = writeln!(out, "Kendall {variant} ({metric} vs expert): {t:.3}");
        }
    }
    if !results.rank_consistency.is_empty() {
        out.push('\n');
        for (metric, rc) in &results.rank_consistency {
            let _ = writeln!(
                out,
                "Finding order of {metric} matches expert: {} (τ_b = {:.3})",
                if rc.consistent { "yes" } else { "no" },
                rc.tau
            );
        }
    }
    out
}
