use super::dataset::Evaluation;
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricReport, Scores};
use std::fmt::Write;

pub const N_IMAGES_COLUMN: &str = "n_images";

/// Keeps the order of [`Metric::ALL`] whatever order `selected` is in.
pub fn column_order(selected: &[Metric]) -> Vec<Metric> {
    Metric::ALL
        .into_iter()
        .filter(|m| selected.contains(m))
        .collect()
}

/// Header plus one row, values printed with shortest round-trip precision.
pub fn report_csv(report: &MetricReport, metrics: &[Metric]) -> String {
    let cols = column_order(metrics);
    let mut header: Vec<&str> = cols.iter().map(|m| m.name()).collect();
    header.push(N_IMAGES_COLUMN);
    let mut row: Vec<String> = cols
        .iter()
        .map(|&m| report.scores.get(m).to_string())
        .collect();
    row.push(report.n_images.to_string());
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn md_heading(m: Metric) -> &'static str {
    match m {
        Metric::FMax => "F_max ↑",
        Metric::FAda => "F_ada ↑",
        Metric::Wfm => "F_β^ω ↑",
        Metric::Mae => "MAE ↓",
        Metric::SMeasure => "S_m ↑",
        Metric::EMeasure => "E_m ↑",
    }
}

/// Markdown table row at three decimals.
pub fn report_markdown(label: &str, report: &MetricReport, metrics: &[Metric]) -> String {
    let cols = column_order(metrics);
    let mut out = String::from("| Dataset |");
    for &m in &cols {
        write!(out, " {} |", md_heading(m)).unwrap();
    }
    out.push_str(" Images |\n|---|");
    for _ in &cols {
        out.push_str("---|");
    }
    out.push_str("---|\n");
    write!(out, "| {label} |").unwrap();
    for &m in &cols {
        write!(out, " {:.3} |", report.scores.get(m)).unwrap();
    }
    writeln!(out, " {} |", report.n_images).unwrap();
    out
}

/// One row per scored image in name order.
pub fn per_image_csv(eval: &Evaluation, metrics: &[Metric]) -> String {
    let cols = column_order(metrics);
    let mut out = String::from("name");
    for m in &cols {
        write!(out, ",{m}").unwrap();
    }
    out.push('\n');
    for (name, s) in &eval.images {
        out.push_str(name);
        for &m in &cols {
            write!(out, ",{}", s.scores.get(m)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Mean precision, recall and F per threshold. Empty curves give only
/// the header.
pub fn curves_csv(report: &MetricReport) -> String {
    let mut out = String::from("threshold,precision,recall,f_measure\n");
    for (p, f) in report.pr.iter().zip(&report.fm_curve) {
        writeln!(out, "{},{},{},{}", p.threshold, p.precision, p.recall, f).unwrap();
    }
    out
}

/// Reads a report written by [`report_csv`] with every metric column.
/// Curves come back empty.
pub fn parse_report_csv(text: &str) -> Result<MetricReport> {
    let bad = |msg: String| Error::Dataset(format!("report csv: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let row: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing value row".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.len() != row.len() {
        return Err(bad(format!(
            "{} columns in header, {} in row",
            header.len(),
            row.len()
        )));
    }
    let field = |name: &str| -> Result<&str> {
        header
            .iter()
            .position(|h| *h == name)
            .map(|i| row[i])
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let mut scores = Scores::default();
    for m in Metric::ALL {
        let raw = field(m.name())?;
        *scores.get_mut(m) = raw
            .parse()
            .map_err(|_| bad(format!("`{raw}` in column `{m}` is not a number")))?;
    }
    let raw = field(N_IMAGES_COLUMN)?;
    let n_images = raw.parse().map_err(|_| {
        bad(format!(
            "`{raw}` in column `{N_IMAGES_COLUMN}` is not a count"
        ))
    })?;
    Ok(MetricReport {
        scores,
        pr: Vec::new(),
        fm_curve: Vec::new(),
        n_images,
    })
}
