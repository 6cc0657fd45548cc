//! Aggregated tables and SVG line charts of metric vs labeled fraction.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataio::format_sig;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, CellSummary, ResultRecord};

const SUMMARY_HEADER: &str = "algorithm,target,metric,n_labeled_folds,labeled_fraction,n,mean,std_error,se_defined";

fn summary_line(c: &CellSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        c.algorithm,
        c.target,
        c.metric,
        c.n_labeled_folds,
        format_sig(c.labeled_fraction, 6),
        c.n,
        format_sig(c.mean, 9),
        format_sig(c.std_error, 9),
        c.se_defined
    )
}

/// File-name-safe form of an algorithm label.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub per_method: Vec<PathBuf>,
    pub charts: Vec<PathBuf>,
}

impl ReportFiles {
    pub fn all(&self) -> Vec<&Path> {
        std::iter::once(self.summary.as_path())
            .chain(self.per_method.iter().map(PathBuf::as_path))
            .chain(self.charts.iter().map(PathBuf::as_path))
            .collect()
    }
}

/// Writes `summary.csv`, one `<algorithm>.csv` per algorithm and one
/// `<target>_<metric>.svg` chart per target and metric into `out_dir`.
pub fn write_report(records: &[ResultRecord], out_dir: &Path) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no result records to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cells = aggregate(records);
    let write = |path: PathBuf, text: String| -> Result<PathBuf> {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let mut text = format!("{SUMMARY_HEADER}\n");
    for c in &cells {
        text.push_str(&summary_line(c));
        text.push('\n');
    }
    let summary = write(out_dir.join("summary.csv"), text)?;

    let mut by_alg: BTreeMap<&str, Vec<&CellSummary>> = BTreeMap::new();
    let mut by_chart: BTreeMap<(&str, &str), Vec<&CellSummary>> = BTreeMap::new();
    for c in &cells {
        by_alg.entry(&c.algorithm).or_default().push(c);
        by_chart.entry((&c.target, &c.metric)).or_default().push(c);
    }
    let mut per_method = Vec::new();
    for (alg, cs) in &by_alg {
        let mut text = format!("{SUMMARY_HEADER}\n");
        for c in cs {
            text.push_str(&summary_line(c));
            text.push('\n');
        }
        per_method.push(write(out_dir.join(format!("{}.csv", file_stem(alg))), text)?);
    }
    let mut charts = Vec::new();
    for ((target, metric), cs) in &by_chart {
        let mut series: BTreeMap<&str, Vec<Point>> = BTreeMap::new();
        for c in cs {
            series.entry(&c.algorithm).or_default().push((c.labeled_fraction, c.mean, c.std_error));
        }
        let series: Vec<(&str, Vec<Point>)> = series.into_iter().collect();
        let svg = line_chart(&format!("{target}: {metric}"), metric, &series);
        charts.push(write(out_dir.join(format!("{}_{}.svg", file_stem(target), file_stem(metric))), svg)?);
    }
    Ok(ReportFiles {
        summary,
        per_method,
        charts,
    })
}

/// `(x, mean, standard error)`
pub type Point = (f64, f64, f64);

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean ± standard error per x, one polyline with error bars per series.
pub fn line_chart(title: &str, y_label: &str, series: &[(&str, Vec<Point>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (64.0, 150.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, se) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - se);
        y1 = y1.max(m + se);
    }
    if !(x1 > x0) {
        x0 -= 0.05;
        x1 += 0.05;
    }
    if !(y1 > y0) {
        y0 -= 0.05;
        y1 += 0.05;
    }
    let pad = (y1 - y0) * 0.08;
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (w - right + left) / 2.0, escape(title));
    let (ax0, ax1, ay0, ay1) = (px(x0), px(x1), py(y0), py(y1));
    let _ = writeln!(s, r#"<path d="M{ax0:.1},{ay1:.1} L{ax0:.1},{ay0:.1} L{ax1:.1},{ay0:.1}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r##"<line x1="{:.1}" y1="{:.1}" x2="{ax0:.1}" y2="{:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##, ax0 - 4.0, py(y), py(y), ax0 - 6.0, py(y) + 4.0, format_sig(y, 3));
    }
    let mut xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|t| t.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ay0:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(x), px(x), ay0 + 4.0, px(x), ay0 + 18.0, format_sig(x, 3));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">labeled fraction</text>"#, (ax0 + ax1) / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#, (ay0 + ay1) / 2.0, escape(y_label));

    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.1},{:.1}", px(x), py(m))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for &(x, m, se) in &pts {
            let (cx, lo, hi) = (px(x), py(m - se), py(m + se));
            let _ = writeln!(s, r#"<path d="M{cx:.1},{lo:.1} L{cx:.1},{hi:.1} M{:.1},{lo:.1} L{:.1},{lo:.1} M{:.1},{hi:.1} L{:.1},{hi:.1}" stroke="{color}"/><circle cx="{cx:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#, cx - 3.0, cx + 3.0, cx - 3.0, cx + 3.0, py(m));
        }
        let ly = top + 16.0 * i as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#, lx + 18.0, lx + 24.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}
