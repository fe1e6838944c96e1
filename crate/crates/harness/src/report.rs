use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nmrrecon_core::metrics::{format_sig9, MetricsRecord};
use nmrrecon_core::{Error, Result};

use crate::method::Method;
use crate::sweep::{ResultRow, RESULTS_FILE};

pub const AGGREGATES_FILE: &str = "aggregates.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    R2,
    SnrRatio,
    HallucinationRatio,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mse, Metric::R2, Metric::SnrRatio, Metric::HallucinationRatio];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::R2 => "r2",
            Metric::SnrRatio => "snr_ratio",
            Metric::HallucinationRatio => "hallucination_ratio",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Mse => "MSE",
            Metric::R2 => "R²",
            Metric::SnrRatio => "SNR ratio",
            Metric::HallucinationRatio => "Hallucination ratio",
        }
    }

    pub fn value(self, r: &MetricsRecord) -> f64 {
        match self {
            Metric::Mse => r.mse,
            Metric::R2 => r.r2,
            Metric::SnrRatio => r.snr_ratio,
            Metric::HallucinationRatio => r.hallucination_ratio,
        }
    }
}

/// Mean and sample standard deviation of each metric over the successful
/// rows of one (method, ratio) group.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub ratio: f64,
    pub n: usize,
    pub n_errors: usize,
    /// Indexed like [`Metric::ALL`].
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

impl Aggregate {
    pub fn mean_of(&self, metric: Metric) -> f64 {
        self.mean[metric as usize]
    }

    pub fn std_of(&self, metric: Metric) -> f64 {
        self.std[metric as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    /// Sorted by method, ratio, seed and sample.
    pub rows: Vec<ResultRow>,
    /// Sorted by method and ratio.
    pub aggregates: Vec<Aggregate>,
}

fn sort_key(r: &ResultRow) -> Result<(Method, f64, u64, usize)> {
    Ok((r.method()?, r.record.ratio, r.record.seed, r.sample))
}

impl ReportTable {
    /// Sorts the rows and aggregates them. Sums run in sorted row order, so
    /// the aggregates do not depend on the order rows were produced in.
    pub fn from_rows(rows: Vec<ResultRow>) -> Result<Self> {
        let mut keyed = rows
            .into_iter()
            .map(|r| Ok((sort_key(&r)?, r)))
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_by(|(a, _), (b, _)| {
            a.0.cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.3.cmp(&b.3))
        });
        let rows: Vec<ResultRow> = keyed.into_iter().map(|(_, r)| r).collect();

        let mut aggregates = Vec::new();
        let mut start = 0;
        while start < rows.len() {
            let method = rows[start].method()?;
            let ratio = rows[start].record.ratio;
            let end = start
                + rows[start..]
                    .iter()
                    .take_while(|r| r.record.method == rows[start].record.method && r.record.ratio == ratio)
                    .count();
            aggregates.push(aggregate(method, ratio, &rows[start..end]));
            start = end;
        }
        Ok(Self { rows, aggregates })
    }

    pub fn aggregate(&self, method: Method, ratio: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && format_sig9(a.ratio) == format_sig9(ratio))
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.aggregates.iter().map(|a| a.method).collect();
        m.dedup();
        m
    }
}

fn aggregate(method: Method, ratio: f64, group: &[ResultRow]) -> Aggregate {
    let ok: Vec<&MetricsRecord> = group.iter().filter(|r| r.is_ok()).map(|r| &r.record).collect();
    let n = ok.len();
    let mut mean = [f64::NAN; 4];
    let mut std = [f64::NAN; 4];
    if n > 0 {
        for (k, metric) in Metric::ALL.into_iter().enumerate() {
            let mut sum = 0.0;
            for r in &ok {
                sum += metric.value(r);
            }
            let m = sum / n as f64;
            let mut ss = 0.0;
            for r in &ok {
                ss += (metric.value(r) - m).powi(2);
            }
            mean[k] = m;
            std[k] = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        }
    }
    Aggregate {
        method,
        ratio,
        n,
        n_errors: group.len() - n,
        mean,
        std,
    }
}

pub fn aggregates_header() -> String {
    let mut h = String::from("method,ratio,n,n_errors");
    for m in Metric::ALL {
        write!(h, ",{0}_mean,{0}_std", m.name()).unwrap();
    }
    h
}

pub fn aggregates_csv(table: &ReportTable) -> String {
    let mut out = aggregates_header();
    out.push('\n');
    for a in &table.aggregates {
        write!(out, "{},{},{},{}", a.method, format_sig9(a.ratio), a.n, a.n_errors).unwrap();
        for k in 0..4 {
            write!(out, ",{},{}", format_sig9(a.mean[k]), format_sig9(a.std[k])).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn results_csv(table: &ReportTable) -> String {
    let mut out = ResultRow::header();
    out.push('\n');
    for r in &table.rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `aggregates.csv` and one `<metric>.svg` chart per
/// metric into `out_dir`, returning the paths written.
pub fn emit_report(table: &ReportTable, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::arg("cannot report an empty table"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let results = out_dir.join(RESULTS_FILE);
    write_atomic(&results, &results_csv(table))?;
    written.push(results);
    let aggregates = out_dir.join(AGGREGATES_FILE);
    write_atomic(&aggregates, &aggregates_csv(table))?;
    written.push(aggregates);
    for metric in Metric::ALL {
        let path = out_dir.join(format!("{}.svg", metric.name()));
        write_atomic(&path, &line_chart(table, metric))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Metric mean against masking percentage, one series per method, with
/// ±1 std error bars.
pub fn line_chart(table: &ReportTable, metric: Metric) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 130.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let points: Vec<(&Aggregate, f64, f64)> = table
        .aggregates
        .iter()
        .map(|a| (a, a.mean_of(metric), a.std_of(metric)))
        .filter(|(_, m, s)| m.is_finite() && s.is_finite())
        .collect();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, m, s) in &points {
        x0 = x0.min(a.ratio * 100.0);
        x1 = x1.max(a.ratio * 100.0);
        y0 = y0.min(m - s);
        y1 = y1.max(m + s);
    }
    if points.is_empty() {
        (x0, x1, y0, y1) = (0.0, 100.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        (x0, x1) = (x0 - 5.0, x1 + 5.0);
    }
    let pad = if y1 - y0 > 1e-12 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1.0) };
    (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{} vs masking</text>"#,
        left + pw / 2.0,
        metric.title()
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for k in 0..=5 {
        let y = y0 + (y1 - y0) * k as f64 / 5.0;
        let py = sy(y);
        writeln!(
            s,
            r##"<line x1="{left}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            py + 4.0,
            tick_label(y)
        )
        .unwrap();
    }
    let mut ratios: Vec<f64> = points.iter().map(|(a, _, _)| a.ratio * 100.0).collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    for x in &ratios {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(*x),
            top + ph + 18.0,
            format_sig9((x * 1e6).round() / 1e6)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">masking (%)</text>"#,
        left + pw / 2.0,
        h - 10.0
    )
    .unwrap();

    for (k, method) in table.methods().into_iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let series: Vec<_> = points.iter().filter(|(a, _, _)| a.method == method).collect();
        let path: Vec<String> = series
            .iter()
            .map(|(a, m, _)| format!("{:.2},{:.2}", sx(a.ratio * 100.0), sy(*m)))
            .collect();
        if !path.is_empty() {
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        for (a, m, sd) in &series {
            let px = sx(a.ratio * 100.0);
            writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{px:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sy(m - sd),
                sy(m + sd),
                sy(*m)
            )
            .unwrap();
        }
        let ly = top + 10.0 + 20.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{method}</text>"#,
            left + pw + 12.0,
            left + pw + 36.0,
            left + pw + 42.0,
            ly + 4.0
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn tick_label(y: f64) -> String {
    if y != 0.0 && (y.abs() < 1e-3 || y.abs() >= 1e4) {
        format!("{y:.2e}")
    } else {
        format!("{y:.3}")
    }
}
