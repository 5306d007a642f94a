//! Text-only SVG line charts from CSV traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};
use crate::stats::{least_squares, quantile};

#[derive(Clone, Debug, Default)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// Column splitting rows into separate series.
    pub series: Option<String>,
    pub log: bool,
    pub title: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSummary {
    pub name: String,
    /// `(x, median, q25, q75)` per distinct `x`, in increasing `x`.
    pub points: Vec<(f64, f64, f64, f64)>,
    /// Least-squares slope of the median curve in plotted coordinates.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub svg: String,
    pub series: Vec<SeriesSummary>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn column(headers: &csv::StringRecord, name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Config(format!("missing column '{name}'")))
}

fn parse(field: &str, name: &str, line: usize) -> CliResult<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::Config(format!("line {line}: column '{name}' is not numeric: '{field}'")))
}

pub fn emit_plot(csv_path: &Path, spec: &PlotSpec) -> CliResult<Plot> {
    let text = std::fs::read_to_string(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    plot_from_str(&text, spec)
}

pub fn plot_from_str(text: &str, spec: &PlotSpec) -> CliResult<Plot> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let xi = column(&headers, &spec.x)?;
    let yi = column(&headers, &spec.y)?;
    let si = spec.series.as_deref().map(|s| column(&headers, s)).transpose()?;

    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    let mut seen = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let (Some(x), Some(y)) = (parse(&record[xi], &spec.x, line)?, parse(&record[yi], &spec.y, line)?) else {
            continue;
        };
        if spec.log && (x <= 0.0 || y <= 0.0) {
            continue;
        }
        let name = si.map_or_else(|| spec.y.clone(), |c| record[c].to_string());
        let slot = groups.entry(name).or_default().entry(x.to_bits()).or_insert((x, Vec::new()));
        slot.1.push(y);
        seen += 1;
    }
    if seen == 0 {
        return Err(CliError::Config("no data rows".into()));
    }

    let tf = |v: f64| if spec.log { v.log10() } else { v };
    let series: Vec<SeriesSummary> = groups
        .into_iter()
        .map(|(name, by_x)| {
            let mut points: Vec<(f64, f64, f64, f64)> = by_x
                .into_values()
                .map(|(x, ys)| (x, quantile(&ys, 0.5), quantile(&ys, 0.25), quantile(&ys, 0.75)))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            let fit: Vec<(f64, f64)> = points.iter().map(|p| (tf(p.0), tf(p.1))).collect();
            let slope = least_squares(&fit).map(|(m, _)| m);
            SeriesSummary { name, points, slope }
        })
        .collect();

    let svg = render(&series, spec, &tf);
    Ok(Plot { svg, series })
}

fn render(series: &[SeriesSummary], spec: &PlotSpec, tf: &dyn Fn(f64) -> f64) -> String {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(tf(p.0));
        x1 = x1.max(tf(p.0));
        y0 = y0.min(tf(p.2));
        y1 = y1.max(tf(p.3));
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (tf(x) - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (tf(y) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#);
    let scale = if spec.log { "log10 " } else { "" };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{scale}{}</text>"#, WIDTH / 2.0, HEIGHT - 15.0, escape(&spec.x));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{scale}{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&spec.y)
    );
    let _ = writeln!(s, r#"<text x="{l}" y="{}" text-anchor="middle">{}</text>"#, b + 16.0, tick(x0));
    let _ = writeln!(s, r#"<text x="{r}" y="{}" text-anchor="middle">{}</text>"#, b + 16.0, tick(x1));
    let _ = writeln!(s, r#"<text x="{}" y="{b}" text-anchor="end">{}</text>"#, l - 4.0, tick(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 4.0, t + 4.0, tick(y1));
    if let Some(title) = &spec.title {
        let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    }

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let upper = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.3)));
        let lower = ser.points.iter().rev().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.2)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(s, r#"<polygon class="iqr" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(s, r#"<polyline class="median" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let label = match ser.slope {
            Some(m) => format!("{}: slope = {m:.4}", ser.name),
            None => ser.name.clone(),
        };
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, r - 200.0, t + 16.0 * (i as f64 + 1.0), escape(&label));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
