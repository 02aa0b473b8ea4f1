use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::LabError;

/// Bumped whenever a command's column layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Shortest round-trip decimal; non-finite values become empty cells.
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// A CSV document: version comment, header, rows, then `#`-prefixed footer rows.
#[derive(Debug, Clone)]
pub struct Table {
    command: &'static str,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    footer: Vec<String>,
}

impl Table {
    pub fn new<S: Into<String>>(command: &'static str, columns: impl IntoIterator<Item = S>) -> Self {
        Self { command, columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new(), footer: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Adds `#kind,field,...`.
    pub fn footer(&mut self, kind: &str, fields: &[String]) {
        let mut line = format!("#{kind}");
        for f in fields {
            line.push(',');
            line.push_str(f);
        }
        self.footer.push(line);
    }

    pub fn render(&self) -> String {
        let mut s = format!("# pgd-lab {} schema v{SCHEMA_VERSION}\n", self.command);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        for f in &self.footer {
            s.push_str(f);
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), LabError> {
        std::fs::write(path, self.render()).map_err(|e| LabError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

/// `<out>/<command>-<unix millis>.csv` and `.svg`, made unique within `out`.
pub fn output_paths(out: &Path, command: &str) -> Result<(PathBuf, PathBuf), LabError> {
    std::fs::create_dir_all(out).map_err(|e| LabError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let millis = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let mut stem = format!("{command}-{millis}");
    let mut i = 1;
    while out.join(format!("{stem}.csv")).exists() {
        stem = format!("{command}-{millis}-{i}");
        i += 1;
    }
    Ok((out.join(format!("{stem}.csv")), out.join(format!("{stem}.svg"))))
}

/// What to draw from a CSV file.
#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x: String,
    pub ys: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
}

struct Parsed {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

fn parse_csv(text: &str) -> Result<Parsed, LabError> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| LabError::Runtime("CSV has no header".into()))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse::<f64>().ok()).collect()).collect();
    Ok(Parsed { header, rows })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line chart of `chart.ys` against `chart.x` from CSV text.
pub fn render_chart(csv: &str, chart: &Chart) -> Result<String, LabError> {
    let p = parse_csv(csv)?;
    let col = |name: &str| {
        p.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Runtime(format!("chart column `{name}` not in CSV")))
    };
    let xi = col(&chart.x)?;
    let tx = |v: f64| if chart.log_x { v.log10() } else { v };
    let ty = |v: f64| if chart.log_y { v.log10() } else { v };
    let ok = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let mut series = Vec::new();
    for name in &chart.ys {
        let yi = col(name)?;
        let pts: Vec<(f64, f64)> = p
            .rows
            .iter()
            .filter_map(|r| match (r.get(xi).copied().flatten(), r.get(yi).copied().flatten()) {
                (Some(x), Some(y)) if ok(x, chart.log_x) && ok(y, chart.log_y) => Some((tx(x), ty(y))),
                _ => None,
            })
            .collect();
        series.push((name.clone(), pts));
    }
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&chart.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let label = |v: f64, log: bool| if log { format!("1e{v:.2}") } else { format!("{v:.4}") };
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, label(xv, chart.log_x));
        let _ = writeln!(s, r#"<line x1="{}" y1="{py}" x2="{LEFT}" y2="{py}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 8.0, py + 4.0, label(yv, chart.log_y));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, escape(&chart.x));
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
            if pts.len() <= 40 {
                for &(x, y) in pts {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                }
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads the CSV at `csv_path` back and writes its chart to `svg_path`.
pub fn chart_from_file(csv_path: &Path, svg_path: &Path, chart: &Chart) -> Result<(), LabError> {
    let text = std::fs::read_to_string(csv_path)
        .map_err(|e| LabError::Runtime(format!("cannot read {}: {e}", csv_path.display())))?;
    let svg = render_chart(&text, chart)?;
    std::fs::write(svg_path, svg).map_err(|e| LabError::Runtime(format!("cannot write {}: {e}", svg_path.display())))
}
