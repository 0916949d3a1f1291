//! Standalone log-log SVG plots of experiment CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mfgc::report::CsvTable;
use mfgc::stats::{fit_line, median};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error(
        "unknown plot kind `{0}` (expected decay, nash-decay, convergence, residual or sde-norms)"
    )]
    UnknownKind(String),
    #[error("{0}: no data rows")]
    Empty(PathBuf),
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}: cannot parse `{value}`")]
    BadValue {
        path: PathBuf,
        row: usize,
        value: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// `fixedpoint-decay.csv`: one plot per index pattern.
    Decay,
    /// `nash-decay.csv`: one plot per index class.
    NashDecay,
    /// `convergence.csv`: error against `1/N` with the fitted slope.
    Convergence,
    /// `master-residual.csv`: median absolute residual against `N`.
    Residual,
    /// `sde-norms.csv`: off-diagonal energy against `N`.
    SdeNorms,
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decay" => Ok(PlotKind::Decay),
            "nash-decay" => Ok(PlotKind::NashDecay),
            "convergence" => Ok(PlotKind::Convergence),
            "residual" => Ok(PlotKind::Residual),
            "sde-norms" => Ok(PlotKind::SdeNorms),
            other => Err(PlotError::UnknownKind(other.to_string())),
        }
    }
}

/// One curve on log-log axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw and annotate the least-squares line in log-log coordinates.
    pub fit: bool,
}

impl Series {
    /// Fitted log-log slope over the positive points.
    pub fn slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.positive();
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        fit_line(&xs, &ys).map(|f| f.slope)
    }

    fn positive(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .copied()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .collect()
    }
}

struct Table<'a> {
    path: &'a Path,
    csv: CsvTable,
}

impl Table<'_> {
    fn column(&self, name: &str) -> Result<usize, PlotError> {
        self.csv
            .column(name)
            .ok_or_else(|| PlotError::MissingColumn {
                path: self.path.to_path_buf(),
                column: name.to_string(),
            })
    }

    fn number(&self, row: usize, col: usize) -> Result<f64, PlotError> {
        let v = &self.csv.rows[row][col];
        v.parse().map_err(|_| PlotError::BadValue {
            path: self.path.to_path_buf(),
            row: row + 1,
            value: v.clone(),
        })
    }
}

/// Pattern of equal indices, e.g. `(3, 5, 3)` gives `aba`.
fn index_pattern(indices: &[usize]) -> String {
    let mut seen: Vec<usize> = Vec::new();
    indices
        .iter()
        .map(|q| {
            let pos = seen.iter().position(|s| s == q).unwrap_or_else(|| {
                seen.push(*q);
                seen.len() - 1
            });
            (b'a' + pos as u8) as char
        })
        .collect()
}

/// Maximum of `value` per `N` and group key.
fn grouped_max(
    t: &Table,
    group: impl Fn(usize) -> Result<String, PlotError>,
    value: usize,
) -> Result<BTreeMap<String, BTreeMap<usize, f64>>, PlotError> {
    let n_col = t.column("N")?;
    let mut out: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for row in 0..t.csv.rows.len() {
        let n = t.number(row, n_col)? as usize;
        let v = t.number(row, value)?;
        let slot = out.entry(group(row)?).or_default().entry(n).or_insert(0.0);
        *slot = slot.max(v);
    }
    Ok(out)
}

fn per_class(groups: BTreeMap<String, BTreeMap<usize, f64>>, what: &str) -> Vec<(String, Series)> {
    groups
        .into_iter()
        .map(|(class, by_n)| {
            let series = Series {
                title: format!("{what}, indices {class}"),
                x_label: "N".into(),
                y_label: "max norm".into(),
                points: by_n.into_iter().map(|(n, v)| (n as f64, v)).collect(),
                fit: true,
            };
            (class, series)
        })
        .collect()
}

/// Series for `kind` read from `csv_path`, keyed by a file-name suffix.
pub fn series_from_csv(
    csv_path: &Path,
    kind: PlotKind,
) -> Result<Vec<(String, Series)>, PlotError> {
    let t = Table {
        path: csv_path,
        csv: CsvTable::read(csv_path)?,
    };
    if t.csv.rows.is_empty() {
        return Err(PlotError::Empty(csv_path.to_path_buf()));
    }
    match kind {
        PlotKind::Decay => {
            let cols = ["i", "j", "k", "l"].map(|c| t.column(c));
            let cols: Vec<usize> = cols.into_iter().collect::<Result<_, _>>()?;
            let norm = t.column("norm")?;
            let groups = grouped_max(
                &t,
                |row| {
                    let mut ix = Vec::new();
                    for &c in &cols {
                        if !t.csv.rows[row][c].is_empty() {
                            ix.push(t.number(row, c)? as usize);
                        }
                    }
                    Ok(index_pattern(&ix))
                },
                norm,
            )?;
            Ok(per_class(groups, "best-response derivative"))
        }
        PlotKind::NashDecay => {
            let class = t.column("class")?;
            let norm = t.column("max_norm")?;
            let groups = grouped_max(&t, |row| Ok(t.csv.rows[row][class].clone()), norm)?;
            Ok(per_class(groups, "value-function derivative")
                .into_iter()
                .map(|(c, s)| (c.replace("!=", "ne").replace('=', "eq"), s))
                .collect())
        }
        PlotKind::Convergence => {
            let (n, e) = (t.column("N")?, t.column("error")?);
            let points = (0..t.csv.rows.len())
                .map(|r| Ok((1.0 / t.number(r, n)?, t.number(r, e)?)))
                .collect::<Result<Vec<_>, PlotError>>()?;
            Ok(vec![(
                "error".into(),
                Series {
                    title: "distance to the master field".into(),
                    x_label: "1/N".into(),
                    y_label: "max |U^N - U|".into(),
                    points,
                    fit: true,
                },
            )])
        }
        PlotKind::Residual => {
            let (n_col, r_col) = (t.column("N")?, t.column("residual")?);
            let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for row in 0..t.csv.rows.len() {
                by_n.entry(t.number(row, n_col)? as usize)
                    .or_default()
                    .push(t.number(row, r_col)?.abs());
            }
            let points = by_n
                .into_iter()
                .map(|(n, v)| (n as f64, median(&v).unwrap_or(f64::NAN)))
                .collect();
            Ok(vec![(
                "median".into(),
                Series {
                    title: "master equation residual".into(),
                    x_label: "N".into(),
                    y_label: "median |residual|".into(),
                    points,
                    fit: true,
                },
            )])
        }
        PlotKind::SdeNorms => {
            let (n, e) = (t.column("N")?, t.column("energy")?);
            let points = (0..t.csv.rows.len())
                .map(|r| Ok((t.number(r, n)?, t.number(r, e)?)))
                .collect::<Result<Vec<_>, PlotError>>()?;
            Ok(vec![(
                "energy".into(),
                Series {
                    title: "off-diagonal gradient energy".into(),
                    x_label: "N".into(),
                    y_label: "E int sum |D_j u^1|^2".into(),
                    points,
                    fit: true,
                },
            )])
        }
    }
}

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Log-log range padded to whole decades when the data span less than one.
fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
        (l.min(v.log10()), h.max(v.log10()))
    });
    if hi - lo < 1e-9 {
        (lo.floor() - 0.5, lo.floor() + 1.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Renders one series as a standalone SVG document.
pub fn render_svg(series: &Series) -> String {
    let pts = series.positive();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&series.title)
    );
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(&series.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.1}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {0:.1})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&series.y_label)
    );
    if pts.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let (x0, x1) = log_range(pts.iter().map(|p| p.0));
    let (y0, y1) = log_range(pts.iter().map(|p| p.1));
    let px = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y.log10() - y0) / (y1 - y0) * ph;

    for e in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = px(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">1e{e}</text>"#,
            TOP + ph,
            TOP + ph - 5.0,
            TOP + ph + 16.0
        );
    }
    for (x, _) in &pts {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="10" fill="gray">{}</text>"#,
            px(*x),
            TOP + ph + 30.0,
            format_tick(*x)
        );
    }
    for e in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = py(10f64.powi(e));
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">1e{e}</text>"#,
            LEFT + 5.0,
            LEFT - 6.0,
            y + 4.0
        );
    }

    let path: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        path.join(" ")
    );
    for (x, y) in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="steelblue"/>"#,
            px(*x),
            py(*y)
        );
    }
    if series.fit {
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        if let Some(f) = fit_line(&xs, &ys) {
            let (a, b) = (pts[0].0, pts[pts.len() - 1].0);
            let line = |x: f64| (f.intercept + f.slope * x.ln()).exp();
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-dasharray="6 4"/>"#,
                px(a),
                py(line(a)),
                px(b),
                py(line(b))
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="13" fill="firebrick">fitted slope {:.3}</text>"#,
                LEFT + pw - 8.0,
                TOP + 18.0,
                f.slope
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(x: f64) -> String {
    if x >= 1.0 && x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        format!("{x:.3}")
    }
}

/// Writes one SVG per series next to `out_dir/<csv stem>-<key>.svg` and
/// returns the written paths.
pub fn emit_plots(
    csv_path: &Path,
    kind: PlotKind,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PlotError> {
    let series = series_from_csv(csv_path, kind)?;
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("plot");
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::with_capacity(series.len());
    for (key, s) in series {
        let path = out_dir.join(format!("{stem}-{key}.svg"));
        std::fs::write(&path, render_svg(&s))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_relabel_in_order_of_appearance() {
        assert_eq!(index_pattern(&[3, 5, 3]), "aba");
        assert_eq!(index_pattern(&[1, 1]), "aa");
        assert_eq!(index_pattern(&[2, 0, 1, 7]), "abcd");
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(matches!(
            "bars".parse::<PlotKind>(),
            Err(PlotError::UnknownKind(_))
        ));
    }

    #[test]
    fn fitted_slope_is_annotated() {
        let s = Series {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            points: vec![(2.0, 0.5), (4.0, 0.25), (8.0, 0.125)],
            fit: true,
        };
        assert!((s.slope().unwrap() + 1.0).abs() < 1e-12);
        let svg = render_svg(&s);
        assert!(svg.contains("fitted slope -1.000"));
        assert_eq!(svg, render_svg(&s));
    }
}
