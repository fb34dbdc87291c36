//! Loss-curve export: a long-format CSV and a dependency-free SVG plot.
//! Both are pure functions of the records, so identical runs give
//! byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{BenchError, BenchResult};
use crate::io::{fmt_g, write_rows, RunRecord};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// `(arm, series, points)` with series `train` or `val`.
type Series<'a> = (&'a str, &'static str, Vec<(f64, f64)>);

fn collect<'a>(arms: &[(&'a str, &[RunRecord])]) -> Vec<Series<'a>> {
    let mut out = Vec::new();
    for (name, recs) in arms {
        let train = recs.iter().map(|r| (r.k as f64, r.train_loss)).filter(|p| p.1.is_finite()).collect();
        let val = recs
            .iter()
            .filter_map(|r| r.val_loss.map(|v| (r.k as f64, v)))
            .filter(|p| p.1.is_finite())
            .collect();
        out.push((*name, "train", train));
        out.push((*name, "val", val));
    }
    out
}

pub fn curves_csv(arms: &[(&str, &[RunRecord])], path: &Path) -> BenchResult<()> {
    let rows = collect(arms).into_iter().flat_map(|(name, series, pts)| {
        pts.into_iter()
            .map(move |(k, v)| vec![name.to_string(), series.to_string(), (k as u64).to_string(), fmt_g(v)])
    });
    write_rows(path, &["algorithm", "series", "k", "loss"], rows)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG line plot: solid train and dashed validation curves, one colour per arm.
pub fn curves_svg(arms: &[(&str, &[RunRecord])]) -> String {
    let series = collect(arms);
    let pts = series.iter().flat_map(|s| s.2.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_Y + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN_Y + 16.0,
            fmt_g(xv.round())
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(yv) + 4.0,
            fmt_g(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 6.0
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN_LEFT}" y="{:.2}">loss</text>"#, MARGIN_Y - 12.0);

    for (i, (name, kind, pts)) in series.iter().enumerate() {
        let colour = PALETTE[(i / 2) % PALETTE.len()];
        let dash = if *kind == "val" { r#" stroke-dasharray="6 4""# } else { "" };
        let label = escape(&format!("{name} {kind}"));
        if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline data-series="{label}" fill="none" stroke="{colour}" stroke-width="1.5"{dash} points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = MARGIN_Y + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, lx + 30.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `curves.csv` and `curves.svg` into `dir`.
pub fn emit_curves(arms: &[(&str, &[RunRecord])], dir: &Path) -> BenchResult<Vec<PathBuf>> {
    if arms.is_empty() {
        return Err(BenchError::Format {
            path: dir.to_path_buf(),
            message: "no series to plot".into(),
        });
    }
    let csv_path = dir.join("curves.csv");
    curves_csv(arms, &csv_path)?;
    let svg_path = dir.join("curves.svg");
    std::fs::write(&svg_path, curves_svg(arms)).map_err(|source| BenchError::Io {
        path: svg_path.clone(),
        source,
    })?;
    Ok(vec![csv_path, svg_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64], val_every: u64) -> Vec<RunRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let k = i as u64 + 1;
                RunRecord {
                    k,
                    train_loss: v,
                    val_loss: (k % val_every == 0).then_some(v * 1.1),
                    step_norm: 0.0,
                    clamp_hits: 0,
                    elapsed_s: 0.0,
                }
            })
            .collect()
    }

    fn polyline(svg: &str, label: &str) -> Vec<(f64, f64)> {
        let line = svg
            .lines()
            .find(|l| l.contains(&format!("data-series=\"{label}\"")))
            .expect("series present");
        let pts = line.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
        pts.split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    }

    #[test]
    fn monotone_series_gives_monotone_polyline() {
        let values: Vec<f64> = (0..30).map(|k| 10.0 * 0.8f64.powi(k)).collect();
        let recs = series(&values, 5);
        let svg = curves_svg(&[("OCP-LS", &recs)]);
        let pts = polyline(&svg, "OCP-LS train");
        assert_eq!(pts.len(), 30);
        // SVG y grows downward, so a decreasing loss has increasing y.
        assert!(pts.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
        assert_eq!(polyline(&svg, "OCP-LS val").len(), 6);
    }

    #[test]
    fn two_arms_two_labelled_series() {
        let a = series(&[3.0, 2.0, 1.0], 1);
        let b = series(&[3.0, 2.5, 2.0], 1);
        let svg = curves_svg(&[("A", &a), ("B", &b)]);
        assert!(svg.contains(">A train<") && svg.contains(">B train<"));
        assert!(svg.contains(">A val<") && svg.contains(">B val<"));
        assert_eq!(svg.matches("<polyline").count(), 4);
    }

    #[test]
    fn svg_matches_golden_file() {
        let a = series(&[4.0, 3.0, 2.5, 1.75, 1.5, 1.25], 2);
        let b = series(&[4.0, 3.5, 3.25, 3.0, 2.0, 1.0], 3);
        let svg = curves_svg(&[("OCP-LS", &a), ("AdamW <ref>", &b)]);
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/curves.svg");
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&path, &svg).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg, golden);
        assert_eq!(svg, curves_svg(&[("OCP-LS", &a), ("AdamW <ref>", &b)]));
    }

    #[test]
    fn csv_is_long_format() {
        let dir = tempfile::tempdir().unwrap();
        let a = series(&[2.0, 1.0], 2);
        let files = emit_curves(&[("X", &a)], dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(text, "algorithm,series,k,loss\nX,train,1,2\nX,train,2,1\nX,val,2,1.1\n");
    }
}
