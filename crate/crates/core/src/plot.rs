//! Time-series figures as hand-written SVG.
//!
//! Each run plot shows four polylines over time: the true deep and
//! superficial waveforms and the reconstructed amplitude at each of the two
//! true source nodes. All curves are normalized to their own peak. Panel
//! figures lay run plots out on an EP (rows) by PM (columns) grid, one
//! figure per remaining parameter combination.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::experiment::{Cell, ResultRecord, SeriesRow};

const PLOT_W: f64 = 360.0;
const PLOT_H: f64 = 240.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;

/// A named curve and its stroke color.
pub struct Curve<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    pub values: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One plot as an SVG group positioned at `(x, y)`.
pub fn plot_group(x: f64, y: f64, title: &str, times: &[f64], curves: &[Curve<'_>]) -> String {
    let iw = PLOT_W - MARGIN_L - MARGIN_R;
    let ih = PLOT_H - MARGIN_T - MARGIN_B;
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(1.0);
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let y_max = curves
        .iter()
        .flat_map(|c| c.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold(1.0, f64::max);
    let px = |t: f64| MARGIN_L + (t - t0) / span * iw;
    let py = |v: f64| MARGIN_T + ih - v / y_max * ih;

    let mut s = String::new();
    let _ = writeln!(s, r#"<g transform="translate({x},{y})" data-title="{}">"#, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="12" text-anchor="middle">{}</text>"#, PLOT_W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{iw}" height="{ih}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = t0 + span * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle">{:.4}</text>"#,
            px(t),
            MARGIN_T + ih + 12.0,
            t
        );
        let v = y_max * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{:.2}</text>"#,
            MARGIN_L - 4.0,
            py(v) + 3.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">time (s)</text>"#,
        MARGIN_L + iw / 2.0,
        PLOT_H - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{:.1}" font-size="10" text-anchor="middle" transform="rotate(-90 12 {:.1})">normalized amplitude</text>"#,
        MARGIN_T + ih / 2.0,
        MARGIN_T + ih / 2.0
    );
    for (i, c) in curves.iter().enumerate() {
        let points: Vec<String> = times
            .iter()
            .zip(c.values)
            .map(|(t, v)| format!("{:.2},{:.2}", px(*t), py(if v.is_finite() { *v } else { 0.0 })))
            .collect();
        let dash = if c.dashed { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} data-label="{}" points="{}"/>"#,
            c.color,
            escape(c.label),
            points.join(" ")
        );
        let ly = MARGIN_T + 10.0 + 11.0 * i as f64;
        let lx = MARGIN_L + iw - 110.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}"{dash}/><text x="{}" y="{}" font-size="9">{}</text>"#,
            lx + 14.0,
            c.color,
            lx + 18.0,
            ly + 3.0,
            escape(c.label)
        );
    }
    s.push_str("</g>\n");
    s
}

fn placeholder_group(x: f64, y: f64, title: &str) -> String {
    format!(
        "<g transform=\"translate({x},{y})\" data-title=\"{t}\">\n<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{w}\" height=\"{h}\" fill=\"#eee\" stroke=\"#999\"/>\n<text x=\"{cx}\" y=\"{cy}\" font-size=\"14\" text-anchor=\"middle\" fill=\"#666\">missing</text>\n<text x=\"{tx}\" y=\"18\" font-size=\"12\" text-anchor=\"middle\">{t}</text>\n</g>\n",
        t = escape(title),
        w = PLOT_W - MARGIN_L - MARGIN_R,
        h = PLOT_H - MARGIN_T - MARGIN_B,
        cx = PLOT_W / 2.0,
        cy = PLOT_H / 2.0,
        tx = PLOT_W / 2.0,
    )
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Rows of one run, in step order.
fn run_rows<'a>(series: &'a [SeriesRow], cell: &Cell) -> Vec<&'a SeriesRow> {
    let mut rows: Vec<&SeriesRow> = series
        .iter()
        .filter(|r| {
            r.rep == 0
                && r.ep_snr_db == cell.ep_snr_db
                && r.pm_snr_db == cell.pm_snr_db
                && r.noise_db == cell.noise_db
                && r.alpha == cell.alpha
                && r.smoothing == cell.smoothing
        })
        .collect();
    rows.sort_by_key(|r| r.step);
    rows
}

fn run_group_for(x: f64, y: f64, title: &str, rows: &[&SeriesRow]) -> String {
    if rows.is_empty() {
        return placeholder_group(x, y, title);
    }
    let col = |f: fn(&SeriesRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let (times, td, ts, rd, rs) =
        (col(|r| r.time_s), col(|r| r.true_deep), col(|r| r.true_sup), col(|r| r.recon_deep), col(|r| r.recon_sup));
    let curves = [
        Curve { label: "true deep", color: "#1f77b4", dashed: true, values: &td },
        Curve { label: "true superficial", color: "#d62728", dashed: true, values: &ts },
        Curve { label: "recon deep node", color: "#1f77b4", dashed: false, values: &rd },
        Curve { label: "recon superficial node", color: "#d62728", dashed: false, values: &rs },
    ];
    plot_group(x, y, title, &times, &curves)
}

/// Standalone SVG for one run.
pub fn run_svg(series: &[SeriesRow], cell: &Cell) -> String {
    let rows = run_rows(series, cell);
    document(PLOT_W, PLOT_H, &run_group_for(0.0, 0.0, &cell.slug(), &rows))
}

/// Grid of run plots, `cells[row][col]`, with an optional figure title.
pub fn panel_svg(title: &str, series: &[SeriesRow], grid: &[Vec<(String, Cell)>]) -> String {
    let rows = grid.len();
    let cols = grid.iter().map(|r| r.len()).max().unwrap_or(0);
    let top = 30.0;
    let mut body = format!(
        "<text x=\"{}\" y=\"20\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        cols as f64 * PLOT_W / 2.0,
        escape(title)
    );
    for (i, row) in grid.iter().enumerate() {
        for (j, (label, cell)) in row.iter().enumerate() {
            let r = run_rows(series, cell);
            body.push_str(&run_group_for(j as f64 * PLOT_W, top + i as f64 * PLOT_H, label, &r));
        }
    }
    document(cols as f64 * PLOT_W, top + rows as f64 * PLOT_H, &body)
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn flag(smoothing: bool) -> &'static str {
    if smoothing {
        "smooth"
    } else {
        "filter"
    }
}

/// Per-run plots plus one EP × PM panel per (noise, alpha, smoothing).
/// Returns the written paths.
pub fn emit_plots(records: &[ResultRecord], series: &[SeriesRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = dir.join("plots");
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let mut cells: Vec<Cell> = Vec::new();
    for r in records {
        let c = r.cell();
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    for c in &cells {
        let path = dir.join(format!("run_{}.svg", c.slug()));
        std::fs::write(&path, run_svg(series, c))?;
        written.push(path);
    }
    let eps = distinct(records.iter().map(|r| r.ep_snr_db));
    let pms = distinct(records.iter().map(|r| r.pm_snr_db));
    let noises = distinct(records.iter().map(|r| r.noise_db));
    let alphas = distinct(records.iter().map(|r| r.alpha));
    let mut smooths: Vec<bool> = Vec::new();
    for r in records {
        if !smooths.contains(&r.smoothing) {
            smooths.push(r.smoothing);
        }
    }
    for &noise_db in &noises {
        for &alpha in &alphas {
            for &smoothing in &smooths {
                let grid: Vec<Vec<(String, Cell)>> = eps
                    .iter()
                    .map(|&ep_snr_db| {
                        pms.iter()
                            .map(|&pm_snr_db| {
                                (
                                    format!("EP {ep_snr_db} dB, PM {pm_snr_db} dB"),
                                    Cell { ep_snr_db, pm_snr_db, noise_db, alpha, smoothing },
                                )
                            })
                            .collect()
                    })
                    .collect();
                let title = format!("noise {noise_db} dB, alpha {alpha}, {}", flag(smoothing));
                let path = dir.join(format!("panel_noise{noise_db}_a{alpha}_{}.svg", flag(smoothing)));
                std::fs::write(&path, panel_svg(&title, series, &grid))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// One row of plots, one column per exponent, for a single (EP, PM, noise,
/// smoothing) setting.
pub fn exponent_panel_svg(series: &[SeriesRow], base: &Cell, alphas: &[f64]) -> String {
    let row: Vec<(String, Cell)> = alphas
        .iter()
        .map(|&alpha| (format!("alpha {alpha}"), Cell { alpha, ..*base }))
        .collect();
    let title = format!(
        "EP {} dB, PM {} dB, noise {} dB, {}",
        base.ep_snr_db,
        base.pm_snr_db,
        base.noise_db,
        flag(base.smoothing)
    );
    panel_svg(&title, series, &[row])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(cell: &Cell, k: usize) -> Vec<SeriesRow> {
        (0..k)
            .map(|i| SeriesRow {
                ep_snr_db: cell.ep_snr_db,
                pm_snr_db: cell.pm_snr_db,
                noise_db: cell.noise_db,
                alpha: cell.alpha,
                smoothing: cell.smoothing,
                rep: 0,
                step: i,
                time_s: i as f64 * 1e-4,
                true_deep: (i as f64 / k as f64).sin(),
                true_sup: 0.5,
                recon_deep: i as f64,
                recon_sup: 1.0,
            })
            .collect()
    }

    fn cell(ep: f64) -> Cell {
        Cell { ep_snr_db: ep, pm_snr_db: 0.0, noise_db: 30.0, alpha: 1.25, smoothing: true }
    }

    fn point_counts(svg: &str) -> Vec<usize> {
        svg.split("<polyline")
            .skip(1)
            .map(|p| {
                let start = p.find("points=\"").unwrap() + 8;
                let end = start + p[start..].find('"').unwrap();
                p[start..end].split_whitespace().count()
            })
            .collect()
    }

    #[test]
    fn run_plot_structure() {
        let c = cell(0.0);
        let svg = run_svg(&rows(&c, 40), &c);
        assert!(svg.starts_with("<?xml"));
        assert_eq!(point_counts(&svg), vec![40; 4]);
        assert!(svg.contains("time (s)"));
    }

    #[test]
    fn panel_references_cells_and_marks_missing() {
        let (a, b) = (cell(0.0), cell(20.0));
        let mut series = rows(&a, 10);
        series.extend(rows(&b, 10));
        let grid = vec![vec![("A".to_string(), a), ("B".to_string(), b)]];
        let svg = panel_svg("t", &series, &grid);
        assert!(svg.contains("data-title=\"A\"") && svg.contains("data-title=\"B\""));
        assert_eq!(point_counts(&svg), vec![10; 8]);
        assert!(!svg.contains("missing"));
        let svg = panel_svg("t", &rows(&a, 10), &grid);
        assert!(svg.contains("missing"));
        assert_eq!(point_counts(&svg).len(), 4);
    }

    #[test]
    fn titles_escaped() {
        let s = plot_group(0.0, 0.0, "a<b", &[0.0, 1.0], &[]);
        assert!(s.contains("a&lt;b"));
    }
}
