//! Static SVG rendering of a benchmark report: one panel per process,
//! target size on the x axis, mean MSE on a log y axis, one polyline per
//! method with standard-error whiskers.

use super::report::{CellSummary, Method, MseReport, ReportError};
use crate::surfaces::ProcessKind;
use std::io::Write;
use std::path::Path;

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 58.0;
const LEGEND_H: f64 = 26.0;

fn method_color(method: Method) -> &'static str {
    match method {
        Method::Transfer => "#1f77b4",
        Method::TargetOnly => "#ff7f0e",
        Method::Kriging => "#2ca02c",
    }
}

fn method_label(method: Method) -> &'static str {
    match method {
        Method::Transfer => "transfer",
        Method::TargetOnly => "target only",
        Method::Kriging => "kriging",
    }
}

/// Renders the report; refuses to create a file for an empty report.
pub fn render_plot_svg(report: &MseReport, path: &Path) -> Result<(), ReportError> {
    if report.rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let svg = render_svg_string(report);
    let mut file = std::fs::File::create(path)?;
    file.write_all(svg.as_bytes())?;
    Ok(())
}

/// The SVG document as a string (separated out for tests).
pub fn render_svg_string(report: &MseReport) -> String {
    let agg = report.aggregate();
    let mut processes: Vec<ProcessKind> = agg.iter().map(|c| c.process).collect();
    processes.sort_unstable();
    processes.dedup();

    let total_w = MARGIN_L + (PANEL_W + MARGIN_R) * processes.len() as f64;
    let total_h = MARGIN_T + PANEL_H + MARGIN_B + LEGEND_H;

    let mut s = String::with_capacity(16 * 1024);
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" \
         viewBox=\"0 0 {total_w} {total_h}\" font-family=\"sans-serif\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{total_w}\" height=\"{total_h}\" fill=\"white\"/>\n"
    ));

    for (p_idx, &process) in processes.iter().enumerate() {
        let cells: Vec<&CellSummary> = agg.iter().filter(|c| c.process == process).collect();
        let x0 = MARGIN_L + (PANEL_W + MARGIN_R) * p_idx as f64;
        render_panel(&mut s, &cells, process, x0, MARGIN_T);
    }

    // legend strip along the bottom
    let ly = MARGIN_T + PANEL_H + MARGIN_B + 4.0;
    let mut lx = MARGIN_L;
    for method in Method::ALL {
        let color = method_color(method);
        s.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2.5\"/>\n",
            lx + 26.0
        ));
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{ly}\" r=\"3\" fill=\"{color}\"/>\n",
            lx + 13.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            lx + 32.0,
            ly + 4.0,
            method_label(method)
        ));
        lx += 150.0;
    }

    s.push_str("</svg>\n");
    s
}

fn render_panel(s: &mut String, cells: &[&CellSummary], process: ProcessKind, x0: f64, y0: f64) {
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.target_n).collect();
    sizes.sort_unstable();
    sizes.dedup();

    // log-scale y range padded past the whiskers
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in cells {
        let low = (c.mean - c.std_error).max(c.mean / 10.0).max(1e-300);
        lo = lo.min(low);
        hi = hi.max(c.mean + c.std_error);
    }
    if !lo.is_finite() || !hi.is_finite() || hi <= 0.0 {
        lo = 1e-3;
        hi = 1.0;
    }
    let log_lo = lo.log10().floor().min(lo.log10() - 0.05);
    let log_hi = hi.log10().ceil().max(hi.log10() + 0.05);
    let y_of = |v: f64| -> f64 {
        let t = (v.log10() - log_lo) / (log_hi - log_lo);
        y0 + PANEL_H - t * PANEL_H
    };
    let x_of = |n: usize| -> f64 {
        let idx = sizes.iter().position(|&m| m == n).expect("size present") as f64;
        let span = (sizes.len().max(2) - 1) as f64;
        x0 + 24.0 + idx / span * (PANEL_W - 48.0)
    };

    // frame
    s.push_str(&format!(
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" \
         fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"15\" text-anchor=\"middle\">{} process</text>\n",
        x0 + PANEL_W / 2.0,
        y0 - 14.0,
        process
    ));

    // y gridlines and tick labels at decades
    let mut exp = log_lo.ceil() as i32;
    while (exp as f64) <= log_hi {
        let v = 10f64.powi(exp);
        let y = y_of(v);
        s.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\" stroke-width=\"1\"/>\n",
            x0 + PANEL_W
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">1e{exp}</text>\n",
            x0 - 6.0,
            y + 4.0
        ));
        exp += 1;
    }

    // x ticks at each target size
    for &n in &sizes {
        let x = x_of(n);
        let yb = y0 + PANEL_H;
        s.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{yb}\" x2=\"{x}\" y2=\"{}\" stroke=\"#444\" stroke-width=\"1\"/>\n",
            yb + 5.0
        ));
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{n}</text>\n",
            yb + 19.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">target size</text>\n",
        x0 + PANEL_W / 2.0,
        y0 + PANEL_H + 40.0
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 {} {})\">mean MSE</text>\n",
        x0 - 48.0,
        y0 + PANEL_H / 2.0,
        x0 - 48.0,
        y0 + PANEL_H / 2.0
    ));

    // whiskers, then one polyline per method, then markers on top
    for method in Method::ALL {
        let color = method_color(method);
        let series: Vec<(&&CellSummary, f64, f64)> = cells
            .iter()
            .filter(|c| c.method == method)
            .map(|c| (c, x_of(c.target_n), y_of(c.mean)))
            .collect();
        if series.is_empty() {
            continue;
        }
        for (c, x, _) in &series {
            if c.std_error > 0.0 {
                let top = y_of(c.mean + c.std_error);
                let bot_v = (c.mean - c.std_error).max(10f64.powf(log_lo));
                let bot = y_of(bot_v);
                s.push_str(&format!(
                    "<line x1=\"{x}\" y1=\"{top}\" x2=\"{x}\" y2=\"{bot}\" \
                     stroke=\"{color}\" stroke-width=\"1\" opacity=\"0.7\"/>\n"
                ));
                for wy in [top, bot] {
                    s.push_str(&format!(
                        "<line x1=\"{}\" y1=\"{wy}\" x2=\"{}\" y2=\"{wy}\" \
                         stroke=\"{color}\" stroke-width=\"1\" opacity=\"0.7\"/>\n",
                        x - 3.5,
                        x + 3.5
                    ));
                }
            }
        }
        let points: Vec<String> = {
            let mut pts: Vec<(f64, f64)> = series.iter().map(|&(_, x, y)| (x, y)).collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
            pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect()
        };
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        for (_, x, y) in &series {
            s.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
    }
}
