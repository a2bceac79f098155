//! Minimal SVG charts: training-loss curves and per-zone MSE bars.

use std::fmt::Write as _;

use super::metrics::MetricReport;
use crate::trainer::EpochLog;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn frame(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        escape(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_label(svg: &mut String, max: f64) {
    for i in 0..=4 {
        let v = max * i as f64 / 4.0;
        let y = H - PAD - (H - 2.0 * PAD) * i as f64 / 4.0;
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{v:.3}</text>",
            PAD - 4.0
        )
        .unwrap();
    }
}

/// Angle, speed and total training loss against epoch, one series per run.
pub fn loss_curve_svg(runs: &[(String, Vec<EpochLog>)]) -> String {
    let mut svg = frame("Training loss (angle and speed MSE)");
    let max_epoch = runs.iter().flat_map(|(_, l)| l.iter().map(|e| e.epoch)).max().unwrap_or(1).max(1);
    let max_loss = runs
        .iter()
        .flat_map(|(_, l)| l.iter().map(|e| e.total_loss))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    y_label(&mut svg, max_loss);
    let x = |e: usize| PAD + (W - 2.0 * PAD) * if max_epoch > 1 { (e - 1) as f64 / (max_epoch - 1) as f64 } else { 0.5 };
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * v / max_loss;
    for e in 1..=max_epoch {
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{e}</text>",
            x(e),
            H - PAD + 14.0
        )
        .unwrap();
    }
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut legend = 0;
    for (ri, (name, logs)) in runs.iter().enumerate() {
        let color = COLORS[ri % COLORS.len()];
        for (series, dash, get) in [
            ("total", "", (|e: &EpochLog| e.total_loss) as fn(&EpochLog) -> f64),
            ("angle", "6,3", |e: &EpochLog| e.angle_mse),
            ("speed", "2,2", |e: &EpochLog| e.speed_mse),
        ] {
            let pts: Vec<String> = logs.iter().map(|e| format!("{:.1},{:.1}", x(e.epoch), y(get(e)))).collect();
            writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-dasharray=\"{dash}\" points=\"{}\"/>",
                pts.join(" ")
            )
            .unwrap();
            writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"{color}\">{} {series}</text>",
                W - PAD - 110.0,
                PAD + 12.0 * legend as f64,
                escape(name)
            )
            .unwrap();
            legend += 1;
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Combined MSE per zone, with the overall score as the first bar.
pub fn zone_bars_svg(report: &MetricReport) -> String {
    let mut svg = frame("Combined MSE by zone");
    let bars: Vec<(String, f64, usize)> = std::iter::once(("overall".to_string(), report.overall.combined, report.overall.count))
        .chain(report.zones.iter().map(|(z, m)| (z.to_string(), m.combined, m.count)))
        .collect();
    let max = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1e-12);
    y_label(&mut svg, max);
    let slot = (W - 2.0 * PAD) / bars.len() as f64;
    for (i, (name, v, n)) in bars.iter().enumerate() {
        let h = (H - 2.0 * PAD) * v / max;
        let x0 = PAD + slot * i as f64 + slot * 0.15;
        writeln!(
            svg,
            "<rect x=\"{x0:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"#4c72b0\"><title>{name}: {v:.3} (n={n})</title></rect>",
            H - PAD - h,
            slot * 0.7
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">{name}</text>",
            x0 + slot * 0.35,
            H - PAD + 14.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
