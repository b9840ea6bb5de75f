//! Standalone SVG line plots for ROC curves and threshold/count tables.

use std::fmt::Write as _;

use super::roc::RocCurve;
use super::table::UnrecognizedTable;

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        LEFT + v / self.x_max * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - v / self.y_max * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn begin(out: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (frame.x(0.0), frame.y(0.0), frame.x(frame.x_max), frame.y(frame.y_max));
    for i in 0..=5 {
        let fx = frame.x_max * i as f64 / 5.0;
        let fy = frame.y_max * i as f64 / 5.0;
        let (px, py) = (frame.x(fx), frame.y(fy));
        let _ = writeln!(out, r##"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{y1:.1}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(out, r##"<line x1="{x0:.1}" y1="{py:.1}" x2="{x1:.1}" y2="{py:.1}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(fx));
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, tick(fy));
    }
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.1}" y="{y1:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: impl Iterator<Item = (f64, f64)>, color: &str, dashed: bool) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", frame.x(x), frame.y(y))).collect();
    let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
        coords.join(" ")
    );
}

fn legend(out: &mut String, entries: &[String]) {
    for (i, label) in entries.iter().enumerate() {
        let y = TOP + 16.0 + 16.0 * i as f64;
        let x = WIDTH - RIGHT - 230.0;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/>"#,
            x + 18.0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 24.0, y + 4.0, escape(label));
    }
}

/// ROC plot (FPR on x, TPR on y) with a chance diagonal; legend shows each AUC.
pub fn roc_svg(title: &str, curves: &[(&str, &RocCurve)]) -> String {
    let frame = Frame { x_max: 1.0, y_max: 1.0 };
    let mut out = String::new();
    begin(&mut out, &frame, title, "False positive rate (FPR)", "True positive rate (TPR)");
    polyline(&mut out, &frame, [(0.0, 0.0), (1.0, 1.0)].into_iter(), "#999999", true);
    for (i, (_, curve)) in curves.iter().enumerate() {
        polyline(&mut out, &frame, curve.points.iter().map(|p| (p.fpr, p.tpr)), COLORS[i % COLORS.len()], false);
    }
    let labels: Vec<String> = curves.iter().map(|(name, c)| format!("{name} (AUC {:.4})", c.auc)).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Rejected-image counts against the threshold, one line per dataset.
pub fn unrecognized_svg(title: &str, table: &UnrecognizedTable, in_label: &str, out_label: &str) -> String {
    let x_max = table.rows.iter().map(|r| r.threshold).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let y_max = table.in_dist_total.max(table.out_dist_total).max(1) as f64;
    let frame = Frame { x_max, y_max };
    let mut out = String::new();
    begin(&mut out, &frame, title, "Threshold", "Unrecognized image count");
    polyline(&mut out, &frame, table.rows.iter().map(|r| (r.threshold, r.in_dist_rejected as f64)), COLORS[0], false);
    polyline(&mut out, &frame, table.rows.iter().map(|r| (r.threshold, r.out_dist_rejected as f64)), COLORS[1], false);
    legend(&mut out, &[in_label.to_string(), out_label.to_string()]);
    out.push_str("</svg>\n");
    out
}
