//! Minimal static line plots: one panel per series, log10 vertical axis.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL: f64 = 220.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 50.0;
const FLOOR: f64 = 1e-16;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
}

fn log_range(values: &[f64]) -> (f64, f64) {
    let logs = values.iter().map(|v| v.abs().max(FLOOR).log10());
    let (lo, hi) = logs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    }
}

pub fn line_plot(title: &str, times: &[f64], series: &[Series<'_>]) -> String {
    let height = MARGIN_T + series.len() as f64 * (PANEL + GAP);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let t0 = times.first().copied().unwrap_or(0.0);
    let t1 = times.last().copied().unwrap_or(1.0).max(t0 + f64::EPSILON);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    for (i, ser) in series.iter().enumerate() {
        let top = MARGIN_T + i as f64 * (PANEL + GAP) + 10.0;
        let (lo, hi) = log_range(ser.values);
        let px = |t: f64| MARGIN_L + (t - t0) / (t1 - t0) * plot_w;
        let py = |v: f64| top + (hi - v.abs().max(FLOOR).log10()) / (hi - lo) * PANEL;
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="black"/>"#
        );
        let decades = (hi - lo) as i32;
        let stride = (decades / 8).max(1);
        for d in (0..=decades).step_by(stride as usize) {
            let e = lo + f64::from(d);
            let y = top + (hi - e) / (hi - lo) * PANEL;
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
                MARGIN_L + plot_w,
                MARGIN_L - 4.0,
                y + 4.0
            );
        }
        for k in 0..=4 {
            let t = t0 + (t1 - t0) * f64::from(k) / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.4}</text>"#,
                px(t),
                top + PANEL + 14.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            MARGIN_L + 6.0,
            top + 14.0,
            escape(ser.label)
        );
        let mut pts = String::new();
        for (t, v) in times.iter().zip(ser.values) {
            let _ = write!(pts, "{:.2},{:.2} ", px(*t), py(*v));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            COLORS[i % COLORS.len()],
            pts.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
