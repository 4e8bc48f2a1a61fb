//! Minimal SVG line and bar charts. Output is a pure function of the input,
//! with coordinates printed at fixed precision.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, y_label: &str, x_label: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>
<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>
<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>
"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        escape(title),
        LEFT + (W - LEFT - RIGHT) / 2.0,
        H - 12.0,
        escape(x_label),
        TOP + (H - TOP - BOTTOM) / 2.0,
        TOP + (H - TOP - BOTTOM) / 2.0,
        escape(y_label),
    );
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 0.0 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn axes(out: &mut String, (y_lo, y_hi): (f64, f64)) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<path d="M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{x1:.1} {y0:.1}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let y = y0 + (y1 - y0) * f;
        let v = y_lo + (y_hi - y_lo) * f;
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3e}</text>"##,
            x0 - 4.0,
            x0 - 6.0,
            y + 4.0,
        );
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 4.0,
            PALETTE[i % PALETTE.len()],
            x + 18.0,
            y + 2.0,
            escape(name),
        );
    }
}

/// Line chart of `(name, points)` series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title, y_label, x_label);
    let xr = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let yr = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    axes(&mut out, yr);
    let sx = |x: f64| LEFT + (x - xr.0) / (xr.1 - xr.0) * (W - LEFT - RIGHT);
    let sy = |y: f64| (H - BOTTOM) - (y - yr.0) / (yr.1 - yr.0) * (H - TOP - BOTTOM);
    for (i, (_, pts)) in series.iter().enumerate() {
        let mut d = String::new();
        for (j, (x, y)) in pts.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if j == 0 { "M" } else { "L" }, sx(*x), sy(*y));
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{}" stroke-width="1.5" fill="none"/>"#,
            d.trim_end(),
            PALETTE[i % PALETTE.len()]
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{LEFT:.1}" y="{:.1}">{:.3e}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{:.3e}</text>"#,
        H - BOTTOM + 16.0,
        xr.0,
        W - RIGHT,
        H - BOTTOM + 16.0,
        xr.1
    );
    legend(&mut out, &series.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Bar chart with one bar per `(name, value)`; the axis starts at zero.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title, y_label, "scheme");
    let hi = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let yr = (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 });
    axes(&mut out, yr);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (name, v)) in bars.iter().enumerate() {
        let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
        let h = v / yr.1 * (H - TOP - BOTTOM);
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/><text x="{:.2}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            H - BOTTOM - h,
            slot * 0.7,
            PALETTE[i % PALETTE.len()],
            x + slot * 0.35,
            H - BOTTOM + 14.0,
            escape(name),
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_and_deterministic() {
        let s = vec![("a<b".to_string(), vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::NAN)]), ("c".to_string(), vec![(0.0, 3.0)])];
        let one = line_chart("t", "x", "y", &s);
        assert_eq!(one, line_chart("t", "x", "y", &s));
        assert!(one.starts_with("<svg") && one.ends_with("</svg>\n"));
        assert!(one.contains("a&lt;b") && !one.contains("NaN"));
        let b = bar_chart("bars", "v", &[("x".into(), 2.0), ("y".into(), 0.0)]);
        assert_eq!(b.matches("<rect").count(), 1 + 2);
    }

    #[test]
    fn empty_inputs_still_render() {
        assert!(line_chart("t", "x", "y", &[]).ends_with("</svg>\n"));
        assert!(bar_chart("t", "y", &[]).ends_with("</svg>\n"));
    }
}
