//! Minimal SVG line plots of PDP curves.

use std::fmt::Write;

use pdforest::tasks::FeatureCurve;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// PDV against value. With `step` the curve is drawn as a right-continuous
/// step function.
pub fn svg_curve(curve: &FeatureCurve, step: bool) -> String {
    let xs: Vec<f64> = curve.points.iter().map(|p| p.value).collect();
    let ys: Vec<f64> = curve.points.iter().map(|p| p.pdv).collect();
    let (x0, x1) = span(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = span(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut pts = String::new();
    for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
        if step && i > 0 {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(ys[i - 1]));
        }
        let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(&curve.name)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for (x, y, anchor, label) in [
        (PAD, H - PAD + 18.0, "start", x0),
        (W - PAD, H - PAD + 18.0, "end", x1),
        (PAD - 6.0, H - PAD, "end", y0),
        (PAD - 6.0, PAD + 4.0, "end", y1),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            pdforest::fmt_f64(label)
        );
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        pts.trim_end()
    );
    s.push_str("</svg>\n");
    s
}
