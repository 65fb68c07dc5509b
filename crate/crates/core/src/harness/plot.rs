//! SVG plot of a sweep: mean rate against the true noise variance, with the
//! Wyner-Ziv rate for reference.

use std::fmt::Write;

use super::experiment::Aggregate;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;

fn polyline(points: &[(f64, f64)], color: &str, dashed: bool) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
    format!(
        r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
        pts.join(" ")
    )
}

/// Renders the sweep; points are sorted by noise variance.
pub fn sweep_svg(aggs: &[Aggregate]) -> String {
    let mut rows: Vec<&Aggregate> = aggs.iter().collect();
    rows.sort_by(|a, b| a.sigma_z2.total_cmp(&b.sigma_z2));
    let xs: Vec<f64> = rows.iter().map(|a| a.sigma_z2).collect();
    let ys: Vec<f64> = rows
        .iter()
        .flat_map(|a| [a.mean_rate, a.wz_rate])
        .filter(|v| v.is_finite())
        .collect();
    let (x0, x1) = (
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let y1 = ys.iter().copied().fold(0.0, f64::max).max(1e-9) * 1.1;
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| PAD + (x - x0) / span * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - y / y1 * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for i in 0..=4 {
        let y = y1 * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            PAD - 6.0,
            py(y) + 4.0
        );
    }
    for &x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
            px(x),
            H - PAD + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">noise variance</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">bits per sample</text>"#,
        H / 2.0,
        H / 2.0
    );
    let rate: Vec<(f64, f64)> = rows.iter().map(|a| (px(a.sigma_z2), py(a.mean_rate))).collect();
    let wz: Vec<(f64, f64)> = rows.iter().map(|a| (px(a.sigma_z2), py(a.wz_rate))).collect();
    let _ = writeln!(s, "{}", polyline(&rate, "#1f5fbf", false));
    let _ = writeln!(s, "{}", polyline(&wz, "#888888", true));
    for (x, y) in &rate {
        let _ = writeln!(s, r##"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="#1f5fbf"/>"##);
    }
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" fill="#1f5fbf">mean rate</text><text x="{}" y="{}" fill="#888888">Wyner-Ziv rate</text>"##,
        W - PAD - 110.0,
        PAD,
        W - PAD - 110.0,
        PAD + 16.0
    );
    s.push_str("</svg>\n");
    s
}
