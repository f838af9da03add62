//! Minimal SVG charts: polylines and fixed-width histograms.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) {
    let (x0, x1, y0, y1) = (PAD, W - PAD, H - PAD, PAD);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{x0}" y="{}" text-anchor="start">{}</text>"#, y0 + 16.0, fmt_tick(x.0));
    let _ = writeln!(out, r#"<text x="{x1}" y="{}" text-anchor="end">{}</text>"#, y0 + 16.0, fmt_tick(x.1));
    let _ = writeln!(out, r#"<text x="{}" y="{y0}" text-anchor="end">{}</text>"#, x0 - 4.0, fmt_tick(y.0));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, y1 + 4.0, fmt_tick(y.1));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Named series of (x, y) points drawn as polylines on shared axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let xr = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let yr = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    axes(&mut out, x_label, y_label, xr, yr);
    let sx = |x: f64| PAD + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = PAD + 16.0 * k as f64;
        let _ = writeln!(out, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, W - PAD - 110.0, W - PAD - 90.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, W - PAD - 85.0, ly + 4.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Counts per bin for `bins` bins of `bin_width` starting at zero, plus the
/// number of values at or beyond the last edge.
pub fn bin_counts(values: &[f64], bin_width: f64, bins: usize) -> (Vec<usize>, usize) {
    let mut counts = vec![0; bins];
    let mut overflow = 0;
    for &v in values {
        let i = (v / bin_width).floor();
        if i >= 0.0 && (i as usize) < bins {
            counts[i as usize] += 1;
        } else if i >= 0.0 || !v.is_finite() {
            overflow += 1;
        }
    }
    (counts, overflow)
}

/// Histogram with `bins` bins of `bin_width` from zero; values past the last
/// bin are collected in a separate overflow bar.
pub fn histogram(title: &str, x_label: &str, values: &[f64], bin_width: f64, bins: usize) -> String {
    let (counts, overflow) = bin_counts(values, bin_width, bins);
    let mut out = String::new();
    header(&mut out, title);
    let peak = counts.iter().copied().chain([overflow]).max().unwrap_or(0).max(1) as f64;
    axes(&mut out, x_label, "count", (0.0, bin_width * bins as f64), (0.0, peak));
    let plot_w = W - 2.0 * PAD - 20.0;
    let bw = plot_w / bins as f64;
    let sy = |c: usize| (c as f64 / peak) * (H - 2.0 * PAD);
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            let h = sy(c);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                PAD + i as f64 * bw,
                H - PAD - h,
                bw.max(0.5),
                h,
                COLORS[0]
            );
        }
    }
    let h = sy(overflow);
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="12" height="{:.2}" fill="{}"><title>overflow {overflow}</title></rect>"#,
        W - PAD - 14.0,
        H - PAD - h,
        h,
        COLORS[1]
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">overflow: {overflow}</text>"#, W - PAD, PAD);
    out.push_str("</svg>\n");
    out
}
