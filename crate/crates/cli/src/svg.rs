//! Minimal SVG line charts: one polyline per series plus a shaded
//! confidence band, drawn on a 1000x600 canvas.

use std::io::Write;

use crate::error::CliResult;

pub struct Series {
    pub name: String,
    /// (x, mean, ci_lo, ci_hi), sorted by x.
    pub points: Vec<(f64, f64, f64, f64)>,
}

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const PALETTE: &[&str] = &["#1b6ca8", "#c0392b", "#27885b", "#8e44ad", "#b7950b", "#5d6d7e"];

pub fn write_chart<W: Write>(
    mut w: W,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> CliResult<()> {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, _, lo, hi) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(lo);
            y_max = y_max.max(hi);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    let (y_min, y_max) = (y_min - pad, y_max + pad);
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(
        w,
        r#"<text x="{}" y="28" font-size="18" text-anchor="middle" font-family="sans-serif">{title}</text>"#,
        WIDTH / 2.0
    )?;
    // Axes.
    writeln!(
        w,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )?;
    writeln!(
        w,
        r#"<line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    )?;
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = x_min + frac * (x_max - x_min);
        let yv = y_min + frac * (y_max - y_min);
        writeln!(
            w,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">{:.2}</text>"#,
            sx(xv),
            HEIGHT - MARGIN + 20.0,
            xv
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end" font-family="sans-serif">{:.3}</text>"#,
            MARGIN - 8.0,
            sy(yv) + 4.0,
            yv
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle" font-family="sans-serif">{x_label}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0
    )?;
    writeln!(
        w,
        r#"<text x="18" y="{}" font-size="14" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 18 {mid})">{y_label}</text>"#,
        HEIGHT / 2.0,
        mid = HEIGHT / 2.0
    )?;

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if s.points.len() > 1 {
            // Confidence band: upper edge forward, lower edge back.
            let mut band = String::new();
            for &(x, _, _, hi) in &s.points {
                band.push_str(&format!("{:.2},{:.2} ", sx(x), sy(hi)));
            }
            for &(x, _, lo, _) in s.points.iter().rev() {
                band.push_str(&format!("{:.2},{:.2} ", sx(x), sy(lo)));
            }
            writeln!(
                w,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                band.trim_end()
            )?;
        }
        let line: Vec<String> = s
            .points
            .iter()
            .map(|&(x, m, _, _)| format!("{:.2},{:.2}", sx(x), sy(m)))
            .collect();
        writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        )?;
        for &(x, m, _, _) in &s.points {
            writeln!(
                w,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(m)
            )?;
        }
        // Legend entry.
        let ly = MARGIN + 18.0 * idx as f64;
        writeln!(
            w,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/>"#,
            WIDTH - MARGIN - 150.0,
            ly
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{}" font-size="13" font-family="sans-serif">{}</text>"#,
            WIDTH - MARGIN - 132.0,
            ly + 10.0,
            s.name
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}
