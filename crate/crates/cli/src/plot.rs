//! Static SVG panels of bivariate posterior densities.

use std::fmt::Write as _;

const SIZE: f64 = 360.0;
const MARGIN: f64 = 56.0;
const GRID: usize = 48;
/// Points used for the density estimate; longer chains are strided.
const MAX_POINTS: usize = 4000;
const BANDS: [&str; 8] = [
    "#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6", "#4292c6", "#2171b5", "#08519c",
];

pub struct Marker {
    pub x: f64,
    pub y: f64,
    pub color: &'static str,
    pub label: &'static str,
}

fn scott_bandwidth(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    sd * n.powf(-1.0 / 6.0)
}

fn range(v: &[f64], extra: &[f64]) -> (f64, f64) {
    let lo = v.iter().chain(extra).copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().chain(extra).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo { 0.08 * (hi - lo) } else { 1e-3_f64.max(lo.abs() * 0.05) };
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, span: f64) -> String {
    let digits = (-(span / 4.0).log10().floor()).max(0.0) as usize + 1;
    format!("{v:.digits$}")
}

/// Filled density bands of `(xs, ys)` on a grid, with axis ticks and markers.
pub fn density_svg(xs: &[f64], ys: &[f64], x_name: &str, y_name: &str, markers: &[Marker]) -> String {
    let stride = xs.len().div_ceil(MAX_POINTS).max(1);
    let px: Vec<f64> = xs.iter().step_by(stride).copied().collect();
    let py: Vec<f64> = ys.iter().step_by(stride).copied().collect();
    let mx: Vec<f64> = markers.iter().map(|m| m.x).collect();
    let my: Vec<f64> = markers.iter().map(|m| m.y).collect();
    let (x0, x1) = range(&px, &mx);
    let (y0, y1) = range(&py, &my);
    let hx = scott_bandwidth(&px).max((x1 - x0) / GRID as f64);
    let hy = scott_bandwidth(&py).max((y1 - y0) / GRID as f64);

    let cell_x = (x1 - x0) / GRID as f64;
    let cell_y = (y1 - y0) / GRID as f64;
    let mut dens = vec![0.0; GRID * GRID];
    for (gy, row) in dens.chunks_mut(GRID).enumerate() {
        let cy = y0 + (gy as f64 + 0.5) * cell_y;
        for (gx, d) in row.iter_mut().enumerate() {
            let cx = x0 + (gx as f64 + 0.5) * cell_x;
            *d = px
                .iter()
                .zip(&py)
                .map(|(a, b)| (-0.5 * (((cx - a) / hx).powi(2) + ((cy - b) / hy).powi(2))).exp())
                .sum();
        }
    }
    let peak = dens.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let plot = SIZE - 2.0 * MARGIN;
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * plot;
    let sy = |v: f64| SIZE - MARGIN - (v - y0) / (y1 - y0) * plot;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let w = plot / GRID as f64;
    for gy in 0..GRID {
        for gx in 0..GRID {
            let level = dens[gy * GRID + gx] / peak;
            if level < 0.02 {
                continue;
            }
            let band = ((level * BANDS.len() as f64) as usize).min(BANDS.len() - 1);
            writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + gx as f64 * w,
                SIZE - MARGIN - (gy + 1) as f64 * w,
                w + 0.05,
                w + 0.05,
                BANDS[band]
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let vx = x0 + f * (x1 - x0);
        let vy = y0 + f * (y1 - y0);
        let (tx, ty) = (sx(vx), sy(vy));
        writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{b}" x2="{tx:.2}" y2="{b2}" stroke="black"/><text x="{tx:.2}" y="{t}" text-anchor="middle">{}</text>"#,
            tick_label(vx, x1 - x0),
            b = SIZE - MARGIN,
            b2 = SIZE - MARGIN + 4.0,
            t = SIZE - MARGIN + 16.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<line x1="{l}" y1="{ty:.2}" x2="{MARGIN}" y2="{ty:.2}" stroke="black"/><text x="{t}" y="{:.2}" text-anchor="end">{}</text>"#,
            ty + 4.0,
            tick_label(vy, y1 - y0),
            l = MARGIN - 4.0,
            t = MARGIN - 6.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_name}</text>"#,
        SIZE / 2.0,
        SIZE - 14.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{c}" text-anchor="middle" transform="rotate(-90 16 {c})">{y_name}</text>"#,
        c = SIZE / 2.0
    )
    .unwrap();
    for (i, m) in markers.iter().enumerate() {
        let (cx, cy) = (sx(m.x), sy(m.y));
        let d = 6.0;
        writeln!(
            s,
            r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{c}" stroke-width="2.5"/>"#,
            cx - d,
            cy - d,
            cx + d,
            cy + d,
            cx - d,
            cy + d,
            cx + d,
            cy - d,
            c = m.color
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{}">{} ({}, {})</text>"#,
            MARGIN,
            18.0 + 14.0 * i as f64,
            m.color,
            m.label,
            tick_label(m.x, (x1 - x0) / 10.0),
            tick_label(m.y, (y1 - y0) / 10.0)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
