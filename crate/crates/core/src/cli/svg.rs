//! Static SVG rendering of VPC bands, one panel per stratum.
//!
//! Shaded region: quantile envelope. Solid white line: mean of the replicate
//! curves. Dashed black stepped line: KM of the observed study.

use std::fmt::Write;

use super::io::BandSeries;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 52.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 44.0;

struct Frame {
    x0: f64,
    t_max: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        self.x0 + MARGIN_L + t / self.t_max * (PANEL_W - MARGIN_L - MARGIN_R)
    }

    fn y(&self, s: f64) -> f64 {
        MARGIN_T + (1.0 - s) * (PANEL_H - MARGIN_T - MARGIN_B)
    }
}

fn path(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut d = String::new();
    for (k, (x, y)) in points.into_iter().enumerate() {
        let _ = write!(d, "{}{x:.2},{y:.2}", if k == 0 { "M" } else { " L" });
    }
    d
}

/// Points of a right-continuous step curve sampled at `time`.
fn stepped(f: &Frame, time: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(2 * time.len());
    for (k, (&t, &v)) in time.iter().zip(values).enumerate() {
        if k > 0 {
            pts.push((f.x(t), f.y(values[k - 1])));
        }
        pts.push((f.x(t), f.y(v)));
    }
    pts
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

pub fn render(series: &[BandSeries], title: &str) -> String {
    let t_max = series
        .iter()
        .flat_map(|s| s.time.iter().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let width = PANEL_W * series.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}" font-family="sans-serif" font-size="11">"#,
        h = PANEL_H + 20.0
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{}" fill="white"/>"#, PANEL_H + 20.0);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="14" text-anchor="middle" font-size="13">{}</text>"#, width / 2.0, escape(title));

    for (p, s) in series.iter().enumerate() {
        let f = Frame { x0: PANEL_W * p as f64, t_max };
        let (left, right) = (f.x(0.0), f.x(t_max));
        let (top, bottom) = (f.y(1.0), f.y(0.0));
        let _ = writeln!(svg, r#"<g class="panel">"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            top - 8.0,
            escape(&s.stratum)
        );

        let mut band = stepped(&f, &s.time, &s.upper);
        let mut lower = stepped(&f, &s.time, &s.lower);
        lower.reverse();
        band.extend(lower);
        let _ = writeln!(svg, r##"<path class="band" d="{} Z" fill="#b0b0b0" stroke="none"/>"##, path(band));
        let _ = writeln!(
            svg,
            r#"<path class="mean" d="{}" fill="none" stroke="white" stroke-width="1.8"/>"#,
            path(stepped(&f, &s.time, &s.mean))
        );
        let _ = writeln!(
            svg,
            r#"<path class="observed" d="{}" fill="none" stroke="black" stroke-width="1.4" stroke-dasharray="5,3"/>"#,
            path(stepped(&f, &s.time, &s.observed))
        );

        let _ = writeln!(
            svg,
            r#"<path class="axes" d="M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let v = k as f64 * 0.25;
            let y = f.y(v);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
                left - 4.0,
                left - 6.0,
                y + 4.0
            );
        }
        let step = nice_step(t_max);
        let mut t = 0.0;
        while t <= t_max + 1e-9 {
            let x = f.x(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                bottom + 4.0,
                bottom + 16.0,
                trim_float(t)
            );
            t += step;
        }
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Time</text>"#, (left + right) / 2.0, bottom + 32.0);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle" transform="rotate(-90 {x:.2} {y:.2})">Survival</text>"#,
            x = f.x0 + 14.0,
            y = (top + bottom) / 2.0
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
