//! Self-contained SVG plots. Every plot embeds its data as XML comments so the
//! numbers can be recovered without re-running anything.

use std::fmt::Write;

use crate::experiment::GridPanels;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub markers: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Comment-safe text (no `--`).
fn comment(s: &str) -> String {
    s.replace("--", "- -")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new(), markers: false }
    }

    pub fn with_series(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { name: name.into(), points });
        self
    }

    pub fn render(&self) -> String {
        let (x0, x1) = bounds(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = bounds(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;
        let mut out = String::new();
        let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(out, "<!-- plot: {} -->", comment(&self.title));
        let _ = writeln!(out, "<!-- columns: series,x,y -->");
        for s in &self.series {
            for (x, y) in &s.points {
                let _ = writeln!(out, "<!-- data: {},{x},{y} -->", comment(&s.name));
            }
        }
        let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(out, r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(out, r##"<line x1="{px:.1}" y1="{}" x2="{px:.1}" y2="{}" stroke="#333"/>"##, MARGIN_TOP + ph, MARGIN_TOP + ph + 5.0);
            let _ = writeln!(out, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_TOP + ph + 18.0, tick_label(xv));
            let _ = writeln!(out, r##"<line x1="{}" y1="{py:.1}" x2="{MARGIN_LEFT}" y2="{py:.1}" stroke="#333"/>"##, MARGIN_LEFT - 5.0);
            let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 8.0, py + 4.0, tick_label(yv));
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_LEFT + pw / 2.0, HEIGHT - 10.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> =
                s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            if pts.len() > 1 {
                let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            }
            if self.markers || pts.len() == 1 {
                for p in &pts {
                    let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
                    let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            }
            let ly = MARGIN_TOP + 10.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN_RIGHT + 10.0;
            let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&s.name));
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Blue (0) through white (0.5) to red (1).
pub fn diverging_color(p: f64) -> String {
    let p = if p.is_finite() { p.clamp(0.0, 1.0) } else { 0.5 };
    let (r, g, b) = if p < 0.5 {
        let f = p / 0.5;
        (33.0 + f * (255.0 - 33.0), 102.0 + f * (255.0 - 102.0), 172.0 + f * (255.0 - 172.0))
    } else {
        let f = (p - 0.5) / 0.5;
        (255.0 + f * (178.0 - 255.0), 255.0 + f * (24.0 - 255.0), 255.0 + f * (43.0 - 255.0))
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Two side-by-side class-1 probability panels: the reference predictive on
/// the left and the k-step particle mixture on the right.
pub fn grid_panels_svg(g: &GridPanels, title: &str) -> String {
    let size = 300.0;
    let gap = 40.0;
    let top = 50.0;
    let left = 20.0;
    let n = g.resolution;
    let cell = size / n as f64;
    let total_w = 2.0 * size + gap + 2.0 * left;
    let total_h = size + top + 30.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, "<!-- plot: {} -->", comment(title));
    let _ = writeln!(
        out,
        "<!-- grid: time={} k={} resolution={n} x_range={},{} y_range={},{} -->",
        g.time, g.k, g.x_range.0, g.x_range.1, g.y_range.0, g.y_range.1
    );
    let _ = writeln!(out, "<!-- columns: panel,ix,iy,p_class1 -->");
    for (panel, values) in [("reference", &g.reference), ("mixture", &g.mixture)] {
        for (idx, p) in values.iter().enumerate() {
            let _ = writeln!(out, "<!-- data: {panel},{},{},{p} -->", idx % n, idx / n);
        }
    }
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{total_w}" height="{total_h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, total_w / 2.0, escape(title));
    let px = |x: f64, x0: f64| x0 + (x - g.x_range.0) / (g.x_range.1 - g.x_range.0) * size;
    let py = |y: f64| top + (1.0 - (y - g.y_range.0) / (g.y_range.1 - g.y_range.0)) * size;
    for (i, (label, values)) in [("reference", &g.reference), (&*format!("mixture after {} steps", g.k), &g.mixture)].into_iter().enumerate() {
        let x0 = left + i as f64 * (size + gap);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x0 + size / 2.0, top - 8.0, escape(label));
        for (idx, p) in values.iter().enumerate() {
            let (ix, iy) = (idx % n, idx / n);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x0 + ix as f64 * cell,
                top + size - (iy + 1) as f64 * cell,
                cell + 0.3,
                cell + 0.3,
                diverging_color(*p)
            );
        }
        for &(x, y, c) in &g.train_points {
            let fill = if c == 1 { "#b2182b" } else { "#2166ac" };
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{fill}" stroke="black" stroke-width="0.4"/>"#, px(x, x0), py(y));
        }
        let _ = writeln!(out, r##"<rect x="{x0}" y="{top}" width="{size}" height="{size}" fill="none" stroke="#333"/>"##);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(diverging_color(0.5), "#ffffff");
        assert_eq!(diverging_color(0.0), "#2166ac");
        assert_eq!(diverging_color(1.0), "#b2182b");
        assert_eq!(diverging_color(f64::NAN), "#ffffff");
    }

    #[test]
    fn line_plot_embeds_every_point() {
        let svg = LinePlot::new("g <vs> t", "t", "g")
            .with_series("a--b", vec![(0.0, 1.0), (1.0, f64::INFINITY), (2.0, 0.5)])
            .render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<!-- data:").count(), 3);
        assert!(svg.contains("<!-- data: a- -b,1,inf -->"));
        assert!(svg.contains("g &lt;vs&gt; t"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn grid_svg_has_two_panels() {
        let g = GridPanels {
            time: 3,
            k: 40,
            resolution: 2,
            x_range: (0.0, 1.0),
            y_range: (0.0, 1.0),
            reference: vec![0.0, 0.5, 0.5, 1.0],
            mixture: vec![0.5; 4],
            train_points: vec![(0.5, 0.5, 1)],
        };
        let svg = grid_panels_svg(&g, "moons");
        assert_eq!(svg.matches("<!-- data: reference").count(), 4);
        assert_eq!(svg.matches("<!-- data: mixture").count(), 4);
        assert_eq!(svg.matches("fill=\"#ffffff\"").count(), 6);
        assert!(svg.contains("mixture after 40 steps"));
    }
}
