//! Plain SVG plots on a fixed 800x600 canvas.
//!
//! Coordinates are written with two decimals so identical inputs give
//! identical bytes.

use std::fmt::Write;

use hedonic_gamlss::diagnostics::WormPoint;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

#[derive(Debug, Clone, Copy)]
struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let step = nice_step(hi - lo, target);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(
            body,
            r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            body,
            r#"<text x="{:.2}" y="24.00" font-size="16" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Canvas { body }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#
        );
    }

    fn polyline(&mut self, f: &Frame, pts: &[(f64, f64)], style: &str) {
        if pts.is_empty() {
            return;
        }
        let mut s = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.2},{:.2}", f.px(x), f.py(y));
        }
        let _ = writeln!(self.body, r#"<polyline points="{s}" fill="none" {style}/>"#);
    }

    fn points(&mut self, f: &Frame, pts: &[(f64, f64)], radius: f64, color: &str) {
        for &(x, y) in pts {
            let _ = writeln!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{color}"/>"#,
                f.px(x),
                f.py(y)
            );
        }
    }

    fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str, font: f64) {
        let _ = writeln!(
            self.body,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
            f.x, f.y, f.w, f.h
        );
        for t in ticks(f.xr.0, f.xr.1, 6) {
            let x = f.px(t);
            self.line(x, f.y + f.h, x, f.y + f.h + 4.0, r##"stroke="#333""##);
            self.text(x, f.y + f.h + 6.0 + font, font, "middle", &fmt_tick(t));
        }
        for t in ticks(f.yr.0, f.yr.1, 5) {
            let y = f.py(t);
            self.line(f.x - 4.0, y, f.x, y, r##"stroke="#333""##);
            self.text(f.x - 6.0, y + font / 3.0, font, "end", &fmt_tick(t));
        }
        self.text(
            f.x + f.w / 2.0,
            f.y + f.h + 2.0 * font + 12.0,
            font + 1.0,
            "middle",
            xlabel,
        );
        let (lx, ly) = (f.x - 3.2 * font - 10.0, f.y + f.h / 2.0);
        let _ = writeln!(
            self.body,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-size="{}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
            font + 1.0,
            escape(ylabel)
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Observed-minus-expected normal quantiles with the 95% band, one panel per
/// group laid out on a near-square grid.
pub fn worm_plot(title: &str, panels: &[(String, Vec<WormPoint>)]) -> String {
    let mut c = Canvas::new(title);
    let k = panels.len().max(1);
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    let (left, top, right, bottom) = (70.0, 40.0, 20.0, 20.0);
    let cell_w = (WIDTH - left - right) / cols as f64;
    let cell_h = (HEIGHT - top - bottom) / rows as f64;
    let font = if k == 1 { 12.0 } else { 10.0 };
    for (idx, (label, pts)) in panels.iter().enumerate() {
        let (r, col) = (idx / cols, idx % cols);
        let inner_left = if k == 1 { 0.0 } else { 40.0 };
        let f = {
            let zmin = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            let zmax = pts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
            let ymax = pts
                .iter()
                .map(|p| p.deviation.abs().max(p.upper.abs()))
                .fold(0.2f64, f64::max)
                * 1.1;
            Frame {
                x: left + col as f64 * cell_w + inner_left,
                y: top + r as f64 * cell_h + 16.0,
                w: cell_w - inner_left - 10.0,
                h: cell_h - 16.0 - 3.0 * font - 14.0,
                xr: if pts.is_empty() {
                    (-3.0, 3.0)
                } else {
                    padded(zmin, zmax)
                },
                yr: (-ymax, ymax),
            }
        };
        if !label.is_empty() {
            c.text(f.x + f.w / 2.0, f.y - 4.0, font, "middle", label);
        }
        c.axes(&f, "unit normal quantile", "deviation", font);
        c.polyline(
            &f,
            &[(f.xr.0, 0.0), (f.xr.1, 0.0)],
            r##"stroke="#999" stroke-dasharray="4 3""##,
        );
        let lower: Vec<(f64, f64)> = pts.iter().map(|p| (p.z, p.lower)).collect();
        let upper: Vec<(f64, f64)> = pts.iter().map(|p| (p.z, p.upper)).collect();
        c.polyline(&f, &lower, r##"stroke="#c33" stroke-dasharray="6 3""##);
        c.polyline(&f, &upper, r##"stroke="#c33" stroke-dasharray="6 3""##);
        let dev: Vec<(f64, f64)> = pts.iter().map(|p| (p.z, p.deviation)).collect();
        c.points(&f, &dev, if k == 1 { 1.6 } else { 1.2 }, "#2653a8");
    }
    c.finish()
}

/// Quantile residuals against observation index with reference lines at 0
/// and plus or minus 2.
pub fn residual_index_plot(title: &str, r: &[f64]) -> String {
    let mut c = Canvas::new(title);
    let ymax = r.iter().fold(3.0f64, |m, v| m.max(v.abs())) * 1.05;
    let f = Frame {
        x: 70.0,
        y: 40.0,
        w: WIDTH - 90.0,
        h: HEIGHT - 110.0,
        xr: (0.0, r.len().max(1) as f64 + 1.0),
        yr: (-ymax, ymax),
    };
    c.axes(&f, "index", "quantile residual", 12.0);
    for level in [-2.0, 0.0, 2.0] {
        c.polyline(
            &f,
            &[(f.xr.0, level), (f.xr.1, level)],
            r##"stroke="#999" stroke-dasharray="4 3""##,
        );
    }
    let pts: Vec<(f64, f64)> = r.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect();
    c.points(&f, &pts, 1.4, "#2653a8");
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = ticks(-2.3, 2.3, 5);
        assert_eq!(t.first().copied(), Some(-2.0));
        assert_eq!(t.last().copied(), Some(2.0));
        assert!(t.contains(&0.0));
    }

    #[test]
    fn fixed_canvas_and_escaping() {
        let s = residual_index_plot("a < b", &[0.1, -0.2, 1.5]);
        assert!(s.starts_with("<svg"));
        assert!(s.contains(r#"viewBox="0 0 800 600""#));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<circle").count(), 3);
    }

    #[test]
    fn panel_count() {
        let p = WormPoint {
            z: 0.0,
            deviation: 0.01,
            lower: -0.2,
            upper: 0.2,
        };
        let panels: Vec<(String, Vec<WormPoint>)> = (0..4).map(|i| (format!("bin {i}"), vec![p])).collect();
        let s = worm_plot("w", &panels);
        assert_eq!(s.matches("bin ").count(), 4);
    }
}
