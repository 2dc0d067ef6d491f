//! Minimal standalone SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

/// Shaded area between two curves sampled at the same x values.
#[derive(Debug, Clone)]
pub struct Band {
    pub label: String,
    pub color: &'static str,
    pub lower: Vec<(f64, f64)>,
    pub upper: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub bands: Vec<Band>,
    /// Plotted against its own axis on the right.
    pub secondary: Option<(String, Series)>,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of<'a>(values: impl Iterator<Item = &'a f64>) -> Range {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
            return Range { lo: lo - pad, hi: hi + pad };
        }
        Range { lo, hi }
    }

    /// Rounds outwards to a tick step of 1, 2 or 5 times a power of ten.
    fn nice(self) -> (Range, f64) {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|f| f * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let r = Range {
            lo: (self.lo / step).floor() * step,
            hi: (self.hi / step).ceil() * step,
        };
        (r, step)
    }
}

fn ticks(r: Range, step: f64) -> Vec<f64> {
    let n = ((r.hi - r.lo) / step).round() as i64;
    (0..=n).map(|i| r.lo + i as f64 * step).collect()
}

fn label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: Range,
    y: Range,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * (HEIGHT - TOP - BOTTOM)
    }

    fn path(&self, points: impl Iterator<Item = (f64, f64)>) -> String {
        let mut d = String::new();
        let mut pen_up = true;
        for (x, y) in points {
            if !(x.is_finite() && y.is_finite()) {
                pen_up = true;
                continue;
            }
            let cmd = if pen_up { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", self.px(x), self.py(y));
            pen_up = false;
        }
        d
    }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let xs = self
            .series
            .iter()
            .chain(self.secondary.as_ref().map(|(_, s)| s))
            .flat_map(|s| s.points.iter().map(|p| &p.0));
        let x = Range::of(xs);
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| &p.1))
            .chain(
                self.bands
                    .iter()
                    .flat_map(|b| b.lower.iter().chain(&b.upper).map(|p| &p.1)),
            );
        let (y, y_step) = Range::of(ys).nice();
        let frame = Frame { x, y };
        let x_step = Range::of([x.lo, x.hi].iter()).nice().1;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        for t in ticks(y, y_step) {
            let py = frame.py(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                WIDTH - RIGHT,
                LEFT - 6.0,
                py + 4.0,
                label(t, y_step)
            );
        }
        for t in ticks(Range::of([x.lo, x.hi].iter()).nice().0, x_step) {
            if t < x.lo - 1e-9 || t > x.hi + 1e-9 {
                continue;
            }
            let px = frame.px(t);
            let _ = writeln!(
                svg,
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                HEIGHT - BOTTOM + 18.0,
                label(t, x_step)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            WIDTH - LEFT - RIGHT,
            HEIGHT - TOP - BOTTOM
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );

        let mut legend: Vec<(&str, &str)> = Vec::new();
        for b in &self.bands {
            let upper = frame.path(b.upper.iter().copied());
            let lower = frame.path(b.lower.iter().rev().copied()).replacen('M', "L", 1);
            let _ = writeln!(
                svg,
                r#"<path d="{upper}{lower}Z" fill="{}" fill-opacity="0.25" stroke="none"/>"#,
                b.color
            );
            legend.push((&b.label, b.color));
        }
        for s in &self.series {
            let _ = writeln!(
                svg,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                frame.path(s.points.iter().copied()),
                s.color
            );
            legend.push((&s.label, s.color));
        }
        if let Some((axis_label, s)) = &self.secondary {
            let (y2, step2) = Range::of(s.points.iter().map(|p| &p.1)).nice();
            let f2 = Frame { x, y: y2 };
            let _ = writeln!(
                svg,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="5,3"/>"#,
                f2.path(s.points.iter().copied()),
                s.color
            );
            for t in ticks(y2, step2) {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
                    WIDTH - RIGHT + 6.0,
                    f2.py(t) + 4.0,
                    s.color,
                    label(t, step2)
                );
            }
            let xr = WIDTH - 14.0;
            let _ = writeln!(
                svg,
                r#"<text x="{xr}" y="{:.2}" text-anchor="middle" fill="{}" transform="rotate(90 {xr} {:.2})">{}</text>"#,
                HEIGHT / 2.0,
                s.color,
                HEIGHT / 2.0,
                escape(axis_label)
            );
            legend.push((&s.label, s.color));
        }
        for (i, (name, color)) in legend.iter().enumerate() {
            let ly = TOP + 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="14" height="4" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                LEFT + 10.0,
                ly - 5.0,
                LEFT + 30.0,
                ly,
                escape(name)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}
