//! Minimal static SVG renderings: line charts and heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const L: f64 = 70.0;
const R: f64 = 130.0;
const T: f64 = 40.0;
const B: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as a star on top of the curve.
    pub marker: Option<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        L + (x - self.x0) / (self.x1 - self.x0) * (W - L - R)
    }

    fn sy(&self, y: f64) -> f64 {
        H - B - (y - self.y0) / (self.y1 - self.y0) * (H - T - B)
    }
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(s: &mut String, title: &str) {
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        (W - R + L) / 2.0,
        escape(title)
    );
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        "<rect x=\"{L}\" y=\"{T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - L - R,
        H - T - B
    );
    for k in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            f.sx(fx),
            H - B + 18.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            L - 6.0,
            f.sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        (W - R + L) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (H - B + T) / 2.0,
        (H - B + T) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let f = Frame { x0, x1, y0: y0.min(0.0), y1 };
    let mut s = String::new();
    open(&mut s, title);
    axes(&mut s, &f, xlabel, ylabel);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.sx(x), f.sy(y)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" points=\"{}\"/>",
            pts.join(" ")
        );
        if let Some((mx, my)) = ser.marker.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"18\" fill=\"{color}\">&#9733;</text>",
                f.sx(mx),
                f.sy(my) + 6.0
            );
        }
        let ly = T + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            W - R + 12.0,
            W - R + 32.0,
            W - R + 38.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `values[(iy, ix)]` over `x_axis × y_axis`, colored on a white-to-blue
/// ramp between the finite extremes.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, x_axis: &[f64], y_axis: &[f64], value: impl Fn(usize, usize) -> f64) -> String {
    let half = |axis: &[f64]| if axis.len() > 1 { (axis[1] - axis[0]) / 2.0 } else { 0.5 };
    let (hx, hy) = (half(x_axis), half(y_axis));
    let f = Frame {
        x0: x_axis[0] - hx,
        x1: x_axis[x_axis.len() - 1] + hx,
        y0: y_axis[0] - hy,
        y1: y_axis[y_axis.len() - 1] + hy,
    };
    let all = (0..y_axis.len()).flat_map(|iy| (0..x_axis.len()).map(move |ix| (iy, ix)));
    let (lo, hi) = span(all.clone().map(|(iy, ix)| value(iy, ix)));
    let mut s = String::new();
    open(&mut s, title);
    for (iy, ix) in all {
        let v = value(iy, ix);
        let fill = if v.is_finite() { ramp((v - lo) / (hi - lo)) } else { "#888888".to_string() };
        let (x, y) = (x_axis[ix], y_axis[iy]);
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
            f.sx(x - hx),
            f.sy(y + hy),
            f.sx(x + hx) - f.sx(x - hx),
            f.sy(y - hy) - f.sy(y + hy)
        );
    }
    axes(&mut s, &f, xlabel, ylabel);
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let y = H - B - t * (H - T - B);
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"18\" height=\"{:.1}\" fill=\"{}\"/>",
            W - R + 20.0,
            y - (H - T - B) / 10.0,
            (H - T - B) / 10.0,
            ramp(t)
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
        W - R + 44.0,
        T + 10.0,
        tick(hi),
        W - R + 44.0,
        H - B,
        tick(lo)
    );
    s.push_str("</svg>\n");
    s
}

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}
