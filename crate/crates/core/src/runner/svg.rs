//! Minimal SVG 1.1 writers for the report plots.

use std::fmt::Write as _;

const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";
const LOW_COLOR: (u8, u8, u8) = (0x1e, 0x88, 0xe5);
const HIGH_COLOR: (u8, u8, u8) = (0xff, 0x0d, 0x57);

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn open(width: f64, height: f64, title: &str) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    s.push_str(
        "<!DOCTYPE svg PUBLIC \"-//W3C//DTD SVG 1.1//EN\" \"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd\">\n",
    );
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"24\" {FONT} font-size=\"16\" text-anchor=\"middle\">{}</text>",
        width / 2.0,
        escape(title)
    );
    s
}

fn text(s: &mut String, x: f64, y: f64, size: u32, anchor: &str, body: &str) {
    let _ = writeln!(
        s,
        "<text x=\"{x:.1}\" y=\"{y:.1}\" {FONT} font-size=\"{size}\" text-anchor=\"{anchor}\">{}</text>",
        escape(body)
    );
}

fn line(s: &mut String, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
    let _ = writeln!(
        s,
        "<line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" stroke=\"{stroke}\" stroke-width=\"1\"/>"
    );
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Blue to red as `t` goes from 0 to 1.
pub fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    hex((
        mix(LOW_COLOR.0, HIGH_COLOR.0),
        mix(LOW_COLOR.1, HIGH_COLOR.1),
        mix(LOW_COLOR.2, HIGH_COLOR.2),
    ))
}

/// Tick step giving roughly `target` intervals over `span`.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = (span / target).max(f64::MIN_POSITIVE);
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64, target: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, target);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub dashed: bool,
    /// `(category index, y)`; missing categories leave a gap.
    pub points: Vec<(usize, f64)>,
}

/// Line chart over categorical x positions.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, categories: &[String], series: &[Series]) -> String {
    let (width, height) = (760.0, 460.0);
    let (left, right, top, bottom) = (70.0, 230.0, 44.0, 60.0);
    let (pw, ph) = (width - left - right, height - top - bottom);

    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (mut lo, mut hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.1).max(0.01);
    let step = nice_step(hi - lo + 2.0 * pad, 6.0);
    lo = ((lo - pad) / step).floor() * step;
    hi = ((hi + pad) / step).ceil() * step;

    let n = categories.len().max(1);
    let px = |i: usize| left + pw * (i as f64 + 0.5) / n as f64;
    let py = |y: f64| top + ph * (hi - y) / (hi - lo);

    let mut s = open(width, height, title);
    for t in ticks(lo, hi, 6.0) {
        line(&mut s, left, py(t), left + pw, py(t), "#e0e0e0");
        text(&mut s, left - 8.0, py(t) + 4.0, 11, "end", &format!("{t:.2}"));
    }
    line(&mut s, left, top, left, top + ph, "#333333");
    line(&mut s, left, top + ph, left + pw, top + ph, "#333333");
    for (i, c) in categories.iter().enumerate() {
        line(&mut s, px(i), top + ph, px(i), top + ph + 5.0, "#333333");
        text(&mut s, px(i), top + ph + 20.0, 11, "middle", c);
    }
    text(&mut s, left + pw / 2.0, height - 14.0, 13, "middle", x_label);
    let _ = writeln!(
        s,
        "<text x=\"0\" y=\"0\" {FONT} font-size=\"13\" text-anchor=\"middle\" transform=\"translate(18 {:.1}) rotate(-90)\">{}</text>",
        top + ph / 2.0,
        escape(y_label)
    );

    for (k, ser) in series.iter().enumerate() {
        let dash = if ser.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let mut segment: Vec<(f64, f64)> = Vec::new();
        let flush = |seg: &mut Vec<(f64, f64)>, s: &mut String| {
            if seg.len() > 1 {
                let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                let _ = writeln!(
                    s,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{dash}/>",
                    pts.join(" "),
                    ser.color
                );
            }
            seg.clear();
        };
        let mut prev: Option<usize> = None;
        for &(i, y) in &ser.points {
            if prev.is_some_and(|p| p + 1 != i) {
                flush(&mut segment, &mut s);
            }
            segment.push((px(i), py(y)));
            prev = Some(i);
        }
        flush(&mut segment, &mut s);
        for &(i, y) in &ser.points {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{}\"><title>{} {}: {y:.4}</title></circle>",
                px(i),
                py(y),
                ser.color,
                escape(&ser.name),
                escape(categories.get(i).map(String::as_str).unwrap_or(""))
            );
        }
        let ly = top + 10.0 + 20.0 * k as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"{dash}/>",
            lx + 26.0,
            ser.color
        );
        text(&mut s, lx + 32.0, ly + 4.0, 11, "start", &ser.name);
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone)]
pub struct SwarmRow {
    pub feature: String,
    /// `(phi, feature value scaled to [0, 1])`; `None` draws grey.
    pub points: Vec<(f64, Option<f64>)>,
}

/// Per-feature dot rows of attributions, coloured by feature value.
pub fn beeswarm(title: &str, x_label: &str, rows: &[SwarmRow]) -> String {
    let row_h = 26.0;
    let (left, right, top, bottom) = (200.0, 90.0, 44.0, 60.0);
    let width = 820.0;
    let pw = width - left - right;
    let height = top + bottom + row_h * rows.len().max(1) as f64;

    let (mut lo, mut hi) = rows
        .iter()
        .flat_map(|r| r.points.iter().map(|p| p.0))
        .fold((0.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.05;
    (lo, hi) = (lo - pad, hi + pad);
    let px = |v: f64| left + pw * (v - lo) / (hi - lo);

    let mut s = open(width, height, title);
    s.push_str("<defs><linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">");
    let _ = write!(
        s,
        "<stop offset=\"0\" stop-color=\"{}\"/><stop offset=\"1\" stop-color=\"{}\"/>",
        ramp(0.0),
        ramp(1.0)
    );
    s.push_str("</linearGradient></defs>\n");

    let plot_bottom = top + row_h * rows.len() as f64;
    for t in ticks(lo, hi, 6.0) {
        line(&mut s, px(t), top, px(t), plot_bottom, "#eeeeee");
        text(&mut s, px(t), plot_bottom + 18.0, 11, "middle", &format!("{t:.2}"));
    }
    line(&mut s, px(0.0), top, px(0.0), plot_bottom, "#999999");
    line(&mut s, left, plot_bottom, left + pw, plot_bottom, "#333333");
    text(&mut s, left + pw / 2.0, height - 14.0, 13, "middle", x_label);

    for (r, row) in rows.iter().enumerate() {
        let cy = top + row_h * (r as f64 + 0.5);
        text(&mut s, left - 10.0, cy + 4.0, 12, "end", &row.feature);
        let mut order: Vec<usize> = (0..row.points.len()).collect();
        order.sort_by(|&a, &b| row.points[a].0.total_cmp(&row.points[b].0));
        // dots sharing a 3 px column fan out alternately above and below
        let mut column = i64::MIN;
        let mut k = 0usize;
        for &i in &order {
            let (phi, value) = row.points[i];
            let x = px(phi);
            let col = (x / 3.0).floor() as i64;
            if col != column {
                column = col;
                k = 0;
            }
            let offset = ((k + 1) / 2) as f64 * 2.0 * if k % 2 == 0 { 1.0 } else { -1.0 };
            k += 1;
            let y = cy + offset.clamp(-row_h * 0.45, row_h * 0.45);
            let fill = value.map_or_else(|| "#999999".to_string(), ramp);
            let _ = writeln!(
                s,
                "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2.2\" fill=\"{fill}\" fill-opacity=\"0.8\"/>"
            );
        }
    }

    let gx = left + pw + 30.0;
    let _ = writeln!(
        s,
        "<rect x=\"{gx:.1}\" y=\"{top:.1}\" width=\"12\" height=\"{:.1}\" fill=\"url(#ramp)\"/>",
        (plot_bottom - top).max(row_h)
    );
    text(&mut s, gx + 16.0, top + 10.0, 10, "start", "high");
    text(&mut s, gx + 16.0, top.max(plot_bottom) - 2.0, 10, "start", "low");
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars, largest first as given.
pub fn bar_chart(title: &str, x_label: &str, bars: &[(String, f64)]) -> String {
    let row_h = 22.0;
    let (left, right, top, bottom) = (200.0, 40.0, 44.0, 60.0);
    let width = 760.0;
    let pw = width - left - right;
    let height = top + bottom + row_h * bars.len().max(1) as f64;
    let lo = bars.iter().map(|b| b.1).fold(0.0f64, f64::min);
    let mut hi = bars.iter().map(|b| b.1).fold(0.0f64, f64::max);
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let px = |v: f64| left + pw * (v - lo) / (hi - lo);

    let mut s = open(width, height, title);
    let plot_bottom = top + row_h * bars.len() as f64;
    for t in ticks(lo, hi, 5.0) {
        line(&mut s, px(t), top, px(t), plot_bottom, "#eeeeee");
        text(&mut s, px(t), plot_bottom + 18.0, 11, "middle", &format!("{t:.3}"));
    }
    for (r, (name, v)) in bars.iter().enumerate() {
        let y = top + row_h * r as f64 + 3.0;
        let (x0, x1) = (px(0.0).min(px(*v)), px(0.0).max(px(*v)));
        let fill = if *v >= 0.0 { ramp(1.0) } else { ramp(0.0) };
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{fill}\"><title>{}: {v:.6}</title></rect>",
            (x1 - x0).max(0.5),
            row_h - 6.0,
            escape(name)
        );
        text(&mut s, left - 10.0, y + row_h / 2.0 + 1.0, 12, "end", name);
    }
    line(&mut s, px(0.0), top, px(0.0), plot_bottom, "#333333");
    text(&mut s, left + pw / 2.0, height - 14.0, 13, "middle", x_label);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escaping_covers_markup() {
        assert_eq!(escape("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), "#1e88e5");
        assert_eq!(ramp(1.0), "#ff0d57");
        assert_eq!(ramp(7.0), ramp(1.0));
    }

    #[test]
    fn ticks_are_round_numbers() {
        assert_eq!(nice_step(0.3, 6.0), 0.05);
        let t = ticks(0.5, 1.0, 5.0);
        assert_eq!(t.len(), 6);
        assert!((t[0] - 0.5).abs() < 1e-12 && (t[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaps_split_polylines() {
        let series = [Series {
            name: "x".into(),
            color: "#000000".into(),
            dashed: false,
            points: vec![(0, 0.6), (1, 0.7), (3, 0.8), (4, 0.9)],
        }];
        let cats: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let svg = line_chart("t", "x", "y", &cats, &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 4);
    }
}
