//! Minimal dependency-free SVG plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, xlabel: &str, ylabel: &str, xmax: f64, ymax: f64) {
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(s, "</g>");
    let text = |s: &mut String, x: f64, y: f64, anchor: &str, body: &str| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            escape(body)
        );
    };
    text(s, (x0 + x1) / 2.0, HEIGHT - 16.0, "middle", xlabel);
    text(s, x0, y1 - 10.0, "start", ylabel);
    text(s, x0, y0 + 14.0, "middle", "0");
    text(s, x1, y0 + 14.0, "middle", &format!("{xmax:.3}"));
    text(s, x0 - 4.0, y1 + 4.0, "end", &format!("{ymax:.3}"));
    text(s, x0 - 4.0, y0 + 4.0, "end", "0");
}

fn legend(s: &mut String, series: &[(&str, &str)]) {
    for (i, (name, color)) in series.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 150.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="12" height="10" fill="{color}"/>"#, y - 9.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 18.0,
            escape(name)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_max(values: impl Iterator<Item = f64>) -> f64 {
    let m = values.filter(|v| v.is_finite()).fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// One polyline per series against the sample index.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let ymax = finite_max(series.iter().flat_map(|s| s.values.iter().copied()));
    let sx = (WIDTH - 2.0 * MARGIN) / (n - 1) as f64;
    let sy = (HEIGHT - 2.0 * MARGIN) / ymax;
    let mut s = header(title);
    axes(&mut s, xlabel, ylabel, (n - 1) as f64, ymax);
    for series_i in series {
        let pts: Vec<String> = series_i
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", MARGIN + sx * i as f64, HEIGHT - MARGIN - sy * v))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(series_i.name),
            series_i.color,
            pts.join(" ")
        );
    }
    legend(&mut s, &series.iter().map(|x| (x.name, x.color)).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: one group per bin, one bar per series.
pub fn histogram_chart(title: &str, bin_width: f64, series: &[Series]) -> String {
    let bins = series.iter().map(|s| s.values.len()).max().unwrap_or(1).max(1);
    let ymax = finite_max(series.iter().flat_map(|s| s.values.iter().copied()));
    let group = (WIDTH - 2.0 * MARGIN) / bins as f64;
    let bar = group / (series.len().max(1) as f64 + 0.5);
    let sy = (HEIGHT - 2.0 * MARGIN) / ymax;
    let mut s = header(title);
    axes(&mut s, "nearest-neighbour distance", "count", bin_width * bins as f64, ymax);
    for (k, series_k) in series.iter().enumerate() {
        let _ = writeln!(s, r#"<g class="series" data-name="{}" fill="{}">"#, escape(series_k.name), series_k.color);
        for (b, &v) in series_k.values.iter().enumerate() {
            let h = sy * v;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{h:.2}"/>"#,
                MARGIN + group * b as f64 + bar * k as f64,
                HEIGHT - MARGIN - h
            );
        }
        let _ = writeln!(s, "</g>");
    }
    legend(&mut s, &series.iter().map(|x| (x.name, x.color)).collect::<Vec<_>>());
    s.push_str("</svg>\n");
    s
}
