//! Deterministic SVG scatter of occurrence tuples: points colored by final
//! cluster id, noise in gray, habit means drawn as crosses, axes in clock
//! hours. Identical inputs render to identical bytes.

use habitminer_core::{Label, Point};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 56.0;
const NOISE_COLOR: &str = "#999999";
const PALETTE: [&str; 10] = [
    "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#eeca3b", "#b279a2", "#ff9da6",
    "#9d755d", "#bab0ac",
];

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

pub struct PlotInput<'a> {
    pub activity: &'a str,
    pub points: &'a [Point],
    pub labels: &'a [Label],
    /// (mean_start, mean_end) per habit, in report order.
    pub means: &'a [(f64, f64)],
}

pub fn render_svg(input: &PlotInput) -> String {
    let y_max = input
        .points
        .iter()
        .map(|p| p.end)
        .fold(24.0f64, f64::max)
        .ceil()
        .min(48.0);
    let sx = |v: f64| MARGIN + v / 24.0 * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - v / y_max * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        fmt2(WIDTH / 2.0),
        xml_escape(input.activity)
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt2(MARGIN),
        fmt2(HEIGHT - MARGIN),
        fmt2(WIDTH - MARGIN),
        fmt2(HEIGHT - MARGIN)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        fmt2(MARGIN),
        fmt2(MARGIN),
        fmt2(MARGIN),
        fmt2(HEIGHT - MARGIN)
    ));
    let mut h = 0.0;
    while h <= 24.0 {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}h</text>\n",
            fmt2(sx(h)),
            fmt2(HEIGHT - MARGIN + 16.0),
            h as i64
        ));
        h += 3.0;
    }
    let mut v = 0.0;
    while v <= y_max {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}h</text>\n",
            fmt2(MARGIN - 6.0),
            fmt2(sy(v) + 3.0),
            v as i64
        ));
        v += 6.0;
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">start (clock hours)</text>\n",
        fmt2(WIDTH / 2.0),
        fmt2(HEIGHT - 12.0)
    ));

    // one group per cluster id, then a noise group
    let k = input
        .labels
        .iter()
        .filter_map(|l| l.cluster_id())
        .max()
        .map_or(0, |m| m + 1);
    for cluster in 0..k {
        let color = PALETTE[cluster % PALETTE.len()];
        svg.push_str(&format!(
            "<g class=\"pts-c{cluster}\" fill=\"{color}\">\n"
        ));
        for (p, l) in input.points.iter().zip(input.labels) {
            if l.cluster_id() == Some(cluster) {
                svg.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\"/>\n",
                    fmt2(sx(p.start)),
                    fmt2(sy(p.end))
                ));
            }
        }
        svg.push_str("</g>\n");
    }
    let noise: Vec<&Point> = input
        .points
        .iter()
        .zip(input.labels)
        .filter(|(_, l)| l.is_noise())
        .map(|(p, _)| p)
        .collect();
    if !noise.is_empty() {
        svg.push_str(&format!("<g class=\"pts-noise\" fill=\"{NOISE_COLOR}\">\n"));
        for p in noise {
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\"/>\n",
                fmt2(sx(p.start)),
                fmt2(sy(p.end))
            ));
        }
        svg.push_str("</g>\n");
    }

    for &(ms, me) in input.means {
        let (x, y) = (sx(ms), sy(me));
        svg.push_str(&format!(
            "<path class=\"mean-cross\" stroke=\"black\" stroke-width=\"2\" d=\"M {} {} L {} {} M {} {} L {} {}\"/>\n",
            fmt2(x - 6.0),
            fmt2(y),
            fmt2(x + 6.0),
            fmt2(y),
            fmt2(x),
            fmt2(y - 6.0),
            fmt2(x),
            fmt2(y + 6.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
