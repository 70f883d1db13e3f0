//! Small SVG writers for training curves and confusion heatmaps.

use std::fmt::Write;

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

/// One panel per `(title, series)` group; every series is a named line over
/// x = 1..=len.
pub fn line_panels(panels: &[(&str, Vec<(&str, &[f64])>)]) -> String {
    let (pw, ph, margin) = (360.0, 240.0, 40.0);
    let width = pw * panels.len() as f64;
    let mut s = header(width, ph);
    for (p, (title, series)) in panels.iter().enumerate() {
        let x0 = p as f64 * pw + margin;
        let (iw, ih) = (pw - 1.5 * margin, ph - 2.0 * margin);
        let values = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        };
        let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"20\">{title}</text>", x0);
        let _ = writeln!(
            s,
            "<rect x=\"{x0:.1}\" y=\"{margin:.1}\" width=\"{iw:.1}\" height=\"{ih:.1}\" fill=\"none\" stroke=\"#888\"/>"
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{hi:.3}</text>", x0 - 36.0, margin + 4.0);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">{lo:.3}</text>", x0 - 36.0, margin + ih);
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\">epoch</text>", x0 + iw / 2.0 - 15.0, ph - 8.0);
        for (k, (name, v)) in series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<String> = v
                .iter()
                .enumerate()
                .filter(|(_, y)| y.is_finite())
                .map(|(i, y)| {
                    let px = x0 + iw * i as f64 / (n - 1) as f64;
                    let py = margin + ih * (1.0 - (y - lo) / (hi - lo));
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{name}</text>",
                x0 + 8.0,
                margin + 14.0 + 13.0 * k as f64
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of row-normalized percentages with the value printed per cell.
pub fn heatmap(title: &str, percent: &[Vec<f64>]) -> String {
    let n = percent.len();
    let cell = 40.0;
    let margin = 50.0;
    let size = margin + cell * n as f64 + 10.0;
    let mut s = header(size, size + 20.0);
    let _ = writeln!(s, "<text x=\"{margin}\" y=\"16\">{title}</text>");
    let _ = writeln!(s, "<text x=\"{margin}\" y=\"32\">predicted</text>");
    let _ = writeln!(s, "<text x=\"4\" y=\"{:.1}\">true</text>", margin + 10.0);
    for (i, row) in percent.iter().enumerate() {
        let y = margin + cell * i as f64;
        let _ = writeln!(s, "<text x=\"32\" y=\"{:.1}\">{i}</text>", y + cell / 2.0 + 4.0);
        for (j, &p) in row.iter().enumerate() {
            let x = margin + cell * j as f64;
            if i == 0 {
                let _ = writeln!(s, "<text x=\"{:.1}\" y=\"46\">{j}</text>", x + cell / 2.0 - 3.0);
            }
            let shade = (255.0 * (1.0 - p / 100.0)).round().clamp(0.0, 255.0) as u8;
            let ink = if p > 50.0 { "white" } else { "black" };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#ccc\"/>"
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{ink}\" font-size=\"9\">{p:.1}</text>",
                x + 6.0,
                y + cell / 2.0 + 3.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
