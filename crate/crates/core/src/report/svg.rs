//! Hand-emitted SVG 1.1 charts. No rendering stack behind them, so output is
//! byte-deterministic and golden-testable.

use super::{EffectHeatmap, GroupReport};

const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";

/// Green (-1) over yellow (0) to red (+1), the usual reading direction for
/// "row consumes more than column".
fn delta_color(delta: f64) -> String {
    const GREEN: (f64, f64, f64) = (0x1a as f64, 0x98 as f64, 0x50 as f64);
    const YELLOW: (f64, f64, f64) = (0xff as f64, 0xff as f64, 0xbf as f64);
    const RED: (f64, f64, f64) = (0xd7 as f64, 0x30 as f64, 0x27 as f64);
    let t = ((delta + 1.0) / 2.0).clamp(0.0, 1.0);
    let (from, to, u) = if t < 0.5 {
        (GREEN, YELLOW, t * 2.0)
    } else {
        (YELLOW, RED, (t - 0.5) * 2.0)
    };
    let channel = |a: f64, b: f64| (a + (b - a) * u).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        channel(from.0, to.0),
        channel(from.1, to.1),
        channel(from.2, to.2)
    )
}

/// Effect-size matrix: one cell per ordered pair, colored by delta, shaded
/// (reduced opacity) when the adjusted p-value is not significant.
pub fn heatmap_svg(heatmap: &EffectHeatmap, title: &str) -> String {
    let k = heatmap.labels.len();
    let cell_w = 72;
    let cell_h = 44;
    let left = 120;
    let top = 70;
    let width = left + k * cell_w + 20;
    let height = top + k * cell_h + 50;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" {FONT} font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        width / 2,
        escape(title)
    ));

    for (j, label) in heatmap.labels.iter().enumerate() {
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" {FONT} font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            left + j * cell_w + cell_w / 2,
            top - 10,
            escape(label)
        ));
    }

    for (i, label) in heatmap.labels.iter().enumerate() {
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" {FONT} font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            left - 8,
            top + i * cell_h + cell_h / 2 + 4,
            escape(label)
        ));
        for j in 0..k {
            let x = left + j * cell_w;
            let y = top + i * cell_h;
            match &heatmap.cells[i][j] {
                None => {
                    out.push_str(&format!(
                        "  <rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"#f0f0f0\" stroke=\"#ffffff\"/>\n"
                    ));
                }
                Some(cell) => {
                    let opacity = if cell.significant { "1.00" } else { "0.35" };
                    out.push_str(&format!(
                        "  <rect x=\"{x}\" y=\"{y}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"{}\" fill-opacity=\"{opacity}\" stroke=\"#ffffff\"/>\n",
                        delta_color(cell.delta)
                    ));
                    out.push_str(&format!(
                        "  <text x=\"{}\" y=\"{}\" {FONT} font-size=\"12\" text-anchor=\"middle\">{:.2}</text>\n",
                        x + cell_w / 2,
                        y + cell_h / 2 + 4,
                        cell.delta
                    ));
                }
            }
        }
    }

    out.push_str(&format!(
        "  <text x=\"{left}\" y=\"{}\" {FONT} font-size=\"11\" fill=\"#555555\">positive (red): row consumes more than column; shaded: not significant</text>\n",
        top + k * cell_h + 28
    ));
    out.push_str("</svg>\n");
    out
}

/// Box-and-whisker chart of the cleaned per-group energy samples.
pub fn boxplot_svg(groups: &[GroupReport], title: &str, unit: &str) -> String {
    let slot = 90;
    let left = 80;
    let top = 50;
    let plot_h = 260;
    let width = left + groups.len() * slot + 30;
    let height = top + plot_h + 60;

    let lo = groups
        .iter()
        .map(|g| g.boxplot.whisker_low)
        .fold(f64::INFINITY, f64::min);
    let hi = groups
        .iter()
        .map(|g| g.boxplot.whisker_high)
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.08).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let y_of = |v: f64| top as f64 + plot_h as f64 * (1.0 - (v - lo) / (hi - lo));

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" {FONT} font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        width / 2,
        escape(title)
    ));

    // Horizontal gridlines with tick labels.
    for tick in 0..=4 {
        let value = lo + (hi - lo) * tick as f64 / 4.0;
        let y = y_of(value);
        out.push_str(&format!(
            "  <line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n",
            width - 20
        ));
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{:.1}\" {FONT} font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            left - 6,
            y + 4.0,
            format_value(value)
        ));
    }
    out.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" {FONT} font-size=\"11\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        top + plot_h / 2,
        top + plot_h / 2,
        escape(unit)
    ));

    for (index, group) in groups.iter().enumerate() {
        let center = (left + index * slot + slot / 2) as f64;
        let box_w = 44.0;
        let b = &group.boxplot;
        let (yl, yq1, ym, yq3, yh) = (
            y_of(b.whisker_low),
            y_of(b.q1),
            y_of(b.median),
            y_of(b.q3),
            y_of(b.whisker_high),
        );
        // whisker stem and caps
        out.push_str(&format!(
            "  <line x1=\"{center:.1}\" y1=\"{yl:.1}\" x2=\"{center:.1}\" y2=\"{yq1:.1}\" stroke=\"#333333\"/>\n"
        ));
        out.push_str(&format!(
            "  <line x1=\"{center:.1}\" y1=\"{yq3:.1}\" x2=\"{center:.1}\" y2=\"{yh:.1}\" stroke=\"#333333\"/>\n"
        ));
        for y in [yl, yh] {
            out.push_str(&format!(
                "  <line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#333333\"/>\n",
                center - box_w / 4.0,
                center + box_w / 4.0
            ));
        }
        out.push_str(&format!(
            "  <rect x=\"{:.1}\" y=\"{yq3:.1}\" width=\"{box_w:.1}\" height=\"{:.1}\" fill=\"#7fb2d9\" stroke=\"#333333\"/>\n",
            center - box_w / 2.0,
            (yq1 - yq3).max(0.5)
        ));
        out.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{ym:.1}\" x2=\"{:.1}\" y2=\"{ym:.1}\" stroke=\"#13335a\" stroke-width=\"2\"/>\n",
            center - box_w / 2.0,
            center + box_w / 2.0
        ));
        out.push_str(&format!(
            "  <text x=\"{center:.1}\" y=\"{}\" {FONT} font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            top + plot_h + 20,
            escape(&group.label)
        ));
        out.push_str(&format!(
            "  <text x=\"{center:.1}\" y=\"{}\" {FONT} font-size=\"10\" fill=\"#777777\" text-anchor=\"middle\">n={}</text>\n",
            top + plot_h + 36,
            group.boxplot.n
        ));
    }

    out.push_str("</svg>\n");
    out
}

fn format_value(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
