//! Minimal SVG rendering for the accuracy-vs-fraction summary plot.
//!
//! Hand-rolled rather than chart-library-backed: the output must be
//! deterministic bytes with no font or system dependencies, and the plot is
//! a single line chart. Coordinates are formatted with fixed precision so
//! identical inputs yield identical files.

use std::collections::BTreeMap;
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Series colors, assigned to backbones in sorted-name order.
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Render one accuracy-vs-fraction series per backbone.
///
/// `points` are (backbone, fraction, accuracy) triples in any order; both
/// axes span [0, 1]. Duplicate (backbone, fraction) pairs keep the last
/// accuracy seen.
pub fn accuracy_vs_fraction_svg(points: &[(String, f64, f64)]) -> String {
    let mut series: BTreeMap<&str, BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    for (backbone, fraction, accuracy) in points {
        series
            .entry(backbone.as_str())
            .or_default()
            .insert(fraction.to_bits(), (*fraction, *accuracy));
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x = |fraction: f64| MARGIN_LEFT + fraction.clamp(0.0, 1.0) * plot_w;
    let y = |accuracy: f64| MARGIN_TOP + (1.0 - accuracy.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );

    // Gridlines and tick labels every 0.25 on both axes.
    for i in 0..=4 {
        let v = f64::from(i) * 0.25;
        let (gx, gy) = (x(v), y(v));
        let _ = write!(
            svg,
            "<line x1=\"{gx:.1}\" y1=\"{top:.1}\" x2=\"{gx:.1}\" y2=\"{bottom:.1}\" \
             stroke=\"#dddddd\"/>\n\
             <line x1=\"{left:.1}\" y1=\"{gy:.1}\" x2=\"{right:.1}\" y2=\"{gy:.1}\" \
             stroke=\"#dddddd\"/>\n\
             <text x=\"{gx:.1}\" y=\"{xlab:.1}\" font-size=\"12\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{v:.2}</text>\n\
             <text x=\"{ylab:.1}\" y=\"{gy:.1}\" font-size=\"12\" text-anchor=\"end\" \
             dominant-baseline=\"middle\" font-family=\"sans-serif\">{v:.2}</text>\n",
            top = MARGIN_TOP,
            bottom = MARGIN_TOP + plot_h,
            left = MARGIN_LEFT,
            right = MARGIN_LEFT + plot_w,
            xlab = MARGIN_TOP + plot_h + 20.0,
            ylab = MARGIN_LEFT - 8.0,
        );
    }

    // Axis frame and titles.
    let _ = write!(
        svg,
        "<rect x=\"{left:.1}\" y=\"{top:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{xmid:.1}\" y=\"{xtitle:.1}\" font-size=\"14\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">self-supervision fraction</text>\n\
         <text x=\"{ytitle_x:.1}\" y=\"{ymid:.1}\" font-size=\"14\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 {ytitle_x:.1} {ymid:.1})\">\
         test accuracy</text>\n",
        left = MARGIN_LEFT,
        top = MARGIN_TOP,
        xmid = MARGIN_LEFT + plot_w / 2.0,
        xtitle = HEIGHT - 12.0,
        ytitle_x = 18.0,
        ymid = MARGIN_TOP + plot_h / 2.0,
    );

    for (i, (backbone, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ordered: Vec<(f64, f64)> = pts.values().copied().collect();

        let path: Vec<String> = ordered
            .iter()
            .map(|(f, a)| format!("{:.1},{:.1}", x(*f), y(*a)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                path.join(" ")
            );
        }
        for (f, a) in &ordered {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3.5\" fill=\"{color}\"/>",
                x(*f),
                y(*a)
            );
        }

        // Legend entry to the right of the plot area.
        let ly = MARGIN_TOP + 14.0 + 22.0 * i as f64;
        let _ = write!(
            svg,
            "<line x1=\"{lx1:.1}\" y1=\"{ly:.1}\" x2=\"{lx2:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <circle cx=\"{lmid:.1}\" cy=\"{ly:.1}\" r=\"3.5\" fill=\"{color}\"/>\n\
             <text x=\"{ltext:.1}\" y=\"{ly:.1}\" font-size=\"12\" \
             dominant-baseline=\"middle\" font-family=\"sans-serif\">{backbone}</text>\n",
            lx1 = WIDTH - MARGIN_RIGHT + 12.0,
            lx2 = WIDTH - MARGIN_RIGHT + 40.0,
            lmid = WIDTH - MARGIN_RIGHT + 26.0,
            ltext = WIDTH - MARGIN_RIGHT + 46.0,
        );
    }

    svg.push_str("</svg>\n");
    svg
}
