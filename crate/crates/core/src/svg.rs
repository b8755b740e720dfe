//! Plain-text SVG output: the embedding scatter and the ensemble gain heatmap.

use std::fmt::Write;

use crate::cluster::{ClusteringResult, RegionLabel};
use crate::embedding::LceEmbedding;
use crate::ensemble::EnsembleGainMatrix;
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

/// Maps [lo, hi] onto [a, b]; a degenerate range maps to the midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn cluster_name(clustering: &ClusteringResult, cluster: usize) -> String {
    match clustering.label_of_cluster(cluster) {
        RegionLabel::Other => format!("cluster {cluster}"),
        label => format!("group {label}"),
    }
}

/// One labelled point per model on components `axes`, coloured by cluster.
pub fn emit_scatter(
    embedding: &LceEmbedding,
    clustering: &ClusteringResult,
    axes: (usize, usize),
) -> Result<String> {
    for a in [axes.0, axes.1] {
        if a >= embedding.k() {
            return Err(Error::out_of_range(
                "axis",
                format!("component {a} but the embedding has {}", embedding.k()),
            ));
        }
    }
    let (w, h, margin, legend_w) = (640.0, 480.0, 60.0, 140.0);
    let plot_right = w - legend_w;
    let xs = embedding.score_column(axes.0);
    let ys = embedding.score_column(axes.1);
    let (x0, x1) = bounds(xs.iter().copied());
    let (y0, y1) = bounds(ys.iter().copied());

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        plot_right - 2.0 * margin,
        h - 2.0 * margin
    );
    let axis_label = |c: usize| {
        format!(
            "PC{} ({:.1}% var)",
            c + 1,
            100.0 * embedding.explained_variance_ratio[c]
        )
    };
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (margin + plot_right - margin) / 2.0,
        h - margin / 3.0,
        axis_label(axes.0)
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        margin / 3.0,
        h / 2.0,
        margin / 3.0,
        h / 2.0,
        axis_label(axes.1)
    );

    let inner = 12.0;
    for (i, name) in embedding.model_names.iter().enumerate() {
        let cx = scale(xs[i], x0, x1, margin + inner, plot_right - margin - inner);
        let cy = scale(ys[i], y0, y1, h - margin - inner, margin + inner);
        let cluster = clustering.cluster_of(name).unwrap_or(0);
        let colour = PALETTE[cluster % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<circle class="point" cx="{cx:.2}" cy="{cy:.2}" r="5" fill="{colour}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text class="point-label" x="{:.2}" y="{:.2}">{}</text>"#,
            cx + 7.0,
            cy - 7.0,
            escape(name)
        );
    }

    let _ = writeln!(svg, r#"<g class="legend">"#);
    for c in 0..clustering.k {
        let y = margin + 18.0 * c as f64;
        let _ = writeln!(
            svg,
            r#"<rect class="legend-entry" x="{}" y="{y}" width="10" height="10" fill="{}"/><text class="legend-text" x="{}" y="{}">{}</text>"#,
            plot_right + 10.0,
            PALETTE[c % PALETTE.len()],
            plot_right + 26.0,
            y + 9.0,
            escape(&cluster_name(clustering, c))
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Light for the lowest observed gain, dark for the highest.
fn gain_colour(t: f64) -> String {
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Square grid of the gain matrix; the diagonal (solo accuracy) is drawn in grey with
/// bold text, off-diagonal cells on a colour scale spanning the observed gains.
pub fn emit_heatmap(matrix: &EnsembleGainMatrix) -> String {
    let n = matrix.model_names.len();
    let cell = 48.0;
    let (left, top) = (110.0, 110.0);
    let w = left + cell * n as f64 + 20.0;
    let h = top + cell * n as f64 + 60.0;
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| matrix.gain[(i, j)])
        .collect();
    let (lo, hi) = bounds(off.iter().copied());

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{left}" y="20">ensemble gain, {}</text>"#,
        escape(&matrix.dataset)
    );
    for (i, name) in matrix.model_names.iter().enumerate() {
        let pos = i as f64 * cell + cell / 2.0;
        let _ = writeln!(
            svg,
            r#"<text class="row-label" x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            top + pos + 3.0,
            escape(name)
        );
        let _ = writeln!(
            svg,
            r#"<text class="col-label" x="{0}" y="{1}" transform="rotate(-45 {0} {1})">{2}</text>"#,
            left + pos,
            top - 6.0,
            escape(name)
        );
    }
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
            let value = matrix.cell(i, j);
            if i == j {
                let _ = writeln!(
                    svg,
                    r##"<rect class="cell diagonal" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="#d9d9d9" stroke="#000" stroke-width="2"/>"##
                );
            } else {
                let t = scale(value, lo, hi, 0.0, 1.0);
                let _ = writeln!(
                    svg,
                    r##"<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="#fff"/>"##,
                    gain_colour(t)
                );
            }
            let weight = if i == j { r#" font-weight="bold""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<text class="cell-value" x="{}" y="{}" text-anchor="middle"{weight}>{:.2}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 3.0,
                value
            );
        }
    }
    let ly = top + cell * n as f64 + 20.0;
    let _ = writeln!(
        svg,
        r#"<g class="legend"><rect x="{left}" y="{ly}" width="20" height="12" fill="{}"/><text class="legend-min" x="{}" y="{}">min {:.4}</text><rect x="{}" y="{ly}" width="20" height="12" fill="{}"/><text class="legend-max" x="{}" y="{}">max {:.4}</text></g>"#,
        gain_colour(0.0),
        left + 24.0,
        ly + 10.0,
        if off.is_empty() { 0.0 } else { lo },
        left + 110.0,
        gain_colour(1.0),
        left + 134.0,
        ly + 10.0,
        if off.is_empty() { 0.0 } else { hi },
    );
    svg.push_str("</svg>\n");
    svg
}
