//! Deterministic SVG rendering of planar grid regions.
//!
//! Output depends only on the inputs: layers are drawn in the given order,
//! cells in Morton order, and numbers are printed with fixed precision.

use std::fmt::Write;

use crate::grid::GridRegion;
use crate::{Error, Result};

const CANVAS: f64 = 512.0;
const MARGIN: f64 = 16.0;
const LEGEND_ROW: f64 = 18.0;

/// Fixed palette, cycled by layer index.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

pub struct Layer<'a> {
    pub label: String,
    pub region: &'a GridRegion,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the layers over the unit square; `legend` lists parameter lines.
pub fn render(layers: &[Layer], legend: &[String]) -> Result<String> {
    if let Some(l) = layers.iter().find(|l| l.region.dim() != 2) {
        return Err(Error::Domain(format!("svg needs n = 2, layer `{}` has n = {}", l.label, l.region.dim())));
    }
    let rows = layers.len() + legend.len();
    let height = CANVAS + 2.0 * MARGIN + rows as f64 * LEGEND_ROW;
    let width = CANVAS + 2.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN:.0}" y="{MARGIN:.0}" width="{CANVAS:.0}" height="{CANVAS:.0}" fill="none" stroke="#000" stroke-width="1"/>"##
    );
    for (idx, layer) in layers.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let r = layer.region;
        let w = CANVAS * r.cell_side();
        let _ = writeln!(out, r#"<g class="layer" data-label="{}" fill="{color}" fill-opacity="0.6">"#, escape(&layer.label));
        for code in r.codes() {
            let m = r.decode(code);
            // y grows downward on the canvas, upward in the unit square
            let x = MARGIN + m[0] as f64 * w;
            let y = MARGIN + CANVAS - (m[1] as f64 + 1.0) * w;
            let _ = writeln!(out, r#"<rect class="cell" x="{x:.4}" y="{y:.4}" width="{w:.4}" height="{w:.4}"/>"#);
        }
        out.push_str("</g>\n");
    }
    let mut y = CANVAS + 2.0 * MARGIN;
    for (idx, layer) in layers.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN:.0}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.0}" y="{:.1}" font-size="12">{} ({} cells)</text>"#,
            y + 2.0,
            MARGIN + 14.0,
            y + 11.0,
            escape(&layer.label),
            layer.region.cell_count()
        );
        y += LEGEND_ROW;
    }
    for line in legend {
        let _ = writeln!(out, r#"<text x="{MARGIN:.0}" y="{:.1}" font-size="12">{}</text>"#, y + 11.0, escape(line));
        y += LEGEND_ROW;
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Number of cell rectangles in a rendered document.
pub fn count_cells(svg: &str) -> usize {
    svg.matches(r#"class="cell""#).count()
}
