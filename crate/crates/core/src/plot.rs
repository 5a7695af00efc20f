//! Static SVG line charts of generated datasets, one panel per variable,
//! with anomalous spans shaded.

use std::fmt::Write;

use crate::dataset::Dataset;

pub const MAX_PANELS: usize = 8;

#[derive(Debug, Clone)]
pub struct PlotOptions {
    /// Variables to draw, in order. Empty means all.
    pub vars: Vec<String>,
    pub width: u32,
    pub panel_height: u32,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            vars: Vec::new(),
            width: 1000,
            panel_height: 160,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlotError {
    #[error("dataset has {0} variables; at most {MAX_PANELS} can be plotted, select some with --vars")]
    TooManyVariables(usize),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("dataset has no rows")]
    Empty,
}

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 10.0;
const PANEL_GAP: f64 = 24.0;
const MARGIN_TOP: f64 = 10.0;

/// Maximal runs of `true` as `(first, last_exclusive)` index pairs.
pub fn anomalous_spans(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, labels.len()));
    }
    spans
}

pub fn plot_svg(data: &Dataset, options: &PlotOptions) -> Result<String, PlotError> {
    if data.is_empty() {
        return Err(PlotError::Empty);
    }
    let selected: Vec<usize> = if options.vars.is_empty() {
        (0..data.names.len()).collect()
    } else {
        options
            .vars
            .iter()
            .map(|v| {
                data.names
                    .iter()
                    .position(|n| n == v)
                    .ok_or_else(|| PlotError::UnknownVariable(v.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    if selected.len() > MAX_PANELS {
        return Err(PlotError::TooManyVariables(selected.len()));
    }

    let width = options.width as f64;
    let ph = options.panel_height as f64;
    let height = MARGIN_TOP + selected.len() as f64 * (ph + PANEL_GAP);
    let plot_w = width - MARGIN_LEFT - MARGIN_RIGHT;
    let n = data.len();
    let x_of = |i: usize| MARGIN_LEFT + plot_w * i as f64 / n.max(2).saturating_sub(1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h:.0}" viewBox="0 0 {w} {h:.0}" font-family="sans-serif" font-size="11">"#,
        w = options.width,
        h = height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let spans = data.labels.as_deref().map(anomalous_spans).unwrap_or_default();
    let buckets = (plot_w as usize).max(1);

    for (panel, &col) in selected.iter().enumerate() {
        let top = MARGIN_TOP + panel as f64 * (ph + PANEL_GAP);
        let values = &data.columns[col];
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo == hi {
            lo -= 1.0;
            hi += 1.0;
        }
        let y_of = |v: f64| top + ph - (v - lo) / (hi - lo) * ph;

        let _ = writeln!(svg, r#"<g class="panel" data-var="{}">"#, data.names[col]);
        for &(s, e) in &spans {
            let x0 = x_of(s);
            let x1 = x_of(e.saturating_sub(1)).max(x0 + 1.0);
            let _ = writeln!(
                svg,
                r#"<rect class="anomaly" x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{ph:.2}" fill="red" fill-opacity="0.2"/>"#,
                x1 - x0
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_LEFT:.2}" y="{top:.2}" width="{plot_w:.2}" height="{ph:.2}" fill="none" stroke="#888"/>"##
        );

        let mut points = String::new();
        if n <= buckets * 2 {
            for (i, &v) in values.iter().enumerate() {
                let _ = write!(points, "{:.2},{:.2} ", x_of(i), y_of(v));
            }
        } else {
            // min/max per pixel column keeps spikes visible
            for b in 0..buckets {
                let s = b * n / buckets;
                let e = ((b + 1) * n / buckets).max(s + 1);
                let slice = &values[s..e];
                let (imin, imax) = slice.iter().enumerate().fold((0, 0), |(a, z), (i, &v)| {
                    (if v < slice[a] { i } else { a }, if v > slice[z] { i } else { z })
                });
                let (first, second) = if imin <= imax { (imin, imax) } else { (imax, imin) };
                for i in [first, second] {
                    let _ = write!(points, "{:.2},{:.2} ", x_of(s + i), y_of(slice[i]));
                }
            }
        }
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f5fbf" stroke-width="1" points="{}"/>"##,
            points.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{:.2}">{}</text>"#,
            top + 12.0,
            xml_escape(&data.names[col])
        );
        let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{}</text>"#, top + 26.0, fmt_axis(hi));
        let _ = writeln!(svg, r#"<text x="4" y="{:.2}">{}</text>"#, top + ph, fmt_axis(lo));
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_axis(v: f64) -> String {
    if v.abs() >= 1e5 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
