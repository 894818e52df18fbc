//! Minimal SVG line plots of the CSV files written by the runner.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Numeric CSV table: a header and rows of equal width.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty CSV".into(),
        })?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("non-numeric value: {e}"),
                })?;
            if row.len() != columns.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} values, found {}", columns.len(), row.len()),
                });
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 160.0;
const MARGIN: f64 = 60.0;

/// One stacked panel per selected column against the first column.
/// An empty `columns` selects every column but the first.
pub fn render_svg(table: &Table, columns: &[String]) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::usage("CSV has no data rows"));
    }
    let selected: Vec<String> = if columns.is_empty() {
        table.columns.iter().skip(1).cloned().collect()
    } else {
        columns.to_vec()
    };
    let x = table.column(&table.columns[0]).expect("first column exists");
    let series = selected
        .iter()
        .map(|c| {
            table
                .column(c)
                .map(|v| (c.as_str(), v))
                .ok_or_else(|| Error::usage(format!("no column '{c}' (have {})", table.columns.join(", "))))
        })
        .collect::<Result<Vec<_>>>()?;

    let width = PANEL_W + 2.0 * MARGIN;
    let height = series.len() as f64 * (PANEL_H + MARGIN) + MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1) = bounds(&x);
    for (i, (name, y)) in series.iter().enumerate() {
        let top = MARGIN + i as f64 * (PANEL_H + MARGIN);
        let (y0, y1) = bounds(y);
        let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * PANEL_W;
        let py = |v: f64| top + PANEL_H - (v - y0) / (y1 - y0) * PANEL_H;
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}">{name}</text>"#, top - 6.0);
        let _ = writeln!(svg, r#"<text x="4" y="{}">{y1:.3e}</text>"#, top + 10.0);
        let _ = writeln!(svg, r#"<text x="4" y="{}">{y0:.3e}</text>"#, top + PANEL_H);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{}">{x0}</text><text x="{}" y="{}" text-anchor="end">{x1}</text>"#,
            top + PANEL_H + 14.0,
            MARGIN + PANEL_W,
            top + PANEL_H + 14.0
        );
        let points: Vec<String> = x
            .iter()
            .zip(y)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="steelblue" stroke-width="1.2" points="{}"/>"#,
            points.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Finite min and max, widened when flat.
fn bounds(v: &[f64]) -> (f64, f64) {
    let (lo, hi) = v
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}
