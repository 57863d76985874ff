//! Two-dimensional projections of query vectors for cluster plots.
//!
//! Principal components are found by power iteration with deflation, so the
//! output depends only on the input order and values.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::fnv1a;
use crate::{write_atomic, QueryVector};

const MAX_ITERS: usize = 1000;
const TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub query_id: String,
    pub x: f64,
    pub y: f64,
    pub label: Option<String>,
}

/// Projects onto the top two principal components of the centered vectors.
pub fn pca_2d(vectors: &[QueryVector]) -> Result<Vec<ProjectedPoint>> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument("projection needs at least 2 vectors".into()));
    }
    let d = vectors[0].dim();
    if d < 2 {
        return Err(Error::InvalidArgument("projection needs at least 2 dimensions".into()));
    }
    for v in vectors {
        if v.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: v.dim(),
            });
        }
        if v.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value in `{}`", v.query_id)));
        }
    }
    let point = |v: &QueryVector, x: f64, y: f64| ProjectedPoint {
        query_id: v.query_id.clone(),
        x,
        y,
        label: None,
    };
    if vectors.iter().all(|v| v.values == vectors[0].values) {
        log::warn!("all {} vectors are identical; projecting to the origin", vectors.len());
        return Ok(vectors.iter().map(|v| point(v, 0.0, 0.0)).collect());
    }

    let n = vectors.len() as f64;
    let mut mean = vec![0.0; d];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let rows: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.values.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let scale = rows.iter().map(|r| norm(r)).fold(0.0, f64::max);
    let first = principal_axis(&rows, &[], scale);
    let second = first.as_ref().and_then(|u| principal_axis(&rows, std::slice::from_ref(u), scale));
    let coords = |axis: &Option<Vec<f64>>| -> Vec<f64> {
        match axis {
            Some(u) => rows.iter().map(|r| dot(r, u)).collect(),
            None => vec![0.0; rows.len()],
        }
    };
    let mut xs = coords(&first);
    let mut ys = coords(&second);
    let var = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>();
    if var(&ys) > var(&xs) {
        std::mem::swap(&mut xs, &mut ys);
    }
    Ok(vectors.iter().zip(xs.into_iter().zip(ys)).map(|(v, (x, y))| point(v, x, y)).collect())
}

fn residual(row: &[f64], axes: &[Vec<f64>]) -> Vec<f64> {
    let mut r = row.to_vec();
    for u in axes {
        let p = dot(&r, u);
        r.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
    }
    r
}

/// Leading eigenvector of the covariance restricted to the complement of
/// `axes`, or `None` when nothing is left there.
fn principal_axis(rows: &[Vec<f64>], axes: &[Vec<f64>], scale: f64) -> Option<Vec<f64>> {
    let residuals: Vec<Vec<f64>> = rows.iter().map(|r| residual(r, axes)).collect();
    // Start from the residual with the largest norm (first one on ties).
    let mut v = residuals
        .iter()
        .fold(None::<&Vec<f64>>, |best, r| match best {
            Some(b) if norm(b) >= norm(r) => Some(b),
            _ => Some(r),
        })?
        .clone();
    let len = norm(&v);
    if len <= 1e-10 * scale {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= len);
    for _ in 0..MAX_ITERS {
        let mut w = vec![0.0; v.len()];
        for r in &residuals {
            let p = dot(r, &v);
            w.iter_mut().zip(r).for_each(|(a, b)| *a += p * b);
        }
        let mut w = residual(&w, axes);
        let len = norm(&w);
        if len == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= len);
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < TOL {
            break;
        }
    }
    let pivot = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Some(v)
}

/// Fills `label` from a query id → label map; unknown ids stay unlabeled.
pub fn attach_labels(points: &mut [ProjectedPoint], labels: &HashMap<String, String>) {
    for p in points {
        p.label = labels.get(&p.query_id).cloned();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScatterFormat {
    Csv,
    Svg,
}

impl FromStr for ScatterFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            _ => Err(Error::InvalidArgument(format!("unknown scatter format {s:?}"))),
        }
    }
}

/// CSV with header `x,y,id,label`; missing labels are empty cells.
pub fn render_csv(points: &[ProjectedPoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["x", "y", "id", "label"]).map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.x.to_string(),
            p.y.to_string(),
            p.query_id.clone(),
            p.label.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Fixed-saturation color from a hash of the label.
pub fn label_color(label: &str) -> String {
    let h = (fnv1a(label.as_bytes()) % 360) as f64;
    let (s, l) = (0.65, 0.45);
    let c = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to(r), to(g), to(b))
}

const MONO: &str = "#333333";

/// SVG scatter plot: one circle per point, legend of labels on the right.
pub fn render_svg(points: &[ProjectedPoint]) -> String {
    let (plot, margin, legend_w) = (480.0, 30.0, 180.0);
    let labels: BTreeSet<&str> = points.iter().filter_map(|p| p.label.as_deref()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = (span(x0, x1), span(y0, y1));
    let width = plot + 2.0 * margin + if labels.is_empty() { 0.0 } else { legend_w };
    let height = plot + 2.0 * margin;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for p in points {
        let cx = margin + (p.x - x0) / sx * plot;
        let cy = margin + plot - (p.y - y0) / sy * plot;
        let fill = p.label.as_deref().map_or_else(|| MONO.to_string(), label_color);
        let title = match &p.label {
            Some(l) => format!("{} ({})", p.query_id, l),
            None => p.query_id.clone(),
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{fill}"><title>{}</title></circle>"#,
            escape(&title)
        );
    }
    for (i, label) in labels.iter().enumerate() {
        let x = plot + 2.0 * margin;
        let y = margin + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="12" font-family="sans-serif">{}</text>"#,
            label_color(label),
            x + 16.0,
            y + 10.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the points as CSV or SVG, atomically.
pub fn export_scatter(points: &[ProjectedPoint], path: impl AsRef<Path>, format: ScatterFormat) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty("no points to export".into()));
    }
    let bytes = match format {
        ScatterFormat::Csv => render_csv(points)?,
        ScatterFormat::Svg => render_svg(points).into_bytes(),
    };
    write_atomic(path, &bytes)
}
