//! Comparison and ablation reports: CSV, aligned text and a bar chart of
//! metric deltas.

use std::path::Path;

use debias_core::eval::{format_metric, AblationTable, ComparisonTable, EvalKind, MetricsReport};
use debias_core::model::BaselineKind;
use image::{Rgb, RgbImage};

use crate::error::{AppError, AppResult};
use crate::fsutil::write_atomic;

pub const COMPARISON_HEADER: [&str; 8] =
    ["model", "eval_kind", "accuracy", "specificity", "sensitivity", "f1", "roc_auc", "n"];

fn metric_fields(r: &MetricsReport) -> Vec<String> {
    let mut f: Vec<String> = r.values().iter().map(|&v| format_metric(v)).collect();
    f.push(r.n.to_string());
    f
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn comparison_csv(table: &ComparisonTable) -> Vec<u8> {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut f = vec![r.model.as_str().to_string(), r.eval_kind.as_str().to_string()];
            f.extend(metric_fields(&r.report));
            f
        })
        .collect();
    csv_bytes(&COMPARISON_HEADER, &rows)
}

pub fn ablation_csv(table: &AblationTable) -> Vec<u8> {
    let mut header = vec!["condition"];
    header.extend(COMPARISON_HEADER);
    let rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .map(|c| {
            let mut f = vec![
                c.condition.as_str().to_string(),
                c.model.as_str().to_string(),
                EvalKind::Unseen.as_str().to_string(),
            ];
            f.extend(metric_fields(&c.report));
            f
        })
        .collect();
    csv_bytes(&header, &rows)
}

fn undefined_marks(r: &MetricsReport) -> String {
    let u = r.undefined;
    [(u.specificity, "specificity"), (u.sensitivity, "sensitivity"), (u.f1, "f1")]
        .iter()
        .filter(|(flag, _)| *flag)
        .map(|(_, name)| *name)
        .collect::<Vec<_>>()
        .join(",")
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, f) in widths.iter_mut().zip(r) {
            *w = (*w).max(f.len());
        }
    }
    let line = |fields: Vec<&str>| {
        let cells: Vec<String> = fields.iter().zip(&widths).map(|(f, w)| format!("{f:<w$}")).collect();
        cells.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn with_notes(mut text: String, notes: &[(String, String)]) -> String {
    for (who, marks) in notes {
        text += &format!("note: {who} has zero-denominator {marks} reported as 0\n");
    }
    text
}

pub fn comparison_text(table: &ComparisonTable) -> String {
    let mut notes = Vec::new();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let marks = undefined_marks(&r.report);
            if !marks.is_empty() {
                notes.push((format!("{} {}", r.model, r.eval_kind.as_str()), marks));
            }
            let mut f = vec![r.model.as_str().to_string(), r.eval_kind.as_str().to_string()];
            f.extend(metric_fields(&r.report));
            f
        })
        .collect();
    with_notes(aligned(&COMPARISON_HEADER, &rows), &notes)
}

pub fn ablation_text(table: &AblationTable) -> String {
    let mut notes = Vec::new();
    let header = ["condition", "model", "accuracy", "f1", "roc_auc", "n"];
    let rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .map(|c| {
            let marks = undefined_marks(&c.report);
            if !marks.is_empty() {
                notes.push((format!("{} on {}", c.model, c.condition.as_str()), marks));
            }
            let r = &c.report;
            vec![
                c.condition.as_str().to_string(),
                c.model.as_str().to_string(),
                format_metric(r.accuracy),
                format_metric(r.f1),
                format_metric(r.roc_auc),
                r.n.to_string(),
            ]
        })
        .collect();
    with_notes(aligned(&header, &rows), &notes)
}

/// Per-metric `rbf_net - cnn_lstm` on the unseen test set.
pub fn unseen_deltas(table: &ComparisonTable) -> Option<[f64; 5]> {
    let a = table.get(BaselineKind::RbfNet, EvalKind::Unseen)?.values();
    let b = table.get(BaselineKind::CnnLstm, EvalKind::Unseen)?.values();
    Some(core::array::from_fn(|i| a[i] - b[i]))
}

/// Bars for each delta around a horizontal zero line; gains point up in
/// green, losses down in red. The axis spans `[-max, max]` of the magnitudes.
pub fn delta_chart(deltas: &[f64]) -> RgbImage {
    let (bar, gap, h) = (40u32, 20u32, 240u32);
    let w = gap + deltas.len() as u32 * (bar + gap);
    let mut img = RgbImage::from_pixel(w.max(1), h, Rgb([255, 255, 255]));
    let mid = h / 2;
    let scale = deltas.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1e-12);
    for (i, &d) in deltas.iter().enumerate() {
        let len = ((d.abs() / scale) * (mid - 10) as f64).round() as u32;
        let (top, bottom, colour) = if d >= 0.0 { (mid - len, mid, Rgb([40, 150, 60])) } else { (mid, mid + len, Rgb([200, 50, 40])) };
        let x0 = gap + i as u32 * (bar + gap);
        for x in x0..x0 + bar {
            for y in top..bottom {
                img.put_pixel(x, y, colour);
            }
        }
    }
    for x in 0..w {
        img.put_pixel(x, mid, Rgb([0, 0, 0]));
    }
    img
}

pub fn write_chart(path: &Path, deltas: &[f64]) -> AppResult<()> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    delta_chart(deltas)
        .write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| AppError::malformed(path, e.to_string()))?;
    write_atomic(path, bytes.get_ref())
}

/// Caption naming the chart's bars in order with their values.
pub fn chart_caption(deltas: &[f64], labels: &[&str]) -> String {
    let parts: Vec<String> = labels.iter().zip(deltas).map(|(l, d)| format!("{l} {d:+.3}")).collect();
    parts.join(", ")
}
