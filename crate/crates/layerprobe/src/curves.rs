//! Characterization curves and λ ablations as CSV files and small SVG line
//! charts.

use std::fmt::Write as _;
use std::path::Path;

use layerprobe_core::evaluation::ConceptAblation;
use layerprobe_core::selection::CharacterizationCurve;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;
use crate::report::write_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub layer_index: usize,
    pub layer_name: String,
    pub u: f64,
    pub r: f64,
    pub score: f64,
    pub r_normalized: f64,
}

pub fn curve_records(curve: &CharacterizationCurve) -> Vec<CurveRecord> {
    curve
        .layers
        .iter()
        .map(|l| CurveRecord {
            layer_index: l.layer_index,
            layer_name: l.layer_name.clone(),
            u: l.u,
            r: l.r,
            score: l.score,
            r_normalized: l.r_normalized(),
        })
        .collect()
}

pub fn write_curve_csv(curve: &CharacterizationCurve, path: &Path) -> CliResult<()> {
    write_csv(path, &curve_records(curve))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRecord {
    pub concept: String,
    pub lambda: f64,
    pub selected_layer: usize,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub lambda: f64,
    pub mean_test_acc: f64,
}

pub fn ablation_records(runs: &[ConceptAblation]) -> Vec<AblationRecord> {
    runs.iter()
        .flat_map(|a| {
            a.points.iter().map(|p| AblationRecord {
                concept: a.concept.clone(),
                lambda: p.lambda,
                selected_layer: p.selected_layer,
                test_acc: p.test_accuracy,
            })
        })
        .collect()
}

/// Mean accuracy over concepts at each λ (all runs share one grid).
pub fn ablation_summary(runs: &[ConceptAblation]) -> Vec<AblationSummary> {
    let Some(first) = runs.first() else { return Vec::new() };
    (0..first.points.len())
        .map(|i| AblationSummary {
            lambda: first.points[i].lambda,
            mean_test_acc: runs.iter().map(|a| a.points[i].test_accuracy).sum::<f64>() / runs.len() as f64,
        })
        .collect()
}

pub struct Series<'a> {
    pub name: &'a str,
    pub values: Vec<f64>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Self-contained SVG line chart; the y axis spans [0, 1].
pub fn line_chart(title: &str, x_label: &str, x: &[f64], x_ticks: &[(f64, String)], series: &[Series<'_>]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let (x0, x1) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |v: f64| left + (v - x0) / span * pw;
    let py = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(s, r##"<g stroke="#444" stroke-width="1"><line x1="{left}" y1="{}" x2="{}" y2="{}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}"/></g>"##, top + ph, left + pw, top + ph, top + ph);
    for i in 0..=4 {
        let v = f64::from(i) / 4.0;
        let y = py(v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"##, left + pw, left - 6.0, y + 4.0);
    }
    for (v, label) in x_ticks {
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, px(*v), top + ph + 16.0, escape(label));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, escape(x_label));
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = x.iter().zip(&ser.values).map(|(&a, &b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        for p in &points {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, left + pw + 12.0, left + pw + 32.0, left + pw + 38.0, ly + 4.0, escape(ser.name));
    }
    s.push_str("</svg>\n");
    s
}

/// U and R per layer for one concept.
pub fn curve_svg(curve: &CharacterizationCurve) -> String {
    let x: Vec<f64> = curve.layers.iter().map(|l| l.layer_index as f64).collect();
    let ticks: Vec<(f64, String)> = curve.layers.iter().map(|l| (l.layer_index as f64, l.layer_name.clone())).collect();
    let series = [
        Series { name: "U (information)", values: curve.layers.iter().map(|l| l.u).collect() },
        Series { name: "R (regularity)", values: curve.layers.iter().map(|l| l.r).collect() },
    ];
    line_chart(&curve.concept_name, "layer", &x, &ticks, &series)
}

/// Probe accuracy against λ: the mean over concepts plus each concept.
pub fn ablation_svg(runs: &[ConceptAblation]) -> String {
    let summary = ablation_summary(runs);
    let x: Vec<f64> = summary.iter().map(|p| p.lambda).collect();
    let ticks: Vec<(f64, String)> = (0..=5).map(|i| (f64::from(i) / 5.0, format!("{:.1}", f64::from(i) / 5.0))).collect();
    let mut series = vec![Series { name: "mean", values: summary.iter().map(|p| p.mean_test_acc).collect() }];
    for a in runs.iter().take(PALETTE.len() - 1) {
        series.push(Series { name: &a.concept, values: a.points.iter().map(|p| p.test_accuracy).collect() });
    }
    line_chart("probe accuracy vs lambda", "lambda", &x, &ticks, &series)
}
