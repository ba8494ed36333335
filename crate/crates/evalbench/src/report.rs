//! Report emission: CSV, markdown in the familiar attack-by-target table
//! layout, versioned JSON, and SVG sweep plots. Byte-deterministic given
//! the report.

use crate::error::Result;
use crate::matrix::EvaluationReport;
use crate::sweeps::SweepPoint;
use std::fmt::Write as _;
use std::path::Path;

/// Float formatting that round-trips exactly through parsing.
fn f(v: f32) -> String {
    format!("{v:?}")
}

pub fn to_csv(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str("attack,target,adv_mean,adv_std,per_seed\n");
    for t in &report.targets {
        let _ = writeln!(out, "clean,{},{},,", t.name, f(t.clean_acc));
    }
    for c in &report.cells {
        let per_seed = c.per_seed.iter().map(|v| f(*v)).collect::<Vec<_>>().join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.attack,
            c.target,
            f(c.adv_mean),
            c.adv_std.map(f).unwrap_or_default(),
            per_seed
        );
    }
    for (label, mean, std) in &report.averages {
        let _ = writeln!(out, "{},average,{},{},", label, f(*mean), std.map(f).unwrap_or_default());
    }
    out
}

pub fn to_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = write!(out, "| Model |");
    for t in &report.targets {
        let _ = write!(out, " {} |", t.name);
    }
    let _ = writeln!(out, " Average |");
    let _ = write!(out, "|---|");
    for _ in &report.targets {
        let _ = write!(out, "---|");
    }
    let _ = writeln!(out, "---|");

    let _ = write!(out, "| Clean |");
    for t in &report.targets {
        let _ = write!(out, " {:.2} |", t.clean_acc);
    }
    let _ = writeln!(out, " {:.2} |", report.clean_average());

    for attack in &report.attacks {
        let _ = write!(out, "| {attack} |");
        for t in &report.targets {
            match report.cell(attack, &t.name) {
                Some(c) => match c.adv_std {
                    Some(s) => {
                        let _ = write!(out, " {:.2}±{:.2} |", c.adv_mean, s);
                    }
                    None => {
                        let _ = write!(out, " {:.2} |", c.adv_mean);
                    }
                },
                None => {
                    let _ = write!(out, " - |");
                }
            }
        }
        match report.averages.iter().find(|(l, _, _)| l == attack) {
            Some((_, m, Some(s))) => {
                let _ = writeln!(out, " {m:.2}±{s:.2} |");
            }
            Some((_, m, None)) => {
                let _ = writeln!(out, " {m:.2} |");
            }
            None => {
                let _ = writeln!(out, " - |");
            }
        }
    }
    out
}

pub fn to_json(report: &EvaluationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// Minimal line plot of sweep points (x positions equally spaced, labeled).
pub fn sweep_svg<K: std::fmt::Display>(points: &[SweepPoint<K>], title: &str) -> String {
    let (w, h, ml, mb) = (640f32, 400f32, 60f32, 40f32);
    let max_y = points.iter().map(|p| p.avg_adv_acc).fold(1.0f32, f32::max).max(1.0);
    let n = points.len().max(1);
    let x_of = |i: usize| ml + (w - ml - 20.0) * (i as f32 + 0.5) / n as f32;
    let y_of = |v: f32| (h - mb) - (h - mb - 30.0) * (v / max_y);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{title}</text>", w / 2.0);
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        h - mb,
        w - 20.0,
        h - mb
    );
    let _ = writeln!(svg, "<line x1=\"{ml}\" y1=\"30\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>", h - mb);
    let mut path = String::new();
    for (i, p) in points.iter().enumerate() {
        let (x, y) = (x_of(i), y_of(p.avg_adv_acc));
        let _ = write!(path, "{}{x:.1},{y:.1}", if i == 0 { "M" } else { " L" });
        let _ = writeln!(svg, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"steelblue\"/>");
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            h - mb + 16.0,
            p.at
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{:.1}</text>",
            y - 8.0,
            p.avg_adv_acc
        );
    }
    let _ = writeln!(svg, "<path d=\"{path}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>");
    let _ = writeln!(svg, "</svg>");
    svg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

pub fn emit(report: &EvaluationReport, dir: &Path, formats: &[ReportFormat]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for fmt in formats {
        match fmt {
            ReportFormat::Csv => std::fs::write(dir.join("report.csv"), to_csv(report))?,
            ReportFormat::Markdown => std::fs::write(dir.join("report.md"), to_markdown(report))?,
            ReportFormat::Json => std::fs::write(dir.join("report.json"), to_json(report))?,
        }
    }
    Ok(())
}
