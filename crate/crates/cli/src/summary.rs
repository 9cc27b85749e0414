//! Aggregates finished run directories into a summary CSV and SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rowssl::eval::EvalProtocol;
use serde_json::Value;

use crate::commands::{REPORT_JSON, TRAIN_LOG_FILE};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const LOSS_CHART: &str = "loss.svg";
pub const ACCURACY_CHART: &str = "accuracy.svg";

const SUMMARY_GROUPS: [&str; 3] = ["all", "old", "new"];

struct Run {
    name: String,
    seed: u64,
    losses: Vec<(f64, f64)>,
    /// protocol name → report JSON entry
    protocols: Vec<(String, Value)>,
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        bail!("missing input {}", path.display());
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_run(dir: &Path) -> Result<Run> {
    let config: Value = serde_json::from_str(&read(&dir.join("config.json"))?)
        .with_context(|| format!("parsing {}", dir.join("config.json").display()))?;
    let seed = config.get("seed").and_then(Value::as_u64).unwrap_or(0);

    let log = read(&dir.join(TRAIN_LOG_FILE))?;
    let mut lines = log.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("{} is empty", TRAIN_LOG_FILE))?.split(',').collect();
    let col =
        header.iter().position(|h| *h == "total").ok_or_else(|| anyhow!("{TRAIN_LOG_FILE} has no total column"))?;
    let mut losses = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let parse = |j: usize| -> Result<f64> {
            cells
                .get(j)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| anyhow!("{TRAIN_LOG_FILE} row {} is malformed", i + 2))
        };
        losses.push((parse(0)?, parse(col)?));
    }

    let report: Value = serde_json::from_str(&read(&dir.join(REPORT_JSON))?)
        .with_context(|| format!("parsing {}", dir.join(REPORT_JSON).display()))?;
    let protocols = report
        .get("protocols")
        .and_then(Value::as_object)
        .ok_or_else(|| anyhow!("{} has no protocols object", dir.join(REPORT_JSON).display()))?
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Run { name, seed, losses, protocols })
}

/// Protocol columns in the canonical order, extras after.
fn protocol_order(runs: &[Run]) -> Vec<String> {
    let mut names: Vec<String> = EvalProtocol::ALL
        .iter()
        .map(|p| p.name().to_string())
        .filter(|n| runs.iter().any(|r| r.protocols.iter().any(|(p, _)| p == n)))
        .collect();
    for r in runs {
        for (p, _) in &r.protocols {
            if !names.contains(p) {
                names.push(p.clone());
            }
        }
    }
    names
}

fn metric(run: &Run, protocol: &str, metric: &str, group: &str) -> Option<f64> {
    run.protocols.iter().find(|(p, _)| p == protocol)?.1.get(metric)?.get(group)?.as_f64()
}

fn summary_csv(runs: &[Run], protocols: &[String]) -> String {
    let mut out = String::from("run,seed,epochs,final_loss");
    for p in protocols {
        for m in ["acc", "bacc"] {
            for g in SUMMARY_GROUPS {
                let _ = write!(out, ",{p}.{m}.{g}");
            }
        }
    }
    out.push('\n');
    for r in runs {
        let last = r.losses.last().map_or_else(|| "NA".to_string(), |(_, l)| format!("{l:.6}"));
        let _ = write!(out, "{},{},{},{}", r.name, r.seed, r.losses.len(), last);
        for p in protocols {
            for m in ["acc", "bacc"] {
                for g in SUMMARY_GROUPS {
                    let v = metric(r, p, m, g).map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
                    let _ = write!(out, ",{v}");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// A static line chart. `x_labels`, when given, replaces numeric x ticks.
pub fn line_chart(
    title: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    x_labels: Option<&[String]>,
) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (64.0, 160.0, 36.0, 48.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="gray"/>"#);
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#, left - 6.0, sy(y) + 4.0, y);
    }
    match x_labels {
        Some(labels) => {
            for (i, l) in labels.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    sx(i as f64),
                    top + ph + 16.0,
                    escape(l)
                );
            }
        }
        None => {
            for i in 0..=4 {
                let x = x0 + (x1 - x0) * i as f64 / 4.0;
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
                    sx(x),
                    top + ph + 16.0,
                    x
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ =
            writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        if coords.len() == 1 {
            let (cx, cy) = coords[0].split_once(',').expect("formatted above");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = top + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            w - right + 10.0,
            w - right + 28.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - right + 32.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

pub fn report(runs: &[PathBuf], out: &Path) -> Result<()> {
    if runs.is_empty() {
        bail!("report needs at least one run directory");
    }
    let runs =
        runs.iter().map(|d| load_run(d).with_context(|| format!("run {}", d.display()))).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let protocols = protocol_order(&runs);

    let summary = summary_csv(&runs, &protocols);
    fs::write(out.join(SUMMARY_FILE), &summary)?;

    let loss_series: Vec<(String, Vec<(f64, f64)>)> = runs.iter().map(|r| (r.name.clone(), r.losses.clone())).collect();
    fs::write(out.join(LOSS_CHART), line_chart("Training loss", "total loss", &loss_series, None))?;

    let acc_series: Vec<(String, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|r| {
            let pts = protocols
                .iter()
                .enumerate()
                .filter_map(|(i, p)| metric(r, p, "acc", "all").map(|v| (i as f64, v)))
                .collect();
            (r.name.clone(), pts)
        })
        .collect();
    fs::write(
        out.join(ACCURACY_CHART),
        line_chart("ACC (all classes) per protocol", "ACC", &acc_series, Some(&protocols)),
    )?;
    println!("wrote {} ({} runs), {}, {}", out.join(SUMMARY_FILE).display(), runs.len(), LOSS_CHART, ACCURACY_CHART);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed_xml() {
        let series = vec![
            ("a<b".to_string(), vec![(0.0, 1.0), (1.0, 0.5), (2.0, f64::NAN)]),
            ("single".to_string(), vec![(0.0, 0.2)]),
        ];
        let svg = line_chart("t & t", "y", &series, None);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 2);
        let empty = line_chart("empty", "y", &[], Some(&["p".to_string()]));
        roxmltree::Document::parse(&empty).unwrap();
    }
}
