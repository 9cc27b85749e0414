//! CSV and JSON renderings of a set of reports.

use serde_json::{json, Map, Value};

use super::metrics::Group;
use super::protocol::EvalReport;

const METRICS: [&str; 2] = ["acc", "bacc"];

fn value(r: &EvalReport, metric: &str, g: Group) -> Option<f64> {
    match metric {
        "acc" => r.scores.acc(g),
        _ => r.scores.bacc(g),
    }
}

/// One row per protocol, metric, and group. Undefined values are `NA`.
pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("protocol,metric,group,value\n");
    for r in reports {
        for metric in METRICS {
            for g in Group::ALL {
                let v = value(r, metric, g).map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
                out.push_str(&format!("{},{},{},{}\n", r.protocol, metric, g.name(), v));
            }
        }
    }
    out
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// The same grid as [`report_csv`] plus per-class recall and matchings.
pub fn report_json(reports: &[EvalReport]) -> Value {
    let mut protocols = Map::new();
    for r in reports {
        let mut entry = Map::new();
        for metric in METRICS {
            let mut groups = Map::new();
            for g in Group::ALL {
                groups.insert(g.name().into(), value(r, metric, g).map(round6).map_or(Value::Null, Value::from));
            }
            entry.insert(metric.into(), Value::Object(groups));
        }
        entry.insert("n_samples".into(), json!(r.n_samples));
        entry.insert(
            "per_class_recall".into(),
            json!(r.per_class_recall.iter().map(|v| v.map(round6)).collect::<Vec<_>>()),
        );
        entry.insert("matching".into(), json!(r.matching));
        protocols.insert(r.protocol.clone(), Value::Object(entry));
    }
    json!({ "protocols": protocols })
}
