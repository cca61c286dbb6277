use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::metrics::Metrics;

/// One machine-readable report line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub config_fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tag: Option<String>,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, value: f64, fingerprint: &str) -> Self {
        Self {
            metric: metric.into(),
            value,
            config_fingerprint: fingerprint.to_string(),
            x: None,
            tag: None,
        }
    }
}

pub fn metric_records(m: &Metrics, fingerprint: &str, x: Option<f64>, tag: Option<&str>) -> Vec<MetricRecord> {
    m.named()
        .into_iter()
        .map(|(name, v)| MetricRecord {
            x,
            tag: tag.map(str::to_string),
            ..MetricRecord::new(name, v, fingerprint)
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidData(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// CSV with one row per x value and one column per metric.
pub fn curve_csv(x_name: &str, rows: &[(usize, Metrics)]) -> String {
    let mut out = String::from(x_name);
    if let Some((_, m)) = rows.first() {
        for (name, _) in m.named() {
            out.push(',');
            out.push_str(name);
        }
    }
    out.push('\n');
    for (x, m) in rows {
        let _ = write!(out, "{x}");
        for (_, v) in m.named() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn metrics_table(title: &str, m: &Metrics) -> String {
    let mut out = format!("{title} (n = {})\n", m.n);
    for (name, v) in m.named() {
        let _ = writeln!(out, "  {name:<16} {v:.4}");
    }
    let c = m.confusion;
    let _ = writeln!(out, "  confusion        rumor->rumor {} rumor->non {} non->rumor {} non->non {}", c[0][0], c[0][1], c[1][0], c[1][1]);
    out
}
