//! Experiment outputs: metrics CSV, summary JSON, plot-data CSV and
//! optional training traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use msp_core::nn::{dual_trace_csv, loss_trace_csv, DualStep};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    /// Value of the swept variable.
    pub x: f64,
    pub seed: u64,
    pub metric: f64,
    /// Extra columns; every row of a report carries the same keys.
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub series: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Loss(Vec<f64>),
    Dual(Vec<DualStep>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub task: String,
    pub x_name: String,
    pub metric_name: String,
    pub rows: Vec<MetricRow>,
    pub points: Vec<PlotPoint>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub traces: BTreeMap<String, Trace>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl Report {
    pub fn metrics_csv(&self) -> String {
        let keys: Vec<&String> = self.rows.first().map(|r| r.extra.keys().collect()).unwrap_or_default();
        let mut out = format!("model,{},seed,{}", escape(&self.x_name), escape(&self.metric_name));
        for k in &keys {
            out.push(',');
            out.push_str(&escape(k));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{:?},{},{:?}", escape(&r.model), r.x, r.seed, r.metric);
            for k in &keys {
                let _ = write!(out, ",{:?}", r.extra.get(*k).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }

    pub fn plot_csv(&self) -> String {
        let mut out = String::from("x,y,series\n");
        for p in &self.points {
            let _ = writeln!(out, "{:?},{:?},{}", p.x, p.y, escape(&p.series));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        let value = serde_json::json!({
            "task": self.task,
            "x": self.x_name,
            "metric": self.metric_name,
            "results": self.summary,
        });
        serde_json::to_string_pretty(&value).expect("summary values are plain JSON")
    }

    /// Writes `<prefix>_metrics.csv`, `<prefix>_summary.json`, `<prefix>_plot.csv`
    /// and one `<prefix>_trace_<name>.csv` per trace into `dir`.
    pub fn write(&self, dir: &Path, prefix: &str, with_traces: bool) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files = vec![
            (dir.join(format!("{prefix}_metrics.csv")), self.metrics_csv()),
            (dir.join(format!("{prefix}_summary.json")), self.summary_json()),
            (dir.join(format!("{prefix}_plot.csv")), self.plot_csv()),
        ];
        if with_traces {
            for (name, trace) in &self.traces {
                let text = match trace {
                    Trace::Loss(l) => loss_trace_csv(l),
                    Trace::Dual(d) => dual_trace_csv(d),
                };
                files.push((dir.join(format!("{prefix}_trace_{name}.csv")), text));
            }
        }
        for (path, text) in &files {
            fs::write(path, text)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}
