//! Experiment results and their on-disk form: `<name>-<seed>.json` holds the
//! metadata and scalar metrics, `<name>-<seed>.csv` the series.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub x: f64,
    pub y: f64,
    pub y_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub rows: Vec<SeriesRow>,
}

impl Series {
    pub fn new(name: &str, x_label: &str, y_label: &str) -> Self {
        Self { name: name.into(), x_label: x_label.into(), y_label: y_label.into(), rows: Vec::new() }
    }

    pub fn push(&mut self, x: f64, y: f64, y_err: Option<f64>) {
        self.rows.push(SeriesRow { x, y, y_err });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub scalar_metrics: BTreeMap<String, Estimate>,
    pub series: Vec<Series>,
    /// Resolved configuration and master seed.
    pub metadata: serde_json::Value,
}

#[derive(Serialize)]
struct JsonView<'a> {
    name: &'a str,
    metadata: &'a serde_json::Value,
    scalar_metrics: &'a BTreeMap<String, Estimate>,
}

/// 17 significant digits.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl ExperimentResult {
    pub fn new(name: &str, metadata: serde_json::Value) -> Self {
        Self { name: name.into(), scalar_metrics: BTreeMap::new(), series: Vec::new(), metadata }
    }

    pub fn metric(&self, name: &str) -> Option<Estimate> {
        self.scalar_metrics.get(name).copied()
    }

    pub fn insert(&mut self, name: &str, value: Estimate) {
        self.scalar_metrics.insert(name.into(), value);
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        let view = JsonView { name: &self.name, metadata: &self.metadata, scalar_metrics: &self.scalar_metrics };
        serde_json::to_writer_pretty(w, &view).map_err(io::Error::from)
    }

    /// Columns `series,x_label,y_label,x,y,y_err`.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["series", "x_label", "y_label", "x", "y", "y_err"])?;
        for s in &self.series {
            for r in &s.rows {
                out.write_record([
                    s.name.as_str(),
                    s.x_label.as_str(),
                    s.y_label.as_str(),
                    &fmt_float(r.x),
                    &fmt_float(r.y),
                    &r.y_err.map(fmt_float).unwrap_or_default(),
                ])?;
            }
        }
        out.flush()
    }

    /// Write both files under `dir`; returns `(json, csv)` paths.
    pub fn write_files(&self, dir: &Path, seed: u64) -> io::Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}-{seed}.json", self.name));
        let csv = dir.join(format!("{}-{seed}.csv", self.name));
        let mut f = io::BufWriter::new(fs::File::create(&json)?);
        self.write_json(&mut f)?;
        f.write_all(b"\n")?;
        f.flush()?;
        self.write_csv(io::BufWriter::new(fs::File::create(&csv)?))?;
        Ok((json, csv))
    }

    /// One machine-stable line per metric, in name order:
    /// `<experiment> <metric> value=<v> se=<se|exact>`.
    pub fn summary_lines(&self) -> Vec<String> {
        self.scalar_metrics
            .iter()
            .map(|(k, e)| {
                let se = e.standard_error.map(fmt_float).unwrap_or_else(|| "exact".into());
                format!("{} {} value={} se={}", self.name, k, fmt_float(e.value), se)
            })
            .collect()
    }
}
