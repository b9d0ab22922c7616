use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{PipelineError, Result};
use crate::meta::{EvalRecord, StepRecord};

pub const METRICS_HEADER: &str = "phase,step,episodes,loss,accuracy,ci95,seed,temperature,init";

/// `%.6g`-style formatting: six significant digits, trailing zeros dropped.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    // exponent after rounding to six digits, as printf's %g decides it
    let sci = format!("{v:.5e}");
    let (mantissa, e) = sci.split_once('e').expect("exponent form");
    let exp: i32 = e.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        return format!("{}e{exp}", trim(mantissa));
    }
    let decimals = (5 - exp) as usize;
    trim(&format!("{v:.decimals$}"))
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub phase: String,
    pub step: usize,
    pub episodes: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Absent on per-step training rows.
    pub ci95: Option<f64>,
    pub seed: u64,
    pub temperature: Option<f64>,
    pub init: String,
}

impl MetricsRow {
    pub fn from_step(
        phase: &str,
        rec: &StepRecord,
        episodes: usize,
        seed: u64,
        temperature: Option<f64>,
        init: &str,
    ) -> Self {
        MetricsRow {
            phase: phase.into(),
            step: rec.step,
            episodes,
            loss: rec.loss,
            accuracy: rec.accuracy,
            ci95: None,
            seed,
            temperature,
            init: init.into(),
        }
    }

    pub fn from_eval(phase: &str, rec: &EvalRecord, seed: u64, temperature: Option<f64>, init: &str) -> Self {
        MetricsRow {
            phase: phase.into(),
            step: rec.step,
            episodes: rec.episodes,
            loss: rec.loss,
            accuracy: rec.accuracy,
            ci95: Some(rec.ci95),
            seed,
            temperature,
            init: init.into(),
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(sig6).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&self.phase),
            self.step,
            self.episodes,
            sig6(self.loss),
            sig6(self.accuracy),
            opt(self.ci95),
            self.seed,
            opt(self.temperature),
            csv_field(&self.init)
        )
    }
}

/// Append-only metrics CSV with the fixed header.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    rows: usize,
}

impl MetricsWriter {
    /// Starts a fresh file, replacing any previous one.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| PipelineError::io(path, e))?;
        let mut w = MetricsWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            rows: 0,
        };
        w.line(METRICS_HEADER)?;
        Ok(w)
    }

    /// Continues an existing file, writing the header only if it is new or empty.
    pub fn append(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PipelineError::io(path, e))?;
        let mut w = MetricsWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            rows: 0,
        };
        if fresh {
            w.line(METRICS_HEADER)?;
        }
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| PipelineError::io(&self.path, e))
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.rows += 1;
        self.line(&row.to_csv())
    }

    /// Rows written through this writer.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| PipelineError::io(&self.path, e))
    }
}
