use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Histogram, KeyMode};
use crate::Result;

/// Results for one `(adapter, file)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub file_name: String,
    pub file_size: u64,
    pub adapter: String,
    pub encrypt_s: f64,
    pub decrypt_s: Option<f64>,
    pub avalanche: f64,
    pub strict_avalanche: f64,
    pub bit_independence: f64,
    pub chi_square: f64,
    pub trials: usize,
    pub pair_sample: usize,
    pub window_bytes: usize,
    pub key_mode: KeyMode,
}

/// One CSV line. Scores carry five decimals, times six.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub file_name: String,
    pub file_size: u64,
    pub adapter: String,
    pub encrypt_s: String,
    pub decrypt_s: String,
    pub avalanche: String,
    pub strict_avalanche: String,
    pub bit_independence: String,
    pub chi_square: String,
}

impl MetricsReport {
    pub fn csv_row(&self) -> CsvRow {
        CsvRow {
            file_name: self.file_name.clone(),
            file_size: self.file_size,
            adapter: self.adapter.clone(),
            encrypt_s: format!("{:.6}", self.encrypt_s),
            decrypt_s: self
                .decrypt_s
                .map(|t| format!("{t:.6}"))
                .unwrap_or_default(),
            avalanche: format!("{:.5}", self.avalanche),
            strict_avalanche: format!("{:.5}", self.strict_avalanche),
            bit_independence: format!("{:.5}", self.bit_independence),
            chi_square: format!("{:.2}", self.chi_square),
        }
    }

    /// Sampling parameters that shaped the scores.
    pub fn sampling_note(&self) -> String {
        format!(
            "trials={} key_mode={} window_bytes={} pair_sample={}",
            self.trials,
            self.key_mode.as_str(),
            self.window_bytes,
            self.pair_sample
        )
    }
}

/// Appends a row to `path`, writing the header first if the file is new.
/// The file is replaced atomically.
pub fn append_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    let existing = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(existing.is_empty())
        .from_writer(existing);
    w.serialize(report.csv_row())?;
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

/// Writes 256 `(byte_value, count)` rows.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["byte_value", "count"])?;
    for (v, c) in hist.counts.iter().enumerate() {
        w.write_record([v.to_string(), c.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
