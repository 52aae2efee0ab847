//! CSV reports, console tables and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use xmreid_core::eval::SplitReport;

use crate::dataio::{read_text, DataError};

/// `K,mean,std` with one row per rank, values in percent.
pub fn report_csv(report: &SplitReport) -> String {
    let mut s = String::from("K,mean,std\n");
    for k in 1..=report.mean.len() {
        writeln!(s, "{k},{:.4},{:.4}", 100.0 * report.mean_at(k), 100.0 * report.std_at(k)).expect("writing to a String");
    }
    s
}

/// R1/R5/R10 table, one row per report.
pub fn report_table(reports: &[&SplitReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
    let mut s = format!("{:<width$}  {:>13}  {:>13}  {:>13}\n", "setting", "R1", "R5", "R10");
    for r in reports {
        write!(s, "{:<width$}", r.label).expect("writing to a String");
        for k in [1, 5, 10] {
            let cell = format!("{:.1} ± {:.1}", 100.0 * r.mean_at(k), 100.0 * r.std_at(k));
            write!(s, "  {cell:>13}").expect("writing to a String");
        }
        s.push('\n');
    }
    s
}

/// Per-split R1/R5/R10 in percent.
pub fn split_summary(report: &SplitReport) -> Vec<[f64; 3]> {
    report.splits.iter().map(|c| [1, 5, 10].map(|k| 100.0 * c.rank_at(k))).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    Ok(sha256_hex(&bytes))
}

/// Digest of the compact JSON serialization; field order follows the struct
/// declaration, so the hash is stable across platforms.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub results: serde_json::Value,
    pub started_unix_ms: u128,
    pub duration_ms: u128,
}

impl RunManifest {
    pub fn new<T: Serialize>(subcommand: &str, seed: u64, threads: usize, config: &T) -> Self {
        Self {
            subcommand: subcommand.into(),
            seed,
            threads,
            config: serde_json::to_value(config).expect("config serializes"),
            config_hash: config_hash(config),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            results: serde_json::Value::Null,
            started_unix_ms: 0,
            duration_ms: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), DataError> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<(), DataError> {
        self.outputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Reads a manifest back as untyped JSON.
pub fn read_manifest(path: &Path) -> Result<serde_json::Value, DataError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| DataError::Malformed { line: e.line(), msg: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use xmreid_core::eval::{aggregate, CmcResult};

    #[test]
    fn csv_layout() {
        let c = CmcResult { accuracies: vec![0.5, 1.0], ranks: vec![1, 2], gallery_size: 2 };
        let r = aggregate("VxV", vec![c]).unwrap();
        assert_eq!(report_csv(&r), "K,mean,std\n1,50.0000,0.0000\n2,100.0000,0.0000\n");
        assert!(report_table(&[&r]).contains("50.0 ± 0.0"));
    }

    #[test]
    fn hash_is_stable() {
        #[derive(Serialize)]
        struct C {
            a: u32,
            b: f64,
        }
        assert_eq!(config_hash(&C { a: 1, b: 0.5 }), sha256_hex(br#"{"a":1,"b":0.5}"#));
    }
}
