//! Versioned JSON run reports and the CSV trajectory table.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::{csv_io, format_f64};
use crate::model::{AlgorithmConfig, Dataset, Trajectory};

pub const RUN_REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub path: String,
    pub n: usize,
    pub p: usize,
    /// Hex SHA-256 of the raw input bytes.
    pub sha256: String,
}

impl InputFingerprint {
    pub fn new(path: &str, bytes: &[u8], n: usize, p: usize) -> Self {
        Self {
            path: path.to_string(),
            n,
            p,
            sha256: sha256_hex(bytes),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedColumn {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub load_seconds: f64,
    pub run_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub input: InputFingerprint,
    pub config: AlgorithmConfig,
    pub trajectory: Trajectory,
    pub selected: Vec<SelectedColumn>,
    pub rss_path: Vec<f64>,
    pub timings: RunTimings,
}

impl RunReport {
    pub fn new(
        input: InputFingerprint,
        config: AlgorithmConfig,
        data: &Dataset,
        trajectory: Trajectory,
        timings: RunTimings,
    ) -> Self {
        let selected = trajectory
            .final_model()
            .map(|m| {
                m.sorted()
                    .iter()
                    .map(|j| SelectedColumn {
                        index: j,
                        name: data.column_name(j),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            schema_version: RUN_REPORT_SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            input,
            config,
            rss_path: trajectory.rss_path(),
            trajectory,
            selected,
            timings,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per step: `k`, the model as `;`-separated indices, and the RSS.
    pub fn trajectory_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["k", "model", "rss"]).map_err(csv_io)?;
        for rec in &self.trajectory.records {
            let model: Vec<String> = rec.model.iter().map(|j| j.to_string()).collect();
            w.write_record([rec.k.to_string(), model.join(";"), format_f64(rec.rss)])
                .map_err(csv_io)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }
}
