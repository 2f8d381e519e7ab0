//! Measurement persistence: one CSV row per benchmark run, appended as soon
//! as the run finishes so an interrupted campaign loses at most the run in
//! flight.
//!
//! Column order: host, config_id, one column per dimension, iteration,
//! status, reason, joules, runtime_s, get, post, put, delete, errors,
//! started_at. Unknown extra columns in existing files are preserved.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::workload::MethodCounts;

const LEADING_COLUMNS: [&str; 2] = ["host", "config_id"];
const TRAILING_COLUMNS: [&str; 12] = [
    "iteration",
    "status",
    "reason",
    "joules",
    "runtime_s",
    "get",
    "post",
    "put",
    "delete",
    "errors",
    "started_at",
    "", // sentinel: anything beyond started_at is an extra column
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One benchmark run's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub host: String,
    pub config_id: String,
    /// Dimension name -> value, in declaration order.
    pub dimensions: Vec<(String, String)>,
    pub iteration: u32,
    pub status: RunStatus,
    pub reason: Option<String>,
    pub joules: Option<f64>,
    pub runtime_s: Option<f64>,
    pub counts: MethodCounts,
    pub errors: u64,
    /// RFC 3339.
    pub started_at: String,
    /// Unknown columns carried through from legacy files.
    #[serde(default)]
    pub extra: Vec<(String, String)>,
}

impl MeasurementRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn dimension_value(&self, name: &str) -> Option<&str> {
        self.dimensions
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

/// Append-only CSV writer bound to a fixed dimension set.
pub struct RecordWriter {
    writer: csv::Writer<File>,
    dimension_names: Vec<String>,
    extra_names: Vec<String>,
}

impl RecordWriter {
    /// Opens `path` for appending, writing the header first when the file is
    /// new or empty. An existing header must agree on the dimension columns.
    pub fn open(path: &Path, dimension_names: &[String]) -> Result<Self, OrchestratorError> {
        let mut extra_names = Vec::new();
        let mut needs_header = true;
        if path.exists() {
            let mut file = File::open(path).map_err(OrchestratorError::Io)?;
            if file.seek(SeekFrom::End(0)).map_err(OrchestratorError::Io)? > 0 {
                needs_header = false;
                file.seek(SeekFrom::Start(0)).map_err(OrchestratorError::Io)?;
                let mut header_line = String::new();
                BufReader::new(file)
                    .read_line(&mut header_line)
                    .map_err(OrchestratorError::Io)?;
                let header: Vec<String> = header_line
                    .trim_end()
                    .split(',')
                    .map(|s| s.to_string())
                    .collect();
                let (existing_dims, existing_extras) = split_header(&header)?;
                if existing_dims != dimension_names {
                    return Err(OrchestratorError::HeaderMismatch {
                        expected: dimension_names.to_vec(),
                        found: existing_dims,
                    });
                }
                extra_names = existing_extras;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(OrchestratorError::Io)?;
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if needs_header {
            let mut header: Vec<String> =
                LEADING_COLUMNS.iter().map(|s| s.to_string()).collect();
            header.extend(dimension_names.iter().cloned());
            header.extend(
                TRAILING_COLUMNS[..TRAILING_COLUMNS.len() - 1]
                    .iter()
                    .map(|s| s.to_string()),
            );
            writer
                .write_record(&header)
                .map_err(|e| OrchestratorError::Csv(e.to_string()))?;
            writer.flush().map_err(OrchestratorError::Io)?;
        }
        Ok(Self {
            writer,
            dimension_names: dimension_names.to_vec(),
            extra_names,
        })
    }

    /// Appends one record and flushes it to disk immediately.
    pub fn write(&mut self, record: &MeasurementRecord) -> Result<(), OrchestratorError> {
        let mut row: Vec<String> = vec![record.host.clone(), record.config_id.clone()];
        for name in &self.dimension_names {
            row.push(record.dimension_value(name).unwrap_or_default().to_string());
        }
        row.push(record.iteration.to_string());
        row.push(
            match record.status {
                RunStatus::Ok => "ok",
                RunStatus::Failed => "failed",
            }
            .to_string(),
        );
        row.push(record.reason.clone().unwrap_or_default());
        row.push(record.joules.map(|j| j.to_string()).unwrap_or_default());
        row.push(record.runtime_s.map(|r| r.to_string()).unwrap_or_default());
        row.push(record.counts.get.to_string());
        row.push(record.counts.post.to_string());
        row.push(record.counts.put.to_string());
        row.push(record.counts.delete.to_string());
        row.push(record.errors.to_string());
        row.push(record.started_at.clone());
        for name in &self.extra_names {
            let value = record
                .extra
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .unwrap_or_default();
            row.push(value);
        }
        self.writer
            .write_record(&row)
            .map_err(|e| OrchestratorError::Csv(e.to_string()))?;
        self.writer.flush().map_err(OrchestratorError::Io)
    }
}

fn split_header(header: &[String]) -> Result<(Vec<String>, Vec<String>), OrchestratorError> {
    let bad = |msg: &str| OrchestratorError::MalformedHeader(msg.to_string());
    if header.len() < LEADING_COLUMNS.len() + TRAILING_COLUMNS.len() - 1 {
        return Err(bad("too few columns"));
    }
    if header[0] != LEADING_COLUMNS[0] || header[1] != LEADING_COLUMNS[1] {
        return Err(bad("expected leading columns host, config_id"));
    }
    let iteration_at = header
        .iter()
        .position(|c| c == "iteration")
        .ok_or_else(|| bad("missing iteration column"))?;
    let dims = header[2..iteration_at].to_vec();
    let expected_tail = &TRAILING_COLUMNS[..TRAILING_COLUMNS.len() - 1];
    for (offset, expected) in expected_tail.iter().enumerate() {
        match header.get(iteration_at + offset) {
            Some(found) if found == expected => {}
            other => {
                return Err(bad(&format!(
                    "expected column {expected:?} at position {}, found {other:?}",
                    iteration_at + offset
                )))
            }
        }
    }
    let extras = header[iteration_at + expected_tail.len()..].to_vec();
    Ok((dims, extras))
}

/// Reads a measurement CSV back into records plus the dimension names the
/// header declares.
pub fn load_records(
    path: &Path,
) -> Result<(Vec<MeasurementRecord>, Vec<String>), OrchestratorError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| OrchestratorError::Csv(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| OrchestratorError::Csv(e.to_string()))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (dims, extras) = split_header(&header)?;
    let iteration_at = 2 + dims.len();

    let mut records = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let row_number = index + 2; // 1-based, counting the header line
        let row = row.map_err(|e| OrchestratorError::MalformedRow {
            row: row_number,
            message: e.to_string(),
        })?;
        let field = |i: usize| row.get(i).unwrap_or_default().to_string();
        let malformed = |message: String| OrchestratorError::MalformedRow {
            row: row_number,
            message,
        };

        let status = match field(iteration_at + 1).as_str() {
            "ok" => RunStatus::Ok,
            "failed" => RunStatus::Failed,
            other => return Err(malformed(format!("unknown status {other:?}"))),
        };
        let parse_opt_f64 = |i: usize, name: &str| -> Result<Option<f64>, OrchestratorError> {
            let text = field(i);
            if text.is_empty() {
                Ok(None)
            } else {
                text.parse()
                    .map(Some)
                    .map_err(|e| malformed(format!("bad {name}: {e}")))
            }
        };
        let joules = parse_opt_f64(iteration_at + 3, "joules")?;
        let runtime_s = parse_opt_f64(iteration_at + 4, "runtime_s")?;
        if status == RunStatus::Ok {
            if joules.is_none() {
                return Err(malformed("status ok but joules missing".into()));
            }
            if runtime_s.is_none() {
                return Err(malformed("status ok but runtime_s missing".into()));
            }
        }
        let parse_u64 = |i: usize, name: &str| -> Result<u64, OrchestratorError> {
            field(i)
                .parse()
                .map_err(|e| malformed(format!("bad {name}: {e}")))
        };

        let reason_text = field(iteration_at + 2);
        records.push(MeasurementRecord {
            host: field(0),
            config_id: field(1),
            dimensions: dims
                .iter()
                .enumerate()
                .map(|(i, name)| (name.clone(), field(2 + i)))
                .collect(),
            iteration: field(iteration_at)
                .parse()
                .map_err(|e| malformed(format!("bad iteration: {e}")))?,
            status,
            reason: if reason_text.is_empty() {
                None
            } else {
                Some(reason_text)
            },
            joules,
            runtime_s,
            counts: MethodCounts {
                get: parse_u64(iteration_at + 5, "get")?,
                post: parse_u64(iteration_at + 6, "post")?,
                put: parse_u64(iteration_at + 7, "put")?,
                delete: parse_u64(iteration_at + 8, "delete")?,
            },
            errors: parse_u64(iteration_at + 9, "errors")?,
            started_at: field(iteration_at + 10),
            extra: extras
                .iter()
                .enumerate()
                .map(|(i, name)| (name.clone(), field(iteration_at + 11 + i)))
                .collect(),
        });
    }
    Ok((records, dims))
}
