//! Newline-delimited JSON record files: one header line, then one
//! [`RunRecord`] per evaluation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{FeasibleSpec, SharingSpec};
use crate::search::{EvalRecord, Role};

pub const SCHEMA: &str = "feature-partition/records";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub schema: String,
    pub version: u32,
    pub mode: String,
    pub evaluator: String,
    pub n_tasks: usize,
    pub seed: u64,
}

impl RecordHeader {
    pub fn new(mode: &str, evaluator: &str, n_tasks: usize, seed: u64) -> Self {
        RecordHeader {
            schema: SCHEMA.into(),
            version: SCHEMA_VERSION,
            mode: mode.into(),
            evaluator: evaluator.into(),
            n_tasks,
            seed,
        }
    }
}

/// One evaluation as persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Evaluation index; strictly increasing within a file.
    pub step: usize,
    /// ES iteration (0 for the starting center) or sample number.
    pub iteration: usize,
    pub role: Role,
    pub direction: Option<usize>,
    pub raw: SharingSpec,
    pub feasible: FeasibleSpec,
    pub per_task_scores: Vec<f64>,
    pub aggregate: f64,
    pub avg_usage: f64,
    pub synthesis_median_error: Option<f64>,
    pub wall_millis: Option<u64>,
}

impl RunRecord {
    pub fn from_eval(r: &EvalRecord, wall_millis: Option<u64>) -> Self {
        RunRecord {
            step: r.index,
            iteration: r.step,
            role: r.role,
            direction: r.direction,
            raw: r.raw.clone(),
            feasible: r.feasible.clone(),
            per_task_scores: r.report.per_task_scores.clone(),
            aggregate: r.report.aggregate,
            avg_usage: r.avg_usage,
            synthesis_median_error: r.report.synthesis_median_error,
            wall_millis,
        }
    }
}

/// Append-only writer. Every [`RecordWriter::append`] ends with a flush so a
/// crashed run leaves a valid prefix behind.
pub struct RecordWriter<W: Write> {
    out: W,
    last_step: Option<usize>,
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &RecordHeader) -> Result<Self> {
        RecordWriter::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut out: W, header: &RecordHeader) -> Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(RecordWriter { out, last_step: None })
    }

    pub fn append(&mut self, records: &[RunRecord]) -> Result<()> {
        for r in records {
            if self.last_step.is_some_and(|s| r.step <= s) {
                return Err(Error::Config(format!("record step {} does not increase", r.step)));
            }
            serde_json::to_writer(&mut self.out, r)?;
            self.out.write_all(b"\n")?;
            self.last_step = Some(r.step);
        }
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// A line that could not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordFile {
    pub header: Option<RecordHeader>,
    pub records: Vec<RunRecord>,
    pub skipped: Vec<SkippedLine>,
}

/// Reads a record file, skipping corrupt lines instead of failing.
pub fn read_records(path: &Path) -> Result<RecordFile> {
    parse_records(BufReader::new(File::open(path)?))
}

pub fn parse_records<R: BufRead>(input: R) -> Result<RecordFile> {
    let mut file = RecordFile::default();
    let mut seen_content = false;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if let Ok(header) = serde_json::from_str::<RecordHeader>(&line) {
                if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
                    return Err(Error::Config(format!(
                        "unsupported record schema {} v{}",
                        header.schema, header.version
                    )));
                }
                file.header = Some(header);
                continue;
            }
        }
        match serde_json::from_str::<RunRecord>(&line) {
            Ok(r) => {
                if file.records.last().is_some_and(|prev| r.step <= prev.step) {
                    file.skipped.push(SkippedLine {
                        line: lineno,
                        reason: format!("step {} does not increase", r.step),
                    });
                } else {
                    file.records.push(r);
                }
            }
            Err(e) => file.skipped.push(SkippedLine {
                line: lineno,
                reason: e.to_string(),
            }),
        }
    }
    Ok(file)
}
