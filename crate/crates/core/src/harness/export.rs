//! Tab-separated plot tables derived from record files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::search::Role;

use super::record::{read_records, RunRecord};

pub const SCATTER_FILE: &str = "scatter.tsv";
pub const TRAJECTORY_FILE: &str = "trajectory.tsv";
pub const PER_TASK_FILE: &str = "per_task.tsv";

/// The three tables as text, plus bookkeeping about what was read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tables {
    pub scatter: String,
    pub trajectory: String,
    pub per_task: String,
    pub scatter_rows: usize,
    pub trajectory_rows: usize,
    pub per_task_rows: usize,
    /// Corrupt lines skipped, as `(file, line, reason)`.
    pub skipped: Vec<(PathBuf, usize, String)>,
}

impl Tables {
    fn new() -> Self {
        Tables {
            scatter: "run\tstep\trole\tavg_usage\taggregate\n".into(),
            trajectory: "run\titeration\taggregate\tavg_usage\n".into(),
            per_task: "run\tstep\ttask\ttask_usage\ttask_score\tavg_usage\n".into(),
            ..Tables::default()
        }
    }

    fn add_run(&mut self, run: &str, records: &[RunRecord]) {
        for r in records {
            writeln!(self.scatter, "{run}\t{}\t{}\t{}\t{}", r.step, r.role.name(), r.avg_usage, r.aggregate).unwrap();
            self.scatter_rows += 1;
            if r.role == Role::Center {
                writeln!(self.trajectory, "{run}\t{}\t{}\t{}", r.iteration, r.aggregate, r.avg_usage).unwrap();
                self.trajectory_rows += 1;
            }
            for (t, score) in r.per_task_scores.iter().enumerate() {
                writeln!(self.per_task, "{run}\t{}\t{t}\t{}\t{score}\t{}", r.step, r.feasible.get(t, t), r.avg_usage).unwrap();
                self.per_task_rows += 1;
            }
        }
    }
}

/// Run label of a record file: its file stem.
pub fn run_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Builds all tables from `inputs`, in order. Unreadable files are errors;
/// corrupt lines inside a file are skipped and listed.
pub fn build_tables(inputs: &[PathBuf]) -> Result<Tables> {
    let mut tables = Tables::new();
    for path in inputs {
        let file = read_records(path)?;
        tables.add_run(&run_label(path), &file.records);
        tables
            .skipped
            .extend(file.skipped.into_iter().map(|s| (path.clone(), s.line, s.reason)));
    }
    Ok(tables)
}

/// Writes the three tables into `dir`, creating it if needed.
pub fn write_tables(tables: &Tables, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SCATTER_FILE), &tables.scatter)?;
    std::fs::write(dir.join(TRAJECTORY_FILE), &tables.trajectory)?;
    std::fs::write(dir.join(PER_TASK_FILE), &tables.per_task)?;
    Ok(())
}
