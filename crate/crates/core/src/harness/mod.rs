//! Run orchestration behind the `fpart` command line.

pub mod cli;
pub mod config;
pub mod export;
pub mod record;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::partition::{constrain, FeasibleSpec, SharingSpec};
use crate::search::{baseline_feasible, run_search_streaming, BaselineKind, EvalRecord, Role, SamplerConfig, SearchConfig};
use crate::synthesis::{synthesize_with, SynthesisOptions};

pub use config::{EvaluatorChoice, EvaluatorKind, Mode, Options, RunConfig};
pub use export::{build_tables, write_tables, Tables};
pub use record::{read_records, RecordFile, RecordHeader, RecordWriter, RunRecord};

struct Clock(Option<Instant>);

impl Clock {
    fn new(enabled: bool) -> Self {
        Clock(enabled.then(Instant::now))
    }

    fn millis(&self) -> Option<u64> {
        self.0.map(|t| t.elapsed().as_millis() as u64)
    }
}

/// Executes `cfg`. Human-readable output goes to `out`, warnings to `warn`.
/// Record files are flushed after every batch, so on error the records
/// written so far remain valid.
pub fn run(cfg: &RunConfig, out: &mut dyn Write, warn: &mut dyn Write) -> Result<()> {
    match cfg.mode {
        Mode::Constrain => {
            let raw = read_spec(cfg)?;
            emit(cfg, out, &constrain(&raw).to_string())
        }
        Mode::Synthesize => {
            let target = FeasibleSpec::new(read_spec(cfg)?).map_err(|e| match e {
                Error::Infeasible { .. } => Error::Config(format!("{e}; run `constrain` on the spec first")),
                other => other,
            })?;
            let opts = SynthesisOptions {
                seed: cfg.seed,
                ..SynthesisOptions::default()
            };
            let report = synthesize_with(&target, cfg.n_channels, &opts)?;
            emit(cfg, out, &report.to_string())
        }
        Mode::Sample | Mode::Es => run_search_mode(cfg, out),
        Mode::Baseline => run_baselines(cfg, out),
        Mode::Eval => run_eval(cfg, out),
        Mode::Export => {
            let tables = build_tables(&cfg.inputs)?;
            for (path, line, reason) in &tables.skipped {
                writeln!(warn, "warning: {}:{line}: skipped corrupt record ({reason})", path.display())?;
            }
            let dir = cfg.out.as_deref().ok_or_else(|| Error::Config("`export` requires --out".into()))?;
            write_tables(&tables, dir)?;
            writeln!(out, "scatter_rows\t{}", tables.scatter_rows)?;
            writeln!(out, "trajectory_rows\t{}", tables.trajectory_rows)?;
            writeln!(out, "per_task_rows\t{}", tables.per_task_rows)?;
            writeln!(out, "skipped\t{}", tables.skipped.len())?;
            Ok(())
        }
    }
}

fn read_spec(cfg: &RunConfig) -> Result<SharingSpec> {
    let path = cfg.spec.as_deref().ok_or_else(|| Error::Config(format!("`{}` requires --spec", cfg.mode)))?;
    let spec: SharingSpec = std::fs::read_to_string(path)?.parse()?;
    if let Some(n) = cfg.n_tasks {
        if n != spec.n_tasks() {
            return Err(Error::TaskMismatch {
                left: n,
                right: spec.n_tasks(),
            });
        }
    }
    Ok(spec)
}

fn emit(cfg: &RunConfig, out: &mut dyn Write, text: &str) -> Result<()> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn open_records(cfg: &RunConfig, path: &Path, evaluator: &dyn Evaluator, n_tasks: usize) -> Result<RecordWriter<std::io::BufWriter<std::fs::File>>> {
    RecordWriter::create(path, &RecordHeader::new(cfg.mode.name(), evaluator.id(), n_tasks, cfg.seed))
}

fn run_search_mode(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let n = cfg.n_tasks.ok_or_else(|| Error::Config(format!("`{}` requires --tasks", cfg.mode)))?;
    let path = cfg.out.as_deref().ok_or_else(|| Error::Config(format!("`{}` requires --out", cfg.mode)))?;
    let evaluator = cfg.evaluator.build(n, cfg.n_channels)?;
    let search = if cfg.mode == Mode::Sample {
        SearchConfig::Random(SamplerConfig {
            n_samples: cfg.n_samples,
            usage_range: cfg.usage_range,
            seed: cfg.seed,
        })
    } else {
        SearchConfig::Es(cfg.es.clone())
    };
    let mut writer = open_records(cfg, path, &*evaluator, n)?;
    let clock = Clock::new(cfg.timing);
    let run = run_search_streaming(n, search, &*evaluator, |batch: &[EvalRecord]| {
        let ms = clock.millis();
        let records: Vec<RunRecord> = batch.iter().map(|r| RunRecord::from_eval(r, ms)).collect();
        writer.append(&records)
    })?;

    writeln!(out, "mode\t{}", cfg.mode)?;
    writeln!(out, "evaluator\t{}", evaluator.id())?;
    writeln!(out, "evaluations\t{}", run.history().len())?;
    if let Some(best) = run.best() {
        writeln!(out, "best_step\t{}", best.index)?;
        writeln!(out, "best_score\t{}", best.report.aggregate)?;
        writeln!(out, "best_avg_usage\t{}", best.avg_usage)?;
        write!(out, "best_spec\n{}", best.feasible)?;
    }
    if let Some(center) = run.center() {
        write!(out, "final_center\n{}", constrain(center))?;
    }
    Ok(())
}

/// Kinds in the canonical table order, without duplicates.
fn table_order(kinds: &[BaselineKind]) -> Vec<BaselineKind> {
    BaselineKind::ALL.into_iter().filter(|k| kinds.contains(k)).collect()
}

fn run_baselines(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let n = cfg.n_tasks.ok_or_else(|| Error::Config("`baseline` requires --tasks".into()))?;
    let evaluator = cfg.evaluator.build(n, cfg.n_channels)?;
    let mut writer = match &cfg.out {
        Some(path) => Some(open_records(cfg, path, &*evaluator, n)?),
        None => None,
    };
    let clock = Clock::new(cfg.timing);

    let task_cols: Vec<String> = (0..n).map(|t| format!("task_{t}")).collect();
    writeln!(out, "partitioning\tavg_usage\taggregate\t{}", task_cols.join("\t"))?;
    for (i, kind) in table_order(&cfg.baselines).into_iter().enumerate() {
        let feasible = baseline_feasible(kind, n)?;
        let report = evaluator.evaluate(&feasible)?;
        let scores: Vec<String> = report.per_task_scores.iter().map(|s| format!("{s:.6}")).collect();
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{}",
            kind.label(),
            feasible.avg_usage(),
            report.aggregate,
            scores.join("\t")
        )?;
        if let Some(w) = writer.as_mut() {
            w.append(&[RunRecord {
                step: i,
                iteration: i,
                role: Role::Baseline,
                direction: None,
                raw: feasible.as_sharing().clone(),
                avg_usage: feasible.avg_usage(),
                feasible,
                per_task_scores: report.per_task_scores,
                aggregate: report.aggregate,
                synthesis_median_error: report.synthesis_median_error,
                wall_millis: clock.millis(),
            }])?;
        }
    }
    Ok(())
}

fn run_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let raw = read_spec(cfg)?;
    let n = raw.n_tasks();
    let evaluator = cfg.evaluator.build(n, cfg.n_channels)?;
    let mut writer = match &cfg.out {
        Some(path) => Some(open_records(cfg, path, &*evaluator, n)?),
        None => None,
    };
    let clock = Clock::new(cfg.timing);
    let feasible = constrain(&raw);
    let report = evaluator.evaluate(&feasible)?;

    writeln!(out, "evaluator\t{}", evaluator.id())?;
    writeln!(out, "aggregate\t{}", report.aggregate)?;
    writeln!(out, "avg_usage\t{}", report.avg_usage)?;
    for (t, s) in report.per_task_scores.iter().enumerate() {
        writeln!(out, "task_{t}\t{s}")?;
    }
    if let Some(e) = report.synthesis_median_error {
        writeln!(out, "synthesis_median_error\t{e}")?;
    }
    if let Some(w) = writer.as_mut() {
        w.append(&[RunRecord {
            step: 0,
            iteration: 0,
            role: Role::Single,
            direction: None,
            raw,
            avg_usage: feasible.avg_usage(),
            feasible,
            per_task_scores: report.per_task_scores,
            aggregate: report.aggregate,
            synthesis_median_error: report.synthesis_median_error,
            wall_millis: clock.millis(),
        }])?;
    }
    Ok(())
}
