//! CSV and JSON artifacts. Floats carry 17 significant digits so that
//! identical runs give identical bytes.

use beso_core::functional::Problem;
use beso_core::reference::Discrepancy;
use beso_core::solver::{ExpectationReport, PathOutcome, PathRecord};
use serde::Serialize;
use std::fs::File;
use std::io::Write;
use std::path::Path;

pub const GAPS_HEADER: [&str; 7] = ["path_id", "seed", "g1", "g2", "gap", "iters", "certified"];
pub const TRAJ_HEADER: [&str; 4] = ["path_id", "t", "xi", "X"];
pub const COMPARE_HEADER: [&str; 3] = ["resolution", "discrepancy", "factor"];
pub const SWEEP_HEADER: [&str; 12] = [
    "param",
    "value",
    "n_paths",
    "accepted",
    "rejected",
    "failed",
    "all_certified",
    "mean_gap",
    "max_gap",
    "energy",
    "energy_se",
    "terminal_second_moment",
];

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> anyhow::Result<csv::Writer<File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn gap_row(r: &PathRecord) -> Vec<String> {
    let (g1, g2, gap, iters, certified) = match &r.outcome {
        PathOutcome::Solved(s) => (s.report.g1, s.report.g2, s.report.gap, s.report.iters, s.report.certified),
        _ => (f64::NAN, f64::NAN, f64::NAN, 0, false),
    };
    vec![
        r.path_id.to_string(),
        r.seed.to_string(),
        float(g1),
        float(g2),
        float(gap),
        iters.to_string(),
        certified.to_string(),
    ]
}

/// `path_id,seed,g1,g2,gap,iters,certified`; rejected or failed paths
/// have `NaN` gaps and `certified = false`.
pub fn write_gaps(path: &Path, report: &ExpectationReport) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(GAPS_HEADER)?;
    for r in &report.records {
        w.write_record(gap_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Grid coordinates of the state components; component indices for
/// Euclidean spaces.
pub fn coordinates(problem: &Problem) -> Vec<f64> {
    match problem.space.grid() {
        Some(g) => g.coords(),
        None => (0..problem.dim()).map(|i| i as f64).collect(),
    }
}

/// `path_id,t,xi,X` for every solved path, `t = t_0..t_N`.
pub fn write_trajectories(path: &Path, problem: &Problem, report: &ExpectationReport) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRAJ_HEADER)?;
    let xi = coordinates(problem);
    let t = problem.time.points();
    for r in &report.records {
        if let PathOutcome::Solved(sol) = &r.outcome {
            for (k, row) in sol.x.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    w.write_record([r.path_id.to_string(), float(t[k]), float(xi[i]), float(*v)])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_compare(path: &Path, rows: &[Discrepancy]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(COMPARE_HEADER)?;
    for r in rows {
        w.write_record([float(r.resolution), float(r.discrepancy), float(r.factor)])?;
    }
    w.flush()?;
    Ok(())
}

/// One aggregate row of a sweep.
pub fn sweep_row(param: &str, value: f64, report: &ExpectationReport) -> Vec<String> {
    vec![
        param.to_string(),
        float(value),
        report.records.len().to_string(),
        report.accepted.to_string(),
        report.rejected.to_string(),
        report.failed.to_string(),
        report.all_certified.to_string(),
        float(report.mean_gap),
        float(report.max_gap),
        float(report.energy.mean),
        float(report.energy.std_error),
        float(report.terminal_second_moment.mean),
    ]
}

pub fn write_sweep(path: &Path, rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-path gaps of every sweep value in one file:
/// `param,value,path_id,seed,g1,g2,gap,iters,certified`.
pub fn write_sweep_gaps(path: &Path, param: &str, runs: &[(f64, ExpectationReport)]) -> anyhow::Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["param", "value"];
    header.extend(GAPS_HEADER);
    w.write_record(&header)?;
    for (value, rep) in runs {
        for r in &rep.records {
            let mut row = vec![param.to_string(), float(*value)];
            row.extend(gap_row(r));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub instance: String,
    pub n_paths: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
    pub all_certified: bool,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub energy: f64,
    pub energy_se: f64,
    pub terminal_second_moment: f64,
    pub terminal_second_moment_se: f64,
    pub failures: Vec<String>,
}

impl Summary {
    pub fn new(problem: &Problem, report: &ExpectationReport) -> Self {
        let failures = report
            .records
            .iter()
            .filter_map(|r| match &r.outcome {
                PathOutcome::Failed(e) => Some(format!("path {} (seed {}): {e}", r.path_id, r.seed)),
                PathOutcome::Rejected { max_abs } => Some(format!("path {} (seed {}): rejected, |W| = {max_abs}", r.path_id, r.seed)),
                PathOutcome::Solved(s) if !s.report.certified => Some(format!("path {} (seed {}): gap {} not certified", r.path_id, r.seed, s.report.gap)),
                _ => None,
            })
            .collect();
        Self {
            instance: problem.kind.name().to_string(),
            n_paths: report.records.len(),
            accepted: report.accepted,
            rejected: report.rejected,
            failed: report.failed,
            all_certified: report.all_certified,
            mean_gap: report.mean_gap,
            max_gap: report.max_gap,
            energy: report.energy.mean,
            energy_se: report.energy.std_error,
            terminal_second_moment: report.terminal_second_moment.mean,
            terminal_second_moment_se: report.terminal_second_moment.std_error,
            failures,
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// JSON with non-finite numbers written as `null`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}
