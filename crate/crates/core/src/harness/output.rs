use std::fs;
use std::path::{Path, PathBuf};

use super::run::ScenarioResult;
use crate::error::Result;

pub const TRACE_HEADER: [&str; 12] = [
    "run_id",
    "seed",
    "step",
    "agent_id",
    "truth_x",
    "truth_y",
    "truth_d",
    "est_x",
    "est_y",
    "est_d",
    "input_valid",
    "n_neighbors",
];

pub const AGGREGATE_HEADER: [&str; 5] = ["estimator", "topology", "radius", "metric", "value"];

/// Per-step trace of every successful seed. `est_d` is empty and
/// `input_valid` is 0 at steps without a fused input estimate.
pub fn trace_csv(result: &ScenarioResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    let run_id = result.run_id();
    for run in result.successful() {
        for r in &run.records {
            let (est_d, valid) = match &r.est_d {
                Some(d) => (d[0].to_string(), "1"),
                None => (String::new(), "0"),
            };
            w.write_record([
                run_id.clone(),
                run.seed.to_string(),
                r.step.to_string(),
                r.agent.to_string(),
                r.truth_x[0].to_string(),
                r.truth_x[1].to_string(),
                r.truth_d[0].to_string(),
                r.est_x[0].to_string(),
                r.est_x[1].to_string(),
                est_d,
                valid.to_string(),
                r.n_neighbors.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))
}

/// Seed-averaged metrics of each result, one row per metric.
pub fn aggregate_csv<'a>(results: impl IntoIterator<Item = &'a ScenarioResult>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER)?;
    for result in results {
        let radius = result
            .config
            .topology
            .radius()
            .map(|r| r.to_string())
            .unwrap_or_default();
        for (metric, value) in result.aggregate.named() {
            w.write_record([
                result.estimator.to_string(),
                result.config.topology_label(),
                radius.clone(),
                metric.to_string(),
                value.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))
}

/// File name of a result's trace: `<stem>_<estimator>[_r<radius>]_trace.csv`.
pub fn trace_file_name(stem: &str, result: &ScenarioResult) -> String {
    match result.config.topology.radius() {
        Some(r) => format!("{stem}_{}_r{r}_trace.csv", result.estimator),
        None => format!("{stem}_{}_trace.csv", result.estimator),
    }
}

/// Writes one trace per result and `<stem>_aggregate.csv` under `dir`.
pub fn write_outputs(dir: &Path, stem: &str, results: &[ScenarioResult]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for result in results {
        let path = dir.join(trace_file_name(stem, result));
        fs::write(&path, trace_csv(result)?)?;
        written.push(path);
    }
    let path = dir.join(format!("{stem}_aggregate.csv"));
    fs::write(&path, aggregate_csv(results)?)?;
    written.push(path);
    Ok(written)
}
