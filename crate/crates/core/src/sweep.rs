//! Parameter sweeps over a scenario grid on a bounded worker pool.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::analysis::{compute_metrics, RunMetrics};
use crate::dynamics::{run, GainPolicy};
use crate::output::fmt_f64;
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub result: Result<RunMetrics, String>,
}

/// Runs one grid point to completion.
pub fn run_point(scenario: &Scenario, overrides: &[(String, f64)], policy: GainPolicy) -> Result<RunMetrics, String> {
    let pairs: Vec<(&str, f64)> = overrides.iter().map(|(p, v)| (p.as_str(), *v)).collect();
    let point = scenario.with_values(&pairs).map_err(|e| e.to_string())?;
    let config = point.sim_config().map_err(|e| e.to_string())?;
    let out = run(&config, policy).map_err(|e| e.to_string())?;
    Ok(compute_metrics(&out, &config, point.settling_band))
}

/// Runs every grid point with at most `parallelism` workers. Rows come back
/// in grid order whatever the execution order.
pub fn run_sweep(
    scenario: &Scenario,
    policy: GainPolicy,
    parallelism: usize,
) -> Result<Vec<SweepRow>, ScenarioError> {
    if scenario.sweep.is_empty() {
        return Err(ScenarioError::Validation(vec!["scenario has no sweep grid".into()]));
    }
    let grid = scenario.grid();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ScenarioError::Validation(vec![format!("worker pool: {e}")]))?;
    Ok(pool.install(|| {
        grid.into_par_iter()
            .enumerate()
            .map(|(index, values)| SweepRow {
                index,
                result: run_point(scenario, &values, policy),
                values,
            })
            .collect()
    }))
}

const METRIC_COLUMNS: &str = "status,settling_time_to_band,final_radius_error,max_abs_omega,num_Ca_entries,estimator_convergence_time,settled_mean_radius,error";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, fmt_f64)
}

/// One header row, then one row per grid point. Failed points keep their
/// axis values, leave the metrics empty and carry the message.
pub fn write_sweep_csv(mut w: impl Write, scenario: &Scenario, rows: &[SweepRow]) -> io::Result<()> {
    write!(w, "index,")?;
    for axis in &scenario.sweep {
        write!(w, "{},", axis.path)?;
    }
    writeln!(w, "{METRIC_COLUMNS}")?;
    for row in rows {
        write!(w, "{},", row.index)?;
        for (_, v) in &row.values {
            write!(w, "{},", fmt_f64(*v))?;
        }
        match &row.result {
            Ok(m) => writeln!(
                w,
                "ok,{},{},{},{},{},{},",
                opt(m.settling_time_to_band),
                fmt_f64(m.final_radius_error),
                fmt_f64(m.max_abs_omega),
                m.num_ca_entries,
                opt(m.estimator_convergence_time),
                fmt_f64(m.settled_mean_radius),
            )?,
            Err(e) => {
                let msg = e.replace(['\n', '"'], " ");
                writeln!(w, "error,,,,,,,\"{}\"", msg.trim())?
            }
        }
    }
    w.flush()
}
