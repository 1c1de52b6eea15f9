//! CSV and JSON writers. Floats are printed with 17 significant digits so
//! files round-trip exactly and diff byte-for-byte between identical runs.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::analysis::{self, DescentReport, RunMetrics};
use crate::dynamics::{CrossingEvent, RunOutput, SimConfig, TrajectoryRecord};
use crate::scenario::{Artifact, Scenario};

pub const TRAJECTORY_HEADER: &str = "t,x,y,psi,r,theta,r_dot,omega,xhat1,xhat2,inside_Ca";
pub const EVENTS_HEADER: &str = "kind,t,x,y,r";
pub const LYAPUNOV_HEADER: &str = "t,value,derivative_estimate";

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv(mut w: impl Write, records: &[TrajectoryRecord]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in records {
        let nums = [
            r.t, r.state.x, r.state.y, r.state.psi, r.r, r.theta, r.r_dot, r.omega, r.xhat1, r.xhat2,
        ];
        for v in nums {
            write!(w, "{},", fmt_f64(v))?;
        }
        writeln!(w, "{}", u8::from(r.inside_ca))?;
    }
    w.flush()
}

pub fn write_events_csv(mut w: impl Write, events: &[CrossingEvent]) -> io::Result<()> {
    writeln!(w, "{EVENTS_HEADER}")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{}",
            e.kind.as_str(),
            fmt_f64(e.time),
            fmt_f64(e.state_at_event.x),
            fmt_f64(e.state_at_event.y),
            fmt_f64(e.r)
        )?;
    }
    w.flush()
}

pub fn write_lyapunov_csv(mut w: impl Write, report: &DescentReport) -> io::Result<()> {
    writeln!(w, "{LYAPUNOV_HEADER}")?;
    for s in &report.samples {
        writeln!(
            w,
            "{},{},{}",
            fmt_f64(s.t),
            fmt_f64(s.value),
            fmt_f64(s.derivative_estimate)
        )?;
    }
    w.flush()
}

pub fn write_json<T: serde::Serialize>(mut w: impl Write, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

/// `<prefix>_<suffix>`, e.g. `out/orbit_trajectory.csv`.
pub fn artifact_path(prefix: &Path, artifact: Artifact) -> PathBuf {
    let mut name = prefix.file_name().map_or_else(Default::default, |n| n.to_os_string());
    name.push("_");
    name.push(artifact.file_suffix());
    prefix.with_file_name(name)
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes every artifact the scenario asks for under `prefix` and returns
/// the paths written. The certificate is skipped when no estimator runs.
pub fn write_artifacts(
    scenario: &Scenario,
    config: &SimConfig,
    run: &RunOutput,
    metrics: &RunMetrics,
    prefix: &Path,
) -> io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &artifact in &scenario.emit {
        let path = artifact_path(prefix, artifact);
        match artifact {
            Artifact::TrajectoryCsv => write_trajectory_csv(create(&path)?, &run.records)?,
            Artifact::EventsCsv => write_events_csv(create(&path)?, &run.events)?,
            Artifact::MetricsJson => write_json(create(&path)?, metrics)?,
            Artifact::LyapunovCsv => {
                let report = analysis::check_lyapunov_descent(&run.records, &config.guidance);
                write_lyapunov_csv(create(&path)?, &report)?
            }
            Artifact::CertificateJson => match &config.estimator {
                Some(est) => write_json(
                    create(&path)?,
                    &analysis::estimator_certificate(&config.guidance, est),
                )?,
                None => continue,
            },
        }
        written.push(path);
    }
    Ok(written)
}
