//! Result files. Per configuration `<label>`:
//!
//! - `fragments_<label>.csv`: `sequence,fragment,success,failure_stage,scale,ate_m,gravity_deg,parallax_px,static_path`,
//!   metric columns empty for failed fragments;
//! - `timings_<label>.csv`: `sequence,fragment` then one column per stage
//!   and `total_ms`, milliseconds;
//! - `cdf_<label>_{scale_error_pct,ate_m,gravity_deg}.csv`: `value,fraction`.
//!
//! `summary.csv` holds one row per configuration. Everything except the
//! timings is a deterministic function of the inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use csv::ReaderBuilder;

use super::bench::{BenchmarkSummary, FragmentMetrics, FragmentResult};
use super::EvalError;
use crate::init::FailureStage;

const FRAGMENT_HEADER: &str = "sequence,fragment,success,failure_stage,scale,ate_m,gravity_deg,parallax_px,static_path";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn fragments_csv(results: &[FragmentResult]) -> String {
    let mut s = format!("{FRAGMENT_HEADER}\n");
    for r in results {
        let m = r.metrics.as_ref();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.sequence,
            r.fragment_index,
            r.success,
            r.failure_stage.map(|f| f.as_str()).unwrap_or(""),
            opt(m.map(|m| m.scale)),
            opt(m.map(|m| m.ate_m)),
            opt(m.map(|m| m.gravity_deg)),
            r.parallax_px,
            r.used_static_path
        )
        .unwrap();
    }
    s
}

pub fn timings_csv(results: &[FragmentResult]) -> String {
    let mut s = String::from("sequence,fragment");
    for f in FailureStage::ALL {
        write!(s, ",{}_ms", f.as_str()).unwrap();
    }
    s.push_str(",total_ms\n");
    for r in results {
        write!(s, "{},{}", r.sequence, r.fragment_index).unwrap();
        for f in FailureStage::ALL {
            let t = r.stage_times_ms.iter().filter(|(g, _)| *g == f).fold(0.0, |a, (_, t)| a + t);
            write!(s, ",{t:.3}").unwrap();
        }
        writeln!(s, ",{:.3}", r.total_time_ms()).unwrap();
    }
    s
}

pub fn summary_csv(summaries: &[BenchmarkSummary]) -> String {
    let mut s = String::from("config,fragments,successes,success_pct,scale_error_pct,ate_m,gravity_rmse_deg\n");
    for m in summaries {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            m.label,
            m.fragments,
            m.successes,
            m.success_rate_pct,
            opt(m.mean_scale_error_pct),
            opt(m.mean_ate_m),
            opt(m.gravity_rmse_deg)
        )
        .unwrap();
    }
    s
}

pub fn cdf_csv(cdf: &[(f64, f64)]) -> String {
    let mut s = String::from("value,fraction\n");
    for (v, f) in cdf {
        writeln!(s, "{v},{f}").unwrap();
    }
    s
}

/// Writes the fragment, timing and CDF files of one configuration.
pub fn write_config_outputs(
    dir: &Path,
    results: &[FragmentResult],
    summary: &BenchmarkSummary,
) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::Io(e.to_string()))?;
    let label = &summary.label;
    let files = [
        (format!("fragments_{label}.csv"), fragments_csv(results)),
        (format!("timings_{label}.csv"), timings_csv(results)),
        (format!("cdf_{label}_scale_error_pct.csv"), cdf_csv(&summary.scale_error_cdf)),
        (format!("cdf_{label}_ate_m.csv"), cdf_csv(&summary.ate_cdf)),
        (format!("cdf_{label}_gravity_deg.csv"), cdf_csv(&summary.gravity_cdf)),
    ];
    for (name, body) in files {
        fs::write(dir.join(name), body).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn write_summary(dir: &Path, summaries: &[BenchmarkSummary]) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(|e| EvalError::Io(e.to_string()))?;
    fs::write(dir.join("summary.csv"), summary_csv(summaries)).map_err(|e| EvalError::Io(e.to_string()))
}

/// Reads a `fragments_<label>.csv` back; timings are not restored.
pub fn read_fragments_csv(path: &Path) -> Result<Vec<FragmentResult>, EvalError> {
    let mut rdr =
        ReaderBuilder::new().from_path(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| EvalError::Io(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != FRAGMENT_HEADER {
        return Err(EvalError::Io(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = || EvalError::Io(format!("{}: malformed row {}", path.display(), i + 2));
        let rec = rec.map_err(|_| bad())?;
        let num = |k: usize| -> Result<Option<f64>, EvalError> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                rec[k].parse().map(Some).map_err(|_| bad())
            }
        };
        let success: bool = rec[2].parse().map_err(|_| bad())?;
        let failure_stage = if rec[3].is_empty() { None } else { Some(FailureStage::parse(&rec[3]).ok_or_else(bad)?) };
        let metrics = match (num(4)?, num(5)?, num(6)?) {
            (Some(scale), Some(ate_m), Some(gravity_deg)) => Some(FragmentMetrics { scale, ate_m, gravity_deg }),
            (None, None, None) => None,
            _ => return Err(bad()),
        };
        if metrics.is_some() != success {
            return Err(bad());
        }
        out.push(FragmentResult {
            sequence: rec[0].to_string(),
            fragment_index: rec[1].parse().map_err(|_| bad())?,
            success,
            failure_stage,
            metrics,
            parallax_px: num(7)?.ok_or_else(bad)?,
            used_static_path: rec[8].parse().map_err(|_| bad())?,
            stage_times_ms: Vec::new(),
        });
    }
    Ok(out)
}
