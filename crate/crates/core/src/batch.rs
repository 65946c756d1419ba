//! Many independent simulations at once: mode comparisons and parameter
//! sweeps. With the `parallel` feature (on by default) runs are spread over
//! a rayon thread pool; without it they run one after another. Results are
//! identical either way.

use serde::{Deserialize, Serialize};

use crate::config::{Mode, SystemConfig, ValidConfig};
use crate::engine::simulate;
use crate::error::{ConfigError, Error, SimError};
use crate::report::{Comparison, StatsReport};
use crate::workload::{Workload, WorkloadSpec};

/// One simulation to run.
#[derive(Clone, Copy)]
pub struct Job<'a> {
    pub cfg: &'a ValidConfig,
    pub workload: &'a Workload,
}

fn run_one(job: &Job) -> Result<StatsReport, SimError> {
    let stats = simulate(job.cfg, job.workload)?;
    Ok(StatsReport::new(job.cfg, job.workload, stats))
}

/// Runs every job on the calling thread, in order.
pub fn run_jobs_sequential(jobs: &[Job]) -> Vec<Result<StatsReport, SimError>> {
    jobs.iter().map(run_one).collect()
}

/// Runs every job, in parallel when the `parallel` feature is enabled.
/// Output order matches input order.
pub fn run_jobs(jobs: &[Job]) -> Vec<Result<StatsReport, SimError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(run_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_jobs_sequential(jobs)
    }
}

fn mode_list(modes: &[Mode], baseline: Mode) -> Vec<Mode> {
    let mut v = modes.to_vec();
    if !v.contains(&baseline) {
        v.push(baseline);
    }
    v.sort();
    v.dedup();
    v
}

/// Runs every workload under every mode (plus the baseline) and computes
/// speedups against the baseline.
pub fn compare(
    base: &SystemConfig,
    workloads: &[Workload],
    modes: &[Mode],
    baseline: Mode,
) -> Result<Comparison, Error> {
    let modes = mode_list(modes, baseline);
    let cfgs = modes
        .iter()
        .map(|&m| base.clone().with_mode(m).validate())
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<Job> = workloads
        .iter()
        .flat_map(|w| cfgs.iter().map(move |cfg| Job { cfg, workload: w }))
        .collect();
    let reports = run_jobs(&jobs).into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison::from_reports(reports, baseline))
}

/// Expands `a,b,c`, `lo..hi:step` (inclusive, additive) or `lo..hi*k`
/// (inclusive, multiplicative) into its values.
pub fn parse_range(text: &str) -> Result<Vec<String>, ConfigError> {
    let bad = |reason: &str| ConfigError::Invalid {
        field: "sweep",
        reason: format!("`{text}`: {reason}"),
    };
    let Some((lo, rest)) = text.split_once("..") else {
        return Ok(text
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect());
    };
    let (hi, step, mul) = if let Some((hi, k)) = rest.split_once('*') {
        (hi, k, true)
    } else if let Some((hi, k)) = rest.split_once(':') {
        (hi, k, false)
    } else {
        (rest, "1", false)
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad("bounds and step must be numbers"))
    };
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if (mul && step <= 1.0) || (!mul && step <= 0.0) || hi < lo {
        return Err(bad("range does not advance"));
    }
    let mut out = Vec::new();
    let mut v = lo;
    while v <= hi * (1.0 + 1e-12) {
        out.push(if v.fract() == 0.0 {
            format!("{}", v as i64)
        } else {
            format!("{v}")
        });
        v = if mul { v * step } else { v + step };
        if out.len() > 10_000 {
            return Err(bad("more than 10000 points"));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: String,
    pub value: String,
    pub comparison: Comparison,
}

/// Varies one parameter. `key` may name a configuration field or a
/// generator parameter of `spec`.
pub fn sweep(
    base: &SystemConfig,
    key: &str,
    values: &[String],
    spec: &WorkloadSpec,
    modes: &[Mode],
    baseline: Mode,
    seed: u64,
) -> Result<Vec<SweepPoint>, Error> {
    let modes = mode_list(modes, baseline);
    let is_config_key = base
        .clone()
        .set(key, &values.first().cloned().unwrap_or_default())
        .is_ok()
        || matches!(spec, WorkloadSpec::Trace(_));
    let mut points = Vec::new();
    for v in values {
        let (cfg, spec) = if is_config_key {
            let mut c = base.clone();
            c.set(key, v)?;
            (c, spec.clone())
        } else {
            let s = spec.with_param(key, v).map_err(|e| ConfigError::Invalid {
                field: "sweep",
                reason: e,
            })?;
            (base.clone(), s)
        };
        let cfgs = modes
            .iter()
            .map(|&m| cfg.clone().with_mode(m).validate())
            .collect::<Result<Vec<_>, _>>()?;
        let work = spec.build(&cfg, seed)?;
        points.push((v.clone(), cfgs, work));
    }
    let jobs: Vec<Job> = points
        .iter()
        .flat_map(|(_, cfgs, w)| cfgs.iter().map(move |cfg| Job { cfg, workload: w }))
        .collect();
    let mut reports = run_jobs(&jobs).into_iter();
    let mut out = Vec::new();
    for (value, cfgs, _) in &points {
        let chunk = reports.by_ref().take(cfgs.len()).collect::<Result<Vec<_>, _>>()?;
        out.push(SweepPoint {
            param: key.to_string(),
            value: value.clone(),
            comparison: Comparison::from_reports(chunk, baseline),
        });
    }
    Ok(out)
}
