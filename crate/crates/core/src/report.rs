//! Run reports, mode comparisons and their on-disk forms.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Mode, SystemConfig, ValidConfig};
use crate::engine::SimStats;
use crate::error::ReportError;
use crate::workload::Workload;

/// Hash identifying a run's inputs: the validated configuration, the
/// workload descriptor and the seed.
pub fn fingerprint(cfg: &ValidConfig, workload: &str, seed: u64) -> String {
    let canonical = serde_json::to_string(cfg.config()).expect("config serializes");
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    h.update(b"\n");
    h.update(workload.as_bytes());
    h.update(b"\n");
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub mode: Mode,
    pub workload: String,
    pub seed: u64,
    pub fingerprint: String,
    pub config: SystemConfig,
    #[serde(flatten)]
    pub stats: SimStats,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

impl StatsReport {
    pub fn new(cfg: &ValidConfig, work: &Workload, stats: SimStats) -> Self {
        Self {
            mode: cfg.mode(),
            workload: work.name.clone(),
            seed: work.seed,
            fingerprint: fingerprint(cfg, &work.name, work.seed),
            config: cfg.config().clone(),
            stats,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        write_json(self, path)
    }

    pub fn read_json(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text).map_err(|source| ReportError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Counter table as `name,value` rows.
    pub fn write_counters_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["counter", "value"]).map_err(csv_err(path))?;
        let counters = serde_json::to_value(&self.stats.counters).expect("counters serialize");
        w.write_record(["sim_time_ps", &self.stats.sim_time_ps.to_string()])
            .map_err(csv_err(path))?;
        for (k, v) in counters.as_object().expect("counters are a struct") {
            w.write_record([k.as_str(), &v.to_string()]).map_err(csv_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn write_phases_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        for p in &self.stats.phases {
            w.serialize(p).map_err(csv_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    pub fn write_links_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        for l in &self.stats.links {
            w.serialize(l).map_err(csv_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    /// Writes `report.json`, `counters.csv`, `phases.csv` and `links.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.write_json(&dir.join("report.json"))?;
        self.write_counters_csv(&dir.join("counters.csv"))?;
        self.write_phases_csv(&dir.join("phases.csv"))?;
        self.write_links_csv(&dir.join("links.csv"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub workload: String,
    pub mode: Mode,
    pub sim_time_ps: u64,
    /// Baseline time over this mode's time; above 1 means faster.
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub arithmetic_mean: f64,
    pub geometric_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: Mode,
    pub rows: Vec<ComparisonRow>,
    pub summary: Vec<ModeSummary>,
    pub reports: Vec<StatsReport>,
}

/// `baseline / mode`, with two empty runs counting as equal.
pub fn speedup(baseline_ps: u64, mode_ps: u64) -> f64 {
    match (baseline_ps, mode_ps) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (b, m) => b as f64 / m as f64,
    }
}

impl Comparison {
    /// Builds speedup rows from per-(workload, mode) reports. Workloads
    /// without a baseline run are skipped.
    pub fn from_reports(reports: Vec<StatsReport>, baseline: Mode) -> Self {
        let mut workloads: Vec<&str> = Vec::new();
        for r in &reports {
            if !workloads.contains(&r.workload.as_str()) {
                workloads.push(&r.workload);
            }
        }
        let mut modes: Vec<Mode> = reports.iter().map(|r| r.mode).collect();
        modes.sort();
        modes.dedup();
        let mut rows = Vec::new();
        for w in &workloads {
            let Some(base) = reports.iter().find(|r| r.workload == *w && r.mode == baseline) else {
                continue;
            };
            for &m in &modes {
                if let Some(r) = reports.iter().find(|r| r.workload == *w && r.mode == m) {
                    rows.push(ComparisonRow {
                        workload: w.to_string(),
                        mode: m,
                        sim_time_ps: r.stats.sim_time_ps,
                        speedup: speedup(base.stats.sim_time_ps, r.stats.sim_time_ps),
                    });
                }
            }
        }
        let summary = modes
            .iter()
            .map(|&m| {
                let s: Vec<f64> = rows.iter().filter(|r| r.mode == m).map(|r| r.speedup).collect();
                let n = s.len().max(1) as f64;
                ModeSummary {
                    mode: m,
                    arithmetic_mean: s.iter().sum::<f64>() / n,
                    geometric_mean: (s.iter().map(|x| x.ln()).sum::<f64>() / n).exp(),
                }
            })
            .collect();
        Self {
            baseline,
            rows,
            summary,
            reports,
        }
    }

    pub fn row(&self, workload: &str, mode: Mode) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.workload == workload && r.mode == mode)
    }

    pub fn summary_for(&self, mode: Mode) -> Option<&ModeSummary> {
        self.summary.iter().find(|s| s.mode == mode)
    }

    /// One `workload mode speedup` line per row, whitespace separated.
    pub fn plotdata(&self) -> String {
        let mut s = String::from("# workload mode speedup\n");
        for r in &self.rows {
            s.push_str(&format!("{} {} {:.6}\n", r.workload, r.mode, r.speedup));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        for r in &self.rows {
            w.serialize(r).map_err(csv_err(path))?;
        }
        w.flush().map_err(io_err(path))
    }

    /// Writes `comparison.json`, `comparison.csv` and `plotdata.txt`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_json(self, &dir.join("comparison.json"))?;
        self.write_csv(&dir.join("comparison.csv"))?;
        let path = dir.join("plotdata.txt");
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(self.plotdata().as_bytes()).map_err(io_err(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate;
    use crate::workload::{Requester, TraceRecord};

    fn report(mode: Mode, name: &str, time: u64) -> StatsReport {
        let cfg = SystemConfig::default().with_mode(mode).validate().unwrap();
        let mut w = Workload::new(name);
        w.push(TraceRecord::read(Requester::Cu { gpu: 0, cu: 0 }, 0, 64));
        let mut stats = simulate(&cfg, &w).unwrap();
        stats.sim_time_ps = time;
        StatsReport::new(&cfg, &w, stats)
    }

    #[test]
    fn json_round_trip() {
        let r = report(Mode::Um, "w", 1234);
        assert_eq!(StatsReport::from_json(&r.to_json()).unwrap(), r);
        let dir = tempfile::tempdir().unwrap();
        r.write_dir(dir.path()).unwrap();
        assert_eq!(StatsReport::read_json(&dir.path().join("report.json")).unwrap(), r);
        let counters = fs::read_to_string(dir.path().join("counters.csv")).unwrap();
        assert!(counters.starts_with("counter,value\nsim_time_ps,1234\n"));
    }

    #[test]
    fn fingerprint_tracks_inputs() {
        let cfg = SystemConfig::default().validate().unwrap();
        let a = fingerprint(&cfg, "w", 1);
        assert_eq!(a, fingerprint(&cfg, "w", 1));
        assert_ne!(a, fingerprint(&cfg, "w", 2));
        assert_ne!(a, fingerprint(&cfg, "v", 1));
        assert_ne!(a, fingerprint(&cfg.with_mode(Mode::Um), "w", 1));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn speedups_and_means() {
        let mut reports = Vec::new();
        for (w, t) in [
            ("a", [100, 400, 800]),
            ("b", [50, 100, 100]),
            ("c", [10, 10, 10]),
            ("d", [1, 4, 1]),
        ] {
            for (m, time) in Mode::ALL.into_iter().zip(t) {
                reports.push(report(m, w, time));
            }
        }
        let c = Comparison::from_reports(reports, Mode::Rdma);
        assert_eq!(c.rows.len(), 12);
        for w in ["a", "b", "c", "d"] {
            assert_eq!(c.row(w, Mode::Rdma).unwrap().speedup, 1.0);
        }
        assert_eq!(c.row("a", Mode::Tsm).unwrap().speedup, 4.0);
        let tsm = c.summary_for(Mode::Tsm).unwrap();
        assert!((tsm.arithmetic_mean - (4.0 + 2.0 + 1.0 + 4.0) / 4.0).abs() < 1e-12);
        assert!((tsm.geometric_mean - (32.0f64).powf(0.25)).abs() < 1e-12);
        let plot = c.plotdata();
        assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 12);
        assert!(plot.contains("a tsm 4.000000"));

        let dir = tempfile::tempdir().unwrap();
        c.write_dir(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("comparison.json")).unwrap();
        assert_eq!(serde_json::from_str::<Comparison>(&text).unwrap(), c);
    }

    #[test]
    fn empty_runs_compare_equal() {
        assert_eq!(speedup(0, 0), 1.0);
        assert_eq!(speedup(10, 0), f64::INFINITY);
    }
}
