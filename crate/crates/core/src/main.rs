use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mgpu_memsim::batch::{self, parse_range};
use mgpu_memsim::config::{Mode, SystemConfig};
use mgpu_memsim::engine::simulate;
use mgpu_memsim::error::{ConfigError, Error, ReportError};
use mgpu_memsim::report::{Comparison, StatsReport};
use mgpu_memsim::workload::{bundled_suite, Workload, WorkloadSpec};

/// Multi-GPU memory hierarchy simulator.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file overriding configuration defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra overrides, `key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed for randomized workload generators.
    #[arg(long, env = "MGPU_MEMSIM_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one workload in one mode.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<Mode>,
        /// Generator spec (e.g. `sgemm:n=256,dist=L0R100`) or trace path.
        #[arg(long)]
        workload: String,
    },
    /// Run workloads under several modes and report speedups.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "tsm,rdma,um")]
        modes: Vec<Mode>,
        #[arg(long, default_value = "rdma")]
        baseline: Mode,
        /// Repeatable. Defaults to the bundled suite.
        #[arg(long)]
        workload: Vec<String>,
    },
    /// Vary one configuration key or generator parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `key=a,b,c`, `key=lo..hi:step` or `key=lo..hi*factor`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', default_value = "tsm,rdma,um")]
        modes: Vec<Mode>,
        #[arg(long, default_value = "rdma")]
        baseline: Mode,
        #[arg(long)]
        workload: String,
    },
    /// Write a generated workload as a text trace.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workload: String,
        /// Trace file to write.
        #[arg(long)]
        file: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<SystemConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => SystemConfig::from_file(p)?,
        None => SystemConfig::default(),
    };
    for kv in &c.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Parse(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn parse_spec(s: &str) -> Result<WorkloadSpec, Error> {
    s.parse::<WorkloadSpec>()
        .map_err(|e| Error::Trace(mgpu_memsim::error::TraceError::Spec(e)))
}

fn build(spec: &str, cfg: &SystemConfig, seed: u64) -> Result<Workload, Error> {
    Ok(parse_spec(spec)?.build(cfg, seed)?)
}

fn mkdir(p: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(p).map_err(|source| {
        Error::Report(ReportError::Io {
            path: p.to_path_buf(),
            source,
        })
    })
}

fn print_comparison(c: &Comparison) {
    println!("{:<60} {:>5} {:>16} {:>9}", "workload", "mode", "time (ns)", "speedup");
    for r in &c.rows {
        println!(
            "{:<60} {:>5} {:>16.1} {:>8.3}x",
            r.workload,
            r.mode,
            r.sim_time_ps as f64 / 1e3,
            r.speedup
        );
    }
    println!();
    println!("speedup over {} (arithmetic / geometric mean):", c.baseline);
    for s in &c.summary {
        println!("  {:<5} {:>8.3}x {:>8.3}x", s.mode, s.arithmetic_mean, s.geometric_mean);
    }
    println!();
    println!("reference only, not comparable: published averages for a cycle-level");
    println!("simulator on a different benchmark set were tsm 3.9x over rdma and 8.2x over um.");
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Simulate { common, mode, workload } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let work = build(&workload, &cfg, common.seed)?;
            let cfg = cfg.validate()?;
            let stats = simulate(&cfg, &work)?;
            let report = StatsReport::new(&cfg, &work, stats);
            report.write_dir(&common.out)?;
            let c = &report.stats.counters;
            println!("mode {} workload {}", report.mode, report.workload);
            println!("sim time        {:.1} ns", report.stats.sim_time_ps as f64 / 1e3);
            println!("remote accesses {}", c.remote_accesses);
            println!("off-chip bytes  {}", c.bytes_on_offchip_links);
            println!("page faults     {} (migrations {})", c.page_faults, c.migrations);
            println!("fingerprint     {}", report.fingerprint);
            println!("wrote {}", common.out.display());
        }
        Cmd::Compare {
            common,
            modes,
            baseline,
            workload,
        } => {
            let cfg = load_config(&common)?;
            let specs = if workload.is_empty() {
                bundled_suite()
            } else {
                workload.iter().map(|s| parse_spec(s)).collect::<Result<_, _>>()?
            };
            let works = specs
                .iter()
                .map(|s| s.build(&cfg, common.seed))
                .collect::<Result<Vec<_>, _>>()?;
            let c = batch::compare(&cfg, &works, &modes, baseline)?;
            c.write_dir(&common.out)?;
            print_comparison(&c);
            println!("wrote {}", common.out.display());
        }
        Cmd::Sweep {
            common,
            param,
            modes,
            baseline,
            workload,
        } => {
            let cfg = load_config(&common)?;
            let (key, range) = param
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse(format!("--param expects key=range, got `{param}`")))?;
            let values = parse_range(range)?;
            let spec = parse_spec(&workload)?;
            let points = batch::sweep(&cfg, key.trim(), &values, &spec, &modes, baseline, common.seed)?;
            mkdir(&common.out)?;
            let path = common.out.join("sweep.csv");
            let csv_err = |source| {
                Error::Report(ReportError::Csv {
                    path: path.clone(),
                    source,
                })
            };
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(["param", "value", "workload", "mode", "sim_time_ps", "speedup"])
                .map_err(csv_err)?;
            for p in &points {
                println!("{} = {}", p.param, p.value);
                for r in &p.comparison.rows {
                    println!(
                        "  {:<5} {:>16.1} ns {:>8.3}x",
                        r.mode,
                        r.sim_time_ps as f64 / 1e3,
                        r.speedup
                    );
                    w.write_record([
                        p.param.clone(),
                        p.value.clone(),
                        r.workload.clone(),
                        r.mode.to_string(),
                        r.sim_time_ps.to_string(),
                        format!("{:.6}", r.speedup),
                    ])
                    .map_err(csv_err)?;
                }
            }
            w.flush().map_err(|source| {
                Error::Report(ReportError::Io {
                    path: path.clone(),
                    source,
                })
            })?;
            println!("wrote {}", path.display());
        }
        Cmd::Trace { common, workload, file } => {
            let cfg = load_config(&common)?;
            let work = build(&workload, &cfg, common.seed)?;
            work.save(&file)?;
            println!("wrote {} records to {}", work.records.len(), file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
