//! Workloads: the trace format and the bundled generators.
//!
//! A [`WorkloadSpec`] names a workload on the command line:
//!
//! ```text
//! sgemm:n=256,tile=16,dist=L0R100
//! dnn:alg=memcpy,w=1M
//! synthetic:local=0.5,accesses=100000,bytes=64,writes=0,region=8M
//! stream:bytes=256K,record=256
//! trace:path/to/file.trace      (or any other string, taken as a path)
//! ```
//!
//! Sizes accept `K`, `M` and `G` suffixes (powers of 1024).

pub mod dnn;
pub mod sgemm;
pub mod synthetic;
pub mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use dnn::{gen_dnn_wu, DnnAlgorithm, DnnSpec};
pub use sgemm::{gen_sgemm, Distribution, SgemmSpec};
pub use synthetic::{gen_stream, gen_synthetic, StreamSpec, SyntheticSpec};
pub use trace::{load_trace, parse_trace, Op, Placement, Requester, TraceRecord, Workload};

use crate::config::SystemConfig;
use crate::error::TraceError;

#[derive(Clone, Debug, PartialEq)]
pub enum WorkloadSpec {
    Sgemm {
        n: u64,
        tile: u64,
        dist: Distribution,
    },
    Dnn {
        alg: DnnAlgorithm,
        weight_bytes: u64,
    },
    Synthetic {
        local_fraction: f64,
        accesses: u64,
        access_bytes: u64,
        write_fraction: f64,
        region_bytes: u64,
    },
    Stream {
        bytes_per_cu: u64,
        record_bytes: u64,
    },
    Trace(PathBuf),
}

pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, shift) = match s.chars().last() {
        Some('K' | 'k') => (&s[..s.len() - 1], 10),
        Some('M' | 'm') => (&s[..s.len() - 1], 20),
        Some('G' | 'g') => (&s[..s.len() - 1], 30),
        _ => (s, 0),
    };
    let v: u64 = digits.parse().map_err(|_| format!("bad size `{s}`"))?;
    v.checked_mul(1 << shift).ok_or_else(|| format!("size `{s}` overflows"))
}

fn args(body: &str) -> Result<BTreeMap<String, String>, String> {
    body.split(',')
        .filter(|kv| !kv.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
            Ok((k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

struct Args(BTreeMap<String, String>);

impl Args {
    fn take<T>(
        &mut self,
        key: &str,
        default: Option<T>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, String> {
        match self.0.remove(key) {
            Some(v) => parse(&v).map_err(|e| format!("{key}: {e}")),
            None => default.ok_or_else(|| format!("missing `{key}`")),
        }
    }

    fn finish(self) -> Result<(), String> {
        match self.0.keys().next() {
            Some(k) => Err(format!("unknown parameter `{k}`")),
            None => Ok(()),
        }
    }
}

fn num<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

impl FromStr for WorkloadSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let Some((kind, body)) = s.split_once(':') else {
            return Ok(WorkloadSpec::Trace(PathBuf::from(s)));
        };
        let mut a = Args(args(body)?);
        let spec = match kind.to_ascii_lowercase().as_str() {
            "sgemm" => WorkloadSpec::Sgemm {
                n: a.take("n", None, num)?,
                tile: a.take("tile", Some(16), num)?,
                dist: a.take("dist", Some(Distribution::L100R0), |v| v.parse())?,
            },
            "dnn" => WorkloadSpec::Dnn {
                alg: a.take("alg", None, |v| v.parse())?,
                weight_bytes: a.take("w", Some(1 << 20), parse_size)?,
            },
            "synthetic" => WorkloadSpec::Synthetic {
                local_fraction: a.take("local", None, num)?,
                accesses: a.take("accesses", Some(100_000), num)?,
                access_bytes: a.take("bytes", Some(64), parse_size)?,
                write_fraction: a.take("writes", Some(0.0), num)?,
                region_bytes: a.take("region", Some(8 << 20), parse_size)?,
            },
            "stream" => WorkloadSpec::Stream {
                bytes_per_cu: a.take("bytes", Some(256 << 10), parse_size)?,
                record_bytes: a.take("record", Some(256), parse_size)?,
            },
            "trace" => return Ok(WorkloadSpec::Trace(PathBuf::from(body))),
            // a path that happens to contain a colon
            _ => return Ok(WorkloadSpec::Trace(PathBuf::from(s))),
        };
        a.finish()?;
        Ok(spec)
    }
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadSpec::Sgemm { n, tile, dist } => write!(f, "sgemm:n={n},tile={tile},dist={dist}"),
            WorkloadSpec::Dnn { alg, weight_bytes } => write!(f, "dnn:alg={alg},w={weight_bytes}"),
            WorkloadSpec::Synthetic {
                local_fraction,
                accesses,
                access_bytes,
                write_fraction,
                region_bytes,
            } => write!(
                f,
                "synthetic:local={local_fraction},accesses={accesses},bytes={access_bytes},writes={write_fraction},region={region_bytes}"
            ),
            WorkloadSpec::Stream { bytes_per_cu, record_bytes } => {
                write!(f, "stream:bytes={bytes_per_cu},record={record_bytes}")
            }
            WorkloadSpec::Trace(p) => write!(f, "trace:{}", p.display()),
        }
    }
}

impl WorkloadSpec {
    /// Returns a copy with generator parameter `key` set to `value`.
    pub fn with_param(&self, key: &str, value: &str) -> Result<WorkloadSpec, String> {
        let text = self.to_string();
        let (kind, body) = text.split_once(':').expect("generator specs carry a kind");
        if kind == "trace" {
            return Err("trace workloads have no parameters".into());
        }
        let mut kv = args(body)?;
        let key = key.to_ascii_lowercase();
        if !kv.contains_key(&key) {
            return Err(format!("{kind} has no parameter `{key}`"));
        }
        kv.insert(key, value.to_string());
        let body: Vec<String> = kv.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{kind}:{}", body.join(",")).parse()
    }

    /// Generates (or loads) the workload for a machine. `seed` drives the
    /// randomized generators and is recorded on the result.
    pub fn build(&self, cfg: &SystemConfig, seed: u64) -> Result<Workload, TraceError> {
        let page_size = cfg.page_size_bytes;
        let mut w = match self {
            WorkloadSpec::Sgemm { n, tile, dist } => gen_sgemm(&SgemmSpec {
                cus: cfg.cus_per_gpu,
                page_size,
                ..SgemmSpec::new(*n, *tile, *dist)
            }),
            WorkloadSpec::Dnn { alg, weight_bytes } => gen_dnn_wu(&DnnSpec {
                cus: cfg.cus_per_gpu,
                page_size,
                ..DnnSpec::new(*alg, *weight_bytes)
            }),
            WorkloadSpec::Synthetic {
                local_fraction,
                accesses,
                access_bytes,
                write_fraction,
                region_bytes,
            } => gen_synthetic(&SyntheticSpec {
                cus_per_gpu: cfg.cus_per_gpu,
                access_bytes: *access_bytes,
                write_fraction: *write_fraction,
                region_bytes: *region_bytes,
                ..SyntheticSpec::new(cfg.num_gpus, *local_fraction, *accesses, seed)
            }),
            WorkloadSpec::Stream {
                bytes_per_cu,
                record_bytes,
            } => gen_stream(&StreamSpec {
                num_gpus: cfg.num_gpus,
                cus_per_gpu: cfg.cus_per_gpu,
                bytes_per_cu: *bytes_per_cu,
                record_bytes: *record_bytes,
            }),
            WorkloadSpec::Trace(path) => return load_trace(path),
        }
        .map_err(TraceError::Spec)?;
        w.seed = seed;
        w.name = self.to_string();
        Ok(w)
    }
}

/// The standard comparison suite: every SGEMM distribution, every DNN
/// weight-update variant and a local-heavy and a remote-heavy mix.
pub fn bundled_suite() -> Vec<WorkloadSpec> {
    let mut v: Vec<WorkloadSpec> = Distribution::ALL
        .into_iter()
        .map(|dist| WorkloadSpec::Sgemm { n: 256, tile: 16, dist })
        .collect();
    v.extend(DnnAlgorithm::ALL.into_iter().map(|alg| WorkloadSpec::Dnn {
        alg,
        weight_bytes: 1 << 20,
    }));
    for local_fraction in [0.9, 0.25] {
        v.push(WorkloadSpec::Synthetic {
            local_fraction,
            accesses: 50_000,
            access_bytes: 64,
            write_fraction: 0.1,
            region_bytes: 8 << 20,
        });
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_strings_round_trip() {
        for spec in bundled_suite().into_iter().chain([WorkloadSpec::Stream {
            bytes_per_cu: 4096,
            record_bytes: 256,
        }]) {
            let text = spec.to_string();
            assert_eq!(text.parse::<WorkloadSpec>().unwrap(), spec, "{text}");
        }
    }

    #[test]
    fn parameter_override() {
        let s: WorkloadSpec = "sgemm:n=64,tile=16".parse().unwrap();
        assert_eq!(
            s.with_param("n", "128").unwrap(),
            WorkloadSpec::Sgemm {
                n: 128,
                tile: 16,
                dist: Distribution::L100R0
            }
        );
        assert!(s.with_param("w", "1").is_err());
        assert!(WorkloadSpec::Trace("x".into()).with_param("n", "1").is_err());
    }

    #[test]
    fn defaults_and_suffixes() {
        assert_eq!(
            "dnn:alg=p2p,w=4M".parse::<WorkloadSpec>().unwrap(),
            WorkloadSpec::Dnn {
                alg: DnnAlgorithm::P2PDirect,
                weight_bytes: 4 << 20
            }
        );
        assert_eq!(
            "sgemm:n=64".parse::<WorkloadSpec>().unwrap(),
            WorkloadSpec::Sgemm {
                n: 64,
                tile: 16,
                dist: Distribution::L100R0
            }
        );
        assert_eq!(
            "foo.trace".parse::<WorkloadSpec>().unwrap(),
            WorkloadSpec::Trace("foo.trace".into())
        );
        assert!("sgemm:n=64,bogus=1".parse::<WorkloadSpec>().is_err());
        assert!("dnn:w=1M".parse::<WorkloadSpec>().is_err());
        assert_eq!(parse_size("2G").unwrap(), 2 << 30);
    }

    #[test]
    fn build_records_seed_and_name() {
        let cfg = SystemConfig::default();
        let spec: WorkloadSpec = "synthetic:local=0.5,accesses=10".parse().unwrap();
        let w = spec.build(&cfg, 42).unwrap();
        assert_eq!(w.seed, 42);
        assert_eq!(w.records.len(), 10);
        assert_eq!(w.name, spec.to_string());
        assert!(matches!(
            "sgemm:n=100,tile=16".parse::<WorkloadSpec>().unwrap().build(&cfg, 0),
            Err(TraceError::Spec(_))
        ));
    }
}
