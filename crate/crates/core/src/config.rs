//! System parameterization.
//!
//! Every field has a default matching the reference 4-GPU machine, and every
//! field may be overridden from a flat TOML file (one key per field). Latency
//! defaults are calibration parameters: only bandwidths and geometries are
//! fixed by the machine description.

use std::fmt;
use std::ops::Deref;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::event::SimTime;

/// Memory organization being simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One physically shared main memory behind a central switch.
    Tsm,
    /// Per-GPU memories, remote data read directly over off-chip links.
    Rdma,
    /// Unified memory: first-touch placement, migration on fault.
    Um,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Tsm, Mode::Rdma, Mode::Um];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tsm => "tsm",
            Mode::Rdma => "rdma",
            Mode::Um => "um",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsm" => Ok(Mode::Tsm),
            "rdma" => Ok(Mode::Rdma),
            "um" => Ok(Mode::Um),
            other => Err(ConfigError::Invalid {
                field: "mode",
                reason: format!("unknown mode `{other}` (expected tsm, rdma or um)"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub mode: Mode,
    pub num_gpus: u32,
    pub cus_per_gpu: u32,
    pub cu_clock_ghz: f64,

    pub l1_vector_kb: u64,
    pub l1_assoc: u32,
    pub l1_count_per_gpu: u32,
    // Scalar and instruction L1s are carried for completeness; data-access
    // workloads never touch them.
    pub l1_scalar_kb: u64,
    pub l1_scalar_count_per_gpu: u32,
    pub l1i_kb: u64,
    pub l1i_count_per_gpu: u32,

    pub l2_banks_per_gpu: u32,
    pub l2_bank_kb: u64,
    pub l2_assoc: u32,

    pub dram_banks_per_gpu_share: u32,
    pub dram_bank_mb: u64,
    /// Host DRAM banks behind the CPU. Only instantiated in RDMA and UM
    /// modes; in TSM the CPU shares the main memory.
    pub cpu_dram_banks: u32,
    pub cpu_cache_kb: u64,
    pub cpu_cache_assoc: u32,

    pub l1_tlb_sets: u32,
    pub l1_tlb_ways: u32,
    pub l1_tlb_count_per_gpu: u32,
    pub l2_tlb_sets: u32,
    pub l2_tlb_ways: u32,

    pub page_size_bytes: u64,
    pub cacheline_bytes: u64,
    pub virtual_space_gb: u64,

    /// Per-direction bandwidth of every switch port link, GB/s.
    pub link_bw_gbps: f64,
    /// Per-direction bandwidth of off-chip GPU-GPU and GPU-CPU links, GB/s.
    pub offchip_bw_gbps: f64,
    /// DRAM bank service bandwidth, GB/s.
    pub dram_bw_gbps: f64,

    pub l1_hit_ns: u64,
    pub l2_hit_ns: u64,
    pub switch_hop_ns: u64,
    pub dram_access_ns: u64,
    pub offchip_hop_ns: u64,
    pub tlb_miss_ns: u64,
    pub um_fault_overhead_ns: u64,

    /// Line requests a CU (or the CPU) may have in flight at once.
    pub max_outstanding_per_cu: u32,
    /// Fixed compute cost charged before each trace record issues.
    pub compute_ns_per_record: u64,
    /// UM faults on remotely-owned pages map the page remotely instead of
    /// migrating it.
    pub um_remote_map: bool,
    /// When set, a DRAM bank is busy for its whole access latency. By
    /// default only the data occupancy serializes and the latency pipelines.
    pub dram_serialize_access: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tsm,
            num_gpus: 4,
            cus_per_gpu: 32,
            cu_clock_ghz: 1.0,
            l1_vector_kb: 16,
            l1_assoc: 4,
            l1_count_per_gpu: 32,
            l1_scalar_kb: 16,
            l1_scalar_count_per_gpu: 8,
            l1i_kb: 32,
            l1i_count_per_gpu: 8,
            l2_banks_per_gpu: 8,
            l2_bank_kb: 256,
            l2_assoc: 16,
            dram_banks_per_gpu_share: 16,
            dram_bank_mb: 512,
            cpu_dram_banks: 16,
            cpu_cache_kb: 256,
            cpu_cache_assoc: 16,
            l1_tlb_sets: 1,
            l1_tlb_ways: 32,
            l1_tlb_count_per_gpu: 48,
            l2_tlb_sets: 32,
            l2_tlb_ways: 16,
            page_size_bytes: 4096,
            cacheline_bytes: 64,
            virtual_space_gb: 64,
            link_bw_gbps: 32.0,
            offchip_bw_gbps: 32.0,
            dram_bw_gbps: 32.0,
            l1_hit_ns: 1,
            l2_hit_ns: 10,
            switch_hop_ns: 20,
            dram_access_ns: 50,
            offchip_hop_ns: 400,
            tlb_miss_ns: 200,
            um_fault_overhead_ns: 20_000,
            max_outstanding_per_cu: 8,
            compute_ns_per_record: 0,
            um_remote_map: false,
            dram_serialize_access: false,
        }
    }
}

fn gbps_to_bytes(gbps: f64) -> u64 {
    (gbps * 1e9).round() as u64
}

impl SystemConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Overrides one field by key, parsing `value` as TOML scalar (bare
    /// strings are accepted for string-valued keys such as `mode`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let Some(slot) = table.get_mut(key) else {
            return Err(ConfigError::UnknownKey(key.to_string()));
        };
        let parsed: toml::Value = match value.parse::<i64>() {
            Ok(i) => match slot {
                toml::Value::Float(_) => toml::Value::Float(i as f64),
                _ => toml::Value::Integer(i),
            },
            Err(_) => match value.parse::<f64>() {
                Ok(f) => toml::Value::Float(f),
                Err(_) => match value.parse::<bool>() {
                    Ok(b) => toml::Value::Boolean(b),
                    Err(_) => toml::Value::String(value.to_string()),
                },
            },
        };
        *slot = parsed;
        *self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid {
            field: "sweep",
            reason: format!("{key}={value}: {e}"),
        })?;
        Ok(())
    }

    /// Checks every invariant and computes derived totals.
    pub fn validate(self) -> Result<ValidConfig, ConfigError> {
        let counts: [(&'static str, u64); 21] = [
            ("num_gpus", self.num_gpus as u64),
            ("cus_per_gpu", self.cus_per_gpu as u64),
            ("l1_vector_kb", self.l1_vector_kb),
            ("l1_assoc", self.l1_assoc as u64),
            ("l1_count_per_gpu", self.l1_count_per_gpu as u64),
            ("l2_banks_per_gpu", self.l2_banks_per_gpu as u64),
            ("l2_bank_kb", self.l2_bank_kb),
            ("l2_assoc", self.l2_assoc as u64),
            ("dram_banks_per_gpu_share", self.dram_banks_per_gpu_share as u64),
            ("dram_bank_mb", self.dram_bank_mb),
            ("cpu_dram_banks", self.cpu_dram_banks as u64),
            ("cpu_cache_kb", self.cpu_cache_kb),
            ("cpu_cache_assoc", self.cpu_cache_assoc as u64),
            ("l1_tlb_sets", self.l1_tlb_sets as u64),
            ("l1_tlb_ways", self.l1_tlb_ways as u64),
            ("l2_tlb_sets", self.l2_tlb_sets as u64),
            ("l2_tlb_ways", self.l2_tlb_ways as u64),
            ("page_size_bytes", self.page_size_bytes),
            ("cacheline_bytes", self.cacheline_bytes),
            ("virtual_space_gb", self.virtual_space_gb),
            ("max_outstanding_per_cu", self.max_outstanding_per_cu as u64),
        ];
        if let Some((field, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::ZeroCount { field });
        }
        for (field, bw) in [
            ("cu_clock_ghz", self.cu_clock_ghz),
            ("link_bw_gbps", self.link_bw_gbps),
            ("offchip_bw_gbps", self.offchip_bw_gbps),
            ("dram_bw_gbps", self.dram_bw_gbps),
        ] {
            if !(bw.is_finite() && bw > 0.0) || gbps_to_bytes(bw) == 0 {
                return Err(ConfigError::ZeroBandwidth { field });
            }
        }
        if !self.page_size_bytes.is_power_of_two() {
            return Err(ConfigError::PageSizeNotPowerOfTwo(self.page_size_bytes));
        }
        if !self.cacheline_bytes.is_power_of_two() || self.cacheline_bytes > self.page_size_bytes {
            return Err(ConfigError::Invalid {
                field: "cacheline_bytes",
                reason: "line size must be a power of two no larger than a page".into(),
            });
        }
        let bank_bytes = self.dram_bank_mb << 20;
        if !bank_bytes.is_multiple_of(self.page_size_bytes) {
            return Err(ConfigError::Invalid {
                field: "page_size_bytes",
                reason: "page size must divide the bank capacity".into(),
            });
        }
        for (field, kb, assoc) in [
            ("l1_vector_kb", self.l1_vector_kb, self.l1_assoc),
            ("l2_bank_kb", self.l2_bank_kb, self.l2_assoc),
            ("cpu_cache_kb", self.cpu_cache_kb, self.cpu_cache_assoc),
        ] {
            let way_bytes = assoc as u64 * self.cacheline_bytes;
            let cap = kb << 10;
            if cap % way_bytes != 0 || !(cap / way_bytes).is_power_of_two() {
                return Err(ConfigError::Invalid {
                    field,
                    reason: "capacity / (associativity x line) must be a power of two".into(),
                });
            }
        }
        for (field, sets) in [("l1_tlb_sets", self.l1_tlb_sets), ("l2_tlb_sets", self.l2_tlb_sets)] {
            if !sets.is_power_of_two() {
                return Err(ConfigError::Invalid {
                    field,
                    reason: "set count must be a power of two".into(),
                });
            }
        }

        let gpu_banks = self.num_gpus as u64 * self.dram_banks_per_gpu_share as u64;
        let link_bw = gbps_to_bytes(self.link_bw_gbps);
        let derived = Derived {
            bank_bytes,
            frames_per_bank: bank_bytes / self.page_size_bytes,
            total_mm_bytes: gpu_banks * bank_bytes,
            host_mem_bytes: match self.mode {
                Mode::Tsm => 0,
                Mode::Rdma | Mode::Um => self.cpu_dram_banks as u64 * bank_bytes,
            },
            aggregate_l2_mm_bw: self.num_gpus as u64 * self.l2_banks_per_gpu as u64 * link_bw,
            link_bw,
            offchip_bw: gbps_to_bytes(self.offchip_bw_gbps),
            dram_bw: gbps_to_bytes(self.dram_bw_gbps),
            cycle: SimTime(((1000.0 / self.cu_clock_ghz).ceil() as u64).max(1)),
            virtual_space_bytes: self.virtual_space_gb << 30,
        };
        Ok(ValidConfig { cfg: self, derived })
    }
}

/// Quantities computed once from a validated configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derived {
    pub bank_bytes: u64,
    pub frames_per_bank: u64,
    /// Main memory behind the GPUs (the shared memory in TSM).
    pub total_mm_bytes: u64,
    /// Host memory behind the CPU; zero in TSM mode.
    pub host_mem_bytes: u64,
    /// Sum of L2-side switch port bandwidth over all GPUs, bytes/s.
    pub aggregate_l2_mm_bw: u64,
    pub link_bw: u64,
    pub offchip_bw: u64,
    pub dram_bw: u64,
    pub cycle: SimTime,
    pub virtual_space_bytes: u64,
}

impl Derived {
    /// Capacity of every DRAM bank instantiated in this mode.
    pub fn total_capacity_bytes(&self) -> u64 {
        self.total_mm_bytes + self.host_mem_bytes
    }
}

/// A configuration that passed [`SystemConfig::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValidConfig {
    cfg: SystemConfig,
    pub derived: Derived,
}

impl ValidConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.cfg.mode
    }

    pub fn with_mode(&self, mode: Mode) -> ValidConfig {
        self.cfg
            .clone()
            .with_mode(mode)
            .validate()
            .expect("mode change keeps a config valid")
    }

    pub fn ns(&self, ns: u64) -> SimTime {
        SimTime::from_ns(ns)
    }
}

impl Deref for ValidConfig {
    type Target = SystemConfig;
    fn deref(&self) -> &SystemConfig {
        &self.cfg
    }
}
