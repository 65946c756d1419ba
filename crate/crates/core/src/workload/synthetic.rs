//! Seeded access mixes.
//!
//! `gen_synthetic`: every GPU owns a region placed in its memory. Each access
//! picks its own region with probability `local_fraction`, otherwise a
//! uniformly chosen other GPU's region.
//!
//! `gen_stream`: every CU reads a disjoint contiguous range once, which keeps
//! every line a cold miss. Used to saturate the L2 to memory network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::{Requester, TraceRecord, Workload};
use crate::topology::Owner;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_gpus: u32,
    pub cus_per_gpu: u32,
    pub local_fraction: f64,
    pub accesses: u64,
    /// Bytes per access; addresses are aligned to it.
    pub access_bytes: u64,
    pub write_fraction: f64,
    pub region_bytes: u64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(num_gpus: u32, local_fraction: f64, accesses: u64, seed: u64) -> Self {
        Self {
            num_gpus,
            cus_per_gpu: 32,
            local_fraction,
            accesses,
            access_bytes: 64,
            write_fraction: 0.0,
            region_bytes: 8 << 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.num_gpus == 0 || self.cus_per_gpu == 0 || self.access_bytes == 0 {
            return Err("synthetic: GPU count, CU count and access size must be nonzero".into());
        }
        if !(0.0..=1.0).contains(&self.local_fraction) || !(0.0..=1.0).contains(&self.write_fraction) {
            return Err("synthetic: fractions must lie in [0, 1]".into());
        }
        if self.region_bytes < self.access_bytes {
            return Err("synthetic: region smaller than one access".into());
        }
        Ok(())
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Workload, String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = Workload::new(format!(
        "synthetic-l{}-n{}-s{}",
        spec.local_fraction, spec.accesses, spec.access_bytes
    ));
    w.seed = spec.seed;
    for g in 0..spec.num_gpus {
        w.place(Owner::Gpu(g), g as u64 * spec.region_bytes, spec.region_bytes);
    }
    let slots = spec.region_bytes / spec.access_bytes;
    let n = spec.num_gpus as u64;
    for i in 0..spec.accesses {
        let gpu = (i % n) as u32;
        let cu = ((i / n) % spec.cus_per_gpu as u64) as u32;
        let target = if n == 1 || rng.random_bool(spec.local_fraction) {
            gpu
        } else {
            // uniform over the other GPUs
            let k = rng.random_range(0..spec.num_gpus - 1);
            if k >= gpu {
                k + 1
            } else {
                k
            }
        };
        let addr = target as u64 * spec.region_bytes + rng.random_range(0..slots) * spec.access_bytes;
        let dev = Requester::Cu { gpu, cu };
        let rec = if rng.random_bool(spec.write_fraction) {
            TraceRecord::write(dev, addr, spec.access_bytes)
        } else {
            TraceRecord::read(dev, addr, spec.access_bytes)
        };
        w.push(rec);
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub num_gpus: u32,
    pub cus_per_gpu: u32,
    pub bytes_per_cu: u64,
    pub record_bytes: u64,
}

pub fn gen_stream(spec: &StreamSpec) -> Result<Workload, String> {
    if spec.num_gpus == 0 || spec.cus_per_gpu == 0 || spec.bytes_per_cu == 0 || spec.record_bytes == 0 {
        return Err("stream: every parameter must be nonzero".into());
    }
    let mut w = Workload::new(format!(
        "stream-{}x{}",
        spec.bytes_per_cu,
        spec.num_gpus * spec.cus_per_gpu
    ));
    let per_record = spec.record_bytes.min(spec.bytes_per_cu);
    let steps = spec.bytes_per_cu.div_ceil(per_record);
    for s in 0..steps {
        for g in 0..spec.num_gpus {
            for c in 0..spec.cus_per_gpu {
                let base = (g as u64 * spec.cus_per_gpu as u64 + c as u64) * spec.bytes_per_cu;
                let off = s * per_record;
                let len = per_record.min(spec.bytes_per_cu - off);
                w.push(TraceRecord::read(Requester::Cu { gpu: g, cu: c }, base + off, len));
            }
        }
    }
    Ok(w)
}
