//! Data-parallel training step on two GPUs, reduced to its weight-update
//! traffic. Each variant moves the same weight volume `W`; they differ in
//! where buffers live and in how many explicit copies they make.
//!
//! Buffers are `W` bytes, page aligned, and split into chunks that the
//! issuing GPU's CUs process in round-robin order. Copies are a `C` read of
//! the source chunk followed by a dependent write of the destination chunk,
//! both issued by the destination GPU.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trace::{Requester, TraceRecord, Workload};
use crate::topology::Owner;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DnnAlgorithm {
    /// Private weight and gradient copies moved with explicit memcpys.
    Memcpy,
    /// One weight copy on GPU 0; GPU 1 reads it and its gradients directly.
    P2PDirect,
    /// Weights stay in host memory, nothing is copied.
    SharedMm,
}

impl DnnAlgorithm {
    pub const ALL: [DnnAlgorithm; 3] = [Self::Memcpy, Self::P2PDirect, Self::SharedMm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Memcpy => "memcpy",
            Self::P2PDirect => "p2p",
            Self::SharedMm => "shared",
        }
    }
}

impl fmt::Display for DnnAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DnnAlgorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "memcpy" => Ok(Self::Memcpy),
            "p2p" | "p2pdirect" => Ok(Self::P2PDirect),
            "shared" | "sharedmm" => Ok(Self::SharedMm),
            _ => Err(format!("unknown dnn algorithm `{s}` (memcpy, p2p, shared)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnnSpec {
    pub algorithm: DnnAlgorithm,
    pub weight_bytes: u64,
    pub chunk_bytes: u64,
    /// CUs per GPU that share each buffer pass.
    pub cus: u32,
    pub page_size: u64,
}

impl DnnSpec {
    pub fn new(algorithm: DnnAlgorithm, weight_bytes: u64) -> Self {
        Self {
            algorithm,
            weight_bytes,
            chunk_bytes: 4096,
            cus: 32,
            page_size: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.weight_bytes == 0 || self.chunk_bytes == 0 || self.cus == 0 {
            return Err("dnn: weight size, chunk size and CU count must be nonzero".into());
        }
        if !self.page_size.is_power_of_two() {
            return Err("dnn: page size must be a power of two".into());
        }
        Ok(())
    }

    /// Explicit copy volume one step makes.
    pub fn expected_copy_bytes(&self) -> u64 {
        match self.algorithm {
            DnnAlgorithm::Memcpy => 4 * self.weight_bytes,
            DnnAlgorithm::P2PDirect => self.weight_bytes,
            DnnAlgorithm::SharedMm => 0,
        }
    }
}

const CPU: Owner = Owner::Cpu;
const G0: Owner = Owner::Gpu(0);
const G1: Owner = Owner::Gpu(1);

struct Builder<'a> {
    spec: &'a DnnSpec,
    w: Workload,
    stride: u64,
    next_base: u64,
    phase_open: bool,
}

impl<'a> Builder<'a> {
    fn buffer(&mut self, owner: Owner) -> u64 {
        let base = self.next_base;
        self.next_base += self.stride;
        self.w.place(owner, base, self.spec.weight_bytes);
        base
    }

    fn phase(&mut self, name: &str) {
        if self.phase_open {
            self.w.push(TraceRecord::barrier());
        }
        self.phase_open = true;
        self.w.phase_names.push(name.to_string());
    }

    fn chunks(&self) -> impl Iterator<Item = (u32, u64, u64)> + '_ {
        let (total, chunk, cus) = (self.spec.weight_bytes, self.spec.chunk_bytes, self.spec.cus as u64);
        (0..total.div_ceil(chunk)).map(move |i| ((i % cus) as u32, i * chunk, chunk.min(total - i * chunk)))
    }

    fn dev(gpu: Owner, cu: u32) -> Requester {
        match gpu {
            Owner::Gpu(g) => Requester::Cu { gpu: g, cu },
            _ => unreachable!("only GPUs issue dnn records"),
        }
    }

    fn read(&mut self, gpu: Owner, buf: u64) {
        let recs: Vec<_> = self
            .chunks()
            .map(|(cu, off, len)| TraceRecord::read(Self::dev(gpu, cu), buf + off, len))
            .collect();
        self.w.records.extend(recs);
    }

    fn write(&mut self, gpu: Owner, buf: u64) {
        let recs: Vec<_> = self
            .chunks()
            .map(|(cu, off, len)| TraceRecord::write(Self::dev(gpu, cu), buf + off, len))
            .collect();
        self.w.records.extend(recs);
    }

    /// Copy `src` into `dst`, issued by `gpu`.
    fn copy(&mut self, gpu: Owner, src: u64, dst: u64) {
        let chunks: Vec<_> = self.chunks().collect();
        for (cu, off, len) in chunks {
            let d = Self::dev(gpu, cu);
            let marker = self.w.push(TraceRecord::copy(d, src + off, len));
            self.w.push(TraceRecord::write(d, dst + off, len).after(marker));
        }
    }
}

pub fn gen_dnn_wu(spec: &DnnSpec) -> Result<Workload, String> {
    spec.validate()?;
    let mut b = Builder {
        spec,
        w: Workload::new(format!("dnn-{}-w{}", spec.algorithm, spec.weight_bytes)),
        stride: spec.weight_bytes.div_ceil(spec.page_size) * spec.page_size,
        next_base: 0,
        phase_open: false,
    };
    match spec.algorithm {
        DnnAlgorithm::Memcpy => {
            let w_host = b.buffer(CPU);
            let (w0, g0, g1_copy) = (b.buffer(G0), b.buffer(G0), b.buffer(G0));
            let (w1, g1) = (b.buffer(G1), b.buffer(G1));
            b.phase("copy-in");
            b.copy(G0, w_host, w0);
            b.copy(G1, w_host, w1);
            b.phase("fp-bp");
            b.read(G0, w0);
            b.write(G0, g0);
            b.read(G1, w1);
            b.write(G1, g1);
            b.phase("grad-copy");
            b.copy(G0, g1, g1_copy);
            b.phase("wu");
            b.read(G0, g0);
            b.read(G0, g1_copy);
            b.write(G0, w0);
            b.phase("copy-back");
            b.copy(G1, w0, w1);
        }
        DnnAlgorithm::P2PDirect => {
            let w_host = b.buffer(CPU);
            let (w, g0) = (b.buffer(G0), b.buffer(G0));
            let g1 = b.buffer(G1);
            b.phase("copy-in");
            b.copy(G0, w_host, w);
            b.phase("fp-bp");
            b.read(G0, w);
            b.write(G0, g0);
            b.read(G1, w);
            b.write(G1, g1);
            b.phase("wu");
            b.read(G0, g0);
            b.read(G0, g1);
            b.write(G0, w);
        }
        DnnAlgorithm::SharedMm => {
            let w = b.buffer(CPU);
            let (g0, g1) = (b.buffer(G0), b.buffer(G1));
            b.phase("fp-bp");
            b.read(G0, w);
            b.write(G0, g0);
            b.read(G1, w);
            b.write(G1, g1);
            b.phase("wu");
            b.read(G0, g0);
            b.read(G0, g1);
            b.write(G0, w);
        }
    }
    Ok(b.w)
}
