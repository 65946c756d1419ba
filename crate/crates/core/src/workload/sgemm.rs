//! Tiled single-precision matrix multiply, `C += A * B`, issued by one GPU.
//!
//! Each output tile goes to one CU (round robin). A CU reads its C tile,
//! streams the matching row panel of A and column panel of B one tile at a
//! time, then writes the C tile back. Matrices are row-major and page
//! aligned; placement directives put each matrix on the issuing GPU or on
//! its neighbour according to the distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::trace::{Requester, TraceRecord, Workload};
use crate::topology::Owner;

/// Which matrices live on the neighbouring GPU.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Distribution {
    /// A, B and C local.
    L100R0,
    /// C remote.
    L67R33,
    /// B and C remote.
    L33R67,
    /// Everything remote.
    L0R100,
}

impl Distribution {
    pub const ALL: [Distribution; 4] = [Self::L100R0, Self::L67R33, Self::L33R67, Self::L0R100];

    /// Remote flags for A, B, C.
    fn remote(self) -> [bool; 3] {
        match self {
            Self::L100R0 => [false, false, false],
            Self::L67R33 => [false, false, true],
            Self::L33R67 => [false, true, true],
            Self::L0R100 => [true, true, true],
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Distribution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|d| d.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown distribution `{s}` (L100R0, L67R33, L33R67, L0R100)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgemmSpec {
    pub n: u64,
    pub tile: u64,
    pub element_bytes: u64,
    pub distribution: Distribution,
    /// CUs of GPU 0 that share the output tiles.
    pub cus: u32,
    /// Alignment of each matrix base.
    pub page_size: u64,
}

impl SgemmSpec {
    pub fn new(n: u64, tile: u64, distribution: Distribution) -> Self {
        Self {
            n,
            tile,
            element_bytes: 4,
            distribution,
            cus: 32,
            page_size: 4096,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n == 0 || self.tile == 0 || self.element_bytes == 0 || self.cus == 0 {
            return Err("sgemm: n, tile, element size and CU count must be nonzero".into());
        }
        if !self.n.is_multiple_of(self.tile) {
            return Err(format!("sgemm: tile {} does not divide n {}", self.tile, self.n));
        }
        if !self.page_size.is_power_of_two() {
            return Err("sgemm: page size must be a power of two".into());
        }
        Ok(())
    }

    pub fn matrix_bytes(&self) -> u64 {
        self.n * self.n * self.element_bytes
    }

    /// Base addresses of A, B and C.
    pub fn bases(&self) -> [u64; 3] {
        let stride = self.matrix_bytes().div_ceil(self.page_size) * self.page_size;
        [0, stride, 2 * stride]
    }

    /// Closed-form byte counts: A and B reads, then C reads plus writes.
    pub fn expected_bytes(&self) -> (u64, u64) {
        let eb = self.element_bytes;
        (2 * self.n.pow(3) / self.tile * eb, 2 * self.n * self.n * eb)
    }
}

pub fn gen_sgemm(spec: &SgemmSpec) -> Result<Workload, String> {
    spec.validate()?;
    let SgemmSpec {
        n,
        tile,
        element_bytes: eb,
        ..
    } = *spec;
    let nt = n / tile;
    let [a, b, c] = spec.bases();
    let mut w = Workload::new(format!("sgemm-n{n}-t{tile}-{}", spec.distribution));
    for (base, remote) in [a, b, c].into_iter().zip(spec.distribution.remote()) {
        let owner = if remote { Owner::Gpu(1) } else { Owner::Gpu(0) };
        w.place(owner, base, spec.matrix_bytes());
    }
    let row = tile * eb;
    let at = |base: u64, r: u64, col: u64| base + (r * n + col) * eb;
    for t in 0..nt * nt {
        let (i, j) = (t / nt, t % nt);
        let dev = Requester::Cu {
            gpu: 0,
            cu: (t % spec.cus as u64) as u32,
        };
        for r in 0..tile {
            w.push(TraceRecord::read(dev, at(c, i * tile + r, j * tile), row));
        }
        for k in 0..nt {
            for r in 0..tile {
                w.push(TraceRecord::read(dev, at(a, i * tile + r, k * tile), row));
            }
            for r in 0..tile {
                w.push(TraceRecord::read(dev, at(b, k * tile + r, j * tile), row));
            }
        }
        for r in 0..tile {
            w.push(TraceRecord::write(dev, at(c, i * tile + r, j * tile), row));
        }
    }
    Ok(w)
}
