//! System graph for the three memory organizations.
//!
//! Memory is grouped into *islands*: a switch, the DRAM banks behind it and
//! the requester ports in front of it. TSM has a single island holding every
//! L2 bank, every DRAM bank and the CPU port. RDMA and UM have one island per
//! GPU plus a host island for the CPU, joined pairwise by off-chip links.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{Mode, ValidConfig};
use crate::error::SimError;
use crate::event::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceId {
    Cpu,
    Gpu(u32),
    L2Bank { gpu: u32, bank: u32 },
    DramBank(u32),
    Switch(u32),
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceId::Cpu => write!(f, "CPU"),
            DeviceId::Gpu(g) => write!(f, "G{g}"),
            DeviceId::L2Bank { gpu, bank } => write!(f, "G{gpu}.L2b{bank}"),
            DeviceId::DramBank(k) => write!(f, "DRAM{k}"),
            DeviceId::Switch(s) => write!(f, "SW{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// Requester side (L2 bank or CPU) to its island switch.
    Port,
    /// Switch to DRAM bank.
    Dram,
    /// GPU-GPU or GPU-CPU link outside the package.
    OffChip,
}

/// Direction of travel over a link: from endpoint `a` to `b` or back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dir {
    AtoB,
    BtoA,
}

impl Dir {
    pub fn flip(self) -> Dir {
        match self {
            Dir::AtoB => Dir::BtoA,
            Dir::BtoA => Dir::AtoB,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Dir::AtoB => 0,
            Dir::BtoA => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkSpec {
    pub id: LinkId,
    pub kind: LinkKind,
    pub a: DeviceId,
    pub b: DeviceId,
    pub bw_bytes_per_sec: u64,
    pub hop_latency: SimTime,
}

impl LinkSpec {
    pub fn name(&self) -> String {
        format!("{}-{}", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hop {
    pub link: LinkId,
    pub dir: Dir,
}

/// Ordered list of link traversals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Path {
    pub hops: Vec<Hop>,
}

impl Path {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn reversed(&self) -> Path {
        Path {
            hops: self
                .hops
                .iter()
                .rev()
                .map(|h| Hop {
                    link: h.link,
                    dir: h.dir.flip(),
                })
                .collect(),
        }
    }

    pub fn then(mut self, other: Path) -> Path {
        self.hops.extend(other.hops);
        self
    }
}

/// Who owns an island's memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Owner {
    Gpu(u32),
    Cpu,
    /// The single shared island in TSM mode.
    Shared,
}

impl Owner {
    pub fn device(self) -> Option<DeviceId> {
        match self {
            Owner::Gpu(g) => Some(DeviceId::Gpu(g)),
            Owner::Cpu => Some(DeviceId::Cpu),
            Owner::Shared => None,
        }
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Gpu(g) => write!(f, "G{g}"),
            Owner::Cpu => write!(f, "CPU"),
            Owner::Shared => write!(f, "shared"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Island {
    pub owner: Owner,
    pub switch: DeviceId,
    /// Global DRAM bank indices behind this switch, ascending.
    pub banks: Vec<u32>,
}

/// Immutable system graph.
#[derive(Clone, Debug)]
pub struct Topology {
    mode: Mode,
    num_gpus: u32,
    l2_banks_per_gpu: u32,
    bank_bytes: u64,
    links: Vec<LinkSpec>,
    islands: Vec<Island>,
    bank_island: Vec<u32>,
    l2_port: Vec<LinkId>,
    cpu_port: LinkId,
    dram_port: Vec<LinkId>,
    offchip: BTreeMap<(DeviceId, DeviceId), LinkId>,
}

impl Topology {
    pub fn build(cfg: &ValidConfig) -> Topology {
        let n = cfg.num_gpus;
        let l2b = cfg.l2_banks_per_gpu;
        let per_gpu_banks = cfg.dram_banks_per_gpu_share;
        let d = &cfg.derived;
        let mut topo = Topology {
            mode: cfg.mode(),
            num_gpus: n,
            l2_banks_per_gpu: l2b,
            bank_bytes: d.bank_bytes,
            links: Vec::new(),
            islands: Vec::new(),
            bank_island: Vec::new(),
            l2_port: Vec::new(),
            cpu_port: LinkId(0),
            dram_port: Vec::new(),
            offchip: BTreeMap::new(),
        };
        let switch_lat = SimTime::from_ns(cfg.switch_hop_ns);
        let offchip_lat = SimTime::from_ns(cfg.offchip_hop_ns);

        match cfg.mode() {
            Mode::Tsm => {
                let sw = DeviceId::Switch(0);
                let banks: Vec<u32> = (0..n * per_gpu_banks).collect();
                topo.islands.push(Island {
                    owner: Owner::Shared,
                    switch: sw,
                    banks: banks.clone(),
                });
                for g in 0..n {
                    for b in 0..l2b {
                        let id = topo.add_link(
                            LinkKind::Port,
                            DeviceId::L2Bank { gpu: g, bank: b },
                            sw,
                            d.link_bw,
                            switch_lat,
                        );
                        topo.l2_port.push(id);
                    }
                }
                topo.cpu_port = topo.add_link(LinkKind::Port, DeviceId::Cpu, sw, d.link_bw, switch_lat);
                for k in banks {
                    let id = topo.add_link(LinkKind::Dram, sw, DeviceId::DramBank(k), d.link_bw, switch_lat);
                    topo.dram_port.push(id);
                    topo.bank_island.push(0);
                }
            }
            Mode::Rdma | Mode::Um => {
                for g in 0..n {
                    let sw = DeviceId::Switch(g);
                    let banks: Vec<u32> = (g * per_gpu_banks..(g + 1) * per_gpu_banks).collect();
                    for b in 0..l2b {
                        let id = topo.add_link(
                            LinkKind::Port,
                            DeviceId::L2Bank { gpu: g, bank: b },
                            sw,
                            d.link_bw,
                            switch_lat,
                        );
                        topo.l2_port.push(id);
                    }
                    for &k in &banks {
                        let id = topo.add_link(LinkKind::Dram, sw, DeviceId::DramBank(k), d.link_bw, switch_lat);
                        topo.dram_port.push(id);
                        topo.bank_island.push(g);
                    }
                    topo.islands.push(Island {
                        owner: Owner::Gpu(g),
                        switch: sw,
                        banks,
                    });
                }
                let host_sw = DeviceId::Switch(n);
                topo.cpu_port = topo.add_link(LinkKind::Port, DeviceId::Cpu, host_sw, d.link_bw, switch_lat);
                let first = n * per_gpu_banks;
                let banks: Vec<u32> = (first..first + cfg.cpu_dram_banks).collect();
                for &k in &banks {
                    let id = topo.add_link(LinkKind::Dram, host_sw, DeviceId::DramBank(k), d.link_bw, switch_lat);
                    topo.dram_port.push(id);
                    topo.bank_island.push(n);
                }
                topo.islands.push(Island {
                    owner: Owner::Cpu,
                    switch: host_sw,
                    banks,
                });
                for i in 0..n {
                    for j in i + 1..n {
                        let (a, b) = (DeviceId::Gpu(i), DeviceId::Gpu(j));
                        let id = topo.add_link(LinkKind::OffChip, a, b, d.offchip_bw, offchip_lat);
                        topo.offchip.insert((a, b), id);
                    }
                }
                for g in 0..n {
                    let (a, b) = (DeviceId::Gpu(g), DeviceId::Cpu);
                    let id = topo.add_link(LinkKind::OffChip, a, b, d.offchip_bw, offchip_lat);
                    // keys are ordered pairs, and Cpu sorts first
                    topo.offchip.insert((b, a), id);
                }
            }
        }
        topo
    }

    fn add_link(&mut self, kind: LinkKind, a: DeviceId, b: DeviceId, bw: u64, lat: SimTime) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        self.links.push(LinkSpec {
            id,
            kind,
            a,
            b,
            bw_bytes_per_sec: bw,
            hop_latency: lat,
        });
        id
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn num_gpus(&self) -> u32 {
        self.num_gpus
    }

    pub fn l2_banks_per_gpu(&self) -> u32 {
        self.l2_banks_per_gpu
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    /// Sum of hop latencies along `path`, ignoring serialization.
    pub fn path_latency(&self, path: &Path) -> SimTime {
        path.hops
            .iter()
            .fold(SimTime::ZERO, |t, h| t + self.link(h.link).hop_latency)
    }

    pub fn link(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.0 as usize]
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn num_banks(&self) -> u32 {
        self.bank_island.len() as u32
    }

    pub fn bank_capacity(&self, _bank: u32) -> u64 {
        self.bank_bytes
    }

    pub fn total_capacity(&self) -> u64 {
        self.num_banks() as u64 * self.bank_bytes
    }

    pub fn island_of_bank(&self, bank: u32) -> u32 {
        self.bank_island[bank as usize]
    }

    pub fn owner_of_bank(&self, bank: u32) -> Owner {
        self.islands[self.island_of_bank(bank) as usize].owner
    }

    /// Island whose memory a requester treats as local.
    pub fn home_island(&self, owner: Owner) -> u32 {
        match (self.mode, owner) {
            (Mode::Tsm, _) => 0,
            (_, Owner::Gpu(g)) => g,
            (_, Owner::Cpu) | (_, Owner::Shared) => self.num_gpus,
        }
    }

    /// Number of ports on an island's switch.
    pub fn switch_ports(&self, island: u32) -> usize {
        let sw = self.islands[island as usize].switch;
        self.links.iter().filter(|l| l.a == sw || l.b == sw).count()
    }

    pub fn offchip_link(&self, x: DeviceId, y: DeviceId) -> Option<LinkId> {
        let key = if x <= y { (x, y) } else { (y, x) };
        self.offchip.get(&key).copied()
    }

    pub fn l2_port(&self, gpu: u32, bank: u32) -> LinkId {
        self.l2_port[(gpu * self.l2_banks_per_gpu + bank) as usize]
    }

    pub fn cpu_port(&self) -> LinkId {
        self.cpu_port
    }

    pub fn dram_port(&self, bank: u32) -> LinkId {
        self.dram_port[bank as usize]
    }

    fn hop_from(&self, link: LinkId, from: DeviceId) -> Hop {
        let spec = self.link(link);
        let dir = if spec.a == from { Dir::AtoB } else { Dir::BtoA };
        Hop { link, dir }
    }

    fn owner_device(owner: Owner) -> DeviceId {
        owner.device().unwrap_or(DeviceId::Cpu)
    }

    /// Path from a memory-side entry port of `island` down to `bank`. The
    /// `l2_bank` index picks the L2 port on GPU islands.
    pub fn island_path(&self, island: u32, l2_bank: u32, bank: u32) -> Path {
        debug_assert_eq!(self.island_of_bank(bank), island);
        let isl = &self.islands[island as usize];
        let port = match isl.owner {
            Owner::Gpu(g) => self.l2_port(g, l2_bank),
            Owner::Cpu => self.cpu_port,
            Owner::Shared => unreachable!("shared island entry needs a requester port"),
        };
        Path {
            hops: vec![
                Hop {
                    link: port,
                    dir: Dir::AtoB,
                },
                Hop {
                    link: self.dram_port(bank),
                    dir: Dir::AtoB,
                },
            ],
        }
    }

    /// Canonical path from `src` to `dst`. Supported pairs are requester
    /// side (GPU, L2 bank, CPU) to DRAM bank, DRAM bank back to requester
    /// side, and device to device over an off-chip link.
    pub fn route(&self, src: DeviceId, dst: DeviceId) -> Result<Path, SimError> {
        let unroutable = || SimError::Unroutable {
            src: src.to_string(),
            dst: dst.to_string(),
        };
        if matches!(src, DeviceId::DramBank(_)) {
            if !matches!(dst, DeviceId::DramBank(_)) {
                return self.route(dst, src).map(|p| p.reversed());
            }
            return Err(unroutable());
        }
        let DeviceId::DramBank(k) = dst else {
            // device to device
            let as_device = |d: DeviceId| match d {
                DeviceId::L2Bank { gpu, .. } => DeviceId::Gpu(gpu),
                other => other,
            };
            let (x, y) = (as_device(src), as_device(dst));
            if x == y {
                return Ok(Path::default());
            }
            let link = self.offchip_link(x, y).ok_or_else(unroutable)?;
            return Ok(Path {
                hops: vec![self.hop_from(link, x)],
            });
        };
        if k >= self.num_banks() {
            return Err(unroutable());
        }
        let target_island = self.island_of_bank(k);
        let (src_owner, l2_bank) = match src {
            DeviceId::L2Bank { gpu, bank } if gpu < self.num_gpus && bank < self.l2_banks_per_gpu => {
                (Owner::Gpu(gpu), bank)
            }
            DeviceId::Gpu(g) if g < self.num_gpus => (Owner::Gpu(g), k % self.l2_banks_per_gpu),
            DeviceId::Cpu => (Owner::Cpu, k % self.l2_banks_per_gpu),
            _ => return Err(unroutable()),
        };
        if self.mode == Mode::Tsm {
            let port = match src_owner {
                Owner::Gpu(g) => self.l2_port(g, l2_bank),
                _ => self.cpu_port,
            };
            return Ok(Path {
                hops: vec![
                    Hop {
                        link: port,
                        dir: Dir::AtoB,
                    },
                    Hop {
                        link: self.dram_port(k),
                        dir: Dir::AtoB,
                    },
                ],
            });
        }
        let local = self.island_path(target_island, l2_bank, k);
        let src_island = self.home_island(src_owner);
        if src_island == target_island {
            return Ok(local);
        }
        let from = Self::owner_device(src_owner);
        let to = Self::owner_device(self.islands[target_island as usize].owner);
        let link = self.offchip_link(from, to).ok_or_else(unroutable)?;
        Ok(Path {
            hops: vec![self.hop_from(link, from)],
        }
        .then(local))
    }

    /// Graph distance in links between two devices, by breadth-first search.
    /// On-chip GPU to L2-bank connections count as zero hops.
    /// `allow_offchip = false` removes off-chip links from the graph.
    pub fn hop_distance(&self, src: DeviceId, dst: DeviceId, allow_offchip: bool) -> Option<usize> {
        let mut adj: BTreeMap<DeviceId, Vec<(DeviceId, usize)>> = BTreeMap::new();
        for l in &self.links {
            if l.kind == LinkKind::OffChip && !allow_offchip {
                continue;
            }
            adj.entry(l.a).or_default().push((l.b, 1));
            adj.entry(l.b).or_default().push((l.a, 1));
        }
        for g in 0..self.num_gpus {
            for b in 0..self.l2_banks_per_gpu {
                let l2 = DeviceId::L2Bank { gpu: g, bank: b };
                adj.entry(DeviceId::Gpu(g)).or_default().push((l2, 0));
                adj.entry(l2).or_default().push((DeviceId::Gpu(g), 0));
            }
        }
        // 0-1 BFS
        let mut dist: BTreeMap<DeviceId, usize> = BTreeMap::new();
        let mut dq = VecDeque::new();
        let mut done = HashSet::new();
        dist.insert(src, 0);
        dq.push_back(src);
        while let Some(u) = dq.pop_front() {
            if !done.insert(u) {
                continue;
            }
            let du = dist[&u];
            for &(v, w) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                let nd = du + w;
                if dist.get(&v).is_none_or(|&old| nd < old) {
                    dist.insert(v, nd);
                    if w == 0 {
                        dq.push_front(v);
                    } else {
                        dq.push_back(v);
                    }
                }
            }
        }
        dist.get(&dst).copied()
    }
}
