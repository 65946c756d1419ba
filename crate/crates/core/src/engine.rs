//! The timed simulation.
//!
//! Records are split into cache-line requests. Each CU (and the CPU) issues
//! its records in trace order, at most one line per cycle and at most
//! `max_outstanding_per_cu` lines in flight. A record whose dependency has
//! not completed, or which lies past a barrier that has not cleared, holds
//! its issuer.
//!
//! A line request walks: TLB, translation (placing or migrating the page),
//! the issuer's L1, the home L2 bank, and finally the DRAM bank. Only the
//! data leg moves bytes over links: reads bring a full line back to the
//! requester, writes carry their bytes to the home L2 (or to memory when
//! the home has no L2). Read requests travel the same links without a
//! payload: they pay each hop's latency but never occupy a link. Writes are
//! posted and complete on arrival.
//!
//! The home L2 is the requester's own L2 in TSM mode (memory is equidistant)
//! and the memory owner's L2 otherwise, so remote data in RDMA and UM modes
//! is served by the remote GPU and cached locally only in L1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cache::{Access, Cache, CacheGeometry, Rw, Tlb, TlbGeometry, WritePolicy};
use crate::config::{Mode, ValidConfig};
use crate::dram::DramBank;
use crate::error::SimError;
use crate::event::{run_to_completion, ComponentId, Dispatch, Event, EventQueue, SimTime};
use crate::interconnect::{Interconnect, LinkUsage};
use crate::paging::{Location, PageTable, Translation};
use crate::topology::{DeviceId, Hop, LinkKind, Owner, Topology};
use crate::workload::{Op, Requester, Workload};

/// Whole-run counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub records_completed: u64,
    pub lines_issued: u64,
    pub lines_completed: u64,
    pub bytes_issued: u64,
    pub copy_bytes: u64,
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub l2_hits: u64,
    pub l2_misses: u64,
    pub tlb_misses: u64,
    pub dram_accesses: u64,
    /// Line requests whose translation resolved to another device's memory.
    pub remote_accesses: u64,
    pub page_faults: u64,
    pub migrations: u64,
    pub pages_placed: u64,
    pub writebacks: u64,
    pub bytes_on_offchip_links: u64,
    /// Port and DRAM links inside switch islands.
    pub bytes_on_switch_links: u64,
    /// Bytes crossing the L2-side switch ports, both directions.
    pub bytes_l2_to_mm: u64,
}

/// Statistics for one barrier-delimited phase.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub name: String,
    pub start_ps: u64,
    pub end_ps: u64,
    pub records: u64,
    pub bytes_issued: u64,
    pub copy_bytes: u64,
    pub offchip_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub sim_time_ps: u64,
    pub events: u64,
    pub counters: Counters,
    pub phases: Vec<PhaseStats>,
    pub links: Vec<LinkUsage>,
}

impl SimStats {
    pub fn sim_time(&self) -> SimTime {
        SimTime(self.sim_time_ps)
    }
}

/// Everything a finished run leaves behind, for inspection in tests.
pub struct RunArtifacts {
    pub stats: SimStats,
    pub topology: Topology,
    pub interconnect: Interconnect,
    pub page_table: PageTable,
    /// First-issue and completion time of every record; barriers are `None`.
    pub record_times: Vec<Option<(SimTime, SimTime)>>,
}

#[derive(Clone, Debug)]
pub enum Ev {
    Issue(u32),
    Translate(u32),
    L2Lookup(u32),
    Hop(u32),
    Dram(u32),
    Done(u32),
    MigrateTransfer {
        vpn: u64,
        from: Owner,
        to: Owner,
        phase: u32,
    },
    MigrateDone(u64),
}

/// Target of every event that is not an issuer wakeup.
const MEMORY: ComponentId = ComponentId(u32::MAX);
const NO_ISSUER: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum After {
    L2,
    Dram,
    Done,
}

#[derive(Clone, Debug)]
struct Req {
    issuer: u32,
    record: u32,
    phase: u32,
    requester: Requester,
    rw: Rw,
    bytes: u64,
    vaddr: u64,
    paddr: u64,
    bank: u32,
    l2: Option<u32>,
    path: Vec<Hop>,
    hop: usize,
    after: After,
}

struct Issuer {
    requester: Requester,
    records: Vec<u32>,
    pos: usize,
    cursor: u64,
    outstanding: u32,
    scheduled: bool,
    compute_paid: bool,
    l1: usize,
    l1_tlb: Option<usize>,
    l2_tlb: usize,
}

#[derive(Clone, Default)]
struct RecState {
    pending: u64,
    done: bool,
    waiters: Vec<u32>,
}

struct Engine<'w> {
    cfg: ValidConfig,
    work: &'w Workload,
    topo: Topology,
    ic: Interconnect,
    banks: Vec<DramBank>,
    pt: PageTable,
    l1: Vec<Cache>,
    l2: Vec<Cache>,
    l1_tlb: Vec<Tlb>,
    l2_tlb: Vec<Tlb>,
    issuers: Vec<Issuer>,
    recs: Vec<RecState>,
    rec_phase: Vec<u32>,
    record_times: Vec<Option<(SimTime, SimTime)>>,
    reqs: Vec<Req>,
    free_reqs: Vec<u32>,
    migrating: HashMap<u64, Vec<u32>>,
    fault_busy: Vec<SimTime>,
    phase: usize,
    phase_total: Vec<u64>,
    phase_done: Vec<u64>,
    phases: Vec<PhaseStats>,
    c: Counters,
    line_bytes: u64,
    nb: u32,
}

fn device_of(r: Requester) -> DeviceId {
    match r {
        Requester::Cu { gpu, .. } => DeviceId::Gpu(gpu),
        Requester::Cpu => DeviceId::Cpu,
    }
}

fn owner_device(o: Owner) -> DeviceId {
    o.device().unwrap_or(DeviceId::Cpu)
}

impl<'w> Engine<'w> {
    fn new(cfg: &ValidConfig, work: &'w Workload, log_intervals: bool) -> Result<Self, SimError> {
        work.validate().map_err(|e| SimError::UnknownDevice(e.to_string()))?;
        let topo = Topology::build(cfg);
        let mut ic = Interconnect::new(&topo);
        if log_intervals {
            ic = ic.with_interval_log();
        }
        let d = &cfg.derived;
        let banks = (0..topo.num_banks())
            .map(|k| {
                let b = DramBank::new(k, d.bank_bytes, cfg.ns(cfg.dram_access_ns), d.dram_bw);
                if cfg.dram_serialize_access {
                    b
                } else {
                    b.pipelined()
                }
            })
            .collect();
        let pt = PageTable::new(cfg, &topo);
        let line = cfg.cacheline_bytes;
        let g = cfg.num_gpus as usize;
        let l1_geo = CacheGeometry::new(
            cfg.l1_vector_kb << 10,
            cfg.l1_assoc,
            line,
            WritePolicy::WriteThroughNoAllocate,
        );
        let cpu_geo = CacheGeometry::new(
            cfg.cpu_cache_kb << 10,
            cfg.cpu_cache_assoc,
            line,
            WritePolicy::WriteThroughNoAllocate,
        );
        let l2_geo = CacheGeometry::new(cfg.l2_bank_kb << 10, cfg.l2_assoc, line, WritePolicy::WriteBack);
        let l1_count = cfg.l1_count_per_gpu as usize;
        let mut l1: Vec<Cache> = (0..g * l1_count).map(|_| Cache::new(l1_geo)).collect();
        l1.push(Cache::new(cpu_geo));
        let l2 = (0..g * cfg.l2_banks_per_gpu as usize)
            .map(|_| Cache::new(l2_geo))
            .collect();
        let l1_tlb_geo = TlbGeometry {
            sets: cfg.l1_tlb_sets,
            ways: cfg.l1_tlb_ways,
        };
        let l2_tlb_geo = TlbGeometry {
            sets: cfg.l2_tlb_sets,
            ways: cfg.l2_tlb_ways,
        };
        let tlb_count = cfg.l1_tlb_count_per_gpu as usize;
        let l1_tlb = (0..g * tlb_count).map(|_| Tlb::new(l1_tlb_geo)).collect();
        let l2_tlb = (0..=g).map(|_| Tlb::new(l2_tlb_geo)).collect();

        // issuers in a fixed order so runs are reproducible
        let mut by_req: std::collections::BTreeMap<Requester, Vec<u32>> = Default::default();
        let mut rec_phase = Vec::with_capacity(work.records.len());
        let mut phase = 0u32;
        let mut phase_total = vec![0u64; work.phase_count()];
        for (i, r) in work.records.iter().enumerate() {
            rec_phase.push(phase);
            if r.op == Op::Barrier {
                phase += 1;
                continue;
            }
            if let Requester::Cu { gpu, cu } = r.device {
                if gpu >= cfg.num_gpus || cu >= cfg.cus_per_gpu {
                    return Err(SimError::UnknownDevice(r.device.to_string()));
                }
            }
            phase_total[phase as usize] += 1;
            by_req.entry(r.device).or_default().push(i as u32);
        }
        let issuers = by_req
            .into_iter()
            .map(|(requester, records)| {
                let (l1, l1_tlb, l2_tlb) = match requester {
                    Requester::Cu { gpu, cu } => (
                        gpu as usize * l1_count + cu as usize % l1_count,
                        Some(gpu as usize * tlb_count + cu as usize % tlb_count),
                        gpu as usize,
                    ),
                    Requester::Cpu => (g * l1_count, None, g),
                };
                Issuer {
                    requester,
                    records,
                    pos: 0,
                    cursor: 0,
                    outstanding: 0,
                    scheduled: false,
                    compute_paid: false,
                    l1,
                    l1_tlb,
                    l2_tlb,
                }
            })
            .collect();
        let phases = (0..work.phase_count())
            .map(|p| PhaseStats {
                name: work.phase_name(p),
                records: phase_total[p],
                ..Default::default()
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            work,
            topo,
            ic,
            banks,
            pt,
            l1,
            l2,
            l1_tlb,
            l2_tlb,
            issuers,
            recs: vec![RecState::default(); work.records.len()],
            rec_phase,
            record_times: vec![None; work.records.len()],
            reqs: Vec::new(),
            free_reqs: Vec::new(),
            migrating: HashMap::new(),
            fault_busy: vec![SimTime::ZERO; g + 1],
            phase: 0,
            phase_done: vec![0; phase_total.len()],
            phase_total,
            phases,
            c: Counters::default(),
            line_bytes: line,
            nb: cfg.l2_banks_per_gpu,
        })
    }

    fn apply_placements(&mut self) -> Result<(), SimError> {
        let page = self.pt.page_size();
        for p in &self.work.placements {
            if let Owner::Gpu(g) = p.owner {
                if g >= self.cfg.num_gpus {
                    return Err(SimError::UnknownDevice(p.owner.to_string()));
                }
            }
            if p.size_bytes == 0 {
                continue;
            }
            let first = p.vaddr / page;
            let last = (p.vaddr + p.size_bytes - 1) / page;
            for vpn in first..=last {
                let (_, placed) = self.pt.translate_or_place(vpn * page, p.owner, SimTime::ZERO)?;
                self.c.pages_placed += placed as u64;
            }
        }
        Ok(())
    }

    fn start(&mut self, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        self.advance_phases(SimTime::ZERO, q)?;
        for i in 0..self.issuers.len() as u32 {
            self.wake(i, SimTime::ZERO, q)?;
        }
        Ok(())
    }

    fn wake(&mut self, i: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let iss = &mut self.issuers[i as usize];
        if !iss.scheduled && iss.pos < iss.records.len() {
            iss.scheduled = true;
            q.schedule(now, ComponentId(i), Ev::Issue(i))?;
        }
        Ok(())
    }

    fn issue(&mut self, i: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let window = self.cfg.max_outstanding_per_cu;
        let compute = self.cfg.ns(self.cfg.compute_ns_per_record);
        let iss = &mut self.issuers[i as usize];
        iss.scheduled = false;
        if iss.pos >= iss.records.len() {
            return Ok(());
        }
        let r = iss.records[iss.pos];
        let rec = self.work.records[r as usize];
        if self.rec_phase[r as usize] as usize > self.phase {
            return Ok(());
        }
        if let Some(d) = rec.dependency {
            if !self.recs[d].done {
                self.recs[d].waiters.push(i);
                return Ok(());
            }
        }
        if iss.outstanding >= window {
            return Ok(());
        }
        if iss.cursor == 0 && compute > SimTime::ZERO && !iss.compute_paid {
            iss.compute_paid = true;
            iss.scheduled = true;
            q.schedule(now + compute, ComponentId(i), Ev::Issue(i))?;
            return Ok(());
        }
        let phase = self.rec_phase[r as usize];
        let lb = self.line_bytes;
        if iss.cursor == 0 {
            let first = rec.vaddr / lb;
            let last = (rec.vaddr + rec.size_bytes - 1) / lb;
            self.recs[r as usize].pending = last - first + 1;
            self.record_times[r as usize] = Some((now, now));
            self.c.bytes_issued += rec.size_bytes;
            let ps = &mut self.phases[phase as usize];
            ps.bytes_issued += rec.size_bytes;
            if rec.op == Op::CopyMarker {
                self.c.copy_bytes += rec.size_bytes;
                ps.copy_bytes += rec.size_bytes;
            }
        }
        let addr = rec.vaddr + iss.cursor;
        let chunk = ((addr / lb + 1) * lb).min(rec.vaddr + rec.size_bytes) - addr;
        iss.cursor += chunk;
        if iss.cursor == rec.size_bytes {
            iss.pos += 1;
            iss.cursor = 0;
            iss.compute_paid = false;
        }
        iss.outstanding += 1;
        iss.scheduled = true;
        let requester = iss.requester;
        let (l1_tlb, l2_tlb) = (iss.l1_tlb, iss.l2_tlb);
        q.schedule(now + self.cfg.derived.cycle, ComponentId(i), Ev::Issue(i))?;
        self.c.lines_issued += 1;

        let id = self.alloc_req(Req {
            issuer: i,
            record: r,
            phase,
            requester,
            rw: if rec.op == Op::Write { Rw::Write } else { Rw::Read },
            bytes: chunk,
            vaddr: addr,
            paddr: 0,
            bank: 0,
            l2: None,
            path: Vec::new(),
            hop: 0,
            after: After::Done,
        });
        let vpn = self.pt.vpn_of(addr);
        let l1_hit = l1_tlb.map(|t| self.l1_tlb[t].access(vpn).is_hit()).unwrap_or(false);
        let hit = l1_hit || self.l2_tlb[l2_tlb].access(vpn).is_hit();
        if hit {
            self.translate(id, now, q)
        } else {
            self.c.tlb_misses += 1;
            q.schedule(now + self.cfg.ns(self.cfg.tlb_miss_ns), MEMORY, Ev::Translate(id))?;
            Ok(())
        }
    }

    fn alloc_req(&mut self, mut r: Req) -> u32 {
        match self.free_reqs.pop() {
            Some(id) => {
                let slot = &mut self.reqs[id as usize];
                let mut path = std::mem::take(&mut slot.path);
                path.clear();
                r.path = path;
                *slot = r;
                id
            }
            None => {
                self.reqs.push(r);
                (self.reqs.len() - 1) as u32
            }
        }
    }

    fn translate(&mut self, id: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let (vaddr, requester) = {
            let r = &self.reqs[id as usize];
            (r.vaddr, r.requester)
        };
        let vpn = self.pt.vpn_of(vaddr);
        if let Some(waiters) = self.migrating.get_mut(&vpn) {
            waiters.push(id);
            return Ok(());
        }
        let (t, placed) = self.pt.translate_or_place(vaddr, requester.owner(), now)?;
        self.c.pages_placed += placed as u64;
        match t {
            Translation::Mapped(loc) => self.access(id, loc, now, q),
            Translation::RemoteFault { location, owner } => {
                self.c.page_faults += 1;
                if self.cfg.um_remote_map {
                    self.access(id, location, now, q)
                } else {
                    self.start_migration(id, vpn, owner, now, q)
                }
            }
            Translation::Unmapped(_) => unreachable!("translate_or_place maps unmapped pages"),
        }
    }

    fn start_migration(
        &mut self,
        id: u32,
        vpn: u64,
        from: Owner,
        now: SimTime,
        q: &mut EventQueue<Ev>,
    ) -> Result<(), SimError> {
        let (to, phase) = {
            let r = &self.reqs[id as usize];
            (r.requester.owner(), r.phase)
        };
        let (_, job) = self.pt.migrate_page(vpn, to, now)?;
        self.c.migrations += 1;
        // the old frame's lines are dead everywhere
        let lines_per_page = job.bytes / self.line_bytes;
        let first = job.old_ppn * lines_per_page;
        for line in first..first + lines_per_page {
            for c in &mut self.l1 {
                c.invalidate_line(line);
            }
            if let Owner::Gpu(h) = from {
                let b = (line % self.nb as u64) as u32;
                self.l2[(h * self.nb + b) as usize].invalidate_line(line / self.nb as u64);
            }
        }
        let handler = match to {
            Owner::Gpu(g) => g as usize,
            _ => self.cfg.num_gpus as usize,
        };
        let start = now.max(self.fault_busy[handler]);
        let ready = start + self.cfg.ns(self.cfg.um_fault_overhead_ns);
        self.fault_busy[handler] = ready;
        self.migrating.insert(vpn, vec![id]);
        q.schedule(ready, MEMORY, Ev::MigrateTransfer { vpn, from, to, phase })?;
        Ok(())
    }

    fn home_l2(&self, requester: Requester, bank_owner: Owner, line: u64) -> Option<u32> {
        let b = (line % self.nb as u64) as u32;
        let gpu = match (self.cfg.mode, requester, bank_owner) {
            (Mode::Tsm, Requester::Cu { gpu, .. }, _) => gpu,
            (Mode::Tsm, Requester::Cpu, _) => return None,
            (_, _, Owner::Gpu(h)) => h,
            _ => return None,
        };
        Some(gpu * self.nb + b)
    }

    fn access(&mut self, id: u32, loc: Location, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let line = loc.paddr / self.line_bytes;
        let t = now + self.cfg.ns(self.cfg.l1_hit_ns);
        let bank_owner = self.topo.owner_of_bank(loc.bank);
        let (requester, rw, l1) = {
            let r = &self.reqs[id as usize];
            let l1 = match r.issuer {
                NO_ISSUER => unreachable!("writebacks skip translation"),
                i => self.issuers[i as usize].l1,
            };
            (r.requester, r.rw, l1)
        };
        let hit = self.l1[l1].access_line(line, rw).is_hit();
        if hit {
            self.c.l1_hits += 1;
        } else {
            self.c.l1_misses += 1;
        }
        if self.cfg.mode != Mode::Tsm && bank_owner != requester.owner() {
            self.c.remote_accesses += 1;
        }
        let home = self.home_l2(requester, bank_owner, line);
        {
            let r = &mut self.reqs[id as usize];
            r.paddr = loc.paddr;
            r.bank = loc.bank;
            r.l2 = home;
        }
        match rw {
            Rw::Read if hit => q.schedule(t, MEMORY, Ev::Done(id)).map(drop),
            Rw::Read => {
                // requests carry no payload: they pay hop latency only
                let src = device_of(requester);
                let (to, ev) = match home {
                    Some(l2) => (DeviceId::Gpu(l2 / self.nb), Ev::L2Lookup(id)),
                    None => (DeviceId::DramBank(loc.bank), Ev::Dram(id)),
                };
                let lat = self.topo.path_latency(&self.topo.route(src, to)?);
                q.schedule(t + lat, MEMORY, ev).map(drop)
            }
            Rw::Write => {
                let src = device_of(requester);
                let (hops, after) = match home {
                    Some(l2) => (self.topo.route(src, DeviceId::Gpu(l2 / self.nb))?, After::L2),
                    None => (self.topo.route(src, DeviceId::DramBank(loc.bank))?, After::Dram),
                };
                let r = &mut self.reqs[id as usize];
                r.path.extend(hops.hops);
                self.launch(id, after, t, q)
            }
        }
    }

    /// Starts moving the request along its path; `after` fires on arrival.
    fn launch(&mut self, id: u32, after: After, t: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let r = &mut self.reqs[id as usize];
        r.hop = 0;
        r.after = after;
        if r.path.is_empty() {
            q.schedule(t, MEMORY, Self::after_event(after, id))?;
        } else {
            q.schedule(t, MEMORY, Ev::Hop(id))?;
        }
        Ok(())
    }

    fn after_event(after: After, id: u32) -> Ev {
        match after {
            After::L2 => Ev::L2Lookup(id),
            After::Dram => Ev::Dram(id),
            After::Done => Ev::Done(id),
        }
    }

    fn hop(&mut self, id: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let r = &mut self.reqs[id as usize];
        let hop = r.path[r.hop];
        let arrival = self.ic.traverse(hop, r.bytes, now);
        if self.ic.kind(hop) == LinkKind::OffChip {
            self.phases[r.phase as usize].offchip_bytes += r.bytes;
        }
        r.hop += 1;
        let ev = if r.hop == r.path.len() {
            Self::after_event(r.after, id)
        } else {
            Ev::Hop(id)
        };
        q.schedule(arrival, MEMORY, ev)?;
        Ok(())
    }

    fn l2_lookup(&mut self, id: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let (l2, line, rw, requester) = {
            let r = &self.reqs[id as usize];
            (
                r.l2.expect("L2 lookup without a home bank"),
                r.paddr / self.line_bytes,
                r.rw,
                r.requester,
            )
        };
        let nb = self.nb as u64;
        let access = self.l2[l2 as usize].access_line(line / nb, rw);
        if let Access::Miss { evicted: Some(ev) } = access {
            if ev.dirty {
                self.writeback(l2, ev.line * nb + l2 as u64 % nb, now, q)?;
            }
        }
        let t = now + self.cfg.ns(self.cfg.l2_hit_ns);
        match (rw, access.is_hit()) {
            (Rw::Write, hit) => {
                if hit {
                    self.c.l2_hits += 1;
                } else {
                    self.c.l2_misses += 1;
                }
                q.schedule(t, MEMORY, Ev::Done(id))?;
            }
            (Rw::Read, true) => {
                self.c.l2_hits += 1;
                let home_gpu = DeviceId::Gpu(l2 / self.nb);
                let back = self.topo.route(home_gpu, device_of(requester))?;
                let r = &mut self.reqs[id as usize];
                r.bytes = self.line_bytes;
                r.path.clear();
                r.path.extend(back.hops);
                self.launch(id, After::Done, t, q)?;
            }
            (Rw::Read, false) => {
                self.c.l2_misses += 1;
                let home = DeviceId::L2Bank {
                    gpu: l2 / self.nb,
                    bank: l2 % self.nb,
                };
                let bank = self.reqs[id as usize].bank;
                let lat = self
                    .topo
                    .path_latency(&self.topo.route(home, DeviceId::DramBank(bank))?);
                q.schedule(t + lat, MEMORY, Ev::Dram(id))?;
            }
        }
        Ok(())
    }

    fn writeback(&mut self, l2: u32, line: u64, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        self.c.writebacks += 1;
        let paddr = line * self.line_bytes;
        let bank = self.pt.bank_of_ppn(paddr / self.pt.page_size());
        let path = self.topo.route(
            DeviceId::L2Bank {
                gpu: l2 / self.nb,
                bank: l2 % self.nb,
            },
            DeviceId::DramBank(bank),
        )?;
        let id = self.alloc_req(Req {
            issuer: NO_ISSUER,
            record: u32::MAX,
            phase: self.phase.min(self.phases.len() - 1) as u32,
            requester: Requester::Cpu,
            rw: Rw::Write,
            bytes: self.line_bytes,
            vaddr: 0,
            paddr,
            bank,
            l2: Some(l2),
            path: Vec::new(),
            hop: 0,
            after: After::Dram,
        });
        self.reqs[id as usize].path.extend(path.hops);
        self.launch(id, After::Dram, now, q)
    }

    fn dram(&mut self, id: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let (rw, bytes, bank, l2, requester) = {
            let r = &self.reqs[id as usize];
            (r.rw, r.bytes, r.bank, r.l2, r.requester)
        };
        self.c.dram_accesses += 1;
        match rw {
            Rw::Write => {
                let done = self.banks[bank as usize].service(bytes, now);
                q.schedule(done, MEMORY, Ev::Done(id))?;
            }
            Rw::Read => {
                let done = self.banks[bank as usize].service(self.line_bytes, now);
                let back = match l2 {
                    Some(l2) => {
                        let home = DeviceId::L2Bank {
                            gpu: l2 / self.nb,
                            bank: l2 % self.nb,
                        };
                        let down = self.topo.route(home, DeviceId::DramBank(bank))?.reversed();
                        down.then(self.topo.route(DeviceId::Gpu(l2 / self.nb), device_of(requester))?)
                    }
                    None => self
                        .topo
                        .route(device_of(requester), DeviceId::DramBank(bank))?
                        .reversed(),
                };
                let r = &mut self.reqs[id as usize];
                r.bytes = self.line_bytes;
                r.path.clear();
                r.path.extend(back.hops);
                self.launch(id, After::Done, done, q)?;
            }
        }
        Ok(())
    }

    fn done(&mut self, id: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let (issuer, record) = {
            let r = &self.reqs[id as usize];
            (r.issuer, r.record)
        };
        self.free_reqs.push(id);
        if issuer == NO_ISSUER {
            return Ok(());
        }
        self.c.lines_completed += 1;
        self.issuers[issuer as usize].outstanding -= 1;
        let rs = &mut self.recs[record as usize];
        rs.pending -= 1;
        // pending counts every line of the record, issued or not
        if rs.pending == 0 {
            self.complete_record(record, now, q)?;
        }
        self.wake(issuer, now, q)
    }

    fn complete_record(&mut self, record: u32, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let rs = &mut self.recs[record as usize];
        rs.done = true;
        let waiters = std::mem::take(&mut rs.waiters);
        if let Some((s, _)) = self.record_times[record as usize] {
            self.record_times[record as usize] = Some((s, now));
        }
        self.c.records_completed += 1;
        let p = self.rec_phase[record as usize] as usize;
        self.phase_done[p] += 1;
        self.phases[p].end_ps = self.phases[p].end_ps.max(now.ps());
        for w in waiters {
            self.wake(w, now, q)?;
        }
        self.advance_phases(now, q)
    }

    fn advance_phases(&mut self, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let before = self.phase;
        while self.phase < self.phase_total.len() && self.phase_done[self.phase] == self.phase_total[self.phase] {
            let ps = &mut self.phases[self.phase];
            ps.end_ps = ps.end_ps.max(ps.start_ps);
            self.phase += 1;
            if let Some(next) = self.phases.get_mut(self.phase) {
                next.start_ps = now.ps();
                next.end_ps = now.ps();
            }
        }
        if self.phase != before {
            for i in 0..self.issuers.len() as u32 {
                self.wake(i, now, q)?;
            }
        }
        Ok(())
    }

    fn migrate_transfer(
        &mut self,
        vpn: u64,
        from: Owner,
        to: Owner,
        phase: u32,
        now: SimTime,
        q: &mut EventQueue<Ev>,
    ) -> Result<(), SimError> {
        let path = self.topo.route(owner_device(from), owner_device(to))?;
        let bytes = self.pt.page_size();
        let arrival = self.ic.transfer(&path, bytes, now);
        self.phases[phase as usize].offchip_bytes += bytes * path.hop_count() as u64;
        q.schedule(arrival, MEMORY, Ev::MigrateDone(vpn))?;
        Ok(())
    }

    fn migrate_done(&mut self, vpn: u64, now: SimTime, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let waiters = self.migrating.remove(&vpn).unwrap_or_default();
        for id in waiters {
            self.translate(id, now, q)?;
        }
        Ok(())
    }

    fn finish(self, end: SimTime, events: u64) -> RunArtifacts {
        let mut c = self.c;
        c.bytes_on_offchip_links = self.ic.bytes_on(LinkKind::OffChip);
        c.bytes_on_switch_links = self.ic.bytes_on(LinkKind::Port) + self.ic.bytes_on(LinkKind::Dram);
        let usage = self.ic.usage();
        c.bytes_l2_to_mm = self
            .topo
            .links()
            .iter()
            .zip(&usage)
            .filter(|(l, _)| matches!(l.a, DeviceId::L2Bank { .. }) || matches!(l.b, DeviceId::L2Bank { .. }))
            .map(|(_, u)| u.bytes_ab + u.bytes_ba)
            .sum();
        RunArtifacts {
            stats: SimStats {
                sim_time_ps: end.ps(),
                events,
                counters: c,
                phases: self.phases,
                links: usage,
            },
            topology: self.topo,
            interconnect: self.ic,
            page_table: self.pt,
            record_times: self.record_times,
        }
    }
}

impl Dispatch<Ev> for Engine<'_> {
    fn dispatch(&mut self, ev: Event<Ev>, q: &mut EventQueue<Ev>) -> Result<(), SimError> {
        let now = ev.time;
        match ev.payload {
            Ev::Issue(i) => {
                if ev.target != ComponentId(i) || i as usize >= self.issuers.len() {
                    return Err(SimError::UnregisteredComponent(format!("issuer#{}", ev.target.0)));
                }
                self.issue(i, now, q)
            }
            _ if ev.target != MEMORY => Err(SimError::UnregisteredComponent(format!("component#{}", ev.target.0))),
            Ev::Translate(id) => self.translate(id, now, q),
            Ev::L2Lookup(id) => self.l2_lookup(id, now, q),
            Ev::Hop(id) => self.hop(id, now, q),
            Ev::Dram(id) => self.dram(id, now, q),
            Ev::Done(id) => self.done(id, now, q),
            Ev::MigrateTransfer { vpn, from, to, phase } => self.migrate_transfer(vpn, from, to, phase, now, q),
            Ev::MigrateDone(vpn) => self.migrate_done(vpn, now, q),
        }
    }
}

/// Runs `work` on the machine described by `cfg`.
pub fn simulate(cfg: &ValidConfig, work: &Workload) -> Result<SimStats, SimError> {
    simulate_detailed(cfg, work, false).map(|a| a.stats)
}

/// Like [`simulate`] but keeps the final machine state. `log_intervals`
/// records every link occupancy window.
pub fn simulate_detailed(cfg: &ValidConfig, work: &Workload, log_intervals: bool) -> Result<RunArtifacts, SimError> {
    let mut engine = Engine::new(cfg, work, log_intervals)?;
    engine.apply_placements()?;
    let mut q = EventQueue::new();
    engine.start(&mut q)?;
    let end = run_to_completion(&mut q, &mut engine)?;
    let events = q.popped_count();
    debug_assert!(engine.migrating.is_empty());
    Ok(engine.finish(end, events))
}
