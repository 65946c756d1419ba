//! Virtual-to-physical mapping under the three placement policies.
//!
//! The virtual address space is flat and shared by every device. Physical
//! frames are numbered globally with banks interleaved at page granularity:
//! frame `f` of bank `k` is `f * num_banks + k`, so neighboring frames sit
//! in different banks and map to different cache sets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{Mode, ValidConfig};
use crate::error::SimError;
use crate::event::SimTime;
use crate::topology::{Owner, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementPolicy {
    /// Consecutive placements go to neighboring banks across the whole
    /// shared memory.
    InterleavedRR,
    /// Pages live in the first toucher's local memory, round-robin over its
    /// banks.
    LocalOwner,
    /// As `LocalOwner`, and the page follows later accessors by migration.
    FirstTouch,
}

impl PlacementPolicy {
    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Tsm => PlacementPolicy::InterleavedRR,
            Mode::Rdma => PlacementPolicy::LocalOwner,
            Mode::Um => PlacementPolicy::FirstTouch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PageTableEntry {
    pub vpn: u64,
    pub ppn: u64,
    pub home_bank: u32,
    /// Owner of the island holding the frame (`Shared` in TSM).
    pub owner: Owner,
    pub placement_time: SimTime,
    pub migration_count: u32,
}

/// Resolved physical location of a byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Location {
    pub bank: u32,
    pub ppn: u64,
    pub paddr: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PageFault {
    pub vpn: u64,
    pub requester: Owner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Translation {
    Mapped(Location),
    /// No mapping yet; the page must be placed.
    Unmapped(PageFault),
    /// UM only: the page is mapped but owned by someone else.
    RemoteFault {
        location: Location,
        owner: Owner,
    },
}

/// Page-sized transfer a migration puts on the off-chip path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MigrationJob {
    pub vpn: u64,
    pub from: Owner,
    pub to: Owner,
    pub old_ppn: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug)]
struct BankFrames {
    next_unused: u64,
    free: Vec<u64>,
}

#[derive(Clone, Debug)]
struct IslandAlloc {
    banks: Vec<u32>,
    counter: u64,
}

#[derive(Clone, Debug)]
pub struct PageTable {
    mode: Mode,
    policy: PlacementPolicy,
    page_size: u64,
    page_shift: u32,
    frames_per_bank: u64,
    virtual_limit: u64,
    entries: HashMap<u64, PageTableEntry>,
    frame_to_vpn: HashMap<u64, u64>,
    banks: Vec<BankFrames>,
    islands: Vec<IslandAlloc>,
    bank_island: Vec<u32>,
    island_owner: Vec<Owner>,
    num_gpus: u32,
    pub placements: u64,
    pub migrations: u64,
}

impl PageTable {
    pub fn new(cfg: &ValidConfig, topo: &Topology) -> Self {
        Self {
            mode: cfg.mode(),
            policy: PlacementPolicy::for_mode(cfg.mode()),
            page_size: cfg.page_size_bytes,
            page_shift: cfg.page_size_bytes.trailing_zeros(),
            frames_per_bank: cfg.derived.frames_per_bank,
            virtual_limit: cfg.derived.virtual_space_bytes,
            entries: HashMap::new(),
            frame_to_vpn: HashMap::new(),
            banks: (0..topo.num_banks())
                .map(|_| BankFrames {
                    next_unused: 0,
                    free: Vec::new(),
                })
                .collect(),
            islands: topo
                .islands()
                .iter()
                .map(|i| IslandAlloc {
                    banks: i.banks.clone(),
                    counter: 0,
                })
                .collect(),
            bank_island: (0..topo.num_banks()).map(|k| topo.island_of_bank(k)).collect(),
            island_owner: topo.islands().iter().map(|i| i.owner).collect(),
            num_gpus: topo.num_gpus(),
            placements: 0,
            migrations: 0,
        }
    }

    pub fn policy(&self) -> PlacementPolicy {
        self.policy
    }

    pub fn page_size(&self) -> u64 {
        self.page_size
    }

    pub fn vpn_of(&self, vaddr: u64) -> u64 {
        vaddr >> self.page_shift
    }

    pub fn bank_of_ppn(&self, ppn: u64) -> u32 {
        (ppn % self.banks.len() as u64) as u32
    }

    pub fn entry(&self, vpn: u64) -> Option<&PageTableEntry> {
        self.entries.get(&vpn)
    }

    pub fn mapped_pages(&self) -> usize {
        self.entries.len()
    }

    fn home_island(&self, requester: Owner) -> u32 {
        match (self.mode, requester) {
            (Mode::Tsm, _) => 0,
            (_, Owner::Gpu(g)) => g,
            _ => self.num_gpus,
        }
    }

    fn location(&self, e: &PageTableEntry, vaddr: u64) -> Location {
        Location {
            bank: e.home_bank,
            ppn: e.ppn,
            paddr: (e.ppn << self.page_shift) | (vaddr & (self.page_size - 1)),
        }
    }

    pub fn translate(&self, vaddr: u64, requester: Owner, _t: SimTime) -> Result<Translation, SimError> {
        if vaddr >= self.virtual_limit {
            return Err(SimError::AddressOutOfRange {
                vaddr,
                limit: self.virtual_limit,
            });
        }
        let vpn = self.vpn_of(vaddr);
        let Some(e) = self.entries.get(&vpn) else {
            return Ok(Translation::Unmapped(PageFault { vpn, requester }));
        };
        let location = self.location(e, vaddr);
        if self.mode == Mode::Um && e.owner != requester {
            return Ok(Translation::RemoteFault {
                location,
                owner: e.owner,
            });
        }
        Ok(Translation::Mapped(location))
    }

    fn alloc_frame(&mut self, island: u32) -> Option<(u32, u64)> {
        let isl = &mut self.islands[island as usize];
        let n = isl.banks.len() as u64;
        for probe in 0..n {
            let bank = isl.banks[((isl.counter + probe) % n) as usize];
            let frames = &mut self.banks[bank as usize];
            let local = if let Some(f) = frames.free.pop() {
                Some(f)
            } else if frames.next_unused < self.frames_per_bank {
                frames.next_unused += 1;
                Some(frames.next_unused - 1)
            } else {
                None
            };
            if let Some(f) = local {
                isl.counter += probe + 1;
                return Some((bank, f * self.banks.len() as u64 + bank as u64));
            }
        }
        None
    }

    fn free_frame(&mut self, ppn: u64) {
        let bank = self.bank_of_ppn(ppn);
        let frame = ppn / self.banks.len() as u64;
        self.banks[bank as usize].free.push(frame);
        self.frame_to_vpn.remove(&ppn);
    }

    /// Maps an unmapped `vpn` according to the mode's policy.
    pub fn place_page(&mut self, vpn: u64, requester: Owner, t: SimTime) -> Result<PageTableEntry, SimError> {
        debug_assert!(!self.entries.contains_key(&vpn), "vpn {vpn:#x} already mapped");
        let island = self.home_island(requester);
        let (bank, ppn) = self.alloc_frame(island).ok_or_else(|| SimError::OutOfMemory {
            vpn,
            requester: requester.to_string(),
        })?;
        let entry = PageTableEntry {
            vpn,
            ppn,
            home_bank: bank,
            owner: self.island_owner[self.bank_island[bank as usize] as usize],
            placement_time: t,
            migration_count: 0,
        };
        let prev = self.frame_to_vpn.insert(ppn, vpn);
        debug_assert!(prev.is_none(), "frame {ppn:#x} double-mapped");
        self.entries.insert(vpn, entry);
        self.placements += 1;
        Ok(entry)
    }

    /// Translates, placing the page on first touch. Returns the location and
    /// whether a placement happened. Remote UM faults are returned unchanged.
    pub fn translate_or_place(
        &mut self,
        vaddr: u64,
        requester: Owner,
        t: SimTime,
    ) -> Result<(Translation, bool), SimError> {
        match self.translate(vaddr, requester, t)? {
            Translation::Unmapped(f) => {
                let e = self.place_page(f.vpn, requester, t)?;
                Ok((Translation::Mapped(self.location(&e, vaddr)), true))
            }
            other => Ok((other, false)),
        }
    }

    /// Moves a UM page into `new_owner`'s memory.
    pub fn migrate_page(
        &mut self,
        vpn: u64,
        new_owner: Owner,
        t: SimTime,
    ) -> Result<(PageTableEntry, MigrationJob), SimError> {
        if self.mode != Mode::Um {
            return Err(SimError::ModeViolation { op: "migrate_page" });
        }
        let old = *self.entries.get(&vpn).expect("migrating an unmapped page");
        debug_assert_ne!(old.owner, new_owner);
        let island = self.home_island(new_owner);
        let (bank, ppn) = self.alloc_frame(island).ok_or_else(|| SimError::OutOfMemory {
            vpn,
            requester: new_owner.to_string(),
        })?;
        self.free_frame(old.ppn);
        let prev = self.frame_to_vpn.insert(ppn, vpn);
        debug_assert!(prev.is_none());
        let entry = PageTableEntry {
            vpn,
            ppn,
            home_bank: bank,
            owner: new_owner,
            placement_time: t,
            migration_count: old.migration_count + 1,
        };
        self.entries.insert(vpn, entry);
        self.migrations += 1;
        Ok((
            entry,
            MigrationJob {
                vpn,
                from: old.owner,
                to: new_owner,
                old_ppn: old.ppn,
                bytes: self.page_size,
            },
        ))
    }

    /// Checks that no two live entries share a frame.
    pub fn frames_unique(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.entries.values().all(|e| seen.insert(e.ppn)) && self.frame_to_vpn.len() == self.entries.len()
    }
}
