//! Set-associative caches and TLBs with LRU replacement.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WritePolicy {
    /// Writes update a present line and always go to the next level;
    /// write misses never allocate. Lines are never dirty.
    WriteThroughNoAllocate,
    /// Writes allocate and mark the line dirty; dirty victims are returned.
    WriteBack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rw {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub capacity_bytes: u64,
    pub associativity: u32,
    pub line_bytes: u64,
    pub write_policy: WritePolicy,
}

impl CacheGeometry {
    pub fn new(capacity_bytes: u64, associativity: u32, line_bytes: u64, write_policy: WritePolicy) -> Self {
        let g = Self {
            capacity_bytes,
            associativity,
            line_bytes,
            write_policy,
        };
        assert!(associativity > 0 && line_bytes > 0);
        assert_eq!(
            capacity_bytes % (associativity as u64 * line_bytes),
            0,
            "capacity not divisible by way size"
        );
        assert!(g.sets().is_power_of_two(), "set count must be a power of two");
        g
    }

    pub fn sets(&self) -> u64 {
        self.capacity_bytes / (self.associativity as u64 * self.line_bytes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Evicted {
    pub line: u64,
    pub dirty: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss { evicted: Option<Evicted> },
}

impl Access {
    pub fn is_hit(&self) -> bool {
        matches!(self, Access::Hit)
    }
}

#[derive(Clone, Copy, Debug)]
struct Way {
    tag: u64,
    dirty: bool,
    stamp: u64,
}

/// LRU set array keyed by an integer (line number or vpn).
#[derive(Clone, Debug)]
struct LruSets {
    sets: Vec<Vec<Way>>,
    set_mask: u64,
    set_bits: u32,
    ways: usize,
    clock: u64,
}

impl LruSets {
    fn new(sets: u64, ways: u32) -> Self {
        assert!(sets.is_power_of_two());
        Self {
            sets: vec![Vec::with_capacity(ways as usize); sets as usize],
            set_mask: sets - 1,
            set_bits: sets.trailing_zeros(),
            ways: ways as usize,
            clock: 0,
        }
    }

    fn split(&self, key: u64) -> (usize, u64) {
        ((key & self.set_mask) as usize, key >> self.set_bits)
    }

    fn join(&self, set: usize, tag: u64) -> u64 {
        (tag << self.set_bits) | set as u64
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Touches `key` if present and returns a mutable handle to its way.
    fn lookup(&mut self, key: u64) -> Option<&mut Way> {
        let stamp = self.tick();
        let (s, tag) = self.split(key);
        let way = self.sets[s].iter_mut().find(|w| w.tag == tag)?;
        way.stamp = stamp;
        Some(way)
    }

    fn insert(&mut self, key: u64, dirty: bool) -> Option<Evicted> {
        let stamp = self.tick();
        let (s, tag) = self.split(key);
        let ways = self.ways;
        let set = &mut self.sets[s];
        debug_assert!(set.iter().all(|w| w.tag != tag));
        let new = Way { tag, dirty, stamp };
        if set.len() < ways {
            set.push(new);
            return None;
        }
        let (victim_idx, _) = set
            .iter()
            .enumerate()
            .min_by_key(|(_, w)| w.stamp)
            .expect("full set is non-empty");
        let victim = std::mem::replace(&mut set[victim_idx], new);
        Some(Evicted {
            line: self.join(s, victim.tag),
            dirty: victim.dirty,
        })
    }

    fn remove(&mut self, key: u64) -> Option<Way> {
        let (s, tag) = self.split(key);
        let set = &mut self.sets[s];
        let pos = set.iter().position(|w| w.tag == tag)?;
        Some(set.swap_remove(pos))
    }

    fn contains(&self, key: u64) -> bool {
        let (s, tag) = self.split(key);
        self.sets[s].iter().any(|w| w.tag == tag)
    }
}

/// One cache instance.
#[derive(Clone, Debug)]
pub struct Cache {
    geometry: CacheGeometry,
    sets: LruSets,
    pub hits: u64,
    pub misses: u64,
}

impl Cache {
    pub fn new(geometry: CacheGeometry) -> Self {
        Self {
            sets: LruSets::new(geometry.sets(), geometry.associativity),
            geometry,
            hits: 0,
            misses: 0,
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn line_of(&self, addr: u64) -> u64 {
        addr / self.geometry.line_bytes
    }

    /// Accesses the line holding byte address `addr`.
    pub fn access(&mut self, addr: u64, rw: Rw) -> Access {
        self.access_line(self.line_of(addr), rw)
    }

    /// Accesses line number `line` directly.
    pub fn access_line(&mut self, line: u64, rw: Rw) -> Access {
        let policy = self.geometry.write_policy;
        let result = match self.sets.lookup(line) {
            Some(way) => {
                if rw == Rw::Write && policy == WritePolicy::WriteBack {
                    way.dirty = true;
                }
                Access::Hit
            }
            None => match (rw, policy) {
                (Rw::Write, WritePolicy::WriteThroughNoAllocate) => Access::Miss { evicted: None },
                (Rw::Write, WritePolicy::WriteBack) => Access::Miss {
                    evicted: self.sets.insert(line, true),
                },
                (Rw::Read, _) => Access::Miss {
                    evicted: self.sets.insert(line, false),
                },
            },
        };
        if result.is_hit() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        result
    }

    pub fn contains_line(&self, line: u64) -> bool {
        self.sets.contains(line)
    }

    /// Drops `line`; returns whether it was present and dirty.
    pub fn invalidate_line(&mut self, line: u64) -> Option<bool> {
        self.sets.remove(line).map(|w| w.dirty)
    }

    pub fn lines_held(&self) -> usize {
        self.sets.sets.iter().map(Vec::len).sum()
    }

    pub fn dirty_lines(&self) -> usize {
        self.sets.sets.iter().flatten().filter(|w| w.dirty).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TlbGeometry {
    pub sets: u32,
    pub ways: u32,
}

/// Translation cache keyed by virtual page number; presence only.
#[derive(Clone, Debug)]
pub struct Tlb {
    sets: LruSets,
    pub hits: u64,
    pub misses: u64,
}

impl Tlb {
    pub fn new(geometry: TlbGeometry) -> Self {
        Self {
            sets: LruSets::new(geometry.sets as u64, geometry.ways),
            hits: 0,
            misses: 0,
        }
    }

    /// Looks up `vpn`, inserting it on a miss.
    pub fn access(&mut self, vpn: u64) -> Access {
        if self.sets.lookup(vpn).is_some() {
            self.hits += 1;
            Access::Hit
        } else {
            self.misses += 1;
            Access::Miss {
                evicted: self.sets.insert(vpn, false),
            }
        }
    }
}
