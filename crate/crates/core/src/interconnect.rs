//! Store-and-forward link contention.
//!
//! Each link direction is a FIFO server: a transfer starts when it has
//! arrived and the direction is free, occupies the direction for
//! `ceil(bytes / bw)`, then reaches the far end `hop_latency` later. Switches
//! are non-blocking, so only port links contend.

use serde::{Deserialize, Serialize};

use crate::event::SimTime;
use crate::topology::{Hop, LinkKind, Path, Topology};

#[derive(Clone, Debug)]
struct LinkState {
    kind: LinkKind,
    bw: u64,
    latency: SimTime,
    next_free: [SimTime; 2],
    bytes: [u64; 2],
    busy: [SimTime; 2],
}

/// Occupancy window recorded when interval logging is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interval {
    pub start: SimTime,
    pub end: SimTime,
    pub bytes: u64,
}

/// Per-link, per-direction totals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkUsage {
    pub link: String,
    pub kind: LinkKind,
    pub bytes_ab: u64,
    pub bytes_ba: u64,
    pub busy_ps_ab: u64,
    pub busy_ps_ba: u64,
}

#[derive(Clone, Debug)]
pub struct Interconnect {
    links: Vec<LinkState>,
    names: Vec<String>,
    log: Option<Vec<[Vec<Interval>; 2]>>,
}

impl Interconnect {
    pub fn new(topo: &Topology) -> Self {
        Self {
            links: topo
                .links()
                .iter()
                .map(|l| LinkState {
                    kind: l.kind,
                    bw: l.bw_bytes_per_sec,
                    latency: l.hop_latency,
                    next_free: [SimTime::ZERO; 2],
                    bytes: [0; 2],
                    busy: [SimTime::ZERO; 2],
                })
                .collect(),
            names: topo.links().iter().map(|l| l.name()).collect(),
            log: None,
        }
    }

    /// Records every occupancy interval; used by tests and bound checks.
    pub fn with_interval_log(mut self) -> Self {
        self.log = Some(vec![[Vec::new(), Vec::new()]; self.links.len()]);
        self
    }

    pub fn kind(&self, hop: Hop) -> LinkKind {
        self.links[hop.link.0 as usize].kind
    }

    /// Moves `bytes` across one hop, arriving at its near end at `arrival`.
    /// Returns the arrival time at the far end.
    pub fn traverse(&mut self, hop: Hop, bytes: u64, arrival: SimTime) -> SimTime {
        debug_assert!(bytes >= 1);
        let d = hop.dir.index();
        let link = &mut self.links[hop.link.0 as usize];
        let start = arrival.max(link.next_free[d]);
        let occupancy = SimTime::for_bytes(bytes, link.bw);
        let end = start + occupancy;
        link.next_free[d] = end;
        link.bytes[d] += bytes;
        link.busy[d] += occupancy;
        if let Some(log) = &mut self.log {
            log[hop.link.0 as usize][d].push(Interval { start, end, bytes });
        }
        end + link.latency
    }

    /// Store-and-forward transfer over a whole path; returns arrival at the
    /// last hop's far end.
    pub fn transfer(&mut self, path: &Path, bytes: u64, ready: SimTime) -> SimTime {
        path.hops.iter().fold(ready, |t, &hop| self.traverse(hop, bytes, t))
    }

    pub fn intervals(&self, hop: Hop) -> &[Interval] {
        self.log
            .as_ref()
            .map(|l| l[hop.link.0 as usize][hop.dir.index()].as_slice())
            .unwrap_or(&[])
    }

    pub fn bytes_on(&self, kind: LinkKind) -> u64 {
        self.links
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| l.bytes[0] + l.bytes[1])
            .sum()
    }

    pub fn usage(&self) -> Vec<LinkUsage> {
        self.links
            .iter()
            .zip(&self.names)
            .map(|(l, name)| LinkUsage {
                link: name.clone(),
                kind: l.kind,
                bytes_ab: l.bytes[0],
                bytes_ba: l.bytes[1],
                busy_ps_ab: l.busy[0].ps(),
                busy_ps_ba: l.busy[1].ps(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::config::{Mode, SystemConfig};
    use crate::topology::{DeviceId, Dir};

    fn tsm() -> (Topology, Interconnect) {
        let cfg = SystemConfig::default().with_mode(Mode::Tsm).validate().unwrap();
        let t = Topology::build(&cfg);
        let ic = Interconnect::new(&t).with_interval_log();
        (t, ic)
    }

    fn one_hop(t: &Topology) -> Path {
        Path {
            hops: vec![Hop {
                link: t.l2_port(0, 0),
                dir: Dir::AtoB,
            }],
        }
    }

    #[test]
    fn page_over_one_idle_hop() {
        let (t, mut ic) = tsm();
        let p = one_hop(&t);
        let ready = SimTime::from_ns(1000);
        // 128 ns serialization + 20 ns switch hop
        assert_eq!(ic.transfer(&p, 4096, ready), ready + SimTime::from_ns(148));
    }

    #[test]
    fn back_to_back_transfers_serialize() {
        let (t, mut ic) = tsm();
        let p = one_hop(&t);
        let a = ic.transfer(&p, 4096, SimTime::ZERO);
        let b = ic.transfer(&p, 4096, SimTime::ZERO);
        assert_eq!(b - a, SimTime::from_ns(128));
        // opposite direction is independent
        let c = ic.transfer(&p.reversed(), 4096, SimTime::ZERO);
        assert_eq!(c, a);
    }

    #[test]
    fn minimal_transfer_without_latency() {
        let cfg = SystemConfig {
            switch_hop_ns: 0,
            ..Default::default()
        }
        .validate()
        .unwrap();
        let t = Topology::build(&cfg);
        let mut ic = Interconnect::new(&t);
        let ready = SimTime(500);
        assert_eq!(
            ic.transfer(&one_hop(&t), 1, ready),
            ready + SimTime::for_bytes(1, 32_000_000_000)
        );
    }

    #[test]
    fn two_hop_store_and_forward() {
        let (t, mut ic) = tsm();
        let p = t
            .route(DeviceId::L2Bank { gpu: 0, bank: 3 }, DeviceId::DramBank(17))
            .unwrap();
        // 2 x (2 ns + 20 ns)
        assert_eq!(ic.transfer(&p, 64, SimTime::ZERO), SimTime::from_ns(44));
    }

    #[test]
    fn throughput_bound_and_work_conservation() {
        let (t, mut ic) = tsm();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = t
            .route(DeviceId::L2Bank { gpu: 1, bank: 2 }, DeviceId::DramBank(5))
            .unwrap();
        let mut ready = SimTime::ZERO;
        for _ in 0..500 {
            ready += SimTime(rng.random_range(0..4_000));
            ic.transfer(&p, rng.random_range(1..=4096), ready);
        }
        for hop in &p.hops {
            let iv = ic.intervals(*hop);
            assert_eq!(iv.len(), 500);
            for w in iv.windows(2) {
                assert!(w[0].end <= w[1].start, "overlap on one direction");
            }
            for i in iv {
                assert!(i.bytes as u128 * 1_000_000_000_000 <= 32_000_000_000u128 * (i.end - i.start).ps() as u128);
            }
        }
        // a burst issued at once leaves no gaps
        let (t, mut ic) = tsm();
        let p = one_hop(&t);
        for _ in 0..10 {
            ic.transfer(&p, 1000, SimTime::ZERO);
        }
        let iv = ic.intervals(p.hops[0]);
        for w in iv.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }
}
