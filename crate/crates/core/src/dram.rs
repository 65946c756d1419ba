//! Banked main memory. Every request pays a fixed access latency plus a
//! bandwidth-proportional occupancy. Occupancy always serializes on a bank;
//! whether the access latency does too is selected per bank.

use crate::event::SimTime;

#[derive(Clone, Debug)]
pub struct DramBank {
    pub id: u32,
    pub capacity_bytes: u64,
    pub access_latency: SimTime,
    pub service_bw: u64,
    /// Hold the bank for the access latency as well as the data occupancy.
    pub serialize_access: bool,
    busy_until: SimTime,
    pub accesses: u64,
    pub bytes: u64,
}

impl DramBank {
    pub fn new(id: u32, capacity_bytes: u64, access_latency: SimTime, service_bw: u64) -> Self {
        assert!(service_bw > 0);
        Self {
            id,
            capacity_bytes,
            access_latency,
            service_bw,
            serialize_access: true,
            busy_until: SimTime::ZERO,
            accesses: 0,
            bytes: 0,
        }
    }

    /// Lets requests overlap their access latency; only data occupancy
    /// keeps the bank busy.
    pub fn pipelined(mut self) -> Self {
        self.serialize_access = false;
        self
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    /// Serves `bytes` arriving at `arrival` and returns the completion time.
    pub fn service(&mut self, bytes: u64, arrival: SimTime) -> SimTime {
        debug_assert!(bytes >= 1);
        let start = arrival.max(self.busy_until);
        let occupancy = SimTime::for_bytes(bytes, self.service_bw);
        let done = start + self.access_latency + occupancy;
        self.busy_until = if self.serialize_access { done } else { start + occupancy };
        self.accesses += 1;
        self.bytes += bytes;
        done
    }
}
