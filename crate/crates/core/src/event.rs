//! Deterministic discrete-event kernel.
//!
//! A single [`EventQueue`] orders every event in the simulation by
//! `(time, seq)`, where `seq` is a global counter assigned at scheduling time.
//! Ties at equal time therefore pop in scheduling order, which makes runs
//! reproducible bit for bit.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::SimError;

const PS_PER_SEC: u128 = 1_000_000_000_000;

/// Simulated time in integer picoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * 1_000)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000_000)
    }

    pub const fn ps(self) -> u64 {
        self.0
    }

    pub fn as_ns_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e12
    }

    /// Time to serialize `bytes` at `bytes_per_sec`, rounded up so a
    /// transfer never finishes early.
    pub fn for_bytes(bytes: u64, bytes_per_sec: u64) -> Self {
        assert!(bytes_per_sec > 0, "bandwidth must be positive");
        let num = bytes as u128 * PS_PER_SEC;
        let bw = bytes_per_sec as u128;
        SimTime(num.div_ceil(bw) as u64)
    }

    /// Cycle period of a clock given in MHz, rounded up to a whole picosecond.
    pub fn cycle_of_mhz(mhz: u64) -> Self {
        assert!(mhz > 0, "clock must be positive");
        SimTime(1_000_000u64.div_ceil(mhz))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulated time overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identifier of the component an event is delivered to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(pub u32);

/// A scheduled event.
#[derive(Clone, Debug)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub target: ComponentId,
    pub payload: P,
}

impl<P> Event<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.time, self.seq)
    }
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Pending events keyed by `(time, seq)`.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Event<P>>>,
    now: SimTime,
    next_seq: u64,
    popped: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            popped: 0,
        }
    }

    /// Current simulation time: the time of the last popped event.
    #[inline]
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `payload` for `target` at absolute `time` and returns the
    /// sequence number assigned to it.
    pub fn schedule(&mut self, time: SimTime, target: ComponentId, payload: P) -> Result<u64, SimError> {
        if time < self.now {
            return Err(SimError::TimeTravel {
                now: self.now,
                scheduled: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event {
            time,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Schedules `delay` after the current time.
    pub fn schedule_in(&mut self, delay: SimTime, target: ComponentId, payload: P) -> u64 {
        let at = self.now + delay;
        // cannot fail: at >= now
        self.schedule(at, target, payload).unwrap()
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Event<P>> {
        let Reverse(ev) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.popped += 1;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Total number of events ever scheduled.
    pub fn scheduled_count(&self) -> u64 {
        self.next_seq
    }

    /// Total number of events popped so far.
    pub fn popped_count(&self) -> u64 {
        self.popped
    }
}

/// Receives events popped by [`run_to_completion`].
pub trait Dispatch<P> {
    fn dispatch(&mut self, event: Event<P>, queue: &mut EventQueue<P>) -> Result<(), SimError>;
}

/// Drains `queue`, handing every event to `handlers`. Returns the time of the
/// last processed event, or zero for an empty queue.
pub fn run_to_completion<P, D>(queue: &mut EventQueue<P>, handlers: &mut D) -> Result<SimTime, SimError>
where
    D: Dispatch<P> + ?Sized,
{
    let mut last = SimTime::ZERO;
    while let Some(ev) = queue.pop() {
        last = ev.time;
        handlers.dispatch(ev, queue)?;
    }
    Ok(last)
}

type BoxedHandler<P> = Box<dyn FnMut(Event<P>, &mut EventQueue<P>) -> Result<(), SimError>>;

/// Closure-based handler table keyed by component id.
pub struct Registry<P> {
    handlers: HashMap<ComponentId, (String, BoxedHandler<P>)>,
}

impl<P> Default for Registry<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Registry<P> {
    pub fn new() -> Self {
        Self {
            handlers: HashMap::new(),
        }
    }

    pub fn register<F>(&mut self, id: ComponentId, name: impl Into<String>, handler: F)
    where
        F: FnMut(Event<P>, &mut EventQueue<P>) -> Result<(), SimError> + 'static,
    {
        self.handlers.insert(id, (name.into(), Box::new(handler)));
    }

    pub fn name(&self, id: ComponentId) -> Option<&str> {
        self.handlers.get(&id).map(|(n, _)| n.as_str())
    }
}

impl<P> Dispatch<P> for Registry<P> {
    fn dispatch(&mut self, event: Event<P>, queue: &mut EventQueue<P>) -> Result<(), SimError> {
        match self.handlers.get_mut(&event.target) {
            Some((_, h)) => h(event, queue),
            None => Err(SimError::UnregisteredComponent(format!("component#{}", event.target.0))),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;
    use std::rc::Rc;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const C: ComponentId = ComponentId(0);

    #[test]
    fn single_event_advances_clock() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), C, "e").unwrap();
        let e = q.pop().unwrap();
        assert_eq!(e.payload, "e");
        assert_eq!(q.now(), SimTime(10));
        assert!(q.pop().is_none());
    }

    #[test]
    fn ties_break_by_sequence() {
        let mut q = EventQueue::new();
        let s2 = q.schedule(SimTime(5), C, "e2").unwrap();
        let s1 = q.schedule(SimTime(5), C, "e1").unwrap();
        assert!(s2 < s1);
        assert_eq!(q.pop().unwrap().payload, "e2");
        assert_eq!(q.pop().unwrap().payload, "e1");
    }

    #[test]
    fn explicit_seq_ordering() {
        let a = Event {
            time: SimTime(5),
            seq: 1,
            target: C,
            payload: (),
        };
        let b = Event {
            time: SimTime(5),
            seq: 0,
            target: C,
            payload: (),
        };
        assert!(b < a);
    }

    #[test]
    fn scheduling_in_the_past_is_fatal() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), C, ()).unwrap();
        q.pop();
        let err = q.schedule(SimTime(9), C, ()).unwrap_err();
        assert_eq!(
            err,
            SimError::TimeTravel {
                now: SimTime(10),
                scheduled: SimTime(9)
            }
        );
    }

    #[test]
    fn random_events_pop_in_sorted_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut q = EventQueue::new();
        let mut expected = Vec::new();
        for i in 0..1000u32 {
            let t = SimTime(rng.random_range(0..200));
            let seq = q.schedule(t, C, i).unwrap();
            expected.push((t, seq, i));
        }
        expected.sort();
        let got: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.seq, e.payload))
            .collect();
        assert_eq!(got, expected);
        assert_eq!(q.scheduled_count(), q.popped_count());
    }

    #[test]
    fn empty_run_returns_zero() {
        let mut q: EventQueue<()> = EventQueue::new();
        let mut reg = Registry::new();
        assert_eq!(run_to_completion(&mut q, &mut reg).unwrap(), SimTime::ZERO);
    }

    #[test]
    fn noop_handler_returns_event_time() {
        let mut q = EventQueue::new();
        let mut reg = Registry::new();
        reg.register(C, "noop", |_, _| Ok(()));
        q.schedule(SimTime(42), C, ()).unwrap();
        assert_eq!(run_to_completion(&mut q, &mut reg).unwrap(), SimTime(42));
        assert!(q.is_empty());
    }

    #[test]
    fn chained_events() {
        let mut q = EventQueue::new();
        let mut reg = Registry::new();
        let seen = Rc::new(RefCell::new(Vec::new()));
        let s = seen.clone();
        reg.register(C, "chain", move |e: Event<u32>, q: &mut EventQueue<u32>| {
            s.borrow_mut().push(e.time);
            if e.payload < 3 {
                q.schedule_in(SimTime(10), C, e.payload + 1);
            }
            Ok(())
        });
        q.schedule(SimTime(0), C, 0).unwrap();
        assert_eq!(run_to_completion(&mut q, &mut reg).unwrap(), SimTime(30));
        assert_eq!(*seen.borrow(), vec![SimTime(0), SimTime(10), SimTime(20), SimTime(30)]);
    }

    #[test]
    fn unregistered_target_names_component() {
        let mut q = EventQueue::new();
        let mut reg: Registry<()> = Registry::new();
        q.schedule(SimTime(1), ComponentId(9), ()).unwrap();
        let err = run_to_completion(&mut q, &mut reg).unwrap_err();
        assert_eq!(err, SimError::UnregisteredComponent("component#9".into()));
    }

    #[test]
    fn byte_serialization_rounds_up() {
        assert_eq!(SimTime::for_bytes(4096, 32_000_000_000), SimTime::from_ns(128));
        assert_eq!(SimTime::for_bytes(64, 32_000_000_000), SimTime::from_ns(2));
        // 1 byte at 32 GB/s is 31.25 ps
        assert_eq!(SimTime::for_bytes(1, 32_000_000_000), SimTime(32));
        assert_eq!(SimTime::cycle_of_mhz(1000), SimTime::from_ns(1));
    }

    proptest::proptest! {
        #[test]
        fn pops_never_go_backwards(times in proptest::collection::vec(0u64..1_000, 1..200)) {
            let mut q = EventQueue::new();
            for t in &times {
                q.schedule(SimTime(*t), C, ()).unwrap();
            }
            let mut prev: Option<(SimTime, u64)> = None;
            while let Some(e) = q.pop() {
                if let Some(p) = prev {
                    proptest::prop_assert!(p < (e.time, e.seq));
                }
                prev = Some((e.time, e.seq));
            }
            proptest::prop_assert_eq!(q.popped_count(), times.len() as u64);
        }
    }
}
