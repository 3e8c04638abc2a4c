//! Time-ordered event queue.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::topology::NodeId;

/// One tiny packet in flight on a specific hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub packet: u64,
    pub seq: u32,
    pub path: usize,
    /// Index of the link within the path.
    pub hop: usize,
    pub attempt: u32,
    pub payload_bits: u64,
    pub header_bits: u64,
    pub from: NodeId,
    pub to: NodeId,
}

impl Frame {
    pub fn wire_bits(&self) -> u64 {
        self.payload_bits + self.header_bits
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    PacketBorn {
        packet: u64,
    },
    /// The node may begin sending the head of its queue.
    HopStart {
        node: NodeId,
    },
    HopComplete {
        frame: Frame,
    },
    HopFailed {
        frame: Frame,
    },
    FragmentDelivered {
        frame: Frame,
    },
    DeadlineExpired {
        packet: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub ordinal: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    // reversed so the max-heap pops the earliest (time, ordinal)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.ordinal.cmp(&self.ordinal))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue on `(time, insertion ordinal)`. Refuses to schedule into the past.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_ordinal: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        assert!(
            time >= self.now && time.is_finite(),
            "event scheduled at {time} before current time {}",
            self.now
        );
        self.heap.push(Event {
            time,
            ordinal: self.next_ordinal,
            kind,
        });
        self.next_ordinal += 1;
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }
}
