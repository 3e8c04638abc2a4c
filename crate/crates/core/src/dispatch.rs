//! Path assortment: fragmentation of real-time packets into tiny packets,
//! hop-count path classes, sequence-to-path assignment and sink-side
//! reassembly.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::link_metrics::RoutePath;
use crate::routing::PathSet;

#[derive(Debug, Error, PartialEq)]
pub enum DispatchError {
    #[error("path set is empty")]
    EmptyPathSet,
    #[error("invalid fragment count {k} for a {bits}-bit packet")]
    InvalidK { k: u32, bits: u64 },
    #[error("no paths to assign fragments to")]
    NoPaths,
    #[error("{fragments} fragments but only {paths} paths and wrap-around is disabled")]
    NotEnoughPaths { fragments: usize, paths: usize },
    #[error("unknown packet {0}")]
    UnknownPacket(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataPacket {
    pub id: u64,
    pub bits: u64,
    pub creation_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TinyPacket {
    pub parent: u64,
    /// 1-based.
    pub seq: u32,
    /// Payload bits carried for the parent.
    pub bits: u64,
    /// Per-fragment header overhead on the air.
    pub header_bits: u64,
    pub path_index: Option<usize>,
    pub creation_time: f64,
    pub arrival_time: Option<f64>,
}

impl TinyPacket {
    pub fn wire_bits(&self) -> u64 {
        self.bits + self.header_bits
    }
}

/// Orders paths by hop count, then by descending merit, then by ascending
/// first interior node (a direct path has none and sorts first).
pub fn classify_paths(paths: &PathSet) -> Result<Vec<RoutePath>, DispatchError> {
    if paths.is_empty() {
        return Err(DispatchError::EmptyPathSet);
    }
    let mut out = paths.paths.clone();
    out.sort_by(path_order);
    Ok(out)
}

/// Splits a packet into `k` tiny packets; the first `bits % k` fragments
/// carry one extra bit.
pub fn fragment(
    packet: &DataPacket,
    k: u32,
    header_bits: u64,
) -> Result<Vec<TinyPacket>, DispatchError> {
    if k == 0 || k as u64 > packet.bits {
        return Err(DispatchError::InvalidK {
            k,
            bits: packet.bits,
        });
    }
    let base = packet.bits / k as u64;
    let extra = packet.bits % k as u64;
    Ok((1..=k)
        .map(|seq| TinyPacket {
            parent: packet.id,
            seq,
            bits: base + u64::from((seq as u64) <= extra),
            header_bits,
            path_index: None,
            creation_time: packet.creation_time,
            arrival_time: None,
        })
        .collect())
}

/// Sequence `i` goes to the `i`-th classified path, wrapping modulo the
/// path count when `wrap` allows it.
pub fn assign(
    fragments: Vec<TinyPacket>,
    ordered_paths: &[RoutePath],
    wrap: bool,
) -> Result<Vec<(TinyPacket, usize)>, DispatchError> {
    let n = ordered_paths.len();
    if n == 0 {
        return Err(DispatchError::NoPaths);
    }
    if !wrap && fragments.len() > n {
        return Err(DispatchError::NotEnoughPaths {
            fragments: fragments.len(),
            paths: n,
        });
    }
    Ok(fragments
        .into_iter()
        .map(|mut f| {
            let idx = (f.seq as usize - 1) % n;
            f.path_index = Some(idx);
            (f, idx)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DeliveryStatus {
    Pending,
    Complete,
    Expired,
}

#[derive(Debug, Clone)]
struct PendingPacket {
    k: u32,
    creation_time: f64,
    deadline: f64,
    arrivals: BTreeMap<u32, f64>,
    status: DeliveryStatus,
    completed_at: Option<f64>,
}

/// Sink-side reassembly state.
#[derive(Debug, Clone, Default)]
pub struct ReassemblyBuffer {
    packets: BTreeMap<u64, PendingPacket>,
    out_of_order: u64,
    fragments_received: u64,
}

impl ReassemblyBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts tracking a packet that will arrive as `k` fragments.
    pub fn register(&mut self, packet: &DataPacket, k: u32, deadline: f64) {
        self.packets.insert(
            packet.id,
            PendingPacket {
                k,
                creation_time: packet.creation_time,
                deadline,
                arrivals: BTreeMap::new(),
                status: DeliveryStatus::Pending,
                completed_at: None,
            },
        );
    }

    /// Records a fragment arrival at time `now`. Duplicates change nothing.
    pub fn reassemble(
        &mut self,
        fragment: &TinyPacket,
        now: f64,
    ) -> Result<DeliveryStatus, DispatchError> {
        let p = self
            .packets
            .get_mut(&fragment.parent)
            .ok_or(DispatchError::UnknownPacket(fragment.parent))?;
        if p.status != DeliveryStatus::Pending || p.arrivals.contains_key(&fragment.seq) {
            return Ok(p.status);
        }
        if now > p.deadline {
            p.status = DeliveryStatus::Expired;
            return Ok(p.status);
        }
        if p.arrivals
            .keys()
            .next_back()
            .is_some_and(|&max| max > fragment.seq)
        {
            self.out_of_order += 1;
        }
        self.fragments_received += 1;
        p.arrivals.insert(fragment.seq, now);
        if p.arrivals.len() == p.k as usize {
            p.status = DeliveryStatus::Complete;
            p.completed_at = p.arrivals.values().copied().reduce(f64::max);
        }
        Ok(p.status)
    }

    /// Marks the packet expired if its deadline has passed and it is still
    /// incomplete.
    pub fn expire(&mut self, packet_id: u64, now: f64) -> Result<DeliveryStatus, DispatchError> {
        let p = self
            .packets
            .get_mut(&packet_id)
            .ok_or(DispatchError::UnknownPacket(packet_id))?;
        if p.status == DeliveryStatus::Pending && now >= p.deadline {
            p.status = DeliveryStatus::Expired;
        }
        Ok(p.status)
    }

    pub fn status(&self, packet_id: u64) -> Option<DeliveryStatus> {
        self.packets.get(&packet_id).map(|p| p.status)
    }

    /// Latest fragment arrival minus creation time, for complete packets.
    pub fn delay(&self, packet_id: u64) -> Option<f64> {
        let p = self.packets.get(&packet_id)?;
        p.completed_at.map(|t| t - p.creation_time)
    }

    /// Fragments that arrived after a higher sequence number of the same packet.
    pub fn out_of_order(&self) -> u64 {
        self.out_of_order
    }

    pub fn fragments_received(&self) -> u64 {
        self.fragments_received
    }

    pub fn packet_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.packets.keys().copied()
    }
}

/// Comparator behind [`classify_paths`].
pub fn path_order(a: &RoutePath, b: &RoutePath) -> Ordering {
    a.hop_count
        .cmp(&b.hop_count)
        .then_with(|| b.total_merit.total_cmp(&a.total_merit))
        .then_with(|| a.interior().first().cmp(&b.interior().first()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NodeId;
    use proptest::prelude::*;

    fn path(hops: usize, merit: f64, first_interior: u32) -> RoutePath {
        let mut ids = vec![NodeId(1)];
        ids.extend((0..hops as u32 - 1).map(|i| NodeId(first_interior + i)));
        ids.push(NodeId(0));
        let mut p = RoutePath::new(ids).unwrap();
        p.total_merit = merit;
        p
    }

    fn set(paths: Vec<RoutePath>) -> PathSet {
        PathSet::new(NodeId(1), NodeId(0), paths)
    }

    fn packet(bits: u64) -> DataPacket {
        DataPacket {
            id: 9,
            bits,
            creation_time: 0.5,
        }
    }

    #[test]
    fn classify_examples() {
        let s = set(vec![path(5, 1.0, 10), path(3, 1.0, 20), path(7, 1.0, 30)]);
        let hops: Vec<_> = classify_paths(&s)
            .unwrap()
            .iter()
            .map(|p| p.hop_count)
            .collect();
        assert_eq!(hops, vec![3, 5, 7]);

        let s = set(vec![path(4, 6.1, 10), path(4, 7.3, 20)]);
        assert_eq!(classify_paths(&s).unwrap()[0].total_merit, 7.3);

        let s = set(vec![path(2, 6.1, 10), path(2, 6.1, 5)]);
        assert_eq!(classify_paths(&s).unwrap()[0].interior()[0], NodeId(5));

        let single = set(vec![path(3, 1.0, 10)]);
        assert_eq!(classify_paths(&single).unwrap(), single.paths);
        assert_eq!(
            classify_paths(&set(vec![])),
            Err(DispatchError::EmptyPathSet)
        );
    }

    #[test]
    fn fragment_examples() {
        let f = fragment(&packet(4096), 4, 0).unwrap();
        assert_eq!(f.iter().map(|t| t.bits).collect::<Vec<_>>(), vec![1024; 4]);
        assert_eq!(
            f.iter().map(|t| t.seq).collect::<Vec<_>>(),
            vec![1, 2, 3, 4]
        );

        let f = fragment(&packet(4097), 4, 0).unwrap();
        assert_eq!(
            f.iter().map(|t| t.bits).collect::<Vec<_>>(),
            vec![1025, 1024, 1024, 1024]
        );

        let f = fragment(&packet(4096), 1, 64).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].bits, 4096);
        assert_eq!(f[0].wire_bits(), 4160);

        assert!(fragment(&packet(3), 4, 0).is_err());
        assert!(fragment(&packet(3), 0, 0).is_err());
    }

    #[test]
    fn assign_examples() {
        let ordered = classify_paths(&set(vec![
            path(5, 1.0, 40),
            path(3, 1.0, 20),
            path(2, 1.0, 10),
            path(4, 1.0, 30),
        ]))
        .unwrap();
        let pairs = assign(fragment(&packet(4096), 4, 0).unwrap(), &ordered, true).unwrap();
        let hops: Vec<_> = pairs.iter().map(|(_, i)| ordered[*i].hop_count).collect();
        assert_eq!(hops, vec![2, 3, 4, 5]);

        let two = classify_paths(&set(vec![path(2, 1.0, 10), path(3, 1.0, 20)])).unwrap();
        let pairs = assign(fragment(&packet(4096), 4, 0).unwrap(), &two, true).unwrap();
        assert_eq!(
            pairs.iter().map(|(_, i)| *i).collect::<Vec<_>>(),
            vec![0, 1, 0, 1]
        );
        assert!(matches!(
            assign(fragment(&packet(4096), 4, 0).unwrap(), &two, false),
            Err(DispatchError::NotEnoughPaths { .. })
        ));

        let pairs = assign(fragment(&packet(4096), 1, 0).unwrap(), &ordered, true).unwrap();
        assert_eq!(ordered[pairs[0].1].hop_count, 2);
        assert_eq!(assign(vec![], &[], true), Err(DispatchError::NoPaths));
    }

    #[test]
    fn reassembly_examples() {
        let mut buf = ReassemblyBuffer::new();
        let p = DataPacket {
            id: 1,
            bits: 100,
            creation_time: 0.25,
        };
        buf.register(&p, 1, 5.25);
        let f = fragment(&p, 1, 0).unwrap();
        assert_eq!(
            buf.reassemble(&f[0], 0.75).unwrap(),
            DeliveryStatus::Complete
        );
        assert_eq!(buf.delay(1), Some(0.5));

        let p = DataPacket {
            id: 2,
            bits: 300,
            creation_time: 0.0,
        };
        buf.register(&p, 3, 5.0);
        let f = fragment(&p, 3, 0).unwrap();
        assert_eq!(buf.reassemble(&f[0], 1.0).unwrap(), DeliveryStatus::Pending);
        assert_eq!(buf.reassemble(&f[2], 1.2).unwrap(), DeliveryStatus::Pending);
        assert_eq!(
            buf.reassemble(&f[1], 1.4).unwrap(),
            DeliveryStatus::Complete
        );
        assert_eq!(buf.delay(2), Some(1.4));
        assert_eq!(buf.out_of_order(), 1);

        let p = DataPacket {
            id: 3,
            bits: 200,
            creation_time: 0.0,
        };
        buf.register(&p, 2, 5.0);
        let f = fragment(&p, 2, 0).unwrap();
        assert_eq!(buf.reassemble(&f[0], 1.0).unwrap(), DeliveryStatus::Pending);
        assert_eq!(buf.expire(3, 5.0).unwrap(), DeliveryStatus::Expired);
        assert_eq!(buf.reassemble(&f[1], 5.5).unwrap(), DeliveryStatus::Expired);
        assert_eq!(buf.delay(3), None);
    }

    #[test]
    fn duplicates_are_idempotent() {
        let mut buf = ReassemblyBuffer::new();
        let p = DataPacket {
            id: 4,
            bits: 200,
            creation_time: 0.0,
        };
        buf.register(&p, 2, 5.0);
        let f = fragment(&p, 2, 0).unwrap();
        buf.reassemble(&f[0], 1.0).unwrap();
        assert_eq!(buf.reassemble(&f[0], 2.0).unwrap(), DeliveryStatus::Pending);
        assert_eq!(buf.fragments_received(), 1);
        assert_eq!(
            buf.reassemble(&f[1], 1.5).unwrap(),
            DeliveryStatus::Complete
        );
        assert_eq!(
            buf.reassemble(&f[1], 3.0).unwrap(),
            DeliveryStatus::Complete
        );
        assert_eq!(buf.delay(4), Some(1.5));
    }

    #[test]
    fn late_fragment_expires() {
        let mut buf = ReassemblyBuffer::new();
        let p = DataPacket {
            id: 5,
            bits: 10,
            creation_time: 0.0,
        };
        buf.register(&p, 1, 5.0);
        let f = fragment(&p, 1, 0).unwrap();
        assert_eq!(buf.reassemble(&f[0], 6.0).unwrap(), DeliveryStatus::Expired);
    }

    proptest! {
        #[test]
        fn fragments_sum_and_follow_ceil_first(bits in 1u64..100_000, k in 1u32..64) {
            prop_assume!(k as u64 <= bits);
            let f = fragment(&packet(bits), k, 64).unwrap();
            prop_assert_eq!(f.iter().map(|t| t.bits).sum::<u64>(), bits);
            let ceil = bits.div_ceil(k as u64);
            let floor = bits / k as u64;
            let big = (bits % k as u64) as usize;
            for (i, t) in f.iter().enumerate() {
                prop_assert_eq!(t.bits, if i < big { ceil } else { floor });
            }
        }

        #[test]
        fn assignment_is_a_bijection_on_slots(k in 1u32..40, n in 1usize..10) {
            let paths: Vec<_> = (0..n).map(|i| path(2 + i, 1.0, 10 * (i as u32 + 1))).collect();
            let ordered = classify_paths(&set(paths)).unwrap();
            let pairs = assign(fragment(&packet(10_000), k, 0).unwrap(), &ordered, true).unwrap();
            let mut counts = vec![0usize; n];
            for (f, idx) in &pairs {
                prop_assert_eq!(*idx, (f.seq as usize - 1) % n);
                counts[*idx] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            let first = pairs.iter().find(|(f, _)| f.seq == 1).unwrap().1;
            prop_assert_eq!(ordered[first].hop_count, ordered.iter().map(|p| p.hop_count).min().unwrap());
        }

        #[test]
        fn reassembly_delay_is_max_not_sum(arrivals in proptest::collection::vec(0.0..4.0f64, 1..12)) {
            let k = arrivals.len() as u32;
            let p = DataPacket { id: 1, bits: 1000, creation_time: 0.5 };
            let mut buf = ReassemblyBuffer::new();
            buf.register(&p, k, 100.0);
            for (f, &dt) in fragment(&p, k, 0).unwrap().iter().zip(&arrivals) {
                buf.reassemble(f, 0.5 + dt).unwrap();
            }
            let expect = arrivals.iter().map(|dt| 0.5 + dt).fold(f64::MIN, f64::max) - 0.5;
            prop_assert_eq!(buf.delay(1), Some(expect));
        }
    }
}
