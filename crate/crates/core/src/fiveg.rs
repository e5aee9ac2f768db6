//! One direction of the 5G user plane: packet detection into QoS flows,
//! QoS flow to DRB mapping, and a strict-priority, non-preemptive link
//! standing in for the radio.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{Dscp, VxlanPacket};
use crate::mapping::{FiveQiDescriptor, MappingError, PdrRuleSet, Qfi, QosBindings};
use crate::Nanos;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FiveGError {
    #[error("DRB {0} has no QoS flows")]
    EmptyDrb(u32),
    #[error("QFI {qfi} is mapped to DRB {first} and DRB {second}")]
    QfiInTwoDrbs { qfi: Qfi, first: u32, second: u32 },
    #[error("QFI {0} is not mapped to any DRB")]
    QfiWithoutDrb(Qfi),
    #[error("DRB id {0} is used twice")]
    DuplicateDrb(u32),
    #[error("packet detection rule targets QFI {0}, which has no QoS flow")]
    RuleWithoutFlow(Qfi),
    #[error("link capacity must be positive, got {0}")]
    BadCapacity(f64),
    #[error("jitter bounds must satisfy 0 <= lo <= hi (got {lo}..{hi})")]
    BadJitter { lo: Nanos, hi: Nanos },
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrbConfig {
    pub drb_id: u32,
    pub qfis: Vec<Qfi>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DrbState {
    pub drb_id: u32,
    pub member_qfis: BTreeSet<Qfi>,
    /// Lowest default priority level among the members.
    pub priority: u16,
}

/// Builds DRBs from configuration. Every bound QFI must land in exactly one
/// DRB. The result is ordered by (priority, drb_id).
pub fn map_qfi_to_drb(
    bindings: &QosBindings,
    config: &[DrbConfig],
) -> Result<Vec<DrbState>, FiveGError> {
    let mut owner: BTreeMap<Qfi, u32> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    let mut drbs = Vec::with_capacity(config.len());
    for drb in config {
        if !ids.insert(drb.drb_id) {
            return Err(FiveGError::DuplicateDrb(drb.drb_id));
        }
        if drb.qfis.is_empty() {
            return Err(FiveGError::EmptyDrb(drb.drb_id));
        }
        let mut priority = u16::MAX;
        for &qfi in &drb.qfis {
            if let Some(&first) = owner.get(&qfi) {
                return Err(FiveGError::QfiInTwoDrbs {
                    qfi,
                    first,
                    second: drb.drb_id,
                });
            }
            owner.insert(qfi, drb.drb_id);
            priority = priority.min(bindings.lookup(qfi)?.default_priority_level);
        }
        drbs.push(DrbState {
            drb_id: drb.drb_id,
            member_qfis: drb.qfis.iter().copied().collect(),
            priority,
        });
    }
    if let Some(b) = bindings.iter().find(|b| !owner.contains_key(&b.qfi)) {
        return Err(FiveGError::QfiWithoutDrb(b.qfi));
    }
    drbs.sort_by_key(|d| (d.priority, d.drb_id));
    Ok(drbs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Jitter {
    #[default]
    None,
    /// Uniform integer delay in `lo_ns..=hi_ns`, added after serialization.
    Uniform { lo_ns: Nanos, hi_ns: Nanos },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub capacity_bps: f64,
    pub base_latency_ns: Nanos,
    #[serde(default)]
    pub jitter: Jitter,
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), FiveGError> {
        if !self.capacity_bps.is_finite() || self.capacity_bps <= 0.0 {
            return Err(FiveGError::BadCapacity(self.capacity_bps));
        }
        if let Jitter::Uniform { lo_ns, hi_ns } = self.jitter {
            if lo_ns > hi_ns {
                return Err(FiveGError::BadJitter {
                    lo: lo_ns,
                    hi: hi_ns,
                });
            }
        }
        Ok(())
    }

    pub fn serialization_ns(&self, bytes: usize) -> Nanos {
        (bytes as f64 * 8.0 * 1e9 / self.capacity_bps).round() as Nanos
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueuedPacket {
    pub packet: VxlanPacket,
    pub size_bytes: usize,
    pub enqueue_ns: Nanos,
    /// Caller-defined identifier carried through the queue untouched.
    pub tag: u64,
    seq: u64,
}

#[derive(Debug, Clone)]
pub struct QosFlowState {
    pub qfi: Qfi,
    pub descriptor: FiveQiDescriptor,
    queue: VecDeque<QueuedPacket>,
    pub enqueued: u64,
    pub dequeued: u64,
    pub dropped: u64,
}

impl QosFlowState {
    pub fn new(qfi: Qfi, descriptor: FiveQiDescriptor) -> Self {
        QosFlowState {
            qfi,
            descriptor,
            queue: VecDeque::new(),
            enqueued: 0,
            dequeued: 0,
            dropped: 0,
        }
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn iter_queue(&self) -> impl Iterator<Item = &QueuedPacket> {
        self.queue.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum DropReason {
    Unclassified { dscp: Dscp },
    QueueFull { qfi: Qfi },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub packet: QueuedPacket,
    pub qfi: Qfi,
    pub drb_id: u32,
    pub start_ns: Nanos,
    /// Last bit leaves the transmitter; the link is busy until then.
    pub end_ns: Nanos,
    pub delivery_ns: Nanos,
}

#[derive(Debug, Clone)]
pub struct RadioSegmentConfig {
    pub rules: PdrRuleSet,
    pub bindings: QosBindings,
    pub drbs: Vec<DrbConfig>,
    pub link: LinkModel,
    /// Per-QoS-flow queue limit in packets; `None` is unbounded.
    pub queue_capacity: Option<usize>,
    pub seed: u64,
}

/// Classifier, per-QFI queues and the scheduled link of one direction.
#[derive(Debug, Clone)]
pub struct RadioSegment {
    rules: PdrRuleSet,
    flows: BTreeMap<Qfi, QosFlowState>,
    drbs: Vec<DrbState>,
    link: LinkModel,
    queue_capacity: Option<usize>,
    busy_until: Nanos,
    next_seq: u64,
    unclassified: u64,
    rng: ChaCha8Rng,
}

impl RadioSegment {
    pub fn new(cfg: RadioSegmentConfig) -> Result<Self, FiveGError> {
        cfg.link.validate()?;
        let drbs = map_qfi_to_drb(&cfg.bindings, &cfg.drbs)?;
        let flows: BTreeMap<_, _> = cfg
            .bindings
            .iter()
            .map(|b| (b.qfi, QosFlowState::new(b.qfi, b.descriptor)))
            .collect();
        if let Some(q) = cfg
            .rules
            .qfis()
            .into_iter()
            .find(|q| !flows.contains_key(q))
        {
            return Err(FiveGError::RuleWithoutFlow(q));
        }
        Ok(RadioSegment {
            rules: cfg.rules,
            flows,
            drbs,
            link: cfg.link,
            queue_capacity: cfg.queue_capacity,
            busy_until: 0,
            next_seq: 0,
            unclassified: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn drbs(&self) -> &[DrbState] {
        &self.drbs
    }

    pub fn flows(&self) -> impl Iterator<Item = &QosFlowState> {
        self.flows.values()
    }

    pub fn flow(&self, qfi: Qfi) -> Option<&QosFlowState> {
        self.flows.get(&qfi)
    }

    pub fn unclassified_drops(&self) -> u64 {
        self.unclassified
    }

    pub fn busy_until(&self) -> Nanos {
        self.busy_until
    }

    pub fn is_idle(&self, now: Nanos) -> bool {
        self.busy_until <= now
    }

    pub fn has_backlog(&self) -> bool {
        self.flows.values().any(|f| !f.queue.is_empty())
    }

    /// Runs the packet detection rules on the outer DSCP and queues the
    /// packet on the selected QoS flow.
    pub fn classify_and_enqueue(
        &mut self,
        packet: VxlanPacket,
        now: Nanos,
        tag: u64,
    ) -> Result<Qfi, DropReason> {
        let dscp = packet.outer_ip.dscp;
        let qfi = match self.rules.classify(dscp) {
            Ok(q) => q,
            Err(_) => {
                self.unclassified += 1;
                return Err(DropReason::Unclassified { dscp });
            }
        };
        let flow = self
            .flows
            .get_mut(&qfi)
            .expect("rules reference bound QFIs");
        if self
            .queue_capacity
            .is_some_and(|cap| flow.queue.len() >= cap)
        {
            flow.dropped += 1;
            return Err(DropReason::QueueFull { qfi });
        }
        let size_bytes = packet.encoded_len();
        flow.queue.push_back(QueuedPacket {
            packet,
            size_bytes,
            enqueue_ns: now,
            tag,
            seq: self.next_seq,
        });
        self.next_seq += 1;
        flow.enqueued += 1;
        Ok(qfi)
    }

    /// If the link is idle at `now`, starts sending the head-of-line packet
    /// of the highest-priority backlogged DRB (FIFO across the DRB's flows).
    pub fn schedule_step(&mut self, now: Nanos) -> Option<Transmission> {
        if !self.is_idle(now) {
            return None;
        }
        let (drb_id, qfi) = self.drbs.iter().find_map(|drb| {
            drb.member_qfis
                .iter()
                .filter_map(|q| self.flows[q].queue.front().map(|p| (p.seq, *q)))
                .min()
                .map(|(_, q)| (drb.drb_id, q))
        })?;
        let flow = self.flows.get_mut(&qfi).expect("member QFI has a flow");
        let packet = flow.queue.pop_front().expect("head exists");
        flow.dequeued += 1;

        let end_ns = now + self.link.serialization_ns(packet.size_bytes);
        let jitter = match self.link.jitter {
            Jitter::None => 0,
            Jitter::Uniform { lo_ns, hi_ns } => self.rng.random_range(lo_ns..=hi_ns),
        };
        self.busy_until = end_ns;
        Some(Transmission {
            packet,
            qfi,
            drb_id,
            start_ns: now,
            end_ns,
            delivery_ns: end_ns + self.link.base_latency_ns + jitter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdbReport {
    pub five_qi: u16,
    pub packet_delay_budget_ms: f64,
    /// Fraction of samples with delay <= budget; 1.0 when there are none.
    pub within_budget_fraction: f64,
    pub delay_samples_ns: Vec<Nanos>,
}

/// Checks per-packet delays (classification to delivery) against the
/// flow's packet delay budget.
pub fn pdb_evaluate(descriptor: &FiveQiDescriptor, delays_ns: &[Nanos]) -> PdbReport {
    let budget = descriptor.packet_delay_budget_ns();
    let within = delays_ns.iter().filter(|&&d| d <= budget).count();
    let fraction = if delays_ns.is_empty() {
        1.0
    } else {
        within as f64 / delays_ns.len() as f64
    };
    PdbReport {
        five_qi: descriptor.five_qi,
        packet_delay_budget_ms: descriptor.packet_delay_budget_ms,
        within_budget_fraction: fraction,
        delay_samples_ns: delays_ns.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{EthernetFrame, Pcp, VlanTag};
    use crate::mapping::{standard_five_qi, DscpTable, QosFlowBinding};
    use std::net::Ipv4Addr;

    fn qfi(v: u8) -> Qfi {
        Qfi::new(v).unwrap()
    }

    fn bindings(pairs: &[(u8, u16)]) -> QosBindings {
        QosBindings::new(pairs.iter().map(|&(q, f)| QosFlowBinding {
            qfi: qfi(q),
            descriptor: standard_five_qi(f).unwrap(),
        }))
        .unwrap()
    }

    /// QFI 1 = LP (5QI 9), 2 = LMP (80), 3 = HMP (86), 4 = HP (69).
    fn testbed(link: LinkModel, cap: Option<usize>) -> RadioSegment {
        let pcps = [(0u8, 1u8), (2, 2), (5, 3), (7, 4)];
        let assignment: Vec<_> = pcps
            .iter()
            .map(|&(p, q)| (Pcp::new(p).unwrap(), qfi(q)))
            .collect();
        RadioSegment::new(RadioSegmentConfig {
            rules: PdrRuleSet::from_pcp_assignment(&DscpTable::default(), &assignment).unwrap(),
            bindings: bindings(&[(1, 9), (2, 80), (3, 86), (4, 69)]),
            drbs: (1..=4)
                .map(|i| DrbConfig {
                    drb_id: i,
                    qfis: vec![qfi(i as u8)],
                })
                .collect(),
            link,
            queue_capacity: cap,
            seed: 7,
        })
        .unwrap()
    }

    fn pkt(pcp: u8, payload: usize) -> VxlanPacket {
        let tag = VlanTag::new(100, Pcp::new(pcp).unwrap()).unwrap();
        let inner = EthernetFrame {
            dst: "10:00:00:00:00:01".parse().unwrap(),
            src: "20:00:00:00:00:01".parse().unwrap(),
            tag: Some(tag),
            ethertype: 0x0800,
            payload: vec![0; payload],
        };
        let dscp = DscpTable::default().dscp_from_pcp(tag.pcp);
        VxlanPacket::new(
            Ipv4Addr::new(192, 168, 1, 100),
            Ipv4Addr::new(192, 168, 1, 1),
            dscp,
            1000 + u32::from(pcp),
            inner,
        )
    }

    fn link(capacity_bps: f64) -> LinkModel {
        LinkModel {
            capacity_bps,
            base_latency_ns: 1_000_000,
            jitter: Jitter::None,
        }
    }

    #[test]
    fn testbed_classification() {
        let mut seg = testbed(link(100e6), None);
        for (pcp, expected) in [(7, 4), (5, 3), (2, 2), (0, 1)] {
            assert_eq!(
                seg.classify_and_enqueue(pkt(pcp, 50), 0, 0).unwrap(),
                qfi(expected)
            );
        }
    }

    #[test]
    fn unclassified_packet_is_counted() {
        let mut seg = testbed(link(100e6), None);
        let r = seg.classify_and_enqueue(pkt(3, 50), 0, 0);
        assert_eq!(
            r,
            Err(DropReason::Unclassified {
                dscp: Dscp::new(24).unwrap()
            })
        );
        assert_eq!(seg.unclassified_drops(), 1);
    }

    #[test]
    fn drb_priority_is_member_minimum() {
        let b = bindings(&[(1, 9), (2, 80)]);
        let drbs = map_qfi_to_drb(
            &b,
            &[DrbConfig {
                drb_id: 1,
                qfis: vec![qfi(1), qfi(2)],
            }],
        )
        .unwrap();
        assert_eq!(drbs[0].priority, 68);
    }

    #[test]
    fn drb_configuration_errors() {
        let b = bindings(&[(1, 9), (2, 80)]);
        let one = |id, q: &[u8]| DrbConfig {
            drb_id: id,
            qfis: q.iter().map(|&v| qfi(v)).collect(),
        };
        assert_eq!(
            map_qfi_to_drb(&b, &[one(1, &[1, 2]), one(2, &[])]),
            Err(FiveGError::EmptyDrb(2))
        );
        assert_eq!(
            map_qfi_to_drb(&b, &[one(1, &[1, 2]), one(2, &[2])]),
            Err(FiveGError::QfiInTwoDrbs {
                qfi: qfi(2),
                first: 1,
                second: 2
            })
        );
        assert_eq!(
            map_qfi_to_drb(&b, &[one(1, &[1])]),
            Err(FiveGError::QfiWithoutDrb(qfi(2)))
        );
        assert!(matches!(
            map_qfi_to_drb(&b, &[one(1, &[1, 2, 3])]),
            Err(FiveGError::Mapping(MappingError::UnboundQfi(_)))
        ));
    }

    #[test]
    fn four_flows_four_drbs() {
        let seg = testbed(link(100e6), None);
        let order: Vec<u32> = seg.drbs().iter().map(|d| d.drb_id).collect();
        // HP (5QI 69, prio 5) first, LP (5QI 9, prio 90) last.
        assert_eq!(order, vec![4, 3, 2, 1]);
    }

    #[test]
    fn high_priority_goes_first() {
        let mut seg = testbed(link(100e6), None);
        seg.classify_and_enqueue(pkt(0, 1000), 0, 1).unwrap();
        seg.classify_and_enqueue(pkt(7, 50), 0, 2).unwrap();
        let first = seg.schedule_step(0).unwrap();
        assert_eq!(first.qfi, qfi(4));
        assert!(seg.schedule_step(first.end_ns - 1).is_none());
        let second = seg.schedule_step(first.end_ns).unwrap();
        assert_eq!(second.qfi, qfi(1));
        assert_eq!(second.start_ns, first.end_ns);
        assert!(seg.schedule_step(second.end_ns).is_none());
    }

    #[test]
    fn serialization_plus_latency() {
        let l = link(12e6);
        assert_eq!(l.serialization_ns(1500), 1_000_000);
        let mut seg = testbed(l, None);
        // 1500-byte datagram: 36 bytes of tunnel headers, 18 of tagged L2.
        let p = pkt(5, 1500 - 36 - 18);
        assert_eq!(p.encoded_len(), 1500);
        seg.classify_and_enqueue(p, 0, 0).unwrap();
        let t = seg.schedule_step(0).unwrap();
        assert_eq!(t.delivery_ns - t.start_ns, 2_000_000);
    }

    #[test]
    fn empty_queues_do_nothing() {
        let mut seg = testbed(link(100e6), None);
        assert!(seg.schedule_step(0).is_none());
        assert!(seg.is_idle(0));
    }

    #[test]
    fn queue_cap_drops_tail() {
        let mut seg = testbed(link(100e6), Some(2));
        assert!(seg.classify_and_enqueue(pkt(0, 10), 0, 0).is_ok());
        assert!(seg.classify_and_enqueue(pkt(0, 10), 0, 1).is_ok());
        assert_eq!(
            seg.classify_and_enqueue(pkt(0, 10), 0, 2),
            Err(DropReason::QueueFull { qfi: qfi(1) })
        );
        let f = seg.flow(qfi(1)).unwrap();
        assert_eq!((f.enqueued, f.dropped, f.queued()), (2, 1, 2));
    }

    #[test]
    fn jitter_is_seeded_and_bounded() {
        let mut l = link(100e6);
        l.jitter = Jitter::Uniform {
            lo_ns: 10,
            hi_ns: 5_000,
        };
        let run = || {
            let mut seg = testbed(l, None);
            let mut out = Vec::new();
            let mut now = 0;
            for i in 0..50 {
                seg.classify_and_enqueue(pkt(0, 100), now, i).unwrap();
                let t = seg.schedule_step(now).unwrap();
                let j = t.delivery_ns - t.end_ns - l.base_latency_ns;
                assert!((10..=5_000).contains(&j));
                out.push(t.delivery_ns);
                now = t.end_ns;
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_link_parameters() {
        assert!(link(0.0).validate().is_err());
        let mut l = link(1e6);
        l.jitter = Jitter::Uniform { lo_ns: 5, hi_ns: 1 };
        assert!(l.validate().is_err());
    }

    #[test]
    fn pdb_fraction() {
        let d = standard_five_qi(86).unwrap();
        assert_eq!(pdb_evaluate(&d, &[1, 2, 3]).within_budget_fraction, 1.0);
        let r = pdb_evaluate(&d, &[4_000_000, 5_000_000, 5_000_001, 9_000_000]);
        assert_eq!(r.within_budget_fraction, 0.5);
        assert_eq!(r.delay_samples_ns.len(), 4);
    }
}
