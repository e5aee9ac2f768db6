//! Topology assembly and the event loop.
//!
//! Each LAN is one 802.1Q bridge with a port per host and one port towards
//! its VTEP. VTEPs on the network side hand packets to the UPF, which
//! classifies them onto the downlink; VTEPs on the device side use the
//! uplink. UE-to-UE traffic is hairpinned at the UPF. Multicast towards
//! several UEs is replicated per UE at the UPF.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fiveg::{DropReason, RadioSegment, RadioSegmentConfig};
use crate::frames::{EthernetFrame, MacAddress, Pcp, VxlanPacket, VXLAN_OVERHEAD};
use crate::mapping::{Qfi, Vni};
use crate::simnet::bridge::TsnBridgePort;
use crate::simnet::capture::{CapturePoint, Direction, Tap};
use crate::simnet::engine::EventQueue;
use crate::simnet::scenario::{CaptureNode, FlowPlan, Scenario, Side};
use crate::simnet::traffic::{build_payload, FrameId};
use crate::vtep::{EgressDecision, Vtep};
use crate::Nanos;

/// Timestamps collected along one frame's path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Stamps {
    pub generated_ns: Nanos,
    /// Arrival at the ingress VTEP from its LAN.
    pub vtep_in_ns: Option<Nanos>,
    /// First classification onto a QoS flow.
    pub enqueue_ns: Option<Nanos>,
    pub qfi: Option<Qfi>,
    /// Arrival at the egress VTEP.
    pub radio_rx_ns: Option<Nanos>,
    /// Decapsulated frame leaving the egress VTEP.
    pub decap_ns: Option<Nanos>,
    pub outer_len: Option<usize>,
    pub inner_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub seq: u32,
    pub sink: usize,
    pub delivery_ns: Nanos,
    pub stamps: Stamps,
}

impl Delivery {
    /// Ingress VTEP LAN port to egress VTEP decapsulation.
    pub fn vtep_to_vtep_ns(&self) -> Option<Nanos> {
        Some(self.stamps.decap_ns? - self.stamps.vtep_in_ns?)
    }

    /// Classification at the first 5G node to arrival at the egress VTEP.
    pub fn fiveg_ns(&self) -> Option<Nanos> {
        Some(self.stamps.radio_rx_ns? - self.stamps.enqueue_ns?)
    }

    pub fn end_to_end_ns(&self) -> Nanos {
        self.delivery_ns - self.stamps.generated_ns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub name: String,
    pub plan: FlowPlan,
    pub src: String,
    pub expect: Option<Vec<String>>,
    pub generated: u64,
    pub ingress_unicast: u64,
    pub ingress_multicast: u64,
    pub deliveries: Vec<Delivery>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardingRow {
    pub vni: Vni,
    pub mac: MacAddress,
    pub remote: std::net::Ipv4Addr,
    pub learned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VtepReport {
    pub name: String,
    pub ip: std::net::Ipv4Addr,
    pub side: Side,
    pub ingress_unicast: u64,
    pub ingress_multicast: u64,
    pub decapsulated: u64,
    pub own_copies: u64,
    pub forwarding_table: Vec<ForwardingRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QosFlowReport {
    pub qfi: Qfi,
    pub five_qi: u16,
    pub priority: u16,
    pub pdb_ms: f64,
    pub enqueued: u64,
    pub dequeued: u64,
    pub dropped: u64,
    pub queued: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadioReport {
    pub direction: Direction,
    pub transmissions: u64,
    pub unclassified: u64,
    pub flows: Vec<QosFlowReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ns: Nanos,
    pub end_ns: Nanos,
    pub events_processed: u64,
    pub flows: Vec<FlowReport>,
    pub hosts: Vec<String>,
    pub vteps: Vec<VtepReport>,
    pub radio: Vec<RadioReport>,
    /// Drop counts by reason.
    pub drops: BTreeMap<String, u64>,
    /// Delivered frames whose bytes differ from what was generated.
    pub integrity_mismatches: u64,
    /// Encapsulations where outer length != inner length + overhead.
    pub overhead_violations: u64,
    #[serde(skip)]
    pub captures: Vec<CapturePoint>,
}

impl SimulationReport {
    pub fn flow(&self, name: &str) -> Option<&FlowReport> {
        self.flows.iter().find(|f| f.name == name)
    }

    pub fn capture(&self, label: &str) -> Option<&CapturePoint> {
        self.captures.iter().find(|c| c.label == label)
    }

    pub fn vtep(&self, name: &str) -> Option<&VtepReport> {
        self.vteps.iter().find(|v| v.name == name)
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.values().sum()
    }
}

#[derive(Debug, Clone)]
struct Trip {
    id: FrameId,
    stamps: Stamps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PortEnd {
    /// Host -> bridge.
    HostUp(usize),
    /// Bridge -> host.
    HostDown(usize),
    /// Bridge -> VTEP.
    VtepUp(usize),
    /// VTEP -> bridge.
    VtepDown(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BridgeSource {
    Host(usize),
    Vtep,
}

#[derive(Debug)]
enum Event {
    Generate {
        flow: usize,
        k: u64,
    },
    PortFree {
        port: usize,
    },
    Arrive {
        port: usize,
        frame: EthernetFrame,
        trip: Trip,
    },
    Redirect {
        vtep: usize,
        frame: EthernetFrame,
        trip: Trip,
    },
    Encap {
        vtep: usize,
        frame: EthernetFrame,
        trip: Trip,
    },
    RadioFree {
        dir: Direction,
    },
    RadioDeliver {
        dir: Direction,
        slot: usize,
        pkt: VxlanPacket,
    },
    VtepRx {
        vtep: usize,
        pkt: VxlanPacket,
        trip: Trip,
    },
    Decap {
        vtep: usize,
        pkt: VxlanPacket,
        trip: Trip,
    },
}

struct InFlight {
    trip: Trip,
    targets: Vec<usize>,
}

struct Port {
    end: PortEnd,
    q: TsnBridgePort<(EthernetFrame, Trip)>,
}

struct VtepState {
    vtep: Vtep,
    ingress_unicast: u64,
    ingress_multicast: u64,
    decapsulated: u64,
    own_copies: u64,
}

struct FlowState {
    generated: u64,
    ingress_unicast: u64,
    ingress_multicast: u64,
    deliveries: Vec<Delivery>,
}

struct Sim<'a> {
    s: &'a Scenario,
    q: EventQueue<Event>,
    end_ns: Nanos,
    ports: Vec<Port>,
    host_up: Vec<usize>,
    host_down: Vec<usize>,
    vtep_up: Vec<usize>,
    vtep_down: Vec<usize>,
    vteps: Vec<VtepState>,
    downlink: RadioSegment,
    uplink: RadioSegment,
    tx_count: [u64; 2],
    slots: Vec<Option<InFlight>>,
    free_slots: Vec<usize>,
    flows: Vec<FlowState>,
    captures: Vec<CapturePoint>,
    drops: BTreeMap<String, u64>,
    integrity_mismatches: u64,
    overhead_violations: u64,
}

const UPLINK_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Runs a validated scenario to completion.
pub fn run(scenario: &Scenario) -> SimulationReport {
    let mut sim = Sim::new(scenario);
    sim.start();
    while let Some((now, ev)) = sim.q.pop_until(sim.end_ns) {
        sim.handle(now, ev);
    }
    sim.finish()
}

fn dir_index(dir: Direction) -> usize {
    match dir {
        Direction::Downlink => 0,
        Direction::Uplink => 1,
    }
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario) -> Self {
        let mut ports = Vec::new();
        let mut add = |end: PortEnd, link| {
            ports.push(Port {
                end,
                q: TsnBridgePort::new(link),
            });
            ports.len() - 1
        };
        let host_up: Vec<_> = (0..s.hosts.len())
            .map(|h| add(PortEnd::HostUp(h), s.lans[s.hosts[h].lan].link))
            .collect();
        let host_down: Vec<_> = (0..s.hosts.len())
            .map(|h| add(PortEnd::HostDown(h), s.lans[s.hosts[h].lan].link))
            .collect();
        let vtep_up: Vec<_> = (0..s.lans.len())
            .map(|l| add(PortEnd::VtepUp(l), s.lans[l].link))
            .collect();
        let vtep_down: Vec<_> = (0..s.lans.len())
            .map(|l| add(PortEnd::VtepDown(l), s.lans[l].link))
            .collect();

        let vteps = s
            .vteps
            .iter()
            .map(|n| {
                let mut vtep = Vtep::new(n.config.clone()).expect("validated VTEP config");
                for &(vni, mac, remote) in &n.static_entries {
                    vtep.table.insert_static(vni, mac, remote);
                }
                VtepState {
                    vtep,
                    ingress_unicast: 0,
                    ingress_multicast: 0,
                    decapsulated: 0,
                    own_copies: 0,
                }
            })
            .collect();

        let segment = |link, seed| {
            RadioSegment::new(RadioSegmentConfig {
                rules: s.fiveg.rules.clone(),
                bindings: s.fiveg.bindings.clone(),
                drbs: s.fiveg.drbs.clone(),
                link,
                queue_capacity: s.fiveg.queue_capacity,
                seed,
            })
            .expect("validated 5G config")
        };

        Sim {
            s,
            q: EventQueue::new(),
            end_ns: s.duration_ns + s.drain_ns,
            ports,
            host_up,
            host_down,
            vtep_up,
            vtep_down,
            vteps,
            downlink: segment(s.fiveg.downlink, s.seed),
            uplink: segment(s.fiveg.uplink, s.seed ^ UPLINK_SEED_SALT),
            tx_count: [0; 2],
            slots: Vec::new(),
            free_slots: Vec::new(),
            flows: s
                .flows
                .iter()
                .map(|_| FlowState {
                    generated: 0,
                    ingress_unicast: 0,
                    ingress_multicast: 0,
                    deliveries: Vec::new(),
                })
                .collect(),
            captures: s
                .captures
                .iter()
                .map(|c| CapturePoint::new(c.label.clone(), c.tap, c.snaplen))
                .collect(),
            drops: BTreeMap::new(),
            integrity_mismatches: 0,
            overhead_violations: 0,
        }
    }

    fn start(&mut self) {
        for (i, f) in self.s.flows.iter().enumerate() {
            if let Some(t) = f.schedule.emission_time(0) {
                if t <= self.s.duration_ns {
                    self.q.schedule(t, Event::Generate { flow: i, k: 0 });
                }
            }
        }
    }

    fn drop(&mut self, reason: &str) {
        *self.drops.entry(reason.to_string()).or_insert(0) += 1;
    }

    fn handle(&mut self, now: Nanos, ev: Event) {
        match ev {
            Event::Generate { flow, k } => self.generate(now, flow, k),
            Event::PortFree { port } => self.kick_port(now, port),
            Event::Arrive { port, frame, trip } => self.arrive(now, port, frame, trip),
            Event::Redirect { vtep, frame, trip } => {
                self.tap_frame(
                    now,
                    Tap::VtepRedirect,
                    CaptureNode::Vtep(vtep),
                    &frame,
                    self.lan_dir(vtep),
                );
                self.q.schedule(
                    now + self.s.timing.task2_ns,
                    Event::Encap { vtep, frame, trip },
                );
            }
            Event::Encap { vtep, frame, trip } => self.encap(now, vtep, frame, trip),
            Event::RadioFree { dir } => self.kick_radio(now, dir),
            Event::RadioDeliver { dir, slot, pkt } => self.radio_deliver(now, dir, slot, pkt),
            Event::VtepRx {
                vtep,
                pkt,
                mut trip,
            } => {
                let src = self.s.flows[usize::from(trip.id.flow)].src;
                if self.s.ingress_vtep_of(src) == vtep {
                    self.vteps[vtep].own_copies += 1;
                }
                trip.stamps.radio_rx_ns = Some(now);
                self.tap_packet(
                    now,
                    Tap::VtepRx,
                    CaptureNode::Vtep(vtep),
                    &pkt,
                    self.tunnel_dir(vtep),
                );
                self.q.schedule(
                    now + self.s.timing.task3_ns,
                    Event::Decap { vtep, pkt, trip },
                );
            }
            Event::Decap { vtep, pkt, trip } => self.decap(now, vtep, pkt, trip),
        }
    }

    /// Direction of traffic entering a VTEP from its LAN.
    fn lan_dir(&self, vtep: usize) -> Direction {
        match self.s.vteps[vtep].side {
            Side::Upf => Direction::Downlink,
            Side::Ue => Direction::Uplink,
        }
    }

    /// Direction of traffic arriving at a VTEP from the tunnel.
    fn tunnel_dir(&self, vtep: usize) -> Direction {
        match self.s.vteps[vtep].side {
            Side::Upf => Direction::Uplink,
            Side::Ue => Direction::Downlink,
        }
    }

    fn host_dir(&self, host: usize) -> Direction {
        self.lan_dir(self.s.lans[self.s.hosts[host].lan].vtep)
    }

    fn wants(&self, tap: Tap, node: CaptureNode) -> Vec<usize> {
        self.s
            .captures
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.tap == tap
                    && match (c.node, node) {
                        (CaptureNode::Direction(None), CaptureNode::Direction(_)) => true,
                        (a, b) => a == b,
                    }
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn tap_frame(
        &mut self,
        now: Nanos,
        tap: Tap,
        node: CaptureNode,
        frame: &EthernetFrame,
        dir: Direction,
    ) {
        let idx = self.wants(tap, node);
        if idx.is_empty() {
            return;
        }
        let bytes = frame.encode().expect("simulated frames fit the MTU");
        for i in idx {
            self.captures[i].record(now, &bytes, dir);
        }
    }

    fn tap_packet(
        &mut self,
        now: Nanos,
        tap: Tap,
        node: CaptureNode,
        pkt: &VxlanPacket,
        dir: Direction,
    ) {
        let idx = self.wants(tap, node);
        if idx.is_empty() {
            return;
        }
        let bytes = pkt.encode().expect("simulated packets encode");
        for i in idx {
            self.captures[i].record(now, &bytes, dir);
        }
    }

    fn build_frame(&self, flow: usize, k: u64) -> EthernetFrame {
        let f = &self.s.flows[flow];
        let id = FrameId {
            flow: flow as u16,
            seq: k as u32,
        };
        EthernetFrame {
            dst: f.dst_mac,
            src: self.s.hosts[f.src].mac,
            tag: Some(f.tuple.tag()),
            ethertype: f.payload.ethertype(),
            payload: build_payload(f.payload, id, f.payload_size),
        }
    }

    fn generate(&mut self, now: Nanos, flow: usize, k: u64) {
        let frame = self.build_frame(flow, k);
        let f = &self.s.flows[flow];
        let trip = Trip {
            id: FrameId {
                flow: flow as u16,
                seq: k as u32,
            },
            stamps: Stamps {
                generated_ns: now,
                ..Stamps::default()
            },
        };
        self.flows[flow].generated += 1;
        let src = f.src;
        self.tap_frame(
            now,
            Tap::Source,
            CaptureNode::Host(src),
            &frame,
            self.host_dir(src),
        );
        self.send(now, self.host_up[src], frame, trip);
        if let Some(t) = self.s.flows[flow].schedule.emission_time(k + 1) {
            if t <= self.s.duration_ns && k < u64::from(u32::MAX) {
                self.q.schedule(t, Event::Generate { flow, k: k + 1 });
            }
        }
    }

    fn send(&mut self, now: Nanos, port: usize, frame: EthernetFrame, trip: Trip) {
        let pcp = frame
            .tag
            .map(|t| t.pcp)
            .unwrap_or(Pcp::new(0).expect("valid"));
        let len = frame.encoded_len();
        self.ports[port].q.enqueue(pcp, len, (frame, trip));
        self.kick_port(now, port);
    }

    fn kick_port(&mut self, now: Nanos, port: usize) {
        if let Some(tx) = self.ports[port].q.start_next(now) {
            let (frame, trip) = tx.item;
            self.q.schedule(tx.end_ns, Event::PortFree { port });
            self.q
                .schedule(tx.arrival_ns, Event::Arrive { port, frame, trip });
        }
    }

    fn arrive(&mut self, now: Nanos, port: usize, frame: EthernetFrame, trip: Trip) {
        match self.ports[port].end {
            PortEnd::HostUp(h) => {
                self.bridge(now, self.s.hosts[h].lan, BridgeSource::Host(h), frame, trip)
            }
            PortEnd::VtepDown(l) => self.bridge(now, l, BridgeSource::Vtep, frame, trip),
            PortEnd::HostDown(h) => self.sink(now, h, frame, trip),
            PortEnd::VtepUp(l) => {
                let vtep = self.s.lans[l].vtep;
                let mut trip = trip;
                trip.stamps.vtep_in_ns = Some(now);
                self.tap_frame(
                    now,
                    Tap::VtepLanIn,
                    CaptureNode::Vtep(vtep),
                    &frame,
                    self.lan_dir(vtep),
                );
                self.q.schedule(
                    now + self.s.timing.task1_ns,
                    Event::Redirect { vtep, frame, trip },
                );
            }
        }
    }

    fn bridge(
        &mut self,
        now: Nanos,
        lan: usize,
        from: BridgeSource,
        frame: EthernetFrame,
        trip: Trip,
    ) {
        let vlan = match frame.tag {
            Some(t) => t.vlan_id,
            None => self.s.vteps[self.s.lans[lan].vtep].config.default_vlan,
        };
        let members: Vec<usize> = self
            .s
            .hosts
            .iter()
            .enumerate()
            .filter(|(i, h)| {
                h.lan == lan && h.vlans.contains(&vlan) && from != BridgeSource::Host(*i)
            })
            .map(|(i, _)| i)
            .collect();
        let mut out: Vec<usize> = Vec::new();
        if frame.dst.is_multicast() {
            out.extend(members.iter().map(|&h| self.host_down[h]));
            if matches!(from, BridgeSource::Host(_)) {
                out.push(self.vtep_up[lan]);
            }
        } else if let Some(h) = self
            .s
            .hosts
            .iter()
            .position(|h| h.lan == lan && h.mac == frame.dst)
        {
            if members.contains(&h) {
                out.push(self.host_down[h]);
            } else {
                self.drop("bridge_vlan_filtered");
            }
        } else if matches!(from, BridgeSource::Host(_)) {
            out.push(self.vtep_up[lan]);
        } else {
            self.drop("bridge_unknown_unicast_from_tunnel");
        }
        let n = out.len();
        let mut frame = Some(frame);
        for (i, port) in out.into_iter().enumerate() {
            let f = if i + 1 == n {
                frame.take().expect("last use")
            } else {
                frame.clone().expect("present")
            };
            self.send(now, port, f, trip.clone());
        }
    }

    fn sink(&mut self, now: Nanos, host: usize, frame: EthernetFrame, trip: Trip) {
        let h = &self.s.hosts[host];
        if frame.dst != h.mac && !frame.dst.is_multicast() {
            self.drop("host_not_addressed");
            return;
        }
        self.tap_frame(
            now,
            Tap::Sink,
            CaptureNode::Host(host),
            &frame,
            self.host_dir(host),
        );
        let flow = usize::from(trip.id.flow);
        if frame != self.build_frame(flow, u64::from(trip.id.seq)) {
            self.integrity_mismatches += 1;
        }
        self.flows[flow].deliveries.push(Delivery {
            seq: trip.id.seq,
            sink: host,
            delivery_ns: now,
            stamps: trip.stamps,
        });
    }

    fn encap(&mut self, now: Nanos, vtep: usize, frame: EthernetFrame, mut trip: Trip) {
        let st = &mut self.vteps[vtep];
        st.vtep.age_out(now, self.s.timing.max_age_ns);
        let (pkt, decision) = match st.vtep.ingress(&frame) {
            Ok(x) => x,
            Err(_) => {
                self.drop("vtep_no_route");
                return;
            }
        };
        let flow = usize::from(trip.id.flow);
        if decision.is_multicast() {
            st.ingress_multicast += 1;
            self.flows[flow].ingress_multicast += 1;
        } else {
            st.ingress_unicast += 1;
            self.flows[flow].ingress_unicast += 1;
        }
        let outer = pkt.encoded_len();
        let inner = pkt.inner.encoded_len();
        if outer != inner + VXLAN_OVERHEAD {
            self.overhead_violations += 1;
        }
        trip.stamps.outer_len = Some(outer);
        trip.stamps.inner_len = Some(inner);
        self.tap_packet(
            now,
            Tap::VtepEncap,
            CaptureNode::Vtep(vtep),
            &pkt,
            self.lan_dir(vtep),
        );

        let targets = self.route(vtep, decision);
        if targets.is_empty() {
            self.drop("tunnel_no_target");
            return;
        }
        match self.s.vteps[vtep].side {
            Side::Upf => self.leave_upf(now, pkt, trip, targets),
            Side::Ue => self.enqueue_radio(now, Direction::Uplink, pkt, trip, targets),
        }
    }

    /// VTEPs addressed by an outer destination, never including `from`.
    fn route(&self, from: usize, decision: EgressDecision) -> Vec<usize> {
        let targets: Vec<usize> = match decision {
            EgressDecision::Unicast(ip) => self
                .vteps
                .iter()
                .position(|v| v.vtep.ip() == ip)
                .into_iter()
                .collect(),
            EgressDecision::Multicast(group) => self
                .vteps
                .iter()
                .enumerate()
                .filter(|(_, v)| v.vtep.config.groups.values().any(|&g| g == group))
                .map(|(i, _)| i)
                .collect(),
        };
        targets.into_iter().filter(|&t| t != from).collect()
    }

    /// Packets at the UPF go to network-side VTEPs directly or onto the
    /// downlink, one copy per UE.
    fn leave_upf(&mut self, now: Nanos, pkt: VxlanPacket, trip: Trip, targets: Vec<usize>) {
        for t in targets {
            match self.s.vteps[t].side {
                Side::Upf => self.q.schedule(
                    now,
                    Event::VtepRx {
                        vtep: t,
                        pkt: pkt.clone(),
                        trip: trip.clone(),
                    },
                ),
                Side::Ue => {
                    self.enqueue_radio(now, Direction::Downlink, pkt.clone(), trip.clone(), vec![t])
                }
            }
        }
    }

    fn segment(&mut self, dir: Direction) -> &mut RadioSegment {
        match dir {
            Direction::Downlink => &mut self.downlink,
            Direction::Uplink => &mut self.uplink,
        }
    }

    fn enqueue_radio(
        &mut self,
        now: Nanos,
        dir: Direction,
        pkt: VxlanPacket,
        mut trip: Trip,
        targets: Vec<usize>,
    ) {
        let slot = self.free_slots.pop().unwrap_or_else(|| {
            self.slots.push(None);
            self.slots.len() - 1
        });
        let captured = self.wants(Tap::Classified, CaptureNode::Direction(Some(dir)));
        let bytes = if captured.is_empty() {
            None
        } else {
            Some(pkt.encode().expect("simulated packets encode"))
        };
        match self
            .segment(dir)
            .classify_and_enqueue(pkt, now, slot as u64)
        {
            Ok(qfi) => {
                if trip.stamps.enqueue_ns.is_none() {
                    trip.stamps.enqueue_ns = Some(now);
                    trip.stamps.qfi = Some(qfi);
                }
                if let Some(bytes) = bytes {
                    for i in captured {
                        self.captures[i].record(now, &bytes, dir);
                    }
                }
                self.slots[slot] = Some(InFlight { trip, targets });
                self.kick_radio(now, dir);
            }
            Err(reason) => {
                self.free_slots.push(slot);
                match reason {
                    DropReason::Unclassified { .. } => self.drop("radio_unclassified"),
                    DropReason::QueueFull { .. } => self.drop("radio_queue_full"),
                }
            }
        }
    }

    fn kick_radio(&mut self, now: Nanos, dir: Direction) {
        let Some(tx) = self.segment(dir).schedule_step(now) else {
            return;
        };
        self.tx_count[dir_index(dir)] += 1;
        self.tap_packet(
            now,
            Tap::RadioTx,
            CaptureNode::Direction(Some(dir)),
            &tx.packet.packet,
            dir,
        );
        self.q.schedule(tx.end_ns, Event::RadioFree { dir });
        self.q.schedule(
            tx.delivery_ns,
            Event::RadioDeliver {
                dir,
                slot: tx.packet.tag as usize,
                pkt: tx.packet.packet,
            },
        );
    }

    fn radio_deliver(&mut self, now: Nanos, dir: Direction, slot: usize, pkt: VxlanPacket) {
        let InFlight { trip, targets } = self.slots[slot].take().expect("slot in use");
        self.free_slots.push(slot);
        match dir {
            Direction::Downlink => {
                for t in targets {
                    self.q.schedule(
                        now,
                        Event::VtepRx {
                            vtep: t,
                            pkt: pkt.clone(),
                            trip: trip.clone(),
                        },
                    );
                }
            }
            Direction::Uplink => self.leave_upf(now, pkt, trip, targets),
        }
    }

    fn decap(&mut self, now: Nanos, vtep: usize, pkt: VxlanPacket, mut trip: Trip) {
        let st = &mut self.vteps[vtep];
        st.vtep.age_out(now, self.s.timing.max_age_ns);
        let frame = match st.vtep.egress(&pkt, now) {
            Ok(f) => f,
            Err(_) => {
                self.drop("vtep_tag_mismatch");
                return;
            }
        };
        st.decapsulated += 1;
        trip.stamps.decap_ns = Some(now);
        self.tap_frame(
            now,
            Tap::VtepDecap,
            CaptureNode::Vtep(vtep),
            &frame,
            self.tunnel_dir(vtep),
        );
        let lan = self.s.vteps[vtep].lan;
        self.send(now, self.vtep_down[lan], frame, trip);
    }

    fn finish(self) -> SimulationReport {
        let s = self.s;
        let flows = s
            .flows
            .iter()
            .zip(self.flows)
            .map(|(spec, st)| FlowReport {
                name: spec.name.clone(),
                plan: s.flow_plan(spec),
                src: s.hosts[spec.src].name.clone(),
                expect: spec
                    .expect
                    .as_ref()
                    .map(|e| e.iter().map(|&h| s.hosts[h].name.clone()).collect()),
                generated: st.generated,
                ingress_unicast: st.ingress_unicast,
                ingress_multicast: st.ingress_multicast,
                deliveries: st.deliveries,
            })
            .collect();
        let vteps = s
            .vteps
            .iter()
            .zip(&self.vteps)
            .map(|(n, st)| VtepReport {
                name: n.name.clone(),
                ip: st.vtep.ip(),
                side: n.side,
                ingress_unicast: st.ingress_unicast,
                ingress_multicast: st.ingress_multicast,
                decapsulated: st.decapsulated,
                own_copies: st.own_copies,
                forwarding_table: st
                    .vtep
                    .table
                    .rows()
                    .into_iter()
                    .map(|(vni, mac, remote, learned)| ForwardingRow {
                        vni,
                        mac,
                        remote,
                        learned,
                    })
                    .collect(),
            })
            .collect();
        let radio = [
            (Direction::Downlink, &self.downlink),
            (Direction::Uplink, &self.uplink),
        ]
        .into_iter()
        .map(|(dir, seg)| RadioReport {
            direction: dir,
            transmissions: self.tx_count[dir_index(dir)],
            unclassified: seg.unclassified_drops(),
            flows: seg
                .flows()
                .map(|f| QosFlowReport {
                    qfi: f.qfi,
                    five_qi: f.descriptor.five_qi,
                    priority: f.descriptor.default_priority_level,
                    pdb_ms: f.descriptor.packet_delay_budget_ms,
                    enqueued: f.enqueued,
                    dequeued: f.dequeued,
                    dropped: f.dropped,
                    queued: f.queued(),
                })
                .collect(),
        })
        .collect();
        SimulationReport {
            scenario: s.name.clone(),
            seed: s.seed,
            duration_ns: s.duration_ns,
            end_ns: self.end_ns,
            events_processed: self.q.processed(),
            flows,
            hosts: s.hosts.iter().map(|h| h.name.clone()).collect(),
            vteps,
            radio,
            drops: self.drops,
            integrity_mismatches: self.integrity_mismatches,
            overhead_violations: self.overhead_violations,
            captures: self.captures,
        }
    }
}
