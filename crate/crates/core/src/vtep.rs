//! VxLAN tunnel end point: ingress encapsulation with DSCP marking, egress
//! decapsulation with tag restoration, flood-and-learn forwarding table.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{EthernetFrame, MacAddress, Pcp, VlanTag, VxlanPacket};
use crate::mapping::{tuple_from_vni, vni_from_tuple, DscpTable, MappingError, TsnTuple, Vni};
use crate::Nanos;

pub const DEFAULT_MAX_AGE_NS: Nanos = 300 * 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VtepError {
    #[error("no forwarding entry and no multicast group for VNI {vni} (dst {dst})")]
    NoRoute { vni: Vni, dst: MacAddress },
    #[error("inner tag {{VLAN {vlan_id}, PCP {pcp}}} does not match VNI {vni}")]
    TagMismatch { vni: Vni, vlan_id: u16, pcp: Pcp },
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("VTEP address {0} is not a unicast address")]
    NotUnicast(Ipv4Addr),
    #[error("group {group} for VNI {vni} is not in 224.0.0.0/4")]
    NotMulticastGroup { vni: Vni, group: Ipv4Addr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagPolicy {
    /// Inner frame is carried byte-identical, 802.1Q tag included.
    #[default]
    Retain,
    /// Tag removed at ingress; the egress VTEP rebuilds it from the VNI.
    StripAndReinsert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtepConfig {
    pub ip: Ipv4Addr,
    #[serde(default)]
    pub tag_policy: TagPolicy,
    /// Multicast group per VNI for broadcast and unknown-unicast traffic.
    #[serde(default)]
    pub groups: BTreeMap<Vni, Ipv4Addr>,
    /// VLAN assumed for untagged frames arriving on the LAN side (PCP 0).
    #[serde(default = "default_vlan")]
    pub default_vlan: u16,
    #[serde(default)]
    pub dscp_table: DscpTable,
}

fn default_vlan() -> u16 {
    1
}

impl VtepConfig {
    pub fn new(ip: Ipv4Addr) -> Self {
        VtepConfig {
            ip,
            tag_policy: TagPolicy::default(),
            groups: BTreeMap::new(),
            default_vlan: default_vlan(),
            dscp_table: DscpTable::default(),
        }
    }

    pub fn validate(&self) -> Result<(), VtepError> {
        if self.ip.is_multicast() || self.ip.is_broadcast() || self.ip.is_unspecified() {
            return Err(VtepError::NotUnicast(self.ip));
        }
        for (&vni, &group) in &self.groups {
            if !group.is_multicast() {
                return Err(VtepError::NotMulticastGroup { vni, group });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardingEntry {
    pub vni: Vni,
    pub mac: MacAddress,
    pub remote_vtep_ip: Ipv4Addr,
    pub learned: bool,
    pub last_seen: Nanos,
}

/// Per-VNI MAC -> remote VTEP map. The default (all-zeros MAC) entry of a
/// VNI points at its multicast group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ForwardingTable {
    entries: BTreeMap<(Vni, MacAddress), ForwardingEntry>,
    defaults: BTreeMap<Vni, Ipv4Addr>,
}

impl ForwardingTable {
    pub fn for_config(cfg: &VtepConfig) -> Self {
        ForwardingTable {
            entries: BTreeMap::new(),
            defaults: cfg.groups.clone(),
        }
    }

    /// Static entries never age out. Non-unicast MACs are ignored.
    pub fn insert_static(&mut self, vni: Vni, mac: MacAddress, remote_vtep_ip: Ipv4Addr) {
        if !mac.is_unicast() || mac.is_zero() {
            return;
        }
        self.entries.insert(
            (vni, mac),
            ForwardingEntry {
                vni,
                mac,
                remote_vtep_ip,
                learned: false,
                last_seen: 0,
            },
        );
    }

    pub fn lookup(&self, vni: Vni, mac: MacAddress) -> Option<&ForwardingEntry> {
        self.entries.get(&(vni, mac))
    }

    pub fn default_group(&self, vni: Vni) -> Option<Ipv4Addr> {
        self.defaults.get(&vni).copied()
    }

    /// Binds `src_mac` on `vni` to the VTEP it was received from. Group
    /// addresses are never learned; static entries are left as configured.
    pub fn learn(&mut self, vni: Vni, src_mac: MacAddress, outer_src_ip: Ipv4Addr, now: Nanos) {
        if !src_mac.is_unicast() || src_mac.is_zero() {
            return;
        }
        match self.entries.get_mut(&(vni, src_mac)) {
            Some(e) if !e.learned => {}
            Some(e) => {
                e.remote_vtep_ip = outer_src_ip;
                e.last_seen = now;
            }
            None => {
                self.entries.insert(
                    (vni, src_mac),
                    ForwardingEntry {
                        vni,
                        mac: src_mac,
                        remote_vtep_ip: outer_src_ip,
                        learned: true,
                        last_seen: now,
                    },
                );
            }
        }
    }

    /// Drops learned entries idle for longer than `max_age`.
    pub fn age_out(&mut self, now: Nanos, max_age: Nanos) -> usize {
        let before = self.entries.len();
        self.entries
            .retain(|_, e| !e.learned || now.saturating_sub(e.last_seen) <= max_age);
        before - self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &ForwardingEntry> {
        self.entries.values()
    }

    /// Rows as (VNI, MAC, remote IP, learned), default entries included.
    pub fn rows(&self) -> Vec<(Vni, MacAddress, Ipv4Addr, bool)> {
        let mut rows: Vec<_> = self
            .defaults
            .iter()
            .map(|(&vni, &group)| (vni, MacAddress::ZERO, group, false))
            .chain(
                self.entries
                    .values()
                    .map(|e| (e.vni, e.mac, e.remote_vtep_ip, e.learned)),
            )
            .collect();
        rows.sort();
        rows
    }
}

impl fmt::Display for ForwardingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(
            out,
            "{:>8}  {:<17}  {:<15}  learned",
            "VNI", "MAC", "remote IP"
        )?;
        for (vni, mac, ip, learned) in self.rows() {
            writeln!(
                out,
                "{:>8}  {:<17}  {:<15}  {}",
                vni.value(),
                mac.to_string(),
                ip.to_string(),
                if learned { "yes" } else { "no" }
            )?;
        }
        f.write_str(&out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "ip")]
pub enum EgressDecision {
    Unicast(Ipv4Addr),
    Multicast(Ipv4Addr),
}

impl EgressDecision {
    pub fn dst_ip(&self) -> Ipv4Addr {
        match *self {
            EgressDecision::Unicast(ip) | EgressDecision::Multicast(ip) => ip,
        }
    }

    pub fn is_multicast(&self) -> bool {
        matches!(self, EgressDecision::Multicast(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vtep {
    pub config: VtepConfig,
    pub table: ForwardingTable,
}

impl Vtep {
    pub fn new(config: VtepConfig) -> Result<Self, VtepError> {
        config.validate()?;
        let table = ForwardingTable::for_config(&config);
        Ok(Vtep { config, table })
    }

    pub fn ip(&self) -> Ipv4Addr {
        self.config.ip
    }

    /// Tuple used to select the tunnel for a LAN-side frame.
    pub fn tuple_of(&self, frame: &EthernetFrame) -> TsnTuple {
        match frame.tag {
            Some(tag) => tag.into(),
            None => TsnTuple {
                vlan_id: self.config.default_vlan,
                pcp: Pcp::new(0).expect("0 is a valid PCP"),
            },
        }
    }

    /// Encapsulates a LAN-side frame and picks its outer destination.
    /// Only the destination MAC and the tag are consulted.
    pub fn ingress(
        &self,
        frame: &EthernetFrame,
    ) -> Result<(VxlanPacket, EgressDecision), VtepError> {
        let tuple = self.tuple_of(frame);
        let vni = vni_from_tuple(tuple);
        let dscp = self.config.dscp_table.dscp_from_pcp(tuple.pcp);

        let decision = match self.table.lookup(vni, frame.dst) {
            Some(entry) if frame.dst.is_unicast() => EgressDecision::Unicast(entry.remote_vtep_ip),
            _ => match self.table.default_group(vni) {
                Some(group) => EgressDecision::Multicast(group),
                None => {
                    return Err(VtepError::NoRoute {
                        vni,
                        dst: frame.dst,
                    })
                }
            },
        };

        let mut inner = frame.clone();
        if self.config.tag_policy == TagPolicy::StripAndReinsert {
            inner.strip_tag();
        }
        let pkt = VxlanPacket::new(self.config.ip, decision.dst_ip(), dscp, vni.value(), inner);
        Ok((pkt, decision))
    }

    /// Decapsulates a packet received from the tunnel, learning the inner
    /// source MAC. A missing tag is rebuilt from the VNI; a present tag must
    /// agree with it.
    pub fn egress(&mut self, pkt: &VxlanPacket, now: Nanos) -> Result<EthernetFrame, VtepError> {
        let vni = Vni::new(pkt.vxlan.vni)?;
        let tuple = tuple_from_vni(vni)?;
        let mut frame = pkt.inner.clone();
        match frame.tag {
            Some(tag) if TsnTuple::from(tag) != tuple => {
                return Err(VtepError::TagMismatch {
                    vni,
                    vlan_id: tag.vlan_id,
                    pcp: tag.pcp,
                })
            }
            Some(_) => {}
            None => {
                frame.tag = Some(VlanTag {
                    pcp: tuple.pcp,
                    dei: false,
                    vlan_id: tuple.vlan_id,
                })
            }
        }
        self.table.learn(vni, frame.src, pkt.outer_ip.src, now);
        Ok(frame)
    }

    pub fn age_out(&mut self, now: Nanos, max_age: Nanos) -> usize {
        self.table.age_out(now, max_age)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{Dscp, ETHERTYPE_PROFINET};

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn frame(dst: &str, vlan: u16, pcp: u8) -> EthernetFrame {
        EthernetFrame {
            dst: mac(dst),
            src: mac("20:00:00:00:00:01"),
            tag: Some(VlanTag::new(vlan, Pcp::new(pcp).unwrap()).unwrap()),
            ethertype: ETHERTYPE_PROFINET,
            payload: vec![1, 2, 3, 4],
        }
    }

    fn vni(v: u32) -> Vni {
        Vni::new(v).unwrap()
    }

    fn upf() -> Vtep {
        let mut cfg = VtepConfig::new(ip("192.168.1.100"));
        cfg.groups.insert(vni(1007), ip("239.1.1.1"));
        cfg.groups.insert(vni(1005), ip("239.1.1.2"));
        Vtep::new(cfg).unwrap()
    }

    #[test]
    fn known_destination_is_unicast() {
        let mut x = upf();
        x.table
            .insert_static(vni(1005), mac("10:00:00:00:00:01"), ip("192.168.1.1"));
        let (pkt, d) = x.ingress(&frame("10:00:00:00:00:01", 100, 5)).unwrap();
        assert_eq!(pkt.vxlan.vni, 1005);
        assert_eq!(pkt.outer_ip.dscp, Dscp::new(40).unwrap());
        assert_eq!(pkt.outer_ip.src, ip("192.168.1.100"));
        assert_eq!(d, EgressDecision::Unicast(ip("192.168.1.1")));
        assert_eq!(pkt.outer_ip.dst, ip("192.168.1.1"));
    }

    #[test]
    fn unknown_destination_floods_to_group() {
        let x = upf();
        let (pkt, d) = x.ingress(&frame("10:00:00:00:00:02", 100, 7)).unwrap();
        assert_eq!(pkt.vxlan.vni, 1007);
        assert_eq!(d, EgressDecision::Multicast(ip("239.1.1.1")));
    }

    #[test]
    fn broadcast_floods_to_group() {
        let mut x = upf();
        // A stray entry for the broadcast MAC is never consulted.
        x.table.entries.insert(
            (vni(1007), MacAddress::BROADCAST),
            ForwardingEntry {
                vni: vni(1007),
                mac: MacAddress::BROADCAST,
                remote_vtep_ip: ip("192.168.1.9"),
                learned: false,
                last_seen: 0,
            },
        );
        let (_, d) = x.ingress(&frame("ff:ff:ff:ff:ff:ff", 100, 7)).unwrap();
        assert_eq!(d, EgressDecision::Multicast(ip("239.1.1.1")));
    }

    #[test]
    fn no_group_no_route() {
        let x = upf();
        assert!(matches!(
            x.ingress(&frame("10:00:00:00:00:02", 200, 2)),
            Err(VtepError::NoRoute { .. })
        ));
    }

    #[test]
    fn egress_reinserts_missing_tag() {
        let mut cfg = VtepConfig::new(ip("192.168.1.100"));
        cfg.tag_policy = TagPolicy::StripAndReinsert;
        cfg.groups.insert(vni(1005), ip("239.1.1.2"));
        let x = Vtep::new(cfg).unwrap();
        let original = frame("10:00:00:00:00:01", 100, 5);
        let (pkt, _) = x.ingress(&original).unwrap();
        assert_eq!(pkt.inner.tag, None);
        assert_eq!(pkt.encoded_len(), original.encoded_len() - 4 + 36);

        let mut ue = Vtep::new(VtepConfig::new(ip("192.168.1.1"))).unwrap();
        let restored = ue.egress(&pkt, 0).unwrap();
        assert_eq!(restored, original);
    }

    #[test]
    fn egress_keeps_retained_tag() {
        let x = upf();
        let original = frame("10:00:00:00:00:01", 100, 5);
        let (pkt, _) = x.ingress(&original).unwrap();
        let mut ue = Vtep::new(VtepConfig::new(ip("192.168.1.1"))).unwrap();
        assert_eq!(ue.egress(&pkt, 0).unwrap(), original);
    }

    #[test]
    fn egress_rejects_inconsistent_tag() {
        let x = upf();
        let (mut pkt, _) = x.ingress(&frame("10:00:00:00:00:01", 100, 5)).unwrap();
        pkt.inner.tag = Some(VlanTag::new(200, Pcp::new(2).unwrap()).unwrap());
        let mut ue = Vtep::new(VtepConfig::new(ip("192.168.1.1"))).unwrap();
        assert!(matches!(
            ue.egress(&pkt, 0),
            Err(VtepError::TagMismatch { .. })
        ));

        pkt.vxlan.vni = 1008;
        assert!(matches!(
            ue.egress(&pkt, 0),
            Err(VtepError::Mapping(MappingError::UnmappedVni(1008)))
        ));
    }

    #[test]
    fn backward_learning_turns_flood_into_unicast() {
        let mut x = upf();
        let mut ue = Vtep::new(VtepConfig::new(ip("192.168.1.2"))).unwrap();
        let mut reply = frame("20:00:00:00:00:01", 100, 7);
        reply.src = mac("10:00:00:00:00:02");
        let (pkt, _) = {
            let mut cfg = ue.config.clone();
            cfg.groups.insert(vni(1007), ip("239.1.1.1"));
            Vtep::new(cfg).unwrap().ingress(&reply).unwrap()
        };
        x.egress(&pkt, 5).unwrap();
        let (_, d) = x.ingress(&frame("10:00:00:00:00:02", 100, 7)).unwrap();
        assert_eq!(d, EgressDecision::Unicast(ip("192.168.1.2")));
        ue.table
            .learn(vni(1007), mac("20:00:00:00:00:01"), x.ip(), 5);
        assert_eq!(ue.table.len(), 1);
    }

    #[test]
    fn learning_is_idempotent_and_ignores_group_macs() {
        let mut t = ForwardingTable::default();
        t.learn(vni(1007), mac("10:00:00:00:00:02"), ip("192.168.1.2"), 10);
        t.learn(vni(1007), mac("10:00:00:00:00:02"), ip("192.168.1.2"), 20);
        assert_eq!(t.len(), 1);
        assert_eq!(
            t.lookup(vni(1007), mac("10:00:00:00:00:02"))
                .unwrap()
                .last_seen,
            20
        );
        t.learn(vni(1007), MacAddress::BROADCAST, ip("192.168.1.2"), 30);
        t.learn(vni(1007), mac("01:1b:19:00:00:00"), ip("192.168.1.2"), 30);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn learning_does_not_override_static() {
        let mut t = ForwardingTable::default();
        t.insert_static(vni(1005), mac("10:00:00:00:00:01"), ip("192.168.1.1"));
        t.learn(vni(1005), mac("10:00:00:00:00:01"), ip("192.168.1.7"), 10);
        let e = t.lookup(vni(1005), mac("10:00:00:00:00:01")).unwrap();
        assert_eq!(e.remote_vtep_ip, ip("192.168.1.1"));
        assert!(!e.learned);
    }

    #[test]
    fn aging_boundaries() {
        let max_age = 1_000;
        let mut t = ForwardingTable::default();
        t.learn(vni(1), mac("10:00:00:00:00:02"), ip("192.168.1.2"), 100);
        t.insert_static(vni(1), mac("10:00:00:00:00:03"), ip("192.168.1.3"));
        assert_eq!(t.age_out(100 + max_age, max_age), 0);
        assert_eq!(t.len(), 2);
        assert_eq!(t.age_out(101 + max_age, max_age), 1);
        assert_eq!(t.age_out(u64::MAX, max_age), 0);
        assert!(t.lookup(vni(1), mac("10:00:00:00:00:03")).is_some());
    }

    #[test]
    fn untagged_frames_use_default_vlan() {
        let mut cfg = VtepConfig::new(ip("192.168.1.100"));
        cfg.default_vlan = 100;
        cfg.groups.insert(vni(1000), ip("239.1.1.3"));
        let x = Vtep::new(cfg).unwrap();
        let mut f = frame("10:00:00:00:00:01", 1, 1);
        f.tag = None;
        let (pkt, d) = x.ingress(&f).unwrap();
        assert_eq!(pkt.vxlan.vni, 1000);
        assert_eq!(pkt.outer_ip.dscp.value(), 0);
        assert!(d.is_multicast());
    }

    #[test]
    fn config_validation() {
        assert!(Vtep::new(VtepConfig::new(ip("239.0.0.1"))).is_err());
        let mut cfg = VtepConfig::new(ip("192.168.1.1"));
        cfg.groups.insert(vni(1005), ip("192.168.1.200"));
        assert!(matches!(
            Vtep::new(cfg),
            Err(VtepError::NotMulticastGroup { .. })
        ));
    }

    #[test]
    fn table_rendering_lists_default_entry() {
        let mut x = upf();
        x.table
            .insert_static(vni(2002), mac("20:00:00:00:00:03"), ip("192.168.1.2"));
        let text = x.table.to_string();
        assert!(text.contains("00:00:00:00:00:00  239.1.1.1"));
        assert!(text.contains("20:00:00:00:00:03  192.168.1.2"));
    }
}
