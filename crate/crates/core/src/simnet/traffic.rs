//! Traffic generators and payload templates.
//!
//! Every generated payload carries a 6-byte frame identifier (flow index,
//! sequence number) at a fixed offset per EtherType, so frames can be
//! matched across capture points from their bytes alone.

use serde::{Deserialize, Serialize};

use crate::frames::{
    internet_checksum, EthernetFrame, ETHERTYPE_IPV4, ETHERTYPE_PROFINET, ETHERTYPE_PTP,
    VLAN_TAG_LEN, VXLAN_OVERHEAD,
};
use crate::simnet::capture::LinkType;
use crate::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameId {
    pub flow: u16,
    pub seq: u32,
}

impl FrameId {
    fn to_bytes(self) -> [u8; 6] {
        let f = self.flow.to_be_bytes();
        let s = self.seq.to_be_bytes();
        [f[0], f[1], s[0], s[1], s[2], s[3]]
    }

    fn from_bytes(b: &[u8]) -> Self {
        FrameId {
            flow: u16::from_be_bytes([b[0], b[1]]),
            seq: u32::from_be_bytes([b[2], b[3], b[4], b[5]]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadKind {
    /// PTP (IEEE 1588v2) Sync-shaped message, EtherType 0x88F7.
    Ptp,
    /// PROFINET RTC1 cyclic frame, EtherType 0x8892.
    Rtc1,
    /// IPv4/UDP datagram, EtherType 0x0800.
    UdpBytes,
}

const PTP_ID_OFFSET: usize = 34;
const RTC1_ID_OFFSET: usize = 2;
const UDP_ID_OFFSET: usize = 28;
const ID_LEN: usize = 6;

impl PayloadKind {
    pub fn ethertype(self) -> u16 {
        match self {
            PayloadKind::Ptp => ETHERTYPE_PTP,
            PayloadKind::Rtc1 => ETHERTYPE_PROFINET,
            PayloadKind::UdpBytes => ETHERTYPE_IPV4,
        }
    }

    pub fn min_payload(self) -> usize {
        match self {
            PayloadKind::Ptp => 44,
            PayloadKind::Rtc1 => 40,
            PayloadKind::UdpBytes => UDP_ID_OFFSET + ID_LEN,
        }
    }
}

fn id_offset(ethertype: u16) -> Option<usize> {
    match ethertype {
        ETHERTYPE_PTP => Some(PTP_ID_OFFSET),
        ETHERTYPE_PROFINET => Some(RTC1_ID_OFFSET),
        ETHERTYPE_IPV4 => Some(UDP_ID_OFFSET),
        _ => None,
    }
}

/// Deterministic payload of `size` bytes (at least `kind.min_payload()`).
pub fn build_payload(kind: PayloadKind, id: FrameId, size: usize) -> Vec<u8> {
    let size = size.max(kind.min_payload());
    let mut p: Vec<u8> = (0..size)
        .map(|i| (i as u32).wrapping_mul(31).wrapping_add(id.seq) as u8)
        .collect();
    match kind {
        PayloadKind::Ptp => {
            p[..PTP_ID_OFFSET].fill(0);
            p[0] = 0x00; // Sync
            p[1] = 0x02; // PTPv2
            p[2..4].copy_from_slice(&(size as u16).to_be_bytes());
            p[6] = 0x02; // two-step
            p[20..26].copy_from_slice(&[0x02, 0x00, 0x00, 0xff, 0xfe, id.flow as u8]);
            p[29] = 0x01; // source port number
            p[30..32].copy_from_slice(&(id.seq as u16).to_be_bytes());
            p[33] = 0xfd; // log interval -3, 125 ms
        }
        PayloadKind::Rtc1 => {
            p[0..2].copy_from_slice(&0x8000u16.to_be_bytes());
            let n = p.len();
            p[n - 4..n - 2].copy_from_slice(&((id.seq as u16).wrapping_mul(32)).to_be_bytes());
            p[n - 2] = 0x35; // data status: primary, valid, run
            p[n - 1] = 0x00;
        }
        PayloadKind::UdpBytes => {
            let total = size as u16;
            let src = [10, 0, (id.flow >> 8) as u8, id.flow as u8];
            let dst = [10, 1, (id.flow >> 8) as u8, id.flow as u8];
            let mut ip = [0u8; 20];
            ip[0] = 0x45;
            ip[2..4].copy_from_slice(&total.to_be_bytes());
            ip[4..6].copy_from_slice(&(id.seq as u16).to_be_bytes());
            ip[8] = 64;
            ip[9] = 17;
            ip[12..16].copy_from_slice(&src);
            ip[16..20].copy_from_slice(&dst);
            let sum = internet_checksum(&[&ip]);
            ip[10..12].copy_from_slice(&sum.to_be_bytes());
            p[..20].copy_from_slice(&ip);
            p[20..22].copy_from_slice(&5000u16.to_be_bytes());
            p[22..24].copy_from_slice(&(5000 + id.flow).to_be_bytes());
            p[24..26].copy_from_slice(&(total - 20).to_be_bytes());
            p[26..28].fill(0);
        }
    }
    let off = id_offset(kind.ethertype()).expect("known kind");
    p[off..off + ID_LEN].copy_from_slice(&id.to_bytes());
    p
}

pub fn frame_id_of(frame: &EthernetFrame) -> Option<FrameId> {
    let off = id_offset(frame.ethertype)?;
    frame
        .payload
        .get(off..off + ID_LEN)
        .map(FrameId::from_bytes)
}

/// Frame identifier from captured bytes (possibly truncated to snaplen).
pub fn frame_id_from_bytes(link: LinkType, bytes: &[u8]) -> Option<FrameId> {
    let l2 = match link {
        LinkType::Ethernet => bytes,
        LinkType::RawIpv4 => bytes.get(VXLAN_OVERHEAD..)?,
    };
    let mut ethertype_at = 12;
    let mut ethertype = u16::from_be_bytes([*l2.get(12)?, *l2.get(13)?]);
    if ethertype == crate::frames::ETHERTYPE_VLAN {
        ethertype_at += VLAN_TAG_LEN;
        ethertype = u16::from_be_bytes([*l2.get(16)?, *l2.get(17)?]);
    }
    let off = ethertype_at + 2 + id_offset(ethertype)?;
    l2.get(off..off + ID_LEN).map(FrameId::from_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    /// `burst` messages back to back every `period_ns`.
    Periodic { period_ns: Nanos, burst: u32 },
    /// Constant bit rate, fixed-size frames.
    Rate { bits_per_s: f64 },
}

/// Emission times of one flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSchedule {
    pub kind: TrafficKind,
    pub start_ns: Nanos,
    pub frame_len: usize,
    pub count: Option<u64>,
}

impl FlowSchedule {
    /// Time of message `k`; `None` past the count limit.
    pub fn emission_time(&self, k: u64) -> Option<Nanos> {
        if self.count.is_some_and(|c| k >= c) {
            return None;
        }
        Some(match self.kind {
            TrafficKind::Periodic { period_ns, burst } => {
                self.start_ns + (k / u64::from(burst.max(1))) * period_ns
            }
            TrafficKind::Rate { bits_per_s } => {
                let spacing = self.frame_len as f64 * 8.0 * 1e9 / bits_per_s;
                self.start_ns + (k as f64 * spacing).round() as Nanos
            }
        })
    }

    /// Number of messages emitted at or before `until`.
    pub fn count_until(&self, until: Nanos) -> u64 {
        let mut k = 0;
        while self.emission_time(k).is_some_and(|t| t <= until) {
            k += 1;
        }
        k
    }
}
