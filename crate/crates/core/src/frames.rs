//! Wire codecs for IEEE 802.1Q Ethernet frames and VxLAN packets
//! (RFC 7348) carried in UDP over IPv4.
//!
//! ```text
//! VxLAN packet, outer L2 excluded:
//!
//! +----------------+-----------+--------------+------------------------+
//! | IPv4 (20 B)    | UDP (8 B) | VxLAN (8 B)  | inner Ethernet frame   |
//! +----------------+-----------+--------------+------------------------+
//!  <------------ 36 bytes of overhead ------->
//!
//! VxLAN header:
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |R|R|R|R|I|R|R|R|            Reserved                           |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |                VXLAN Network Identifier (VNI) |   Reserved    |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! ```

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_PROFINET: u16 = 0x8892;
pub const ETHERTYPE_PTP: u16 = 0x88F7;

pub const ETH_HEADER_LEN: usize = 14;
pub const VLAN_TAG_LEN: usize = 4;
pub const DEFAULT_MTU: usize = 1500;

pub const IPV4_HEADER_LEN: usize = 20;
pub const UDP_HEADER_LEN: usize = 8;
pub const VXLAN_HEADER_LEN: usize = 8;
/// IPv4 + UDP + VxLAN headers added in front of the inner frame.
pub const VXLAN_OVERHEAD: usize = IPV4_HEADER_LEN + UDP_HEADER_LEN + VXLAN_HEADER_LEN;
pub const VXLAN_UDP_PORT: u16 = 4789;
pub const IPPROTO_UDP: u8 = 17;

const VXLAN_I_FLAG: u8 = 0x08;
const EPHEMERAL_PORT_BASE: u16 = 49152;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated buffer: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("payload of {payload} bytes exceeds MTU {mtu}")]
    Oversize { payload: usize, mtu: usize },
    #[error("{field} value {value} out of range (max {max})")]
    OutOfRange {
        field: &'static str,
        value: u64,
        max: u64,
    },
    #[error("untagged frame cannot carry ethertype 0x8100")]
    UntaggedVlanEthertype,
    #[error("not an IPv4 packet (version {0})")]
    NotIpv4(u8),
    #[error("IPv4 options are not supported (IHL {0})")]
    Ipv4Options(u8),
    #[error("fragmented IPv4 packets are not supported")]
    Fragmented,
    #[error("bad IPv4 header checksum 0x{found:04x}, expected 0x{expected:04x}")]
    BadIpChecksum { expected: u16, found: u16 },
    #[error("IP protocol {0} is not UDP")]
    NotUdp(u8),
    #[error("UDP destination port {0} is not VxLAN")]
    NotVxlan(u16),
    #[error("bad UDP checksum")]
    BadUdpChecksum,
    #[error("{field} declares {declared} bytes but {actual} are present")]
    LengthMismatch {
        field: &'static str,
        declared: usize,
        actual: usize,
    },
    #[error("VxLAN I flag not set (flags 0x{0:02x})")]
    VxlanMissingIFlag(u8),
    #[error("VxLAN reserved bits are not zero")]
    VxlanReservedBits,
}

fn range_check(field: &'static str, value: u64, max: u64) -> Result<(), CodecError> {
    if value > max {
        Err(CodecError::OutOfRange { field, value, max })
    } else {
        Ok(())
    }
}

/// 48-bit IEEE MAC address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub const BROADCAST: MacAddress = MacAddress([0xff; 6]);
    pub const ZERO: MacAddress = MacAddress([0; 6]);

    pub fn is_broadcast(&self) -> bool {
        *self == Self::BROADCAST
    }

    /// Group bit set. Broadcast is also multicast.
    pub fn is_multicast(&self) -> bool {
        self.0[0] & 0x01 == 0x01
    }

    pub fn is_unicast(&self) -> bool {
        !self.is_multicast()
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid MAC address {0:?}")]
pub struct MacParseError(pub String);

impl FromStr for MacAddress {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut octets = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for octet in octets.iter_mut() {
            let part = parts.next().ok_or_else(|| MacParseError(s.to_owned()))?;
            if part.len() != 2 {
                return Err(MacParseError(s.to_owned()));
            }
            *octet = u8::from_str_radix(part, 16).map_err(|_| MacParseError(s.to_owned()))?;
        }
        if parts.next().is_some() {
            return Err(MacParseError(s.to_owned()));
        }
        Ok(MacAddress(octets))
    }
}

impl TryFrom<String> for MacAddress {
    type Error = MacParseError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MacAddress> for String {
    fn from(m: MacAddress) -> String {
        m.to_string()
    }
}

/// 802.1Q priority code point, 0..=7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Pcp(u8);

impl Pcp {
    pub const MAX: u8 = 7;

    pub fn new(value: u8) -> Result<Self, CodecError> {
        range_check("pcp", value.into(), Self::MAX.into())?;
        Ok(Pcp(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl DoubleEndedIterator<Item = Pcp> {
        (0..=Self::MAX).map(Pcp)
    }
}

impl TryFrom<u8> for Pcp {
    type Error = CodecError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Pcp::new(v)
    }
}

impl From<Pcp> for u8 {
    fn from(p: Pcp) -> u8 {
        p.0
    }
}

impl fmt::Display for Pcp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Differentiated Services Code Point, 0..=63.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Dscp(u8);

impl Dscp {
    pub const MAX: u8 = 63;

    pub fn new(value: u8) -> Result<Self, CodecError> {
        range_check("dscp", value.into(), Self::MAX.into())?;
        Ok(Dscp(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Dscp {
    type Error = CodecError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Dscp::new(v)
    }
}

impl From<Dscp> for u8 {
    fn from(d: Dscp) -> u8 {
        d.0
    }
}

impl fmt::Display for Dscp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub const MAX_VLAN_ID: u16 = 4095;

/// 802.1Q tag control information (the 16 bits following TPID 0x8100).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VlanTag {
    pub pcp: Pcp,
    pub dei: bool,
    pub vlan_id: u16,
}

impl VlanTag {
    pub fn new(vlan_id: u16, pcp: Pcp) -> Result<Self, CodecError> {
        range_check("vlan_id", vlan_id.into(), MAX_VLAN_ID.into())?;
        Ok(VlanTag {
            pcp,
            dei: false,
            vlan_id,
        })
    }

    pub fn tci(&self) -> u16 {
        (u16::from(self.pcp.0) << 13) | (u16::from(self.dei) << 12) | (self.vlan_id & 0x0fff)
    }

    pub fn from_tci(tci: u16) -> Self {
        VlanTag {
            pcp: Pcp((tci >> 13) as u8),
            dei: tci & 0x1000 != 0,
            vlan_id: tci & 0x0fff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EthernetFrame {
    pub dst: MacAddress,
    pub src: MacAddress,
    pub tag: Option<VlanTag>,
    pub ethertype: u16,
    pub payload: Vec<u8>,
}

impl EthernetFrame {
    pub fn header_len(&self) -> usize {
        ETH_HEADER_LEN + if self.tag.is_some() { VLAN_TAG_LEN } else { 0 }
    }

    pub fn encoded_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    /// Encodes with the default 1500-byte payload MTU.
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        self.encode_with_mtu(DEFAULT_MTU)
    }

    pub fn encode_with_mtu(&self, mtu: usize) -> Result<Vec<u8>, CodecError> {
        if self.payload.len() > mtu {
            return Err(CodecError::Oversize {
                payload: self.payload.len(),
                mtu,
            });
        }
        let mut buf = Vec::with_capacity(self.encoded_len());
        self.write_into(&mut buf)?;
        Ok(buf)
    }

    fn write_into(&self, buf: &mut Vec<u8>) -> Result<(), CodecError> {
        buf.extend_from_slice(&self.dst.0);
        buf.extend_from_slice(&self.src.0);
        match self.tag {
            Some(tag) => {
                range_check("vlan_id", tag.vlan_id.into(), MAX_VLAN_ID.into())?;
                buf.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
                buf.extend_from_slice(&tag.tci().to_be_bytes());
            }
            // Would decode back as a tagged frame.
            None if self.ethertype == ETHERTYPE_VLAN => {
                return Err(CodecError::UntaggedVlanEthertype)
            }
            None => {}
        }
        buf.extend_from_slice(&self.ethertype.to_be_bytes());
        buf.extend_from_slice(&self.payload);
        Ok(())
    }

    /// Parses a frame. A TPID other than 0x8100 is taken as the ethertype of
    /// an untagged frame.
    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < ETH_HEADER_LEN {
            return Err(CodecError::Truncated {
                needed: ETH_HEADER_LEN,
                got: bytes.len(),
            });
        }
        let dst = MacAddress(bytes[0..6].try_into().unwrap());
        let src = MacAddress(bytes[6..12].try_into().unwrap());
        let tpid = u16::from_be_bytes([bytes[12], bytes[13]]);
        let (tag, ethertype, payload_start) = if tpid == ETHERTYPE_VLAN {
            let needed = ETH_HEADER_LEN + VLAN_TAG_LEN;
            if bytes.len() < needed {
                return Err(CodecError::Truncated {
                    needed,
                    got: bytes.len(),
                });
            }
            let tci = u16::from_be_bytes([bytes[14], bytes[15]]);
            let ethertype = u16::from_be_bytes([bytes[16], bytes[17]]);
            (Some(VlanTag::from_tci(tci)), ethertype, needed)
        } else {
            (None, tpid, ETH_HEADER_LEN)
        };
        Ok(EthernetFrame {
            dst,
            src,
            tag,
            ethertype,
            payload: bytes[payload_start..].to_vec(),
        })
    }

    /// Removes and returns the 802.1Q tag.
    pub fn strip_tag(&mut self) -> Option<VlanTag> {
        self.tag.take()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ipv4Header {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub dscp: Dscp,
    pub ecn: u8,
    pub identification: u16,
    pub dont_fragment: bool,
    pub ttl: u8,
    pub protocol: u8,
    pub total_length: u16,
    pub header_checksum: u16,
}

impl Ipv4Header {
    fn to_bytes(&self) -> [u8; IPV4_HEADER_LEN] {
        let mut h = [0u8; IPV4_HEADER_LEN];
        h[0] = 0x45;
        h[1] = (self.dscp.0 << 2) | (self.ecn & 0x03);
        h[2..4].copy_from_slice(&self.total_length.to_be_bytes());
        h[4..6].copy_from_slice(&self.identification.to_be_bytes());
        let flags: u16 = if self.dont_fragment { 0x4000 } else { 0 };
        h[6..8].copy_from_slice(&flags.to_be_bytes());
        h[8] = self.ttl;
        h[9] = self.protocol;
        h[10..12].copy_from_slice(&self.header_checksum.to_be_bytes());
        h[12..16].copy_from_slice(&self.src.octets());
        h[16..20].copy_from_slice(&self.dst.octets());
        h
    }

    /// Checksum of the header with the checksum field taken as zero.
    pub fn compute_checksum(&self) -> u16 {
        let mut h = self.to_bytes();
        h[10] = 0;
        h[11] = 0;
        internet_checksum(&[&h])
    }
}

/// RFC 1071 one's-complement checksum over the concatenation of `chunks`.
pub fn internet_checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut odd: Option<u8> = None;
    for chunk in chunks {
        for &b in chunk.iter() {
            match odd.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => odd = Some(b),
            }
        }
    }
    if let Some(hi) = odd {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// UDP header. A zero checksum means "not computed"; any other value is
/// recomputed on encode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VxlanHeader {
    /// 24-bit network identifier.
    pub vni: u32,
}

impl VxlanHeader {
    pub const MAX_VNI: u32 = (1 << 24) - 1;

    fn to_bytes(self) -> Result<[u8; VXLAN_HEADER_LEN], CodecError> {
        range_check("vni", self.vni.into(), Self::MAX_VNI.into())?;
        let v = self.vni.to_be_bytes();
        Ok([VXLAN_I_FLAG, 0, 0, 0, v[1], v[2], v[3], 0])
    }

    fn from_bytes(b: &[u8]) -> Result<Self, CodecError> {
        if b[0] & VXLAN_I_FLAG == 0 {
            return Err(CodecError::VxlanMissingIFlag(b[0]));
        }
        if b[0] != VXLAN_I_FLAG || b[1..4] != [0, 0, 0] || b[7] != 0 {
            return Err(CodecError::VxlanReservedBits);
        }
        Ok(VxlanHeader {
            vni: u32::from_be_bytes([0, b[4], b[5], b[6]]),
        })
    }
}

/// Outer IPv4 + UDP + VxLAN headers around an inner Ethernet frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VxlanPacket {
    pub outer_ip: Ipv4Header,
    pub outer_udp: UdpHeader,
    pub vxlan: VxlanHeader,
    pub inner: EthernetFrame,
}

impl VxlanPacket {
    /// Builds a packet with TTL 64, DF set, a zero UDP checksum and the UDP
    /// source port derived from the inner flow.
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr, dscp: Dscp, vni: u32, inner: EthernetFrame) -> Self {
        let src_port = flow_entropy_port(&inner.src, &inner.dst, vni);
        let mut pkt = VxlanPacket {
            outer_ip: Ipv4Header {
                src,
                dst,
                dscp,
                ecn: 0,
                identification: 0,
                dont_fragment: true,
                ttl: 64,
                protocol: IPPROTO_UDP,
                total_length: 0,
                header_checksum: 0,
            },
            outer_udp: UdpHeader {
                src_port,
                dst_port: VXLAN_UDP_PORT,
                length: 0,
                checksum: 0,
            },
            vxlan: VxlanHeader { vni },
            inner,
        };
        pkt.seal();
        pkt
    }

    pub fn encoded_len(&self) -> usize {
        VXLAN_OVERHEAD + self.inner.encoded_len()
    }

    /// Recomputes lengths and checksums after a field was changed.
    pub fn seal(&mut self) {
        let inner_len = self.inner.encoded_len();
        self.outer_udp.length = (UDP_HEADER_LEN + VXLAN_HEADER_LEN + inner_len) as u16;
        self.outer_ip.total_length = (VXLAN_OVERHEAD + inner_len) as u16;
        self.outer_ip.header_checksum = self.outer_ip.compute_checksum();
        if self.outer_udp.checksum != 0 {
            if let Ok(bytes) = self.encode() {
                self.outer_udp.checksum = u16::from_be_bytes([bytes[26], bytes[27]]);
            }
        }
    }

    /// Encodes the IP datagram. Length and checksum fields are derived from
    /// the content, not copied from the struct.
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let inner_len = self.inner.encoded_len();
        let total = VXLAN_OVERHEAD + inner_len;
        if total > usize::from(u16::MAX) {
            return Err(CodecError::Oversize {
                payload: total,
                mtu: usize::from(u16::MAX),
            });
        }
        let mut ip = self.outer_ip.clone();
        ip.total_length = total as u16;
        ip.header_checksum = ip.compute_checksum();

        let mut buf = Vec::with_capacity(total);
        buf.extend_from_slice(&ip.to_bytes());
        let udp_len = (total - IPV4_HEADER_LEN) as u16;
        buf.extend_from_slice(&self.outer_udp.src_port.to_be_bytes());
        buf.extend_from_slice(&self.outer_udp.dst_port.to_be_bytes());
        buf.extend_from_slice(&udp_len.to_be_bytes());
        buf.extend_from_slice(&[0, 0]);
        buf.extend_from_slice(&self.vxlan.to_bytes()?);
        self.inner.write_into(&mut buf)?;

        if self.outer_udp.checksum != 0 {
            let sum = udp_checksum(&ip, &buf[IPV4_HEADER_LEN..]);
            buf[26..28].copy_from_slice(&sum.to_be_bytes());
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < VXLAN_OVERHEAD {
            return Err(CodecError::Truncated {
                needed: VXLAN_OVERHEAD,
                got: bytes.len(),
            });
        }
        let version = bytes[0] >> 4;
        if version != 4 {
            return Err(CodecError::NotIpv4(version));
        }
        let ihl = bytes[0] & 0x0f;
        if ihl != 5 {
            return Err(CodecError::Ipv4Options(ihl));
        }
        let total_length = u16::from_be_bytes([bytes[2], bytes[3]]);
        if usize::from(total_length) > bytes.len() {
            return Err(CodecError::Truncated {
                needed: total_length.into(),
                got: bytes.len(),
            });
        }
        if usize::from(total_length) < VXLAN_OVERHEAD {
            return Err(CodecError::LengthMismatch {
                field: "ipv4 total length",
                declared: total_length.into(),
                actual: bytes.len(),
            });
        }
        let bytes = &bytes[..usize::from(total_length)];
        let flags_frag = u16::from_be_bytes([bytes[6], bytes[7]]);
        if flags_frag & 0x3fff != 0 {
            return Err(CodecError::Fragmented);
        }
        let found = u16::from_be_bytes([bytes[10], bytes[11]]);
        let expected = {
            let mut h = [0u8; IPV4_HEADER_LEN];
            h.copy_from_slice(&bytes[..IPV4_HEADER_LEN]);
            h[10] = 0;
            h[11] = 0;
            internet_checksum(&[&h])
        };
        if found != expected {
            return Err(CodecError::BadIpChecksum { expected, found });
        }
        let outer_ip = Ipv4Header {
            src: Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]),
            dst: Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]),
            dscp: Dscp(bytes[1] >> 2),
            ecn: bytes[1] & 0x03,
            identification: u16::from_be_bytes([bytes[4], bytes[5]]),
            dont_fragment: flags_frag & 0x4000 != 0,
            ttl: bytes[8],
            protocol: bytes[9],
            total_length,
            header_checksum: found,
        };
        if outer_ip.protocol != IPPROTO_UDP {
            return Err(CodecError::NotUdp(outer_ip.protocol));
        }

        let udp = &bytes[IPV4_HEADER_LEN..];
        let outer_udp = UdpHeader {
            src_port: u16::from_be_bytes([udp[0], udp[1]]),
            dst_port: u16::from_be_bytes([udp[2], udp[3]]),
            length: u16::from_be_bytes([udp[4], udp[5]]),
            checksum: u16::from_be_bytes([udp[6], udp[7]]),
        };
        if outer_udp.dst_port != VXLAN_UDP_PORT {
            return Err(CodecError::NotVxlan(outer_udp.dst_port));
        }
        if usize::from(outer_udp.length) != udp.len() {
            return Err(CodecError::LengthMismatch {
                field: "udp length",
                declared: outer_udp.length.into(),
                actual: udp.len(),
            });
        }
        if outer_udp.checksum != 0 && udp_checksum(&outer_ip, udp) != outer_udp.checksum {
            return Err(CodecError::BadUdpChecksum);
        }

        let vxlan =
            VxlanHeader::from_bytes(&udp[UDP_HEADER_LEN..UDP_HEADER_LEN + VXLAN_HEADER_LEN])?;
        let inner = EthernetFrame::decode(&udp[UDP_HEADER_LEN + VXLAN_HEADER_LEN..])?;
        Ok(VxlanPacket {
            outer_ip,
            outer_udp,
            vxlan,
            inner,
        })
    }
}

/// UDP checksum over the IPv4 pseudo-header and `segment` (whose checksum
/// field is ignored). Zero results are transmitted as 0xFFFF.
fn udp_checksum(ip: &Ipv4Header, segment: &[u8]) -> u16 {
    let mut pseudo = [0u8; 12];
    pseudo[0..4].copy_from_slice(&ip.src.octets());
    pseudo[4..8].copy_from_slice(&ip.dst.octets());
    pseudo[9] = IPPROTO_UDP;
    pseudo[10..12].copy_from_slice(&(segment.len() as u16).to_be_bytes());
    let sum = internet_checksum(&[&pseudo, &segment[..6], &[0, 0], &segment[8..]]);
    if sum == 0 {
        0xffff
    } else {
        sum
    }
}

/// Outer UDP source port in 49152..=65535, hashed (FNV-1a) from the inner
/// MAC pair and the VNI so each inner flow keeps a stable port.
pub fn flow_entropy_port(src: &MacAddress, dst: &MacAddress, vni: u32) -> u16 {
    const OFFSET: u32 = 0x811c_9dc5;
    const PRIME: u32 = 0x0100_0193;
    let vni_bytes = vni.to_be_bytes();
    let hash = src
        .0
        .iter()
        .chain(dst.0.iter())
        .chain(vni_bytes[1..].iter())
        .fold(OFFSET, |h, &b| (h ^ u32::from(b)).wrapping_mul(PRIME));
    EPHEMERAL_PORT_BASE + (hash % u32::from(u16::MAX - EPHEMERAL_PORT_BASE + 1)) as u16
}
