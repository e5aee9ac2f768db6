//! Capture points and classic pcap I/O (nanosecond variant, magic
//! 0xA1B23C4D).

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Nanos;

pub const PCAP_MAGIC_NS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;
pub const DEFAULT_SNAPLEN: u32 = 96;

/// Pipeline locations where traffic can be recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    /// Frame emitted by a host.
    Source,
    /// Frame entering a VTEP from its LAN.
    VtepLanIn,
    /// Frame handed to the tunnel interface selected by `{VLAN, PCP}`.
    VtepRedirect,
    /// Encapsulated, DSCP-marked packet leaving a VTEP.
    VtepEncap,
    /// Packet assigned to a QoS flow by the packet detection rules.
    Classified,
    /// Packet starting transmission on the radio link.
    RadioTx,
    /// Packet arriving at a VTEP from the 5G system.
    VtepRx,
    /// Decapsulated frame leaving a VTEP towards its LAN.
    VtepDecap,
    /// Frame accepted by a host.
    Sink,
}

impl Tap {
    pub fn link_type(self) -> LinkType {
        match self {
            Tap::VtepEncap | Tap::Classified | Tap::RadioTx | Tap::VtepRx => LinkType::RawIpv4,
            _ => LinkType::Ethernet,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkType {
    Ethernet,
    RawIpv4,
}

impl LinkType {
    pub fn pcap_linktype(self) -> u32 {
        match self {
            LinkType::Ethernet => LINKTYPE_ETHERNET,
            LinkType::RawIpv4 => LINKTYPE_RAW,
        }
    }

    pub fn from_pcap(linktype: u32) -> Option<Self> {
        match linktype {
            LINKTYPE_ETHERNET => Some(LinkType::Ethernet),
            LINKTYPE_RAW => Some(LinkType::RawIpv4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Towards the UEs.
    Downlink,
    /// Towards the UPF.
    Uplink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub timestamp_ns: Nanos,
    /// Captured bytes, at most `snaplen`.
    pub data: Vec<u8>,
    pub orig_len: u32,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapturePoint {
    pub label: String,
    pub tap: Tap,
    pub link_type: LinkType,
    pub snaplen: u32,
    pub events: Vec<CaptureEvent>,
}

impl CapturePoint {
    pub fn new(label: impl Into<String>, tap: Tap, snaplen: u32) -> Self {
        CapturePoint {
            label: label.into(),
            tap,
            link_type: tap.link_type(),
            snaplen,
            events: Vec::new(),
        }
    }

    pub fn record(&mut self, timestamp_ns: Nanos, bytes: &[u8], direction: Direction) {
        debug_assert!(self
            .events
            .last()
            .is_none_or(|e| e.timestamp_ns <= timestamp_ns));
        let keep = bytes.len().min(self.snaplen as usize);
        self.events.push(CaptureEvent {
            timestamp_ns,
            data: bytes[..keep].to_vec(),
            orig_len: bytes.len() as u32,
            direction,
        });
    }

    pub fn write_pcap<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = PcapWriter::new(out, self.link_type, self.snaplen)?;
        for e in &self.events {
            w.write_packet(e.timestamp_ns, &e.data, e.orig_len)?;
        }
        w.into_inner().flush()
    }
}

pub struct PcapWriter<W: Write> {
    inner: W,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, link: LinkType, snaplen: u32) -> io::Result<Self> {
        inner.write_all(&PCAP_MAGIC_NS.to_le_bytes())?;
        inner.write_all(&2u16.to_le_bytes())?;
        inner.write_all(&4u16.to_le_bytes())?;
        inner.write_all(&0i32.to_le_bytes())?; // thiszone
        inner.write_all(&0u32.to_le_bytes())?; // sigfigs
        inner.write_all(&snaplen.to_le_bytes())?;
        inner.write_all(&link.pcap_linktype().to_le_bytes())?;
        Ok(PcapWriter { inner })
    }

    pub fn write_packet(
        &mut self,
        timestamp_ns: Nanos,
        data: &[u8],
        orig_len: u32,
    ) -> io::Result<()> {
        let secs = u32::try_from(timestamp_ns / 1_000_000_000)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp overflows pcap"))?;
        let nanos = (timestamp_ns % 1_000_000_000) as u32;
        self.inner.write_all(&secs.to_le_bytes())?;
        self.inner.write_all(&nanos.to_le_bytes())?;
        self.inner.write_all(&(data.len() as u32).to_le_bytes())?;
        self.inner.write_all(&orig_len.to_le_bytes())?;
        self.inner.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[derive(Debug, Error)]
pub enum PcapError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unsupported pcap magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("unsupported link type {0}")]
    LinkType(u32),
    #[error("truncated pcap record")]
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    pub timestamp_ns: Nanos,
    pub data: Vec<u8>,
    pub orig_len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapFile {
    pub link_type: LinkType,
    pub snaplen: u32,
    pub records: Vec<PcapRecord>,
}

/// Reads a little- or big-endian classic pcap with micro- or nanosecond
/// timestamps.
pub fn read_pcap<R: Read>(mut input: R) -> Result<PcapFile, PcapError> {
    let mut header = [0u8; 24];
    input.read_exact(&mut header)?;
    let magic_le = u32::from_le_bytes(header[0..4].try_into().unwrap());
    let (big_endian, nanos) = match magic_le {
        0xa1b2_3c4d => (false, true),
        0xa1b2_c3d4 => (false, false),
        0x4d3c_b2a1 => (true, true),
        0xd4c3_b2a1 => (true, false),
        other => return Err(PcapError::BadMagic(other)),
    };
    let u32_at = |b: &[u8], i: usize| {
        let raw: [u8; 4] = b[i..i + 4].try_into().unwrap();
        if big_endian {
            u32::from_be_bytes(raw)
        } else {
            u32::from_le_bytes(raw)
        }
    };
    let snaplen = u32_at(&header, 16);
    let linktype = u32_at(&header, 20);
    let link_type = LinkType::from_pcap(linktype).ok_or(PcapError::LinkType(linktype))?;

    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let mut records = Vec::new();
    let mut pos = 0;
    while pos < body.len() {
        if body.len() - pos < 16 {
            return Err(PcapError::Truncated);
        }
        let secs = u64::from(u32_at(&body, pos));
        let frac = u64::from(u32_at(&body, pos + 4));
        let incl = u32_at(&body, pos + 8) as usize;
        let orig_len = u32_at(&body, pos + 12);
        pos += 16;
        if body.len() - pos < incl {
            return Err(PcapError::Truncated);
        }
        let frac_ns = if nanos { frac } else { frac * 1_000 };
        records.push(PcapRecord {
            timestamp_ns: secs * 1_000_000_000 + frac_ns,
            data: body[pos..pos + incl].to_vec(),
            orig_len,
        });
        pos += incl;
    }
    Ok(PcapFile {
        link_type,
        snaplen,
        records,
    })
}
