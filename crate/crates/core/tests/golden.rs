//! Byte-level fixtures computed outside this crate (Python `struct`, RFC 1071
//! checksum, FNV-1a) and frozen here.

use std::net::Ipv4Addr;

use vxtsn_core::frames::{Dscp, EthernetFrame, MacAddress, Pcp, VlanTag, VxlanPacket};
use vxtsn_core::mapping::{vni_from_tuple, DscpTable, TsnTuple};
use vxtsn_core::simnet::capture::{read_pcap, CapturePoint, Direction, Tap};

fn hex(s: &str) -> Vec<u8> {
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
        .collect()
}

const INNER: &str = "0200000001010200000000018100a0648892\
000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f\
202122232425262728292a2b2c2d";

const PACKET: &str = "45a00064000040004011b633c0a80164c0a80101\
df7012b500500000\
080000000003ed00";

fn inner_frame() -> EthernetFrame {
    EthernetFrame {
        dst: "02:00:00:00:01:01".parse().unwrap(),
        src: "02:00:00:00:00:01".parse().unwrap(),
        tag: Some(VlanTag::new(100, Pcp::new(5).unwrap()).unwrap()),
        ethertype: 0x8892,
        payload: (0u8..46).collect(),
    }
}

#[test]
fn tagged_frame_bytes() {
    let frame = inner_frame();
    assert_eq!(frame.encode().unwrap(), hex(INNER));
    assert_eq!(EthernetFrame::decode(&hex(INNER)).unwrap(), frame);
}

#[test]
fn vxlan_packet_bytes() {
    let frame = inner_frame();
    let tuple = TsnTuple::from(frame.tag.unwrap());
    let vni = vni_from_tuple(tuple);
    let dscp = DscpTable::default().dscp_from_pcp(tuple.pcp);
    assert_eq!(dscp, Dscp::new(40).unwrap());
    let pkt = VxlanPacket::new(
        Ipv4Addr::new(192, 168, 1, 100),
        Ipv4Addr::new(192, 168, 1, 1),
        dscp,
        vni.value(),
        frame,
    );
    let mut expected = hex(PACKET);
    expected.extend(hex(INNER));
    assert_eq!(pkt.encode().unwrap(), expected);
    assert_eq!(pkt.outer_udp.src_port, 57200);
    assert_eq!(VxlanPacket::decode(&expected).unwrap(), pkt);
}

#[test]
fn pcap_bytes() {
    let mut cp = CapturePoint::new("A", Tap::VtepLanIn, 96);
    cp.record(1_000_000_005, &hex(INNER), Direction::Downlink);
    let mut buf = Vec::new();
    cp.write_pcap(&mut buf).unwrap();
    let header =
        hex("4d3cb2a1020004000000000000000000600000000100000001000000050000004000000040000000");
    assert_eq!(&buf[..header.len()], &header[..]);
    assert_eq!(&buf[header.len()..], &hex(INNER)[..]);
    let back = read_pcap(&buf[..]).unwrap();
    assert_eq!(back.records[0].timestamp_ns, 1_000_000_005);
}

#[test]
fn broadcast_mac_text() {
    assert_eq!(MacAddress::BROADCAST.to_string(), "ff:ff:ff:ff:ff:ff");
}
