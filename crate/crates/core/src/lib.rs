//! Ethernet/TSN frame forwarding across an IP-only 5G system.
//!
//! Frames are carried in VxLAN tunnels whose VNI encodes the `{VLAN ID, PCP}`
//! tuple. The ingress tunnel end point marks the outer DSCP from the PCP so
//! that packet detection rules in the 5G user plane can place each packet
//! in a QoS flow, which is then scheduled by 5QI priority.
//!
//! - [`frames`]: 802.1Q and VxLAN/UDP/IPv4 codecs.
//! - [`mapping`]: tuple/VNI, PCP/DSCP, DSCP/QFI and QFI/5QI tables.
//! - [`vtep`]: tunnel end point with flood-and-learn forwarding.
//! - [`fiveg`]: QoS flows, DRBs and a strict-priority radio link.
//! - [`simnet`]: deterministic discrete-event simulator, scenarios, reports.

pub mod fiveg;
pub mod frames;
pub mod mapping;
pub mod simnet;
pub mod vtep;

/// Simulated time and durations, integer nanoseconds.
pub type Nanos = u64;

pub const NS_PER_US: Nanos = 1_000;
pub const NS_PER_MS: Nanos = 1_000_000;
pub const NS_PER_S: Nanos = 1_000_000_000;
