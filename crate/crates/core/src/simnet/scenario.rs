//! Scenario files (TOML, `schema_version = 1`) and their validation.
//!
//! ```toml
//! schema_version = 1
//! name = "example"
//! duration_ms = 1000
//! seed = 1
//!
//! [fiveg]
//! downlink = { capacity_bps = 50e6, base_latency_ns = 1_000_000 }
//! pdr = [{ dscp = 56, qfi = 1, precedence = 10 }]
//! qos_flows = [{ qfi = 1, five_qi = 69 }]
//! drbs = [{ id = 1, qfis = [1] }]
//!
//! [[lans]]
//! name = "edge"
//!
//! [[vteps]]
//! name = "upf"
//! ip = "192.168.1.100"
//! side = "upf"
//! lan = "edge"
//! groups = [{ vni = 1007, group = "239.1.1.1" }]
//!
//! [[hosts]]
//! name = "plc"
//! mac = "02:00:00:00:00:01"
//! lan = "edge"
//! vlans = [100]
//!
//! [[flows]]
//! name = "hp"
//! vlan = 100
//! pcp = 7
//! src = "plc"
//! dst_mac = "01:1b:19:00:00:00"
//! payload = "ptp"
//! payload_size = 44
//! period_us = 125000
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fiveg::{map_qfi_to_drb, DrbConfig, Jitter, LinkModel};
use crate::frames::{Dscp, MacAddress, Pcp, DEFAULT_MTU, ETH_HEADER_LEN, VLAN_TAG_LEN};
use crate::mapping::{
    standard_five_qi, vni_from_tuple, DscpTable, FiveQiDescriptor, PdrRule, PdrRuleSet, Qfi,
    QosBindings, QosFlowBinding, TsnTuple, Vni,
};
use crate::simnet::bridge::WiredLink;
use crate::simnet::capture::{Direction, Tap, DEFAULT_SNAPLEN};
use crate::simnet::traffic::{FlowSchedule, PayloadKind, TrafficKind};
use crate::vtep::{TagPolicy, VtepConfig, DEFAULT_MAX_AGE_NS};
use crate::{Nanos, NS_PER_MS, NS_PER_S, NS_PER_US};

pub const SCHEMA_VERSION: u32 = 1;

const BUNDLED: &[(&str, &str)] = &[
    (
        "paper_testbed",
        include_str!("../../scenarios/paper_testbed.toml"),
    ),
    (
        "paper_testbed_congested",
        include_str!("../../scenarios/paper_testbed_congested.toml"),
    ),
    (
        "backward_learning",
        include_str!("../../scenarios/backward_learning.toml"),
    ),
];

/// Names of the scenarios shipped with the library.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{} validation error(s):\n{}", .0.len(), .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

impl ScenarioError {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ScenarioError::Invalid(d) => d.clone(),
            other => vec![Diagnostic {
                path: "<file>".into(),
                message: other.to_string(),
            }],
        }
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub duration_ms: u64,
    #[serde(default)]
    pub seed: u64,
    /// Extra simulated time for in-flight traffic after generation stops.
    #[serde(default = "default_drain_ms")]
    pub drain_ms: u64,
    #[serde(default)]
    pub timing: TimingFile,
    pub fiveg: FiveGFile,
    #[serde(default)]
    pub lans: Vec<LanFile>,
    #[serde(default)]
    pub vteps: Vec<VtepFile>,
    #[serde(default)]
    pub hosts: Vec<HostFile>,
    #[serde(default)]
    pub flows: Vec<FlowFile>,
    #[serde(default)]
    pub captures: Vec<CaptureFile>,
}

fn default_drain_ms() -> u64 {
    2_000
}

/// VTEP processing delays, modeled as constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingFile {
    /// `{VLAN, PCP}` -> tunnel interface redirection.
    #[serde(default = "default_task1")]
    pub task1_ns: u64,
    /// Encapsulation and DSCP marking.
    #[serde(default = "default_task2")]
    pub task2_ns: u64,
    /// Decapsulation and redirection to the LAN.
    #[serde(default = "default_task3")]
    pub task3_ns: u64,
    #[serde(default = "default_aging_s")]
    pub aging_s: u64,
}

fn default_task1() -> u64 {
    3_113
}
fn default_task2() -> u64 {
    7_619
}
fn default_task3() -> u64 {
    75_375
}
fn default_aging_s() -> u64 {
    DEFAULT_MAX_AGE_NS / NS_PER_S
}

impl Default for TimingFile {
    fn default() -> Self {
        TimingFile {
            task1_ns: default_task1(),
            task2_ns: default_task2(),
            task3_ns: default_task3(),
            aging_s: default_aging_s(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiveGFile {
    pub downlink: LinkFile,
    /// Defaults to the downlink parameters.
    pub uplink: Option<LinkFile>,
    pub queue_capacity: Option<usize>,
    #[serde(default)]
    pub pdr: Vec<PdrFile>,
    #[serde(default)]
    pub qos_flows: Vec<QosFlowFile>,
    #[serde(default)]
    pub drbs: Vec<DrbFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub capacity_bps: f64,
    #[serde(default)]
    pub base_latency_ns: u64,
    pub jitter: Option<JitterFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterFile {
    pub lo_ns: u64,
    pub hi_ns: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdrFile {
    /// Omit for a match-any rule.
    pub dscp: Option<u64>,
    pub qfi: u64,
    pub precedence: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosFlowFile {
    pub qfi: u64,
    pub five_qi: u64,
    /// Overrides for non-standardized 5QIs.
    pub priority: Option<u64>,
    pub pdb_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrbFile {
    pub id: u64,
    pub qfis: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanFile {
    pub name: String,
    pub link_bps: Option<f64>,
    pub link_delay_ns: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Co-located with the UPF (network side).
    Upf,
    /// Co-located with a UE (device side).
    Ue,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VtepFile {
    pub name: String,
    pub ip: String,
    pub side: Side,
    pub lan: String,
    pub tag_policy: Option<TagPolicy>,
    pub default_vlan: Option<u64>,
    /// Eight DSCP values indexed by PCP; omit for DSCP = 8 * PCP.
    pub dscp_table: Option<Vec<u64>>,
    #[serde(default)]
    pub groups: Vec<GroupFile>,
    #[serde(default)]
    pub static_entries: Vec<StaticEntryFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFile {
    pub vni: u64,
    pub group: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticEntryFile {
    pub vni: u64,
    pub mac: String,
    pub remote: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostFile {
    pub name: String,
    pub mac: String,
    pub lan: String,
    #[serde(default)]
    pub vlans: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowFile {
    pub name: String,
    pub vlan: u64,
    pub pcp: u64,
    pub src: String,
    pub dst_mac: String,
    pub payload: PayloadKind,
    pub payload_size: u64,
    pub period_us: Option<u64>,
    /// Messages per period.
    pub burst: Option<u32>,
    pub rate_bps: Option<f64>,
    #[serde(default)]
    pub start_us: u64,
    pub count: Option<u64>,
    /// Expected QoS flow; checked against the packet detection rules.
    pub qfi: Option<u64>,
    /// Hosts that must receive every frame of this flow, and no others.
    pub expect: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureFile {
    pub label: String,
    pub tap: Tap,
    /// Host (source/sink), VTEP (vtep_*), or "downlink"/"uplink"
    /// (classified/radio_tx; omit for both).
    pub node: Option<String>,
    pub snaplen: Option<u32>,
}

// ---------------------------------------------------------------------------
// Validated model

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VtepTiming {
    pub task1_ns: Nanos,
    pub task2_ns: Nanos,
    pub task3_ns: Nanos,
    pub max_age_ns: Nanos,
}

#[derive(Debug, Clone)]
pub struct FiveGSpec {
    pub rules: PdrRuleSet,
    pub bindings: QosBindings,
    pub drbs: Vec<DrbConfig>,
    pub downlink: LinkModel,
    pub uplink: LinkModel,
    pub queue_capacity: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Lan {
    pub name: String,
    pub link: WiredLink,
    pub vtep: usize,
}

#[derive(Debug, Clone)]
pub struct VtepNode {
    pub name: String,
    pub side: Side,
    pub lan: usize,
    pub config: VtepConfig,
    pub static_entries: Vec<(Vni, MacAddress, Ipv4Addr)>,
}

#[derive(Debug, Clone)]
pub struct Host {
    pub name: String,
    pub mac: MacAddress,
    pub lan: usize,
    pub vlans: BTreeSet<u16>,
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    pub name: String,
    pub tuple: TsnTuple,
    pub src: usize,
    pub dst_mac: MacAddress,
    pub payload: PayloadKind,
    pub payload_size: usize,
    pub schedule: FlowSchedule,
    pub expected_qfi: Option<Qfi>,
    pub expect: Option<BTreeSet<usize>>,
}

impl FlowSpec {
    pub fn frame_len(&self) -> usize {
        ETH_HEADER_LEN + VLAN_TAG_LEN + self.payload_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureNode {
    Host(usize),
    Vtep(usize),
    Direction(Option<Direction>),
}

#[derive(Debug, Clone)]
pub struct CaptureSpec {
    pub label: String,
    pub tap: Tap,
    pub node: CaptureNode,
    pub snaplen: u32,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub duration_ns: Nanos,
    pub drain_ns: Nanos,
    pub seed: u64,
    pub timing: VtepTiming,
    pub fiveg: FiveGSpec,
    pub lans: Vec<Lan>,
    pub vteps: Vec<VtepNode>,
    pub hosts: Vec<Host>,
    pub flows: Vec<FlowSpec>,
    pub captures: Vec<CaptureSpec>,
}

/// One row of the flow mapping table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPlan {
    pub flow: String,
    pub tuple: TsnTuple,
    pub vni: Vni,
    pub group: Option<Ipv4Addr>,
    pub dscp: Dscp,
    pub qfi: Option<Qfi>,
    pub descriptor: Option<FiveQiDescriptor>,
    pub ingress_vtep: String,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        file.validate()
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Loads a file, falling back to a bundled scenario of that name.
    pub fn load_or_bundled(spec: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(spec);
        if !path.exists() {
            if let Some(text) = bundled_source(spec) {
                return Self::from_toml_str(text);
            }
        }
        Self::load(path)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        bundled_source(name).map(|t| Self::from_toml_str(t).expect("bundled scenario is valid"))
    }

    pub fn host_index(&self, name: &str) -> Option<usize> {
        self.hosts.iter().position(|h| h.name == name)
    }

    pub fn vtep_index(&self, name: &str) -> Option<usize> {
        self.vteps.iter().position(|v| v.name == name)
    }

    pub fn flow_index(&self, name: &str) -> Option<usize> {
        self.flows.iter().position(|f| f.name == name)
    }

    /// The VTEP through which a host's traffic enters the tunnel.
    pub fn ingress_vtep_of(&self, host: usize) -> usize {
        self.lans[self.hosts[host].lan].vtep
    }

    pub fn flow_plan(&self, flow: &FlowSpec) -> FlowPlan {
        let vtep = &self.vteps[self.ingress_vtep_of(flow.src)];
        let vni = vni_from_tuple(flow.tuple);
        let dscp = vtep.config.dscp_table.dscp_from_pcp(flow.tuple.pcp);
        let qfi = self.fiveg.rules.classify(dscp).ok();
        FlowPlan {
            flow: flow.name.clone(),
            tuple: flow.tuple,
            vni,
            group: vtep.config.groups.get(&vni).copied(),
            dscp,
            qfi,
            descriptor: qfi.and_then(|q| self.fiveg.bindings.lookup(q).ok()),
            ingress_vtep: vtep.name.clone(),
        }
    }

    pub fn flow_plans(&self) -> Vec<FlowPlan> {
        self.flows.iter().map(|f| self.flow_plan(f)).collect()
    }
}

struct Diags(Vec<Diagnostic>);

impl Diags {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn range(&mut self, path: &str, value: u64, max: u64) -> bool {
        if value > max {
            self.push(path, format!("{value} is out of range 0..={max}"));
            false
        } else {
            true
        }
    }
}

fn unique_names<'a>(
    d: &mut Diags,
    section: &str,
    names: impl Iterator<Item = &'a str>,
) -> BTreeMap<&'a str, usize> {
    let mut map = BTreeMap::new();
    for (i, n) in names.enumerate() {
        if n.is_empty() {
            d.push(format!("{section}[{i}].name"), "must not be empty");
        }
        if map.insert(n, i).is_some() {
            d.push(
                format!("{section}[{i}].name"),
                format!("duplicate name {n:?}"),
            );
        }
    }
    map
}

fn link_model(d: &mut Diags, path: &str, l: &LinkFile) -> LinkModel {
    let jitter = match &l.jitter {
        None => Jitter::None,
        Some(j) => Jitter::Uniform {
            lo_ns: j.lo_ns,
            hi_ns: j.hi_ns,
        },
    };
    let model = LinkModel {
        capacity_bps: l.capacity_bps,
        base_latency_ns: l.base_latency_ns,
        jitter,
    };
    if let Err(e) = model.validate() {
        d.push(path, e.to_string());
    }
    model
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<Scenario, ScenarioError> {
        let mut d = Diags(Vec::new());

        if self.schema_version != SCHEMA_VERSION {
            d.push(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }
        if self.duration_ms == 0 {
            d.push("duration_ms", "must be > 0");
        }

        let timing = VtepTiming {
            task1_ns: self.timing.task1_ns,
            task2_ns: self.timing.task2_ns,
            task3_ns: self.timing.task3_ns,
            max_age_ns: self.timing.aging_s.saturating_mul(NS_PER_S),
        };
        if self.timing.aging_s == 0 {
            d.push("timing.aging_s", "must be > 0");
        }

        let fiveg = self.validate_fiveg(&mut d);

        let lan_idx = unique_names(&mut d, "lans", self.lans.iter().map(|l| l.name.as_str()));
        let vtep_idx = unique_names(&mut d, "vteps", self.vteps.iter().map(|v| v.name.as_str()));
        let host_idx = unique_names(&mut d, "hosts", self.hosts.iter().map(|h| h.name.as_str()));
        let flow_idx = unique_names(&mut d, "flows", self.flows.iter().map(|f| f.name.as_str()));
        let _ = flow_idx;

        // VTEPs
        let mut lan_vtep: Vec<Option<usize>> = vec![None; self.lans.len()];
        let mut vteps = Vec::new();
        let mut ips = BTreeMap::new();
        for (i, v) in self.vteps.iter().enumerate() {
            let p = format!("vteps[{}]", v.name);
            let ip: Ipv4Addr = match v.ip.parse() {
                Ok(ip) => ip,
                Err(_) => {
                    d.push(
                        format!("{p}.ip"),
                        format!("invalid IPv4 address {:?}", v.ip),
                    );
                    Ipv4Addr::UNSPECIFIED
                }
            };
            if let Some(prev) = ips.insert(ip, i) {
                d.push(
                    format!("{p}.ip"),
                    format!("{ip} already used by {}", self.vteps[prev].name),
                );
            }
            let lan = match lan_idx.get(v.lan.as_str()) {
                Some(&l) => {
                    if let Some(other) = lan_vtep[l] {
                        d.push(
                            format!("{p}.lan"),
                            format!("LAN {} already served by {}", v.lan, self.vteps[other].name),
                        );
                    }
                    lan_vtep[l] = Some(i);
                    l
                }
                None => {
                    d.push(format!("{p}.lan"), format!("unknown LAN {:?}", v.lan));
                    0
                }
            };
            let mut config = VtepConfig::new(ip);
            config.tag_policy = v.tag_policy.unwrap_or_default();
            if let Some(vlan) = v.default_vlan {
                if d.range(&format!("{p}.default_vlan"), vlan, 4095) {
                    config.default_vlan = vlan as u16;
                }
            }
            if let Some(table) = &v.dscp_table {
                let path = format!("{p}.dscp_table");
                if table.len() != 8 {
                    d.push(&path, format!("needs 8 entries, got {}", table.len()));
                } else if table.iter().all(|&x| d.range(&path, x, 63)) {
                    let values: [Dscp; 8] =
                        std::array::from_fn(|k| Dscp::new(table[k] as u8).expect("checked"));
                    match DscpTable::custom(values) {
                        Ok(t) => config.dscp_table = t,
                        Err(e) => d.push(&path, e.to_string()),
                    }
                }
            }
            for (g, grp) in v.groups.iter().enumerate() {
                let path = format!("{p}.groups[{g}]");
                let vni = Vni::new(grp.vni.min(u64::from(u32::MAX)) as u32);
                let addr: Result<Ipv4Addr, _> = grp.group.parse();
                match (vni, addr) {
                    (Ok(vni), Ok(addr)) => {
                        if !addr.is_multicast() {
                            d.push(
                                format!("{path}.group"),
                                format!("{addr} is not in 224.0.0.0/4"),
                            );
                        }
                        if config.groups.insert(vni, addr).is_some() {
                            d.push(format!("{path}.vni"), format!("VNI {vni} listed twice"));
                        }
                    }
                    (Err(_), _) => d.push(
                        format!("{path}.vni"),
                        format!("{} exceeds 24 bits", grp.vni),
                    ),
                    (_, Err(_)) => d.push(
                        format!("{path}.group"),
                        format!("invalid address {:?}", grp.group),
                    ),
                }
            }
            if ip != Ipv4Addr::UNSPECIFIED {
                if let Err(e) = config.validate() {
                    d.push(&p, e.to_string());
                }
            }
            let mut static_entries = Vec::new();
            for (s, e) in v.static_entries.iter().enumerate() {
                let path = format!("{p}.static_entries[{s}]");
                let vni = Vni::new(e.vni.min(u64::from(u32::MAX)) as u32);
                let mac: Result<MacAddress, _> = e.mac.parse();
                let remote: Result<Ipv4Addr, _> = e.remote.parse();
                match (vni, mac, remote) {
                    (Ok(vni), Ok(mac), Ok(remote)) => {
                        if !mac.is_unicast() || mac.is_zero() {
                            d.push(format!("{path}.mac"), "static entries need a unicast MAC");
                        }
                        static_entries.push((vni, mac, remote));
                    }
                    _ => d.push(path, "invalid vni, mac or remote address"),
                }
            }
            vteps.push(VtepNode {
                name: v.name.clone(),
                side: v.side,
                lan,
                config,
                static_entries,
            });
        }
        for vt in &vteps {
            for (vni, mac, remote) in &vt.static_entries {
                if !ips.contains_key(remote) {
                    d.push(
                        format!("vteps[{}].static_entries", vt.name),
                        format!("VNI {vni} {mac}: remote {remote} is not a configured VTEP"),
                    );
                }
            }
        }

        let mut lans = Vec::new();
        for (i, l) in self.lans.iter().enumerate() {
            let link = WiredLink {
                capacity_bps: l.link_bps.unwrap_or(WiredLink::default().capacity_bps),
                delay_ns: l.link_delay_ns.unwrap_or(WiredLink::default().delay_ns),
            };
            if link.capacity_bps.is_nan() || link.capacity_bps <= 0.0 {
                d.push(format!("lans[{}].link_bps", l.name), "must be > 0");
            }
            match lan_vtep[i] {
                Some(v) => lans.push(Lan {
                    name: l.name.clone(),
                    link,
                    vtep: v,
                }),
                None => {
                    d.push(format!("lans[{}]", l.name), "no VTEP attached");
                    lans.push(Lan {
                        name: l.name.clone(),
                        link,
                        vtep: 0,
                    });
                }
            }
        }

        // Hosts
        let mut hosts = Vec::new();
        let mut macs = BTreeMap::new();
        for h in &self.hosts {
            let p = format!("hosts[{}]", h.name);
            let mac = match h.mac.parse::<MacAddress>() {
                Ok(m) if m.is_unicast() && !m.is_zero() => m,
                Ok(m) => {
                    d.push(format!("{p}.mac"), format!("{m} is not a unicast address"));
                    m
                }
                Err(e) => {
                    d.push(format!("{p}.mac"), e.to_string());
                    MacAddress::ZERO
                }
            };
            if let Some(prev) = macs.insert(mac, h.name.clone()) {
                d.push(format!("{p}.mac"), format!("{mac} already used by {prev}"));
            }
            let lan = lan_idx.get(h.lan.as_str()).copied().unwrap_or_else(|| {
                d.push(format!("{p}.lan"), format!("unknown LAN {:?}", h.lan));
                0
            });
            let mut vlans = BTreeSet::new();
            for &v in &h.vlans {
                if d.range(&format!("{p}.vlans"), v, 4095) {
                    vlans.insert(v as u16);
                }
            }
            hosts.push(Host {
                name: h.name.clone(),
                mac,
                lan,
                vlans,
            });
        }

        // Flows
        if self.flows.len() > usize::from(u16::MAX) {
            d.push("flows", "at most 65535 flows");
        }
        let mut flows = Vec::new();
        for f in &self.flows {
            let p = format!("flows[{}]", f.name);
            let vlan_ok = d.range(&format!("{p}.vlan"), f.vlan, 4095);
            let pcp_ok = d.range(&format!("{p}.pcp"), f.pcp, 7);
            let tuple = TsnTuple {
                vlan_id: if vlan_ok { f.vlan as u16 } else { 0 },
                pcp: Pcp::new(if pcp_ok { f.pcp as u8 } else { 0 }).expect("checked"),
            };
            let src = host_idx.get(f.src.as_str()).copied();
            if src.is_none() {
                d.push(format!("{p}.src"), format!("unknown host {:?}", f.src));
            }
            if let Some(s) = src {
                if vlan_ok && !hosts[s].vlans.contains(&tuple.vlan_id) {
                    d.push(
                        format!("{p}.src"),
                        format!("host {} is not in VLAN {}", f.src, f.vlan),
                    );
                }
            }
            let dst_mac = f.dst_mac.parse::<MacAddress>().unwrap_or_else(|e| {
                d.push(format!("{p}.dst_mac"), e.to_string());
                MacAddress::BROADCAST
            });
            let min = f.payload.min_payload() as u64;
            if f.payload_size < min || f.payload_size > DEFAULT_MTU as u64 {
                d.push(
                    format!("{p}.payload_size"),
                    format!("{} is outside {min}..={DEFAULT_MTU}", f.payload_size),
                );
            }
            let payload_size = (f.payload_size.clamp(min, DEFAULT_MTU as u64)) as usize;
            let kind = match (f.period_us, f.rate_bps) {
                (Some(period), None) => {
                    if period == 0 {
                        d.push(format!("{p}.period_us"), "must be > 0");
                    }
                    if f.burst == Some(0) {
                        d.push(format!("{p}.burst"), "must be > 0");
                    }
                    TrafficKind::Periodic {
                        period_ns: period.max(1) * NS_PER_US,
                        burst: f.burst.unwrap_or(1).max(1),
                    }
                }
                (None, Some(rate)) => {
                    if !rate.is_finite() || rate <= 0.0 {
                        d.push(format!("{p}.rate_bps"), "must be > 0");
                    }
                    if f.burst.is_some() {
                        d.push(format!("{p}.burst"), "only valid for periodic flows");
                    }
                    TrafficKind::Rate {
                        bits_per_s: if rate > 0.0 { rate } else { 1.0 },
                    }
                }
                _ => {
                    d.push(&p, "exactly one of period_us or rate_bps is required");
                    TrafficKind::Periodic {
                        period_ns: NS_PER_MS,
                        burst: 1,
                    }
                }
            };
            if f.count == Some(0) {
                d.push(format!("{p}.count"), "must be > 0");
            }
            let expected_qfi = f.qfi.and_then(|q| match Qfi::new(q.min(255) as u8) {
                Ok(q) => Some(q),
                Err(e) => {
                    d.push(format!("{p}.qfi"), e.to_string());
                    None
                }
            });
            let expect = f.expect.as_ref().map(|names| {
                names
                    .iter()
                    .filter_map(|n| {
                        let i = host_idx.get(n.as_str()).copied();
                        if i.is_none() {
                            d.push(format!("{p}.expect"), format!("unknown host {n:?}"));
                        }
                        i
                    })
                    .collect::<BTreeSet<_>>()
            });
            let spec = FlowSpec {
                name: f.name.clone(),
                tuple,
                src: src.unwrap_or(0),
                dst_mac,
                payload: f.payload,
                payload_size,
                schedule: FlowSchedule {
                    kind,
                    start_ns: f.start_us * NS_PER_US,
                    frame_len: ETH_HEADER_LEN + VLAN_TAG_LEN + payload_size,
                    count: f.count,
                },
                expected_qfi,
                expect,
            };
            flows.push(spec);
        }

        // Captures
        let mut captures = Vec::new();
        let mut labels = BTreeSet::new();
        for (i, c) in self.captures.iter().enumerate() {
            let p = format!("captures[{i}]");
            if !labels.insert(c.label.as_str()) {
                d.push(
                    format!("{p}.label"),
                    format!("duplicate label {:?}", c.label),
                );
            }
            if c.label.is_empty()
                || !c
                    .label
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-')
            {
                d.push(format!("{p}.label"), "use letters, digits, '-' or '_'");
            }
            let node = match c.tap {
                Tap::Source | Tap::Sink => match c.node.as_deref().and_then(|n| host_idx.get(n)) {
                    Some(&h) => CaptureNode::Host(h),
                    None => {
                        d.push(format!("{p}.node"), "must name a host");
                        CaptureNode::Host(0)
                    }
                },
                Tap::VtepLanIn
                | Tap::VtepRedirect
                | Tap::VtepEncap
                | Tap::VtepRx
                | Tap::VtepDecap => match c.node.as_deref().and_then(|n| vtep_idx.get(n)) {
                    Some(&v) => CaptureNode::Vtep(v),
                    None => {
                        d.push(format!("{p}.node"), "must name a VTEP");
                        CaptureNode::Vtep(0)
                    }
                },
                Tap::Classified | Tap::RadioTx => match c.node.as_deref() {
                    None => CaptureNode::Direction(None),
                    Some("downlink") => CaptureNode::Direction(Some(Direction::Downlink)),
                    Some("uplink") => CaptureNode::Direction(Some(Direction::Uplink)),
                    Some(other) => {
                        d.push(
                            format!("{p}.node"),
                            format!("{other:?} is not downlink/uplink"),
                        );
                        CaptureNode::Direction(None)
                    }
                },
            };
            let snaplen = c.snaplen.unwrap_or(DEFAULT_SNAPLEN);
            if snaplen == 0 {
                d.push(format!("{p}.snaplen"), "must be > 0");
            }
            captures.push(CaptureSpec {
                label: c.label.clone(),
                tap: c.tap,
                node,
                snaplen,
            });
        }

        if !d.0.is_empty() {
            return Err(ScenarioError::Invalid(d.0));
        }
        let fiveg = fiveg.expect("no diagnostics implies a valid 5G section");
        let scenario = Scenario {
            name: self.name.clone(),
            duration_ns: self.duration_ms * NS_PER_MS,
            drain_ns: self.drain_ms * NS_PER_MS,
            seed: self.seed,
            timing,
            fiveg,
            lans,
            vteps,
            hosts,
            flows,
            captures,
        };
        check_flow_consistency(&scenario, &mut d);
        if d.0.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(d.0))
        }
    }

    fn validate_fiveg(&self, d: &mut Diags) -> Option<FiveGSpec> {
        let f = &self.fiveg;
        let before = d.0.len();
        let downlink = link_model(d, "fiveg.downlink", &f.downlink);
        let uplink = match &f.uplink {
            Some(u) => link_model(d, "fiveg.uplink", u),
            None => downlink,
        };
        if f.queue_capacity == Some(0) {
            d.push("fiveg.queue_capacity", "must be > 0");
        }

        let qfi = |d: &mut Diags, path: String, v: u64| match Qfi::new(v.min(255) as u8) {
            Ok(q) => Some(q),
            Err(e) => {
                d.push(path, e.to_string());
                None
            }
        };

        let mut rules = Vec::new();
        for (i, r) in f.pdr.iter().enumerate() {
            let p = format!("fiveg.pdr[{i}]");
            let dscp = match r.dscp {
                Some(v) if d.range(&format!("{p}.dscp"), v, 63) => Some(Dscp::new(v as u8).ok()),
                Some(_) => None,
                None => Some(None),
            };
            let q = qfi(d, format!("{p}.qfi"), r.qfi);
            if r.precedence > u64::from(u32::MAX) {
                d.push(format!("{p}.precedence"), "exceeds 32 bits");
            }
            if let (Some(match_dscp), Some(qfi)) = (dscp, q) {
                rules.push(PdrRule {
                    match_dscp,
                    qfi,
                    precedence: r.precedence as u32,
                });
            }
        }
        let rules = PdrRuleSet::new(rules)
            .map_err(|e| d.push("fiveg.pdr", e.to_string()))
            .ok();

        let mut bindings = Vec::new();
        for (i, b) in f.qos_flows.iter().enumerate() {
            let p = format!("fiveg.qos_flows[{i}]");
            let q = qfi(d, format!("{p}.qfi"), b.qfi);
            if b.five_qi > u64::from(u16::MAX) {
                d.push(format!("{p}.five_qi"), "exceeds 16 bits");
                continue;
            }
            let five_qi = b.five_qi as u16;
            let descriptor = match (b.priority, b.pdb_ms) {
                (None, None) => standard_five_qi(five_qi).map_err(|e| e.to_string()),
                (Some(prio), Some(pdb)) => {
                    FiveQiDescriptor::new(five_qi, prio.min(u64::from(u16::MAX)) as u16, pdb)
                        .map_err(|e| e.to_string())
                }
                _ => Err("priority and pdb_ms must be given together".to_string()),
            };
            match (q, descriptor) {
                (Some(qfi), Ok(descriptor)) => bindings.push(QosFlowBinding { qfi, descriptor }),
                (_, Err(e)) => d.push(format!("{p}.five_qi"), e),
                _ => {}
            }
        }
        let bindings = QosBindings::new(bindings)
            .map_err(|e| d.push("fiveg.qos_flows", e.to_string()))
            .ok();

        let mut drbs = Vec::new();
        for (i, drb) in f.drbs.iter().enumerate() {
            let p = format!("fiveg.drbs[{i}]");
            let qfis = drb
                .qfis
                .iter()
                .filter_map(|&v| qfi(d, format!("{p}.qfis"), v))
                .collect();
            drbs.push(DrbConfig {
                drb_id: drb.id.min(u64::from(u32::MAX)) as u32,
                qfis,
            });
        }

        let (rules, bindings) = (rules?, bindings?);
        if let Err(e) = map_qfi_to_drb(&bindings, &drbs) {
            d.push("fiveg.drbs", e.to_string());
        }
        for q in rules.qfis() {
            if bindings.lookup(q).is_err() {
                d.push(
                    "fiveg.pdr",
                    format!("QFI {q} has no entry in fiveg.qos_flows"),
                );
            }
        }
        if d.0.len() != before {
            return None;
        }
        Some(FiveGSpec {
            rules,
            bindings,
            drbs,
            downlink,
            uplink,
            queue_capacity: f.queue_capacity,
        })
    }
}

/// Declared QFIs must agree with classification and with each other for a
/// given `{VLAN, PCP}` on the same ingress VTEP.
fn check_flow_consistency(s: &Scenario, d: &mut Diags) {
    let mut declared: BTreeMap<(usize, TsnTuple), (Qfi, &str)> = BTreeMap::new();
    for f in &s.flows {
        let plan = s.flow_plan(f);
        let p = format!("flows[{}]", f.name);
        if plan.qfi.is_none() {
            d.push(
                format!("{p}.pcp"),
                format!(
                    "DSCP {} (from PCP {}) matches no packet detection rule",
                    plan.dscp, f.tuple.pcp
                ),
            );
        }
        if let Some(q) = f.expected_qfi {
            let key = (s.ingress_vtep_of(f.src), f.tuple);
            match declared.get(&key) {
                Some(&(other, name)) if other != q => d.push(
                    format!("{p}.qfi"),
                    format!(
                        "conflict: {} is declared QFI {q} here but QFI {other} in flow {name}",
                        f.tuple
                    ),
                ),
                _ => {
                    declared.insert(key, (q, &f.name));
                }
            }
            if let Some(actual) = plan.qfi {
                if actual != q {
                    d.push(
                        format!("{p}.qfi"),
                        format!(
                            "declared QFI {q} but DSCP {} classifies to QFI {actual}",
                            plan.dscp
                        ),
                    );
                }
            }
        }
    }
}
