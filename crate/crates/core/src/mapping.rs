//! Translation tables between the TSN and 5G domains:
//! `{VLAN ID, PCP}` <-> VNI, PCP <-> DSCP, DSCP -> QFI (packet detection
//! rules) and QFI -> 5QI descriptor.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{CodecError, Dscp, Pcp, VlanTag, MAX_VLAN_ID};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error(transparent)]
    Field(#[from] CodecError),
    #[error("VNI {0} does not encode a {{VLAN ID, PCP}} tuple")]
    UnmappedVni(u32),
    #[error("VNI {0} exceeds 24 bits")]
    VniOutOfRange(u32),
    #[error("QFI {0} out of range 1..=63")]
    QfiOutOfRange(u8),
    #[error("DSCP {0} has no PCP entry in the DSCP table")]
    UnmappedDscp(Dscp),
    #[error("DSCP {dscp} is assigned to both PCP {first} and PCP {second}")]
    AmbiguousDscpTable { dscp: Dscp, first: Pcp, second: Pcp },
    #[error("no packet detection rule matches DSCP {0}")]
    Unclassified(Dscp),
    #[error("more than one packet detection rule matches DSCP {0}")]
    DuplicateRule(Dscp),
    #[error("more than one match-any packet detection rule")]
    MultipleDefaultRules,
    #[error("match-any rule (precedence {0}) must have the highest precedence value")]
    DefaultRuleShadows(u32),
    #[error("QFI {0} is not bound to a 5QI")]
    UnboundQfi(Qfi),
    #[error("QFI {0} is bound more than once")]
    DuplicateBinding(Qfi),
    #[error("unknown standardized 5QI {0}")]
    UnknownFiveQi(u16),
    #[error("5QI {0} descriptor needs a positive priority level and delay budget")]
    InvalidDescriptor(u16),
}

/// The `{VLAN ID, PCP}` pair that selects a VxLAN tunnel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TsnTuple {
    pub vlan_id: u16,
    pub pcp: Pcp,
}

impl TsnTuple {
    /// 4096 VLAN IDs times 8 PCPs.
    pub const COUNT: usize = 4096 * 8;

    pub fn new(vlan_id: u16, pcp: u8) -> Result<Self, MappingError> {
        if vlan_id > MAX_VLAN_ID {
            return Err(CodecError::OutOfRange {
                field: "vlan_id",
                value: vlan_id.into(),
                max: MAX_VLAN_ID.into(),
            }
            .into());
        }
        Ok(TsnTuple {
            vlan_id,
            pcp: Pcp::new(pcp)?,
        })
    }

    pub fn all() -> impl Iterator<Item = TsnTuple> {
        (0..=MAX_VLAN_ID).flat_map(|vlan_id| Pcp::all().map(move |pcp| TsnTuple { vlan_id, pcp }))
    }

    pub fn tag(&self) -> VlanTag {
        VlanTag {
            pcp: self.pcp,
            dei: false,
            vlan_id: self.vlan_id,
        }
    }
}

impl From<VlanTag> for TsnTuple {
    fn from(tag: VlanTag) -> Self {
        TsnTuple {
            vlan_id: tag.vlan_id,
            pcp: tag.pcp,
        }
    }
}

impl fmt::Display for TsnTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{VLAN {}, PCP {}}}", self.vlan_id, self.pcp)
    }
}

/// 24-bit VxLAN network identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Vni(u32);

impl Vni {
    pub const MAX: u32 = (1 << 24) - 1;

    pub fn new(value: u32) -> Result<Self, MappingError> {
        if value > Self::MAX {
            Err(MappingError::VniOutOfRange(value))
        } else {
            Ok(Vni(value))
        }
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for Vni {
    type Error = MappingError;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        Vni::new(v)
    }
}

impl From<Vni> for u32 {
    fn from(v: Vni) -> u32 {
        v.0
    }
}

impl fmt::Display for Vni {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// VLAN ID digits followed by the PCP digit, i.e. `10 * vlan + pcp`.
pub fn vni_from_tuple(t: TsnTuple) -> Vni {
    Vni(10 * u32::from(t.vlan_id) + u32::from(t.pcp.value()))
}

pub fn tuple_from_vni(v: Vni) -> Result<TsnTuple, MappingError> {
    let pcp = v.0 % 10;
    let vlan = v.0 / 10;
    if pcp > u32::from(Pcp::MAX) || vlan > u32::from(MAX_VLAN_ID) {
        return Err(MappingError::UnmappedVni(v.0));
    }
    Ok(TsnTuple {
        vlan_id: vlan as u16,
        pcp: Pcp::new(pcp as u8)?,
    })
}

/// PCP -> DSCP marking table.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DscpTable {
    /// DSCP = 8 * PCP (class selector code points).
    #[default]
    ClassSelector,
    /// Explicit per-PCP values, index = PCP. Values must be distinct.
    Custom([Dscp; 8]),
}

impl DscpTable {
    pub fn custom(values: [Dscp; 8]) -> Result<Self, MappingError> {
        let mut seen: BTreeMap<Dscp, Pcp> = BTreeMap::new();
        for (pcp, d) in Pcp::all().zip(values) {
            if let Some(&first) = seen.get(&d) {
                return Err(MappingError::AmbiguousDscpTable {
                    dscp: d,
                    first,
                    second: pcp,
                });
            }
            seen.insert(d, pcp);
        }
        Ok(DscpTable::Custom(values))
    }

    pub fn dscp_from_pcp(&self, pcp: Pcp) -> Dscp {
        match self {
            DscpTable::ClassSelector => Dscp::new(pcp.value() * 8).expect("8*7 < 64"),
            DscpTable::Custom(values) => values[usize::from(pcp.value())],
        }
    }

    pub fn pcp_from_dscp(&self, dscp: Dscp) -> Result<Pcp, MappingError> {
        match self {
            DscpTable::ClassSelector => Ok(Pcp::new(dscp.value() / 8)?),
            DscpTable::Custom(values) => Pcp::all()
                .zip(values)
                .find(|(_, d)| **d == dscp)
                .map(|(p, _)| p)
                .ok_or(MappingError::UnmappedDscp(dscp)),
        }
    }
}

/// 5G QoS flow identifier (6 bits, 0 reserved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Qfi(u8);

impl Qfi {
    pub fn new(value: u8) -> Result<Self, MappingError> {
        if (1..=63).contains(&value) {
            Ok(Qfi(value))
        } else {
            Err(MappingError::QfiOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Qfi {
    type Error = MappingError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Qfi::new(v)
    }
}

impl From<Qfi> for u8 {
    fn from(q: Qfi) -> u8 {
        q.0
    }
}

impl fmt::Display for Qfi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Packet filter matching the outer DSCP. `match_dscp: None` matches any
/// packet and must be evaluated last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdrRule {
    pub match_dscp: Option<Dscp>,
    pub qfi: Qfi,
    /// Lower values are evaluated first.
    pub precedence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PdrRuleSet {
    rules: Vec<PdrRule>,
}

impl PdrRuleSet {
    pub fn new(mut rules: Vec<PdrRule>) -> Result<Self, MappingError> {
        rules.sort_by_key(|r| (r.precedence, r.match_dscp.is_none()));
        let mut seen = BTreeSet::new();
        let mut default: Option<u32> = None;
        for r in &rules {
            match r.match_dscp {
                Some(d) => {
                    if !seen.insert(d) {
                        return Err(MappingError::DuplicateRule(d));
                    }
                    if let Some(p) = default {
                        return Err(MappingError::DefaultRuleShadows(p));
                    }
                }
                None => {
                    if default.is_some() {
                        return Err(MappingError::MultipleDefaultRules);
                    }
                    default = Some(r.precedence);
                }
            }
        }
        Ok(PdrRuleSet { rules })
    }

    /// One rule per listed PCP, matching `table`'s DSCP for that PCP.
    /// Several PCPs may share a QFI (many-to-one aggregation).
    pub fn from_pcp_assignment(
        table: &DscpTable,
        assignment: &[(Pcp, Qfi)],
    ) -> Result<Self, MappingError> {
        let rules = assignment
            .iter()
            .enumerate()
            .map(|(i, &(pcp, qfi))| PdrRule {
                match_dscp: Some(table.dscp_from_pcp(pcp)),
                qfi,
                precedence: 10 * (i as u32 + 1),
            })
            .collect();
        Self::new(rules)
    }

    pub fn rules(&self) -> &[PdrRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn qfis(&self) -> BTreeSet<Qfi> {
        self.rules.iter().map(|r| r.qfi).collect()
    }

    /// True when every matched DSCP lands on its own QFI.
    pub fn is_one_to_one(&self) -> bool {
        let exact: Vec<_> = self
            .rules
            .iter()
            .filter(|r| r.match_dscp.is_some())
            .collect();
        let distinct: BTreeSet<_> = exact.iter().map(|r| r.qfi).collect();
        distinct.len() == exact.len()
    }

    pub fn classify(&self, dscp: Dscp) -> Result<Qfi, MappingError> {
        self.rules
            .iter()
            .find(|r| r.match_dscp.is_none_or(|d| d == dscp))
            .map(|r| r.qfi)
            .ok_or(MappingError::Unclassified(dscp))
    }
}

impl<'de> Deserialize<'de> for PdrRuleSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rules = Vec::<PdrRule>::deserialize(d)?;
        PdrRuleSet::new(rules).map_err(serde::de::Error::custom)
    }
}

pub fn classify_qfi(dscp: Dscp, rules: &PdrRuleSet) -> Result<Qfi, MappingError> {
    rules.classify(dscp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveQiDescriptor {
    pub five_qi: u16,
    /// Lower value = higher priority.
    pub default_priority_level: u16,
    pub packet_delay_budget_ms: f64,
}

impl FiveQiDescriptor {
    pub fn new(
        five_qi: u16,
        default_priority_level: u16,
        packet_delay_budget_ms: f64,
    ) -> Result<Self, MappingError> {
        if default_priority_level == 0
            || packet_delay_budget_ms.is_nan()
            || packet_delay_budget_ms <= 0.0
        {
            return Err(MappingError::InvalidDescriptor(five_qi));
        }
        Ok(FiveQiDescriptor {
            five_qi,
            default_priority_level,
            packet_delay_budget_ms,
        })
    }

    pub fn packet_delay_budget_ns(&self) -> u64 {
        (self.packet_delay_budget_ms * 1e6).round() as u64
    }
}

/// Standardized 5QIs referenced by the industrial traffic-type table:
/// (5QI, default priority level, packet delay budget in ms).
const STANDARD_5QI: &[(u16, u16, f64)] = &[
    (3, 30, 50.0),
    (7, 70, 100.0),
    (9, 90, 300.0),
    (65, 7, 75.0),
    (67, 15, 100.0),
    (69, 5, 60.0),
    (71, 56, 150.0),
    (80, 68, 10.0),
    (82, 19, 10.0),
    (86, 18, 5.0),
    (87, 25, 5.0),
    (88, 25, 10.0),
    (89, 25, 15.0),
    (90, 25, 20.0),
];

pub fn standard_five_qi(five_qi: u16) -> Result<FiveQiDescriptor, MappingError> {
    STANDARD_5QI
        .iter()
        .find(|(q, _, _)| *q == five_qi)
        .map(|&(five_qi, prio, pdb)| FiveQiDescriptor {
            five_qi,
            default_priority_level: prio,
            packet_delay_budget_ms: pdb,
        })
        .ok_or(MappingError::UnknownFiveQi(five_qi))
}

pub fn standard_five_qis() -> impl Iterator<Item = FiveQiDescriptor> {
    STANDARD_5QI
        .iter()
        .map(|&(five_qi, prio, pdb)| FiveQiDescriptor {
            five_qi,
            default_priority_level: prio,
            packet_delay_budget_ms: pdb,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosFlowBinding {
    pub qfi: Qfi,
    pub descriptor: FiveQiDescriptor,
}

/// QFI -> 5QI bindings of one PDU session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QosBindings {
    by_qfi: BTreeMap<Qfi, FiveQiDescriptor>,
}

impl QosBindings {
    pub fn new(bindings: impl IntoIterator<Item = QosFlowBinding>) -> Result<Self, MappingError> {
        let mut by_qfi = BTreeMap::new();
        for b in bindings {
            if by_qfi.insert(b.qfi, b.descriptor).is_some() {
                return Err(MappingError::DuplicateBinding(b.qfi));
            }
        }
        Ok(QosBindings { by_qfi })
    }

    pub fn lookup(&self, qfi: Qfi) -> Result<FiveQiDescriptor, MappingError> {
        self.by_qfi
            .get(&qfi)
            .copied()
            .ok_or(MappingError::UnboundQfi(qfi))
    }

    pub fn iter(&self) -> impl Iterator<Item = QosFlowBinding> + '_ {
        self.by_qfi
            .iter()
            .map(|(&qfi, &descriptor)| QosFlowBinding { qfi, descriptor })
    }

    pub fn len(&self) -> usize {
        self.by_qfi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_qfi.is_empty()
    }
}

pub fn lookup_5qi(qfi: Qfi, bindings: &QosBindings) -> Result<FiveQiDescriptor, MappingError> {
    bindings.lookup(qfi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityClass {
    Low,
    Medium,
    High,
}

pub fn priority_class_of_pcp(pcp: Pcp) -> PriorityClass {
    match pcp.value() {
        4..=7 => PriorityClass::High,
        2 | 3 => PriorityClass::Medium,
        _ => PriorityClass::Low,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcp(v: u8) -> Pcp {
        Pcp::new(v).unwrap()
    }
    fn dscp(v: u8) -> Dscp {
        Dscp::new(v).unwrap()
    }
    fn qfi(v: u8) -> Qfi {
        Qfi::new(v).unwrap()
    }

    #[test]
    fn vni_examples() {
        let cases = [
            ((100, 5), 1005),
            ((200, 2), 2002),
            ((100, 7), 1007),
            ((0, 0), 0),
        ];
        for ((vlan, p), vni) in cases {
            let t = TsnTuple::new(vlan, p).unwrap();
            assert_eq!(vni_from_tuple(t).value(), vni);
            assert_eq!(tuple_from_vni(Vni::new(vni).unwrap()).unwrap(), t);
        }
        assert_eq!(
            tuple_from_vni(Vni::new(40957).unwrap()).unwrap(),
            TsnTuple::new(4095, 7).unwrap()
        );
    }

    #[test]
    fn unmapped_vnis() {
        assert_eq!(
            tuple_from_vni(Vni::new(1008).unwrap()),
            Err(MappingError::UnmappedVni(1008))
        );
        assert_eq!(
            tuple_from_vni(Vni::new(40960).unwrap()),
            Err(MappingError::UnmappedVni(40960))
        );
        assert!(Vni::new(1 << 24).is_err());
    }

    #[test]
    fn dscp_default_table() {
        let t = DscpTable::default();
        assert_eq!(t.dscp_from_pcp(pcp(5)), dscp(40));
        assert_eq!(t.dscp_from_pcp(pcp(0)), dscp(0));
        assert_eq!(t.dscp_from_pcp(pcp(7)), dscp(56));
        assert_eq!(t.pcp_from_dscp(dscp(40)).unwrap(), pcp(5));
        assert_eq!(t.pcp_from_dscp(dscp(0)).unwrap(), pcp(0));
        assert_eq!(t.pcp_from_dscp(dscp(63)).unwrap(), pcp(7));
    }

    #[test]
    fn dscp_custom_table() {
        let values = [0, 10, 18, 26, 34, 46, 48, 56].map(dscp);
        let t = DscpTable::custom(values).unwrap();
        assert_eq!(t.dscp_from_pcp(pcp(5)), dscp(46));
        assert_eq!(t.pcp_from_dscp(dscp(46)).unwrap(), pcp(5));
        assert_eq!(
            t.pcp_from_dscp(dscp(40)),
            Err(MappingError::UnmappedDscp(dscp(40)))
        );
        let dup = [0, 8, 8, 24, 32, 40, 48, 56].map(dscp);
        assert!(matches!(
            DscpTable::custom(dup),
            Err(MappingError::AmbiguousDscpTable { .. })
        ));
    }

    #[test]
    fn classify_examples() {
        let fig3 = PdrRuleSet::new(vec![PdrRule {
            match_dscp: Some(dscp(40)),
            qfi: qfi(1),
            precedence: 1,
        }])
        .unwrap();
        assert_eq!(classify_qfi(dscp(40), &fig3).unwrap(), qfi(1));

        let many = PdrRuleSet::new(vec![
            PdrRule {
                match_dscp: Some(dscp(40)),
                qfi: qfi(7),
                precedence: 1,
            },
            PdrRule {
                match_dscp: Some(dscp(16)),
                qfi: qfi(7),
                precedence: 2,
            },
        ])
        .unwrap();
        assert_eq!(many.classify(dscp(40)).unwrap(), qfi(7));
        assert_eq!(many.classify(dscp(16)).unwrap(), qfi(7));
        assert!(!many.is_one_to_one());

        let empty = PdrRuleSet::default();
        assert_eq!(
            empty.classify(dscp(12)),
            Err(MappingError::Unclassified(dscp(12)))
        );
    }

    #[test]
    fn default_rule_catches_rest() {
        let rules = PdrRuleSet::new(vec![
            PdrRule {
                match_dscp: None,
                qfi: qfi(9),
                precedence: 255,
            },
            PdrRule {
                match_dscp: Some(dscp(56)),
                qfi: qfi(4),
                precedence: 10,
            },
        ])
        .unwrap();
        assert_eq!(rules.classify(dscp(56)).unwrap(), qfi(4));
        assert_eq!(rules.classify(dscp(12)).unwrap(), qfi(9));
    }

    #[test]
    fn malformed_rule_sets() {
        let r = |d: Option<u8>, q, p| PdrRule {
            match_dscp: d.map(dscp),
            qfi: qfi(q),
            precedence: p,
        };
        assert_eq!(
            PdrRuleSet::new(vec![r(Some(40), 1, 1), r(Some(40), 2, 2)]),
            Err(MappingError::DuplicateRule(dscp(40)))
        );
        assert_eq!(
            PdrRuleSet::new(vec![r(None, 1, 1), r(None, 2, 2)]),
            Err(MappingError::MultipleDefaultRules)
        );
        assert_eq!(
            PdrRuleSet::new(vec![r(None, 1, 1), r(Some(8), 2, 2)]),
            Err(MappingError::DefaultRuleShadows(1))
        );
    }

    #[test]
    fn one_to_one_assignment_over_all_pcps() {
        let assignment: Vec<_> = Pcp::all().map(|p| (p, qfi(8 - p.value()))).collect();
        let rules = PdrRuleSet::from_pcp_assignment(&DscpTable::default(), &assignment).unwrap();
        assert!(rules.is_one_to_one());
        assert_eq!(rules.qfis().len(), 8);
        for p in Pcp::all() {
            let d = DscpTable::default().dscp_from_pcp(p);
            assert_eq!(rules.classify(d).unwrap(), qfi(8 - p.value()));
        }
    }

    #[test]
    fn five_qi_table_rows() {
        let d = standard_five_qi(86).unwrap();
        assert_eq!(d.default_priority_level, 18);
        assert_eq!(d.packet_delay_budget_ms, 5.0);
        let be = standard_five_qi(9).unwrap();
        assert_eq!(
            (be.default_priority_level, be.packet_delay_budget_ms),
            (90, 300.0)
        );
        assert_eq!(standard_five_qi(80).unwrap().default_priority_level, 68);
        assert!(standard_five_qi(6).is_err());
    }

    #[test]
    fn binding_lookup() {
        let b = QosBindings::new([QosFlowBinding {
            qfi: qfi(1),
            descriptor: standard_five_qi(86).unwrap(),
        }])
        .unwrap();
        assert_eq!(lookup_5qi(qfi(1), &b).unwrap().five_qi, 86);
        assert_eq!(
            lookup_5qi(qfi(63), &b),
            Err(MappingError::UnboundQfi(qfi(63)))
        );
        assert!(Qfi::new(99).is_err());
        assert!(Qfi::new(0).is_err());
    }

    #[test]
    fn priority_classes() {
        use PriorityClass::*;
        let expected = [Low, Low, Medium, Medium, High, High, High, High];
        for (p, class) in Pcp::all().zip(expected) {
            assert_eq!(priority_class_of_pcp(p), class);
        }
    }

    #[test]
    fn descriptor_validation() {
        assert!(FiveQiDescriptor::new(1, 0, 5.0).is_err());
        assert!(FiveQiDescriptor::new(1, 10, 0.0).is_err());
        assert_eq!(
            FiveQiDescriptor::new(1, 10, 2.5)
                .unwrap()
                .packet_delay_budget_ns(),
            2_500_000
        );
    }
}
