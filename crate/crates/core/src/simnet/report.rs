//! Post-run analysis and output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::fiveg::pdb_evaluate;
use crate::simnet::capture::{CapturePoint, Tap};
use crate::simnet::scenario::FlowPlan;
use crate::simnet::sim::{FlowReport, SimulationReport, VtepReport};
use crate::simnet::stats::{ccdf, DelayStats};
use crate::simnet::traffic::{frame_id_from_bytes, FrameId};
use crate::Nanos;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("no capture point with tap {0:?}")]
    MissingCapture(Tap),
}

/// Delays between two capture points, matched by frame identifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDelays {
    pub from: String,
    pub to: String,
    /// Microseconds, in the order frames appear at `from`.
    #[serde(skip)]
    pub samples_us: Vec<f64>,
    /// Frames seen at `from` but never at `to`.
    pub lost: usize,
    pub stats: Option<DelayStats>,
}

/// Pairs each identified frame at `from` with its next unused occurrence
/// at `to`.
pub fn pair_delays(from: &CapturePoint, to: &CapturePoint) -> PairedDelays {
    let mut later: BTreeMap<FrameId, Vec<Nanos>> = BTreeMap::new();
    for e in &to.events {
        if let Some(id) = frame_id_from_bytes(to.link_type, &e.data) {
            later.entry(id).or_default().push(e.timestamp_ns);
        }
    }
    let mut used: BTreeMap<FrameId, usize> = BTreeMap::new();
    let mut samples_us = Vec::new();
    let mut lost = 0;
    for e in &from.events {
        let Some(id) = frame_id_from_bytes(from.link_type, &e.data) else {
            continue;
        };
        let next = used.entry(id).or_insert(0);
        let hit = later.get(&id).and_then(|ts| {
            let i = ts[*next..].iter().position(|&t| t >= e.timestamp_ns)? + *next;
            Some((i, ts[i]))
        });
        match hit {
            Some((i, t)) => {
                *next = i + 1;
                samples_us.push((t - e.timestamp_ns) as f64 / 1e3);
            }
            None => lost += 1,
        }
    }
    PairedDelays {
        from: from.label.clone(),
        to: to.label.clone(),
        stats: DelayStats::from_samples(&samples_us).ok(),
        samples_us,
        lost,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskDelays {
    /// Tuple -> tunnel redirection (LAN in -> redirect).
    pub task1: PairedDelays,
    /// Encapsulation and DSCP marking (redirect -> encap).
    pub task2: PairedDelays,
    /// Decapsulation and redirection (tunnel rx -> decap).
    pub task3: PairedDelays,
}

fn first_capture(report: &SimulationReport, tap: Tap) -> Result<&CapturePoint, AnalysisError> {
    report
        .captures
        .iter()
        .find(|c| c.tap == tap)
        .ok_or(AnalysisError::MissingCapture(tap))
}

/// Per-task VTEP delays from the first capture point of each tap kind.
pub fn measure_task_delays(report: &SimulationReport) -> Result<TaskDelays, AnalysisError> {
    let a = first_capture(report, Tap::VtepLanIn)?;
    let b = first_capture(report, Tap::VtepRedirect)?;
    let c = first_capture(report, Tap::VtepEncap)?;
    let f = first_capture(report, Tap::VtepRx)?;
    let g = first_capture(report, Tap::VtepDecap)?;
    Ok(TaskDelays {
        task1: pair_delays(a, b),
        task2: pair_delays(b, c),
        task3: pair_delays(f, g),
    })
}

/// Delivery-set check for one flow with an expected sink set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveryCheck {
    pub flow: String,
    pub expected: Vec<String>,
    pub frames: u64,
    /// Frames that reached a host outside the expected set.
    pub misdelivered: u64,
    /// Frames that missed at least one expected host.
    pub missing: u64,
    /// Frames delivered more than once to the same host.
    pub duplicates: u64,
}

impl DeliveryCheck {
    pub fn passed(&self) -> bool {
        self.misdelivered == 0 && self.missing == 0 && self.duplicates == 0
    }
}

pub fn check_delivery(report: &SimulationReport, flow: &FlowReport) -> Option<DeliveryCheck> {
    let expected = flow.expect.as_ref()?;
    let expected_idx: Vec<usize> = expected
        .iter()
        .filter_map(|n| report.hosts.iter().position(|h| h == n))
        .collect();
    let mut per_seq: BTreeMap<u32, BTreeMap<usize, u32>> = BTreeMap::new();
    for d in &flow.deliveries {
        *per_seq.entry(d.seq).or_default().entry(d.sink).or_insert(0) += 1;
    }
    let mut check = DeliveryCheck {
        flow: flow.name.clone(),
        expected: expected.clone(),
        frames: flow.generated,
        misdelivered: 0,
        missing: 0,
        duplicates: 0,
    };
    let empty = BTreeMap::new();
    for seq in 0..flow.generated {
        let got = per_seq.get(&(seq as u32)).unwrap_or(&empty);
        if got.keys().any(|h| !expected_idx.contains(h)) {
            check.misdelivered += 1;
        }
        if expected_idx.iter().any(|h| !got.contains_key(h)) {
            check.missing += 1;
        }
        if got.values().any(|&n| n > 1) {
            check.duplicates += 1;
        }
    }
    Some(check)
}

/// Delivery checks for every flow that declares its expected sinks. For
/// a multicast flow this verifies the fan-out reaches every listed host.
pub fn multicast_fanout(report: &SimulationReport) -> Vec<DeliveryCheck> {
    report
        .flows
        .iter()
        .filter_map(|f| check_delivery(report, f))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The scenario-independent checks every run must satisfy, plus the
/// delivery sets declared by flows.
pub fn assertions(report: &SimulationReport) -> Vec<Assertion> {
    let mut out = Vec::new();
    let mut add = |name: String, passed: bool, detail: String| {
        out.push(Assertion {
            name,
            passed,
            detail,
        })
    };
    for c in multicast_fanout(report) {
        add(
            format!("delivery.{}", c.flow),
            c.passed(),
            format!(
                "{} frames to [{}]: {} misdelivered, {} missing, {} duplicated",
                c.frames,
                c.expected.join(", "),
                c.misdelivered,
                c.missing,
                c.duplicates
            ),
        );
    }
    for f in &report.flows {
        let wrong = f
            .deliveries
            .iter()
            .filter(|d| d.stamps.qfi.is_some() && d.stamps.qfi != f.plan.qfi)
            .count();
        add(
            format!("classification.{}", f.name),
            wrong == 0,
            format!("{wrong} deliveries on a QFI other than {}", opt(f.plan.qfi)),
        );
    }
    add(
        "payload_integrity".into(),
        report.integrity_mismatches == 0,
        format!(
            "{} delivered frames differ from the generated bytes",
            report.integrity_mismatches
        ),
    );
    let bad_overhead = report
        .flows
        .iter()
        .flat_map(|f| &f.deliveries)
        .filter(|d| match (d.stamps.outer_len, d.stamps.inner_len) {
            (Some(o), Some(i)) => o != i + crate::frames::VXLAN_OVERHEAD,
            _ => false,
        })
        .count() as u64
        + report.overhead_violations;
    add(
        "vxlan_overhead".into(),
        bad_overhead == 0,
        format!("{bad_overhead} packets not exactly 36 bytes over their inner frame"),
    );
    let own: u64 = report.vteps.iter().map(|v| v.own_copies).sum();
    add(
        "no_own_copies".into(),
        own == 0,
        format!("{own} packets returned to their ingress VTEP"),
    );
    out
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn rounded(s: DelayStats) -> DelayStats {
    DelayStats {
        count: s.count,
        mean: round4(s.mean),
        std_dev: round4(s.std_dev),
        p2_5: round4(s.p2_5),
        p97_5: round4(s.p97_5),
        min: round4(s.min),
        max: round4(s.max),
    }
}

/// Ingress VTEP to egress VTEP decapsulation delay per delivery, in µs.
pub fn vtep_to_vtep_us(flow: &FlowReport) -> Vec<f64> {
    flow.deliveries
        .iter()
        .filter_map(|d| d.vtep_to_vtep_ns())
        .map(|ns| ns as f64 / 1e3)
        .collect()
}

/// 5G segment delay (classification to egress VTEP) per delivery, ns.
pub fn fiveg_delays_ns(flow: &FlowReport) -> Vec<Nanos> {
    flow.deliveries
        .iter()
        .filter_map(|d| d.fiveg_ns())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSummary {
    pub name: String,
    pub plan: FlowPlan,
    pub src: String,
    pub generated: u64,
    pub delivered: u64,
    pub ingress_unicast: u64,
    pub ingress_multicast: u64,
    /// Ingress VTEP LAN port to egress VTEP decapsulation, µs.
    pub vtep_to_vtep_us: Option<DelayStats>,
    /// 5G segment delay, µs.
    pub fiveg_us: Option<DelayStats>,
    /// Fraction of 5G segment delays within the packet delay budget.
    pub pdb_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub duration_ns: Nanos,
    pub events_processed: u64,
    pub flows: Vec<FlowSummary>,
    pub task_delays: Option<TaskDelays>,
    pub vteps: Vec<VtepReport>,
    pub radio: Vec<crate::simnet::sim::RadioReport>,
    pub drops: BTreeMap<String, u64>,
    pub delivery_checks: Vec<DeliveryCheck>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

impl Summary {
    pub fn from_report(report: &SimulationReport) -> Self {
        let flows = report
            .flows
            .iter()
            .map(|f| {
                let fiveg = fiveg_delays_ns(f);
                let fiveg_us: Vec<f64> = fiveg.iter().map(|&ns| ns as f64 / 1e3).collect();
                FlowSummary {
                    name: f.name.clone(),
                    plan: f.plan.clone(),
                    src: f.src.clone(),
                    generated: f.generated,
                    delivered: f.deliveries.len() as u64,
                    ingress_unicast: f.ingress_unicast,
                    ingress_multicast: f.ingress_multicast,
                    vtep_to_vtep_us: DelayStats::from_samples(&vtep_to_vtep_us(f))
                        .ok()
                        .map(rounded),
                    fiveg_us: DelayStats::from_samples(&fiveg_us).ok().map(rounded),
                    pdb_fraction: f
                        .plan
                        .descriptor
                        .filter(|_| !fiveg.is_empty())
                        .map(|d| round4(pdb_evaluate(&d, &fiveg).within_budget_fraction)),
                }
            })
            .collect();
        let task_delays = measure_task_delays(report).ok().map(|mut t| {
            for p in [&mut t.task1, &mut t.task2, &mut t.task3] {
                p.stats = p.stats.map(rounded);
            }
            t
        });
        let assertions = assertions(report);
        Summary {
            scenario: report.scenario.clone(),
            seed: report.seed,
            duration_ns: report.duration_ns,
            events_processed: report.events_processed,
            flows,
            task_delays,
            vteps: report.vteps.clone(),
            radio: report.radio.clone(),
            drops: report.drops.clone(),
            delivery_checks: multicast_fanout(report),
            passed: assertions.iter().all(|a| a.passed),
            assertions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}  seed {}", self.scenario, self.seed);
        let _ = writeln!(
            s,
            "simulated {:.4} s, {} events",
            self.duration_ns as f64 / 1e9,
            self.events_processed
        );
        s.push('\n');
        let plans: Vec<FlowPlan> = self.flows.iter().map(|f| f.plan.clone()).collect();
        s.push_str(&format_flow_table(&plans));
        s.push('\n');

        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>9} {:>7} {:>7} {:>12} {:>12} {:>12} {:>12} {:>8}",
            "flow",
            "sent",
            "delivered",
            "mcast",
            "ucast",
            "mean_us",
            "std_us",
            "p2.5_us",
            "p97.5_us",
            "in_pdb"
        );
        for f in &self.flows {
            let st = f.vtep_to_vtep_us;
            let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>9} {:>7} {:>7} {:>12} {:>12} {:>12} {:>12} {:>8}",
                f.name,
                f.generated,
                f.delivered,
                f.ingress_multicast,
                f.ingress_unicast,
                cell(st.map(|x| x.mean)),
                cell(st.map(|x| x.std_dev)),
                cell(st.map(|x| x.p2_5)),
                cell(st.map(|x| x.p97_5)),
                cell(f.pdb_fraction),
            );
        }
        s.push_str(
            "(delays: ingress VTEP LAN port to egress VTEP decapsulation; in_pdb: 5G segment)\n",
        );

        if let Some(t) = &self.task_delays {
            s.push('\n');
            for (name, p) in [
                ("task1", &t.task1),
                ("task2", &t.task2),
                ("task3", &t.task3),
            ] {
                match p.stats {
                    Some(st) => {
                        let _ = writeln!(
                            s,
                            "{name} {}->{}: mean {:.4} us, 95% [{:.4}, {:.4}] us, n {}, lost {}",
                            p.from, p.to, st.mean, st.p2_5, st.p97_5, st.count, p.lost
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "{name} {}->{}: no samples, lost {}",
                            p.from, p.to, p.lost
                        );
                    }
                }
            }
        }

        for v in &self.vteps {
            s.push('\n');
            let _ = writeln!(
                s,
                "vtep {} ({}): ingress unicast {}, multicast {}, decapsulated {}",
                v.name, v.ip, v.ingress_unicast, v.ingress_multicast, v.decapsulated
            );
            s.push_str(&format_forwarding_rows(v));
        }

        s.push('\n');
        for r in &self.radio {
            let _ = writeln!(
                s,
                "{:?}: {} transmissions, {} unclassified",
                r.direction, r.transmissions, r.unclassified
            );
            for f in &r.flows {
                let _ = writeln!(
                    s,
                    "  QFI {} (5QI {}, priority {}, PDB {} ms): enqueued {}, dequeued {}, dropped {}, queued {}",
                    f.qfi, f.five_qi, f.priority, f.pdb_ms, f.enqueued, f.dequeued, f.dropped, f.queued
                );
            }
        }
        if !self.drops.is_empty() {
            s.push_str("drops:\n");
            for (k, v) in &self.drops {
                let _ = writeln!(s, "  {k}: {v}");
            }
        }

        s.push('\n');
        for a in &self.assertions {
            let _ = writeln!(
                s,
                "[{}] {}: {}",
                if a.passed { "PASS" } else { "FAIL" },
                a.name,
                a.detail
            );
        }
        let _ = writeln!(s, "result: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

/// Tuple -> VNI -> group -> DSCP -> QFI -> 5QI -> PDB, one row per flow.
pub fn format_flow_table(plans: &[FlowPlan]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>5} {:>4} {:>6} {:<15} {:>5} {:>4} {:>4} {:>5} {:>7}",
        "flow", "VLAN", "PCP", "VNI", "group", "DSCP", "QFI", "5QI", "prio", "PDB_ms"
    );
    for p in plans {
        let d = p.descriptor;
        let _ = writeln!(
            s,
            "{:<12} {:>5} {:>4} {:>6} {:<15} {:>5} {:>4} {:>4} {:>5} {:>7}",
            p.flow,
            p.tuple.vlan_id,
            p.tuple.pcp.value(),
            p.vni.value(),
            opt(p.group),
            p.dscp.value(),
            opt(p.qfi),
            opt(d.map(|d| d.five_qi)),
            opt(d.map(|d| d.default_priority_level)),
            opt(d.map(|d| d.packet_delay_budget_ms)),
        );
    }
    s
}

fn format_forwarding_rows(v: &VtepReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "  {:>6}  {:<17}  {:<15}  learned",
        "VNI", "MAC", "remote"
    );
    for r in &v.forwarding_table {
        let _ = writeln!(
            s,
            "  {:>6}  {:<17}  {:<15}  {}",
            r.vni.value(),
            r.mac.to_string(),
            r.remote.to_string(),
            if r.learned { "yes" } else { "no" }
        );
    }
    s
}

/// One row per delivery.
pub fn flow_csv(flow: &FlowReport, hosts: &[String]) -> String {
    let mut s = String::from(
        "seq,sink,qfi,generated_ns,vtep_in_ns,enqueue_ns,radio_rx_ns,decap_ns,delivery_ns\n",
    );
    for d in &flow.deliveries {
        let st = &d.stamps;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            d.seq,
            hosts[d.sink],
            st.qfi.map(|q| q.to_string()).unwrap_or_default(),
            st.generated_ns,
            st.vtep_in_ns.map(|v| v.to_string()).unwrap_or_default(),
            st.enqueue_ns.map(|v| v.to_string()).unwrap_or_default(),
            st.radio_rx_ns.map(|v| v.to_string()).unwrap_or_default(),
            st.decap_ns.map(|v| v.to_string()).unwrap_or_default(),
            d.delivery_ns,
        );
    }
    s
}

/// CCDF of the VTEP-to-VTEP delay, tab separated.
pub fn flow_ccdf(flow: &FlowReport) -> String {
    let mut s = format!(
        "# {}: P[delay > d], ingress VTEP to egress VTEP decapsulation\n# delay_us\tccdf\n",
        flow.name
    );
    if let Ok(points) = ccdf(&vtep_to_vtep_us(flow)) {
        for (d, p) in points {
            let _ = writeln!(s, "{d:.4}\t{p:.6}");
        }
    }
    s
}

/// Writes summary.txt, summary.json, `<flow>.csv`, `ccdf_<flow>.txt` and
/// `capture_<label>.pcap` into `dir` (created if absent).
pub fn write_outputs(report: &SimulationReport, dir: &Path) -> io::Result<(Summary, Vec<PathBuf>)> {
    fs::create_dir_all(dir)?;
    let summary = Summary::from_report(report);
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> io::Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("summary.txt".into(), summary.to_text().as_bytes())?;
    put("summary.json".into(), summary.to_json().as_bytes())?;
    for f in &report.flows {
        put(
            format!("{}.csv", f.name),
            flow_csv(f, &report.hosts).as_bytes(),
        )?;
        put(format!("ccdf_{}.txt", f.name), flow_ccdf(f).as_bytes())?;
    }
    for c in &report.captures {
        let mut buf = Vec::new();
        c.write_pcap(&mut buf)?;
        put(format!("capture_{}.pcap", c.label), &buf)?;
    }
    Ok((summary, written))
}
