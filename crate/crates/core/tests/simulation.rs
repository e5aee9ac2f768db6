use vxtsn_core::simnet::capture::read_pcap;
use vxtsn_core::simnet::report::{assertions, write_outputs};
use vxtsn_core::simnet::scenario::bundled_source;
use vxtsn_core::simnet::{run, Scenario};
use vxtsn_core::NS_PER_MS;

fn edited(name: &str, edit: impl FnOnce(&mut toml::Table)) -> Scenario {
    let mut t: toml::Table = toml::from_str(bundled_source(name).unwrap()).unwrap();
    edit(&mut t);
    Scenario::from_toml_str(&toml::to_string(&t).unwrap()).unwrap()
}

fn short_testbed(ms: i64) -> Scenario {
    edited("paper_testbed", |t| {
        t.insert("duration_ms".into(), ms.into());
        t.insert("drain_ms".into(), 200.into());
    })
}

#[test]
fn empty_flow_list_delivers_nothing() {
    let s = edited("paper_testbed", |t| {
        t.insert("flows".into(), toml::Value::Array(vec![]));
    });
    let r = run(&s);
    assert!(r.flows.is_empty());
    assert!(r.captures.iter().all(|c| c.events.is_empty()));
    assert_eq!(r.total_drops(), 0);
    assert!(assertions(&r).iter().all(|a| a.passed));
}

#[test]
fn periodic_count_is_floor_plus_one() {
    let r = run(&short_testbed(1_000));
    // 1000 ms / 125 ms = 8, plus the frame at t = 0.
    assert_eq!(r.flow("hp").unwrap().generated, 9);
    // 5-message bursts every 25 ms.
    assert_eq!(r.flow("hmp").unwrap().generated, 5 * 41);
}

#[test]
fn broadcast_stays_in_its_vlan() {
    let s = edited("paper_testbed", |t| {
        t.insert("duration_ms".into(), 500.into());
        let hosts = t["hosts"].as_array_mut().unwrap();
        let mut other = hosts[1].as_table().unwrap().clone();
        other.insert("name".into(), "vlan200_only".into());
        other.insert("mac".into(), "02:00:00:00:01:02".into());
        other.insert("vlans".into(), toml::Value::Array(vec![200.into()]));
        hosts.push(other.into());
        let flows = t["flows"].as_array_mut().unwrap();
        let hp = flows[0].as_table_mut().unwrap();
        hp.insert("dst_mac".into(), "ff:ff:ff:ff:ff:ff".into());
    });
    let r = run(&s);
    let idx = r.hosts.iter().position(|h| h == "vlan200_only").unwrap();
    let hp = r.flow("hp").unwrap();
    assert!(!hp.deliveries.is_empty());
    assert!(r
        .flows
        .iter()
        .flat_map(|f| &f.deliveries)
        .all(|d| d.sink != idx));
    assert!(
        assertions(&r).iter().all(|a| a.passed),
        "{:?}",
        assertions(&r)
    );
}

#[test]
fn ue_to_ue_traffic_is_hairpinned_at_the_upf() {
    let s = edited("paper_testbed", |t| {
        t.insert("duration_ms".into(), 200.into());
        let flows = t["flows"].as_array_mut().unwrap();
        flows.truncate(1);
        let f = flows[0].as_table_mut().unwrap();
        f.insert("name".into(), "cross".into());
        f.insert("src".into(), "line1_dev".into());
        f.insert("dst_mac".into(), "02:00:00:00:02:01".into());
        f.insert(
            "expect".into(),
            toml::Value::Array(vec!["line2_dev".into()]),
        );
        let vteps = t["vteps"].as_array_mut().unwrap();
        let ue1 = vteps[1].as_table_mut().unwrap();
        let entry: toml::Table = toml::from_str(
            r#"vni = 1007
mac = "02:00:00:00:02:01"
remote = "192.168.1.2""#,
        )
        .unwrap();
        ue1.insert(
            "static_entries".into(),
            toml::Value::Array(vec![entry.into()]),
        );
    });
    let r = run(&s);
    let up = r
        .radio
        .iter()
        .find(|x| format!("{:?}", x.direction) == "Uplink")
        .unwrap();
    let down = r
        .radio
        .iter()
        .find(|x| format!("{:?}", x.direction) == "Downlink")
        .unwrap();
    let cross = r.flow("cross").unwrap();
    assert_eq!(cross.deliveries.len() as u64, cross.generated);
    assert_eq!(up.transmissions, cross.generated);
    assert_eq!(down.transmissions, cross.generated);
    assert!(assertions(&r).iter().all(|a| a.passed));
}

#[test]
fn pcaps_reparse_to_recorded_events() {
    let r = run(&short_testbed(300));
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&r, dir.path()).unwrap();
    for c in &r.captures {
        assert!(!c.events.is_empty(), "{} is empty", c.label);
        let bytes = std::fs::read(dir.path().join(format!("capture_{}.pcap", c.label))).unwrap();
        let file = read_pcap(&bytes[..]).unwrap();
        assert_eq!(file.link_type, c.link_type);
        assert_eq!(file.snaplen, c.snaplen);
        assert_eq!(file.records.len(), c.events.len());
        for (rec, ev) in file.records.iter().zip(&c.events) {
            assert_eq!(rec.timestamp_ns, ev.timestamp_ns);
            assert_eq!(rec.data, ev.data);
            assert_eq!(rec.orig_len, ev.orig_len);
        }
        assert!(c
            .events
            .windows(2)
            .all(|w| w[0].timestamp_ns <= w[1].timestamp_ns));
    }
}

#[test]
fn seed_only_matters_with_jitter() {
    let timeline = |s: &Scenario| {
        run(s)
            .flows
            .iter()
            .flat_map(|f| f.deliveries.iter().map(|d| d.delivery_ns))
            .collect::<Vec<_>>()
    };
    let mut a = short_testbed(300);
    let mut b = a.clone();
    b.seed = 99;
    assert_eq!(timeline(&a), timeline(&b));

    let jitter = vxtsn_core::fiveg::Jitter::Uniform {
        lo_ns: 0,
        hi_ns: NS_PER_MS,
    };
    a.fiveg.downlink.jitter = jitter;
    b.fiveg.downlink.jitter = jitter;
    let same_seed = a.clone();
    assert_eq!(timeline(&a), timeline(&same_seed));
    assert_ne!(timeline(&a), timeline(&b));
}

#[test]
fn aging_forgets_learned_entries() {
    let s = edited("backward_learning", |t| {
        t["timing"]
            .as_table_mut()
            .unwrap()
            .insert("aging_s".into(), 1.into());
        t.insert("duration_ms".into(), 3_000.into());
        let flows = t["flows"].as_array_mut().unwrap();
        let f = flows[2].as_table_mut().unwrap();
        // Two follow-ups: one right after learning, one after expiry.
        f.insert("count".into(), 2.into());
        f.insert("period_us".into(), 2_000_000.into());
    });
    let r = run(&s);
    let follow = r.flow("follow_up").unwrap();
    assert_eq!(follow.ingress_unicast, 1);
    assert_eq!(follow.ingress_multicast, 1);
}
