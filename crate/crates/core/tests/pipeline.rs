use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use proptest::prelude::*;
use rtcfp_core::synth::frame::udp_frame;
use rtcfp_core::{Analyzer, AnalyzerConfig, DropReason, Endpoint, Event, FlowKey, LinkType, RawPacket, Timestamp};

fn endpoint() -> impl Strategy<Value = Endpoint> {
    let v4 = (0u8..4, 1u16..4).prop_map(|(h, p)| Endpoint::new(Ipv4Addr::new(10, 0, 0, h).into(), p));
    let v6 = (0u16..3, 1u16..4).prop_map(|(h, p)| Endpoint::new(Ipv6Addr::new(0x2001, 0xdb8, 0, 0, 0, 0, 0, h).into(), p));
    prop_oneof![v4, v6]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Damage {
    None,
    NotIp,
    Tcp,
    Fragment,
    Cut(usize),
}

fn damage() -> impl Strategy<Value = Damage> {
    prop_oneof![
        6 => Just(Damage::None),
        1 => Just(Damage::NotIp),
        1 => Just(Damage::Tcp),
        1 => Just(Damage::Fragment),
        1 => (0usize..42).prop_map(Damage::Cut),
    ]
}

struct Case {
    packets: Vec<RawPacket>,
    keys: BTreeSet<(Endpoint, Endpoint)>,
    valid: u64,
    expected: [u64; 4],
}

fn build(items: &[(Endpoint, Endpoint, Damage, Vec<u8>)]) -> Case {
    let mut case = Case { packets: Vec::new(), keys: BTreeSet::new(), valid: 0, expected: [0; 4] };
    for (i, (src, dst, dmg, payload)) in items.iter().enumerate() {
        let dst = match (src.addr, dst.addr) {
            (IpAddr::V4(_), IpAddr::V6(_)) | (IpAddr::V6(_), IpAddr::V4(_)) => *src,
            _ => *dst,
        };
        let mut f = udp_frame(*src, dst, i as u16, payload).unwrap();
        let v4 = src.addr.is_ipv4();
        match dmg {
            Damage::None => {
                case.valid += 1;
                case.keys.insert((*src.min(&dst), *src.max(&dst)));
            }
            Damage::NotIp => {
                f[12..14].copy_from_slice(&0x0806u16.to_be_bytes());
                case.expected[0] += 1;
            }
            Damage::Tcp => {
                f[if v4 { 14 + 9 } else { 14 + 6 }] = 6;
                case.expected[1] += 1;
            }
            Damage::Fragment if v4 => {
                f[14 + 6] |= 0x20;
                case.expected[2] += 1;
            }
            Damage::Fragment => {
                f[14 + 6] = 44;
                case.expected[2] += 1;
            }
            Damage::Cut(n) => {
                f.truncate(*n);
                case.expected[3] += 1;
            }
        }
        case.packets.push(RawPacket {
            timestamp: Timestamp::from_parts(1_000 + i as u64, 0),
            link_type: LinkType::Ethernet,
            payload: f,
        });
    }
    case
}

fn items() -> impl Strategy<Value = Vec<(Endpoint, Endpoint, Damage, Vec<u8>)>> {
    proptest::collection::vec((endpoint(), endpoint(), damage(), proptest::collection::vec(any::<u8>(), 0..40)), 0..60)
}

fn run(packets: &[RawPacket], config: AnalyzerConfig) -> (Analyzer, Vec<Event>) {
    let mut a = Analyzer::new(config, Vec::new());
    let mut out = Vec::new();
    for p in packets {
        a.process(p, &mut out);
        let s = a.stats();
        assert_eq!(s.packets_read, s.packets_decapsulated + s.total_drops());
    }
    a.finish(&mut out);
    (a, out)
}

proptest! {
    #[test]
    fn key_is_direction_free(a in endpoint(), b in endpoint()) {
        prop_assert_eq!(FlowKey::new(a, b), FlowKey::new(b, a));
        prop_assert_eq!(FlowKey::new(a, b).low(), a.min(b));
    }

    #[test]
    fn conservation_and_flow_count(items in items()) {
        let case = build(&items);
        let (a, _) = run(&case.packets, AnalyzerConfig::default());
        let s = a.stats();
        prop_assert_eq!(s.packets_read, case.packets.len() as u64);
        prop_assert_eq!(s.packets_decapsulated, case.valid);
        let reasons = [DropReason::NonIp, DropReason::NonUdp, DropReason::IpFragment, DropReason::Truncated];
        for (reason, want) in reasons.into_iter().zip(case.expected) {
            prop_assert_eq!(s.drops_for(reason), want, "{}", reason);
        }
        prop_assert_eq!(s.flows, case.keys.len() as u64);
        prop_assert_eq!(s.payloads.iter().sum::<u64>(), case.valid);
    }

    #[test]
    fn output_is_deterministic(items in items()) {
        let case = build(&items);
        let config = AnalyzerConfig { emit_stun_flows: true, ..Default::default() };
        let (_, first) = run(&case.packets, config.clone());
        let (_, second) = run(&case.packets, config);
        prop_assert_eq!(first, second);
    }
}

#[test]
fn idle_flows_are_finalized_after_the_timeout_only() {
    let a = Endpoint::new(Ipv4Addr::new(10, 0, 0, 1).into(), 1);
    let b = Endpoint::new(Ipv4Addr::new(10, 0, 0, 2).into(), 2);
    let c = Endpoint::new(Ipv4Addr::new(10, 0, 0, 3).into(), 3);
    let at = |secs, micros, src, dst| RawPacket {
        timestamp: Timestamp::from_parts(secs, micros),
        link_type: LinkType::Ethernet,
        payload: udp_frame(src, dst, 0, &[0xff]).unwrap(),
    };
    let mut an = Analyzer::new(AnalyzerConfig::default(), Vec::new());
    let mut out = Vec::new();
    an.process(&at(0, 0, a, b), &mut out);
    an.process(&at(600, 0, a, c), &mut out);
    assert_eq!(an.flow_table().len(), 2);
    an.process(&at(600, 1, a, c), &mut out);
    assert_eq!(an.flow_table().len(), 1);
    an.process(&at(601, 0, a, b), &mut out);
    assert_eq!(an.stats().flows, 3);
}
