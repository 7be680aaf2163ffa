#![allow(dead_code)]

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use proptest::prelude::*;
use rtcfp_core::dtls::{ecdhe_suites, CertificateFeatures, ClientHelloFeatures, ServerHelloFeatures};
use rtcfp_core::fingerprint::FingerprintRecord;
use rtcfp_core::stun::{Class, Method, StunAttribute};
use rtcfp_core::synth::dtls::{encode_client_hello, FlightBuilder};
use rtcfp_core::synth::fixtures;
use rtcfp_core::synth::frame::udp_frame;
use rtcfp_core::{Analyzer, AnalyzerConfig, Endpoint, Event, LinkType, PayloadClass, RawPacket, Timestamp};

const SUPPORTED_GROUPS: u16 = 0x000a;
const SIGNATURE_ALGORITHMS: u16 = 0x000d;
const USE_SRTP: u16 = 0x000e;

pub fn version() -> impl Strategy<Value = u16> {
    prop_oneof![3 => Just(0xfeff), 3 => Just(0xfefd), 1 => any::<u16>()]
}

fn unique(max: usize, pool: impl Strategy<Value = u16>) -> impl Strategy<Value = Vec<u16>> {
    proptest::collection::vec(pool, 0..=max).prop_map(|v| {
        let mut seen = BTreeSet::new();
        v.into_iter().filter(|x| seen.insert(*x)).collect()
    })
}

/// Extensions whose bodies the encoder fills in from other fields are
/// decided by flags; everything else is an opaque code.
pub fn client_hello() -> impl Strategy<Value = ClientHelloFeatures> {
    let opaque = any::<u16>().prop_filter("flag-driven", |c| ![SUPPORTED_GROUPS, SIGNATURE_ALGORITHMS, USE_SRTP].contains(c));
    (
        version(),
        proptest::collection::vec(any::<u16>(), 1..120),
        proptest::collection::vec(any::<u8>(), 1..4),
        unique(6, opaque),
        unique(6, 1u16..0x0100),
        any::<bool>(),
        any::<bool>(),
        unique(4, 1u16..0x10),
        0usize..=32,
        any::<prop::sample::Index>(),
    )
        .prop_map(|(hello_version, cipher_suites, compression_methods, opaque, curves, sig, srtp, profiles, cookie, at)| {
            let mut extensions = opaque;
            let mut flagged = Vec::new();
            if !curves.is_empty() {
                flagged.push(SUPPORTED_GROUPS);
            }
            if sig {
                flagged.push(SIGNATURE_ALGORITHMS);
            }
            if srtp {
                flagged.push(USE_SRTP);
            }
            for code in flagged {
                let pos = at.index(extensions.len() + 1);
                extensions.insert(pos, code);
            }
            ClientHelloFeatures {
                hello_version,
                cipher_suites,
                compression_methods,
                extensions,
                elliptic_curves: curves,
                signature_algorithms_present: sig,
                use_srtp_present: srtp,
                srtp_profiles: if srtp { profiles } else { Vec::new() },
                cookie_length: cookie,
            }
        })
}

pub fn server_hello() -> impl Strategy<Value = ServerHelloFeatures> {
    let ecdhe: Vec<u16> = ecdhe_suites().collect();
    (version(), any::<u8>(), unique(6, any::<u16>()), prop::sample::select(ecdhe), any::<u16>(), proptest::option::of(1u16..0x0100))
        .prop_map(|(negotiated_version, chosen_compression, extensions, ecdhe_suite, other_suite, chosen_curve)| {
            ServerHelloFeatures {
                negotiated_version,
                chosen_cipher_suite: if chosen_curve.is_some() { ecdhe_suite } else { other_suite },
                chosen_compression,
                extensions,
                chosen_curve,
            }
        })
}

/// Years 1900..=2199 so both DER time forms show up.
pub fn certificate() -> impl Strategy<Value = CertificateFeatures> {
    let first = -2_208_988_800i64;
    let last = 7_258_118_399i64;
    (proptest::option::of("[ -~]{0,64}"), first..last, 0i64..(400 * 86_400))
        .prop_map(move |(cn, nb, span)| CertificateFeatures::new(cn, nb, (nb + span).min(last)))
}

pub fn stun_parts() -> impl Strategy<Value = (Method, Class, [u8; 12], Vec<StunAttribute>)> {
    let attr = (any::<u16>(), proptest::collection::vec(any::<u8>(), 0..48)).prop_map(|(t, v)| StunAttribute::new(t, v));
    (0u16..0x1000, 0u8..4, any::<[u8; 12]>(), proptest::collection::vec(attr, 0..10))
        .prop_map(|(m, c, txid, attrs)| (Method::from_code(m), Class::from_bits(c), txid, attrs))
}

/// The documented first-octet table, restated.
pub fn demux_oracle(p: &[u8]) -> PayloadClass {
    match p.first() {
        Some(0..=3) => {
            let valid = p.len() >= 20
                && p[4..8] == [0x21, 0x12, 0xa4, 0x42]
                && u16::from_be_bytes([p[2], p[3]]) as usize == p.len() - 20
                && (p.len() - 20).is_multiple_of(4);
            if valid {
                PayloadClass::Stun
            } else {
                PayloadClass::Other
            }
        }
        Some(20..=63) => PayloadClass::Dtls,
        Some(128..=191) => PayloadClass::Srtp,
        _ => PayloadClass::Other,
    }
}

/// Random bytes, sometimes dressed up with a plausible STUN header.
pub fn payload() -> impl Strategy<Value = Vec<u8>> {
    (any::<u8>(), proptest::collection::vec(any::<u8>(), 0..64), any::<bool>(), any::<bool>()).prop_map(
        |(first, mut rest, cookie, length)| {
            rest.insert(0, first);
            if rest.len() >= 20 && cookie {
                rest[4..8].copy_from_slice(&[0x21, 0x12, 0xa4, 0x42]);
            }
            if rest.len() >= 20 && length {
                let n = (rest.len() - 20) as u16;
                rest[2..4].copy_from_slice(&n.to_be_bytes());
            }
            rest
        },
    )
}

pub const T0: u64 = 1_459_500_000_000_000;

pub fn client() -> Endpoint {
    Endpoint::new(Ipv4Addr::new(192, 168, 1, 10).into(), 50_000)
}

pub fn server() -> Endpoint {
    Endpoint::new(Ipv4Addr::new(198, 51, 100, 7).into(), 3478)
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub cuts: Vec<usize>,
    pub order: Vec<usize>,
    pub copies: Vec<u8>,
    pub server_copies: u8,
}

pub fn plan() -> impl Strategy<Value = Plan> {
    (proptest::collection::vec(1usize..10_000, 0..8), any::<u64>(), proptest::collection::vec(0u8..3, 9), 0u8..3)
        .prop_map(|(cuts, seed, copies, server_copies)| {
            let mut order: Vec<usize> = (0..=cuts.len()).collect();
            let mut s = seed;
            for i in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            Plan { cuts, order, copies, server_copies }
        })
}

/// Cut points are given in ten-thousandths of the body length.
pub fn fragment_lengths(body_len: usize, cuts: &[usize]) -> Vec<usize> {
    let mut points: Vec<usize> = cuts.iter().map(|c| c * body_len / 10_000).filter(|p| *p > 0).collect();
    points.sort();
    points.dedup();
    points.push(body_len);
    let mut prev = 0;
    points.into_iter().map(|p| p - std::mem::replace(&mut prev, p)).collect()
}

pub fn frame(src: Endpoint, dst: Endpoint, ts: u64, payload: &[u8]) -> RawPacket {
    RawPacket {
        timestamp: Timestamp::from_micros(ts),
        link_type: LinkType::Ethernet,
        payload: udp_frame(src, dst, 0, payload).unwrap(),
    }
}

/// Fragmented, shuffled, network-duplicated ClientHello followed by a
/// normal server flight and cipher changes.
pub fn capture(hello: &ClientHelloFeatures, p: &Plan) -> Vec<RawPacket> {
    let body_len = encode_client_hello(hello).unwrap().len();
    let lengths = fragment_lengths(body_len, &p.cuts);
    let records = FlightBuilder::new().client_hello(hello, Some(&lengths), false).unwrap();
    let order: Vec<usize> = p.order.iter().copied().filter(|i| *i < records.len()).collect();

    let mut out = Vec::new();
    let mut ts = T0;
    for (n, i) in order.into_iter().enumerate() {
        for _ in 0..=p.copies[n % p.copies.len()] {
            out.push(frame(client(), server(), ts, &records[i]));
            ts += 1;
        }
    }
    let (sh, cert) = fixtures::facebook_server();
    let mut sb = FlightBuilder::new();
    let flight = sb.server_flight(&sh, Some(&cert)).unwrap();
    for _ in 0..=p.server_copies {
        out.push(frame(server(), client(), T0 + 1_000_000, &flight));
    }
    out.push(frame(client(), server(), T0 + 2_000_000, &FlightBuilder::new().change_cipher_spec()));
    out.push(frame(server(), client(), T0 + 3_000_000, &sb.change_cipher_spec()));
    out
}

pub fn analyze(packets: &[RawPacket]) -> Vec<FingerprintRecord> {
    let mut a = Analyzer::new(AnalyzerConfig { matching: false, ..Default::default() }, Vec::new());
    let mut events = Vec::new();
    for p in packets {
        a.process(p, &mut events);
    }
    a.finish(&mut events);
    events
        .into_iter()
        .filter_map(|e| match e {
            Event::Handshake { record, .. } => Some(record),
            Event::StunFlow { .. } => None,
        })
        .collect()
}

pub fn baseline(hello: &ClientHelloFeatures) -> Vec<FingerprintRecord> {
    analyze(&capture(hello, &Plan { cuts: vec![], order: vec![0], copies: vec![0], server_copies: 0 }))
}

