mod common;

use proptest::prelude::*;
use rtcfp_core::dtls::{parse_client_hello, parse_der_certificate, parse_records, HandshakeTracker};
use rtcfp_core::packet::Direction;
use rtcfp_core::stun::parse_stun;
use rtcfp_core::synth::dtls::{encode_client_hello, FlightBuilder};
use rtcfp_core::synth::{build_certificate, build_stun_message};

/// RFC 5389 figure 3, bit by bit.
fn oracle_message_type(method: u16, class: u8) -> u16 {
    let m = |bit: u16| (method >> bit) & 1;
    let c0 = u16::from(class & 1);
    let c1 = u16::from(class >> 1);
    let layout = [
        m(0), m(1), m(2), m(3), c0, m(4), m(5), m(6), c1, m(7), m(8), m(9), m(10), m(11),
    ];
    layout.iter().enumerate().map(|(bit, v)| v << bit).sum()
}

fn class_bits(c: rtcfp_core::stun::Class) -> u8 {
    use rtcfp_core::stun::Class::*;
    match c {
        Request => 0,
        Indication => 1,
        SuccessResponse => 2,
        ErrorResponse => 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn stun_messages((method, class, txid, attrs) in common::stun_parts()) {
        let wire = build_stun_message(method, class, txid, &attrs).unwrap();
        prop_assert_eq!(u16::from_be_bytes([wire[0], wire[1]]), oracle_message_type(method.code(), class_bits(class)));
        let padded: usize = attrs.iter().map(|a| 4 + a.value.len().div_ceil(4) * 4).sum();
        prop_assert_eq!(wire.len(), 20 + padded);

        let m = parse_stun(&wire).unwrap();
        prop_assert_eq!(m.method, method);
        prop_assert_eq!(m.class, class);
        prop_assert_eq!(m.transaction_id, txid);
        prop_assert_eq!(m.attributes, attrs);
    }

    #[test]
    fn client_hellos(f in common::client_hello()) {
        let body = encode_client_hello(&f).unwrap();
        prop_assert_eq!(parse_client_hello(&body).unwrap(), f);
    }

    #[test]
    fn client_hellos_through_records(f in common::client_hello()) {
        let mut t = HandshakeTracker::new();
        for datagram in FlightBuilder::new().client_hello(&f, None, false).unwrap() {
            for r in parse_records(&datagram).records {
                t.feed_record(&r, Direction::InitiatorToResponder);
            }
        }
        prop_assert_eq!(t.client_hello, Some(f));
    }

    #[test]
    fn server_hellos(s in common::server_hello()) {
        let mut t = HandshakeTracker::new();
        let hello = FlightBuilder::new().client_hello(&rtcfp_core::synth::fixtures::facebook_client(), None, false).unwrap();
        let flight = FlightBuilder::new().server_flight(&s, None).unwrap();
        for (datagram, dir) in hello.iter().map(|d| (d, Direction::InitiatorToResponder))
            .chain([(&flight, Direction::ResponderToInitiator)])
        {
            for r in parse_records(datagram).records {
                t.feed_record(&r, dir);
            }
        }
        prop_assert_eq!(t.server_hello, Some(s));
    }

    #[test]
    fn certificates(c in common::certificate()) {
        let der = build_certificate(c.subject_common_name.as_deref(), c.not_before, c.not_after).unwrap();
        let parsed = parse_der_certificate(&der).unwrap();
        prop_assert_eq!(&parsed, &c);
        prop_assert!((parsed.validity_days - (c.not_after - c.not_before) as f64 / 86_400.0).abs() < 1e-9);
    }
}

#[test]
fn message_type_oracle_matches_published_codes() {
    assert_eq!(oracle_message_type(0x001, 0), 0x0001);
    assert_eq!(oracle_message_type(0x001, 2), 0x0101);
    assert_eq!(oracle_message_type(0x003, 3), 0x0113);
    assert_eq!(oracle_message_type(0x006, 1), 0x0016);
    assert_eq!(oracle_message_type(0x008, 2), 0x0108);
}
