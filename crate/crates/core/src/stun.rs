//! STUN/TURN message parsing and per-flow STUN features.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::packet::{Direction, Endpoint, FlowKey};

pub const MAGIC_COOKIE: u32 = 0x2112_A442;
pub const HEADER_LEN: usize = 20;
pub const STUN_PORT: u16 = 3478;

pub const ATTR_MAPPED_ADDRESS: u16 = 0x0001;
pub const ATTR_USERNAME: u16 = 0x0006;
pub const ATTR_MESSAGE_INTEGRITY: u16 = 0x0008;
pub const ATTR_ERROR_CODE: u16 = 0x0009;
pub const ATTR_REALM: u16 = 0x0014;
pub const ATTR_NONCE: u16 = 0x0015;
pub const ATTR_XOR_MAPPED_ADDRESS: u16 = 0x0020;
pub const ATTR_SOFTWARE: u16 = 0x8022;
pub const ATTR_FINGERPRINT: u16 = 0x8028;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Binding,
    Allocate,
    Refresh,
    Send,
    Data,
    CreatePermission,
    ChannelBind,
    /// Any other 12-bit method code.
    Other(u16),
}

impl Method {
    pub fn from_code(code: u16) -> Method {
        match code {
            0x001 => Method::Binding,
            0x003 => Method::Allocate,
            0x004 => Method::Refresh,
            0x006 => Method::Send,
            0x007 => Method::Data,
            0x008 => Method::CreatePermission,
            0x009 => Method::ChannelBind,
            other => Method::Other(other & 0x0fff),
        }
    }

    pub fn code(self) -> u16 {
        match self {
            Method::Binding => 0x001,
            Method::Allocate => 0x003,
            Method::Refresh => 0x004,
            Method::Send => 0x006,
            Method::Data => 0x007,
            Method::CreatePermission => 0x008,
            Method::ChannelBind => 0x009,
            Method::Other(c) => c,
        }
    }

    /// Methods only a TURN relay would see.
    pub fn is_turn_relaying(self) -> bool {
        matches!(self, Method::Allocate | Method::CreatePermission | Method::Send)
    }

    pub fn name(self) -> String {
        match self {
            Method::Binding => "binding".into(),
            Method::Allocate => "allocate".into(),
            Method::Refresh => "refresh".into(),
            Method::Send => "send".into(),
            Method::Data => "data".into(),
            Method::CreatePermission => "create_permission".into(),
            Method::ChannelBind => "channel_bind".into(),
            Method::Other(c) => format!("other(0x{:03x})", c),
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        let m = match name {
            "binding" => Method::Binding,
            "allocate" => Method::Allocate,
            "refresh" => Method::Refresh,
            "send" => Method::Send,
            "data" => Method::Data,
            "create_permission" => Method::CreatePermission,
            "channel_bind" => Method::ChannelBind,
            other => {
                let hex = other.strip_prefix("other(0x")?.strip_suffix(')')?;
                Method::from_code(u16::from_str_radix(hex, 16).ok().filter(|c| *c <= 0x0fff)?)
            }
        };
        Some(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Class {
    Request,
    Indication,
    SuccessResponse,
    ErrorResponse,
}

impl Class {
    pub fn from_bits(bits: u8) -> Class {
        match bits & 0b11 {
            0b00 => Class::Request,
            0b01 => Class::Indication,
            0b10 => Class::SuccessResponse,
            _ => Class::ErrorResponse,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Request => "request",
            Class::Indication => "indication",
            Class::SuccessResponse => "success_response",
            Class::ErrorResponse => "error_response",
        }
    }

    pub fn from_name(name: &str) -> Option<Class> {
        [Class::Request, Class::Indication, Class::SuccessResponse, Class::ErrorResponse]
            .into_iter()
            .find(|c| c.name() == name)
    }
}

/// `method/class`, e.g. `binding/success_response`.
pub fn kind_name(method: Method, class: Class) -> String {
    format!("{}/{}", method.name(), class.name())
}

pub fn parse_kind_name(text: &str) -> Option<(Method, Class)> {
    let (m, c) = text.rsplit_once('/')?;
    Some((Method::from_name(m)?, Class::from_name(c)?))
}

/// Split a 14-bit message type into method code and class.
///
/// ```text
///  13 12 11 10 9 8 7 6 5 4 3 2 1 0
///  M11 ...  M7 C1 M6 M5 M4 C0 M3..M0
/// ```
pub fn split_message_type(message_type: u16) -> (Method, Class) {
    let method = (message_type & 0x000f)
        | ((message_type & 0x00e0) >> 1)
        | ((message_type & 0x3e00) >> 2);
    let class = (((message_type >> 7) & 0b10) | ((message_type >> 4) & 0b01)) as u8;
    (Method::from_code(method), Class::from_bits(class))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DecodedAttribute {
    Text(String),
    ErrorCode { code: u16, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StunAttribute {
    pub attr_type: u16,
    /// Value without padding.
    pub value: Vec<u8>,
    pub decoded: Option<DecodedAttribute>,
}

impl StunAttribute {
    pub fn new(attr_type: u16, value: Vec<u8>) -> Self {
        let decoded = decode_value(attr_type, &value);
        StunAttribute { attr_type, value, decoded }
    }

    pub fn text(&self) -> Option<&str> {
        match &self.decoded {
            Some(DecodedAttribute::Text(t)) => Some(t),
            _ => None,
        }
    }

    pub fn error_code(&self) -> Option<u16> {
        match &self.decoded {
            Some(DecodedAttribute::ErrorCode { code, .. }) => Some(*code),
            _ => None,
        }
    }
}

fn decode_value(attr_type: u16, value: &[u8]) -> Option<DecodedAttribute> {
    match attr_type {
        ATTR_SOFTWARE | ATTR_REALM | ATTR_USERNAME => {
            core::str::from_utf8(value).ok().map(|s| DecodedAttribute::Text(s.into()))
        }
        ATTR_ERROR_CODE if value.len() >= 4 => {
            let code = (value[2] & 0x07) as u16 * 100 + value[3] as u16;
            let reason = core::str::from_utf8(&value[4..]).ok()?;
            Some(DecodedAttribute::ErrorCode { code, reason: reason.into() })
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StunMessage {
    pub method: Method,
    pub class: Class,
    pub transaction_id: [u8; 12],
    pub attributes: Vec<StunAttribute>,
    pub message_length: u16,
}

impl StunMessage {
    pub fn attribute(&self, attr_type: u16) -> Option<&StunAttribute> {
        self.attributes.iter().find(|a| a.attr_type == attr_type)
    }

    pub fn attribute_order(&self) -> Vec<u16> {
        self.attributes.iter().map(|a| a.attr_type).collect()
    }
}

/// Why a payload is not a (modern) STUN message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StunReject {
    #[error("shorter than the 20-byte header")]
    TooShort,
    #[error("top two bits of the message type are set")]
    NotStun,
    #[error("magic cookie mismatch")]
    BadCookie,
    #[error("message length is not a multiple of 4")]
    UnalignedLength,
    #[error("message length disagrees with the datagram length")]
    LengthMismatch,
    #[error("attribute header truncated")]
    Truncated,
    #[error("attribute runs past the end of the message")]
    AttributeOverrun,
}

/// Header-only validation used by the demultiplexer.
pub fn check_header(payload: &[u8]) -> Result<u16, StunReject> {
    if payload.len() < HEADER_LEN {
        return Err(StunReject::TooShort);
    }
    if payload[0] & 0xc0 != 0 {
        return Err(StunReject::NotStun);
    }
    if u32::from_be_bytes([payload[4], payload[5], payload[6], payload[7]]) != MAGIC_COOKIE {
        return Err(StunReject::BadCookie);
    }
    let length = u16::from_be_bytes([payload[2], payload[3]]);
    if !length.is_multiple_of(4) {
        return Err(StunReject::UnalignedLength);
    }
    if length as usize != payload.len() - HEADER_LEN {
        return Err(StunReject::LengthMismatch);
    }
    Ok(length)
}

/// Parses one STUN message occupying the whole payload.
///
/// Attributes keep wire order; unknown types are kept numerically. A
/// rejection is a classification outcome, not an error condition.
pub fn parse_stun(payload: &[u8]) -> Result<StunMessage, StunReject> {
    let message_length = check_header(payload)?;
    let message_type = u16::from_be_bytes([payload[0], payload[1]]);
    let (method, class) = split_message_type(message_type);
    let mut transaction_id = [0u8; 12];
    transaction_id.copy_from_slice(&payload[8..20]);

    let mut attributes = Vec::new();
    let body = &payload[HEADER_LEN..];
    let mut offset = 0;
    while offset < body.len() {
        if body.len() - offset < 4 {
            return Err(StunReject::Truncated);
        }
        let attr_type = u16::from_be_bytes([body[offset], body[offset + 1]]);
        let len = u16::from_be_bytes([body[offset + 2], body[offset + 3]]) as usize;
        let padded = (len + 3) & !3;
        if offset + 4 + padded > body.len() {
            return Err(StunReject::AttributeOverrun);
        }
        let value = body[offset + 4..offset + 4 + len].to_vec();
        attributes.push(StunAttribute::new(attr_type, value));
        offset += 4 + padded;
    }

    Ok(StunMessage { method, class, transaction_id, attributes, message_length })
}

/// True when either side of the flow uses the registered STUN port.
/// Only an annotation: parsing never depends on it.
pub fn stun_port_heuristic(key: &FlowKey) -> bool {
    key.has_port(STUN_PORT)
}

/// Everything STUN tells us about one flow.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StunFlowFeatures {
    pub message_kinds: BTreeSet<(Method, Class)>,
    /// Attribute type order, kept per (method, class) message shape.
    pub attribute_orders: BTreeSet<(Method, Class, Vec<u16>)>,
    pub software_values: BTreeSet<String>,
    pub realm_values: BTreeSet<String>,
    pub username_values: BTreeSet<String>,
    pub error_codes: BTreeSet<u16>,
    pub server_endpoints: BTreeSet<Endpoint>,
    pub used_turn_relaying: bool,
}

impl StunFlowFeatures {
    pub fn is_empty(&self) -> bool {
        self.message_kinds.is_empty()
    }

    /// Merge one parsed message. `responder` is recorded as a server
    /// endpoint when the message travels initiator to responder.
    pub fn accumulate(&mut self, msg: &StunMessage, responder: Endpoint, direction: Direction) {
        self.message_kinds.insert((msg.method, msg.class));
        self.attribute_orders.insert((msg.method, msg.class, msg.attribute_order()));
        for attr in &msg.attributes {
            match (attr.attr_type, &attr.decoded) {
                (ATTR_SOFTWARE, Some(DecodedAttribute::Text(t))) => {
                    self.software_values.insert(t.clone());
                }
                (ATTR_REALM, Some(DecodedAttribute::Text(t))) => {
                    self.realm_values.insert(t.clone());
                }
                (ATTR_USERNAME, Some(DecodedAttribute::Text(t))) => {
                    self.username_values.insert(t.clone());
                }
                (ATTR_ERROR_CODE, Some(DecodedAttribute::ErrorCode { code, .. })) => {
                    self.error_codes.insert(*code);
                }
                _ => {}
            }
        }
        if direction == Direction::InitiatorToResponder {
            self.server_endpoints.insert(responder);
        }
        self.used_turn_relaying = self.message_kinds.iter().any(|(m, _)| m.is_turn_relaying());
    }

    /// Sorted `method/class` names.
    pub fn kind_names(&self) -> Vec<String> {
        self.message_kinds.iter().map(|(m, c)| kind_name(*m, *c)).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::net::{IpAddr, Ipv4Addr};
    use proptest::prelude::*;

    fn header(message_type: u16, length: u16) -> Vec<u8> {
        let mut p = Vec::new();
        p.extend_from_slice(&message_type.to_be_bytes());
        p.extend_from_slice(&length.to_be_bytes());
        p.extend_from_slice(&MAGIC_COOKIE.to_be_bytes());
        p.extend_from_slice(&[0xab; 12]);
        p
    }

    fn attr(p: &mut Vec<u8>, t: u16, v: &[u8]) {
        p.extend_from_slice(&t.to_be_bytes());
        p.extend_from_slice(&(v.len() as u16).to_be_bytes());
        p.extend_from_slice(v);
        while !p.len().is_multiple_of(4) {
            p.push(0);
        }
    }

    fn finish(mut p: Vec<u8>) -> Vec<u8> {
        let len = (p.len() - HEADER_LEN) as u16;
        p[2..4].copy_from_slice(&len.to_be_bytes());
        p
    }

    #[test]
    fn binding_request_type() {
        let m = parse_stun(&header(0x0001, 0)).unwrap();
        assert_eq!((m.method, m.class), (Method::Binding, Class::Request));
        assert_eq!(m.transaction_id, [0xab; 12]);
    }

    #[test]
    fn registry_message_types() {
        // (type, method, class) triples from the STUN/TURN method registries
        let table = [
            (0x0001, Method::Binding, Class::Request),
            (0x0101, Method::Binding, Class::SuccessResponse),
            (0x0111, Method::Binding, Class::ErrorResponse),
            (0x0011, Method::Binding, Class::Indication),
            (0x0003, Method::Allocate, Class::Request),
            (0x0103, Method::Allocate, Class::SuccessResponse),
            (0x0113, Method::Allocate, Class::ErrorResponse),
            (0x0004, Method::Refresh, Class::Request),
            (0x0016, Method::Send, Class::Indication),
            (0x0017, Method::Data, Class::Indication),
            (0x0008, Method::CreatePermission, Class::Request),
            (0x0108, Method::CreatePermission, Class::SuccessResponse),
            (0x0009, Method::ChannelBind, Class::Request),
        ];
        for (t, m, c) in table {
            assert_eq!(split_message_type(t), (m, c), "type {t:#06x}");
        }
        assert_eq!(split_message_type(0x3eef).0, Method::Other(0xfff));
    }

    #[test]
    fn allocate_error_401_with_realm_and_software() {
        let mut p = header(0x0113, 0);
        let mut err = vec![0, 0, 4, 1];
        err.extend_from_slice(b"Unauthorized");
        attr(&mut p, ATTR_ERROR_CODE, &err);
        attr(&mut p, ATTR_REALM, b"tokbox.com");
        attr(&mut p, ATTR_SOFTWARE, b"Citrix-3.2.5.1 'Marshal West'");
        let m = parse_stun(&finish(p)).unwrap();
        assert_eq!((m.method, m.class), (Method::Allocate, Class::ErrorResponse));
        assert_eq!(m.attribute(ATTR_ERROR_CODE).unwrap().error_code(), Some(401));
        assert_eq!(m.attribute(ATTR_REALM).unwrap().text(), Some("tokbox.com"));
        assert_eq!(
            m.attribute(ATTR_SOFTWARE).unwrap().text(),
            Some("Citrix-3.2.5.1 'Marshal West'")
        );
        assert_eq!(m.attribute_order(), vec![ATTR_ERROR_CODE, ATTR_REALM, ATTR_SOFTWARE]);
    }

    #[test]
    fn padding_is_not_part_of_value() {
        let mut p = header(0x0001, 0);
        attr(&mut p, 0x7777, &[1, 2, 3, 4, 5]);
        attr(&mut p, ATTR_FINGERPRINT, &[9, 9, 9, 9]);
        let m = parse_stun(&finish(p)).unwrap();
        assert_eq!(m.attributes[0].value, vec![1, 2, 3, 4, 5]);
        assert_eq!(m.attributes[0].decoded, None);
        assert_eq!(m.attributes[1].attr_type, ATTR_FINGERPRINT);
        assert_eq!(m.message_length, 20);
    }

    #[test]
    fn rejections() {
        assert_eq!(parse_stun(&[0; 19]), Err(StunReject::TooShort));
        let mut p = header(0x0001, 0);
        p[4] = 0;
        assert_eq!(parse_stun(&p), Err(StunReject::BadCookie));
        // classic RFC 3489 message: no cookie
        let mut classic = header(0x0001, 0);
        classic[4..8].copy_from_slice(&[1, 2, 3, 4]);
        assert_eq!(parse_stun(&classic), Err(StunReject::BadCookie));

        let mut p = header(0x0001, 2);
        p.extend_from_slice(&[0, 0]);
        assert_eq!(parse_stun(&p), Err(StunReject::UnalignedLength));

        let p = header(0x0001, 8);
        assert_eq!(parse_stun(&p), Err(StunReject::LengthMismatch));

        let mut p = header(0x0001, 0);
        p.extend_from_slice(&[0x80, 0x22, 0x00, 0x10, 0, 0, 0, 0]);
        assert_eq!(parse_stun(&finish(p)), Err(StunReject::AttributeOverrun));

        assert_eq!(parse_stun(&header(0xc001, 0)), Err(StunReject::NotStun));
    }

    #[test]
    fn port_heuristic() {
        let ip = IpAddr::V4(Ipv4Addr::LOCALHOST);
        let key = |a, b| FlowKey::new(Endpoint::new(ip, a), Endpoint::new(ip, b));
        assert!(stun_port_heuristic(&key(50000, 3478)));
        assert!(!stun_port_heuristic(&key(50000, 443)));
        assert!(stun_port_heuristic(&key(3478, 3478)));
    }

    fn msg(method: Method, class: Class, attrs: Vec<StunAttribute>) -> StunMessage {
        StunMessage { method, class, transaction_id: [0; 12], attributes: attrs, message_length: 0 }
    }

    fn server() -> Endpoint {
        Endpoint::new(IpAddr::V4(Ipv4Addr::new(74, 125, 0, 127)), 19302)
    }

    #[test]
    fn binding_only_flow_does_not_use_turn() {
        let mut f = StunFlowFeatures::default();
        f.accumulate(&msg(Method::Binding, Class::Request, vec![]), server(), Direction::InitiatorToResponder);
        f.accumulate(
            &msg(Method::Binding, Class::SuccessResponse, vec![]),
            server(),
            Direction::ResponderToInitiator,
        );
        assert_eq!(
            f.message_kinds.iter().copied().collect::<Vec<_>>(),
            vec![(Method::Binding, Class::Request), (Method::Binding, Class::SuccessResponse)]
        );
        assert!(!f.used_turn_relaying);
        assert_eq!(f.server_endpoints.len(), 1);
    }

    #[test]
    fn allocate_and_create_permission_mean_relaying() {
        let mut f = StunFlowFeatures::default();
        f.accumulate(&msg(Method::Allocate, Class::Request, vec![]), server(), Direction::InitiatorToResponder);
        assert!(f.used_turn_relaying);
        f.accumulate(
            &msg(Method::CreatePermission, Class::Request, vec![]),
            server(),
            Direction::InitiatorToResponder,
        );
        assert!(f.used_turn_relaying);
    }

    #[test]
    fn realm_and_errors_are_collected() {
        let mut f = StunFlowFeatures::default();
        let attrs = vec![
            StunAttribute::new(ATTR_ERROR_CODE, vec![0, 0, 4, 1]),
            StunAttribute::new(ATTR_REALM, b"tokbox.com".to_vec()),
            StunAttribute::new(ATTR_USERNAME, b"u1".to_vec()),
        ];
        f.accumulate(&msg(Method::Allocate, Class::ErrorResponse, attrs), server(), Direction::ResponderToInitiator);
        assert!(f.realm_values.contains("tokbox.com"));
        assert!(f.error_codes.contains(&401));
        assert!(f.username_values.contains("u1"));
        assert!(f.server_endpoints.is_empty());
    }

    #[test]
    fn kind_names_round_trip() {
        for (m, c) in [
            (Method::CreatePermission, Class::SuccessResponse),
            (Method::Other(0x0abc), Class::Indication),
        ] {
            assert_eq!(parse_kind_name(&kind_name(m, c)), Some((m, c)));
        }
        assert_eq!(parse_kind_name("bind/request"), None);
    }

    fn arb_msg() -> impl Strategy<Value = StunMessage> {
        (
            prop::sample::select(vec![
                Method::Binding,
                Method::Allocate,
                Method::CreatePermission,
                Method::Send,
                Method::Refresh,
            ]),
            0u8..4,
            prop::collection::vec(
                prop_oneof![
                    "[a-z ]{0,6}".prop_map(|s| StunAttribute::new(ATTR_SOFTWARE, s.into_bytes())),
                    "[a-z.]{0,6}".prop_map(|s| StunAttribute::new(ATTR_REALM, s.into_bytes())),
                    (3u8..7, 0u8..100)
                        .prop_map(|(c, n)| StunAttribute::new(ATTR_ERROR_CODE, vec![0, 0, c, n])),
                ],
                0..3,
            ),
        )
            .prop_map(|(m, c, attrs)| msg(m, Class::from_bits(c), attrs))
    }

    proptest! {
        #[test]
        fn accumulation_is_order_insensitive_and_monotone(msgs in prop::collection::vec(arb_msg(), 0..12)) {
            let mut forward = StunFlowFeatures::default();
            let mut prev_kinds = 0;
            for m in &msgs {
                forward.accumulate(m, server(), Direction::InitiatorToResponder);
                prop_assert!(forward.message_kinds.len() >= prev_kinds);
                prev_kinds = forward.message_kinds.len();
            }
            let mut backward = StunFlowFeatures::default();
            for m in msgs.iter().rev() {
                backward.accumulate(m, server(), Direction::InitiatorToResponder);
            }
            prop_assert_eq!(forward, backward);
        }
    }
}
