//! Wire-format builders for synthetic WebRTC traffic.
//!
//! These serialize feature sets back into STUN messages, DTLS records,
//! DER certificates and Ethernet frames. They are written separately from
//! the parsers so that parse-after-build checks are meaningful.

pub mod cert;
pub mod dtls;
pub mod fixtures;
pub mod frame;
pub mod stun;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dtls::{CertificateFeatures, ClientHelloFeatures, ServerHelloFeatures};
use crate::packet::{Direction, Endpoint};
use crate::stun::{Class, Method, StunAttribute};
use crate::time::Timestamp;

pub use self::cert::build_certificate;
pub use self::dtls::{build_client_hello, FlightBuilder};
pub use self::stun::build_stun_message;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SynthError {
    #[error("fragment plan does not cover the {body_len}-byte message exactly")]
    InvalidFragmentPlan { body_len: usize },
    #[error("feature set cannot be encoded: {0}")]
    Inconsistent(&'static str),
    #[error("{0} exceeds its length field")]
    TooLong(&'static str),
    #[error("common name longer than {max} bytes")]
    CommonNameTooLong { max: usize },
    #[error("notBefore is after notAfter")]
    InvertedValidity,
    #[error("time outside years 1..=9999")]
    TimeOutOfRange,
    #[error("event {index} goes back in time")]
    UnorderedTimeline { index: usize },
    #[error("event {index} names an unknown flow")]
    UnknownFlow { index: usize },
    #[error("flow endpoints mix IPv4 and IPv6")]
    AddressFamilyMismatch,
}

/// What one timeline event puts on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum PayloadSpec {
    Stun { method: Method, class: Class, transaction_id: [u8; 12], attributes: Vec<StunAttribute> },
    ClientHello { features: ClientHelloFeatures, fragment_plan: Option<Vec<usize>>, duplicate: bool },
    HelloVerifyRequest { cookie_length: usize },
    ServerFlight { server: ServerHelloFeatures, certificate: Option<CertificateFeatures> },
    /// ChangeCipherSpec followed by an encrypted Finished.
    ChangeCipherSpec,
    Alert { level: u8, description: u8 },
    ApplicationData { length: usize },
    Srtp { length: usize },
    Raw(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFlow {
    pub name: String,
    pub initiator: Endpoint,
    pub responder: Endpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEvent {
    pub timestamp: Timestamp,
    pub flow: usize,
    pub direction: Direction,
    pub payload: PayloadSpec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthScenario {
    pub flows: Vec<SynthFlow>,
    /// One timeline for the whole scenario, non-decreasing in time.
    pub events: Vec<SynthEvent>,
}

/// One Ethernet frame ready for a capture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPacket {
    pub timestamp: Timestamp,
    pub frame: Vec<u8>,
}

#[derive(Default)]
struct Side {
    dtls: FlightBuilder,
    rtp_seq: u16,
}

/// Renders a scenario into Ethernet frames in timeline order.
pub fn render(scenario: &SynthScenario) -> Result<Vec<SynthPacket>, SynthError> {
    let mut sides: Vec<[Side; 2]> = scenario.flows.iter().map(|_| Default::default()).collect();
    let mut packets = Vec::new();
    let mut last = Timestamp::default();
    let mut ip_id: u16 = 1;

    for (index, event) in scenario.events.iter().enumerate() {
        if event.timestamp < last {
            return Err(SynthError::UnorderedTimeline { index });
        }
        last = event.timestamp;
        let flow = scenario.flows.get(event.flow).ok_or(SynthError::UnknownFlow { index })?;
        let (src, dst) = match event.direction {
            Direction::InitiatorToResponder => (flow.initiator, flow.responder),
            Direction::ResponderToInitiator => (flow.responder, flow.initiator),
        };
        let side = &mut sides[event.flow][event.direction.index()];

        let datagrams = match &event.payload {
            PayloadSpec::Stun { method, class, transaction_id, attributes } => {
                vec![build_stun_message(*method, *class, *transaction_id, attributes)?]
            }
            PayloadSpec::ClientHello { features, fragment_plan, duplicate } => {
                side.dtls.client_hello(features, fragment_plan.as_deref(), *duplicate)?
            }
            PayloadSpec::HelloVerifyRequest { cookie_length } => {
                vec![side.dtls.hello_verify_request(*cookie_length)?]
            }
            PayloadSpec::ServerFlight { server, certificate } => {
                vec![side.dtls.server_flight(server, certificate.as_ref())?]
            }
            PayloadSpec::ChangeCipherSpec => vec![side.dtls.change_cipher_spec()],
            PayloadSpec::Alert { level, description } => vec![side.dtls.alert(*level, *description)],
            PayloadSpec::ApplicationData { length } => vec![side.dtls.application_data(*length)?],
            PayloadSpec::Srtp { length } => {
                side.rtp_seq = side.rtp_seq.wrapping_add(1);
                vec![srtp_dummy(side.rtp_seq, *length)]
            }
            PayloadSpec::Raw(bytes) => vec![bytes.clone()],
        };

        for payload in datagrams {
            let frame = frame::udp_frame(src, dst, ip_id, &payload)?;
            ip_id = ip_id.wrapping_add(1);
            packets.push(SynthPacket { timestamp: event.timestamp, frame });
        }
    }
    Ok(packets)
}

/// RTP version 2 header (payload type 96) followed by zero bytes.
fn srtp_dummy(seq: u16, length: usize) -> Vec<u8> {
    let mut p = vec![0x80, 0x60];
    p.extend_from_slice(&seq.to_be_bytes());
    p.extend_from_slice(&(seq as u32 * 960).to_be_bytes());
    p.extend_from_slice(&0x5eed_0001u32.to_be_bytes());
    p.resize(12 + length, 0);
    p
}
