//! Per-flow DTLS handshake state: fragment reassembly, retransmission
//! handling and the established/alerted/failed outcome.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use super::cert::{parse_certificate_features, CertificateFeatures};
use super::hello::{
    parse_client_hello, parse_server_hello, parse_server_key_exchange_curve, ClientHelloFeatures,
    ServerHelloFeatures,
};
use super::record::{ContentType, DtlsRecord, HandshakeHeader, HandshakeType};
use super::{is_ecdhe_suite, is_known_version};
use crate::packet::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HandshakeState {
    #[default]
    Idle,
    ClientHelloSeen,
    ServerHelloSeen,
    Established,
    Alerted,
    Failed,
}

impl HandshakeState {
    pub fn is_terminal(self) -> bool {
        matches!(self, HandshakeState::Established | HandshakeState::Alerted | HandshakeState::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlertInfo {
    Plain { level: u8, description: u8 },
    /// Alert sent after the cipher change; contents unreadable.
    Encrypted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureReason {
    FragmentConflict,
    MalformedHello,
}

impl FailureReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::FragmentConflict => "fragment-conflict",
            FailureReason::MalformedHello => "malformed-hello",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackerEvent {
    ClientHello,
    ServerHello,
    Certificate,
    Established,
    Alerted,
    Failed(FailureReason),
}

#[derive(Debug, Clone)]
struct Coverage {
    covered: Vec<bool>,
    missing: usize,
}

impl Coverage {
    fn new(len: usize) -> Self {
        Coverage { covered: vec![false; len], missing: len }
    }

    fn mark(&mut self, offset: usize, len: usize) {
        for c in &mut self.covered[offset..offset + len] {
            if !*c {
                *c = true;
                self.missing -= 1;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Reassembly {
    body: Vec<u8>,
    coverage: Coverage,
    /// Record sequence numbers that carried the first copy.
    record_seqs: BTreeSet<u64>,
    /// Coverage of a second copy arriving in different records.
    resend: Option<Coverage>,
    delivered: bool,
}

impl Reassembly {
    fn new(total_length: usize) -> Self {
        Reassembly {
            body: vec![0; total_length],
            coverage: Coverage::new(total_length),
            record_seqs: BTreeSet::new(),
            resend: None,
            delivered: false,
        }
    }
}

enum Fragment {
    Pending,
    Complete(Vec<u8>),
    Duplicate,
    ResentCopy,
    Conflict,
}

/// Handshake tracker for one flow.
///
/// Handshake messages are reassembled per (direction, message_seq,
/// msg_type). Byte-identical copies of a record are dropped. A complete
/// second copy of a ClientHello carried by different records (the "same
/// hello, record sequence 0 then 1" pattern) sets
/// `duplicate_client_hello_anomaly` and never yields a second hello.
#[derive(Debug, Clone, Default)]
pub struct HandshakeTracker {
    pub state: HandshakeState,
    pub client_hello: Option<ClientHelloFeatures>,
    pub server_hello: Option<ServerHelloFeatures>,
    pub certificate: Option<CertificateFeatures>,
    pub certificate_error: bool,
    pub duplicate_client_hello_anomaly: bool,
    pub hello_verify_seen: bool,
    pub unknown_version: bool,
    pub alert: Option<AlertInfo>,
    pub failure: Option<FailureReason>,
    /// Handshake fragments dropped as structurally invalid.
    pub malformed_fragments: u32,
    pub client_direction: Option<Direction>,
    client_hello_seq: u16,
    ccs_directions: [bool; 2],
    encrypted_directions: [bool; 2],
    pending_key_exchange: Option<Vec<u8>>,
    buffers: BTreeMap<(Direction, u16, HandshakeType), Reassembly>,
}

impl HandshakeTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ccs_seen(&self, direction: Direction) -> bool {
        self.ccs_directions[direction.index()]
    }

    pub fn feed_record(&mut self, record: &DtlsRecord, direction: Direction) -> Vec<TrackerEvent> {
        let mut events = Vec::new();
        if self.state.is_terminal() {
            return events;
        }
        if !is_known_version(record.wire_version) {
            self.unknown_version = true;
        }

        if record.is_encrypted() {
            self.encrypted_directions[direction.index()] = true;
            if record.content_type == ContentType::Alert {
                self.finish_alert(AlertInfo::Encrypted, &mut events);
                return events;
            }
            self.check_established(&mut events);
            return events;
        }

        match record.content_type {
            ContentType::ChangeCipherSpec => {
                self.ccs_directions[direction.index()] = true;
                self.check_established(&mut events);
            }
            ContentType::Alert => {
                if let [level, description, ..] = record.fragment[..] {
                    self.finish_alert(AlertInfo::Plain { level, description }, &mut events);
                } else {
                    self.malformed_fragments += 1;
                }
            }
            ContentType::Handshake => {
                let mut data = record.fragment.as_slice();
                while !data.is_empty() && !self.state.is_terminal() {
                    let Some((header, bytes, rest)) = HandshakeHeader::parse(data) else {
                        self.malformed_fragments += 1;
                        break;
                    };
                    data = rest;
                    self.feed_fragment(&header, bytes, record.sequence_number, direction, &mut events);
                }
            }
            ContentType::ApplicationData | ContentType::Other(_) => {}
        }
        events
    }

    fn finish_alert(&mut self, alert: AlertInfo, events: &mut Vec<TrackerEvent>) {
        self.alert = Some(alert);
        self.state = HandshakeState::Alerted;
        events.push(TrackerEvent::Alerted);
    }

    fn fail(&mut self, reason: FailureReason, events: &mut Vec<TrackerEvent>) {
        self.failure = Some(reason);
        self.state = HandshakeState::Failed;
        events.push(TrackerEvent::Failed(reason));
    }

    fn check_established(&mut self, events: &mut Vec<TrackerEvent>) {
        let both = |d: [bool; 2]| d[0] && d[1];
        if both(self.ccs_directions) || both(self.encrypted_directions) {
            self.state = HandshakeState::Established;
            events.push(TrackerEvent::Established);
        }
    }

    fn feed_fragment(
        &mut self,
        header: &HandshakeHeader,
        bytes: &[u8],
        record_seq: u64,
        direction: Direction,
        events: &mut Vec<TrackerEvent>,
    ) {
        let key = (direction, header.message_seq, header.msg_type);
        let buf = self.buffers.entry(key).or_insert_with(|| Reassembly::new(header.total_length));
        match absorb(buf, header, bytes, record_seq) {
            Fragment::Pending | Fragment::Duplicate => {}
            Fragment::Conflict => self.fail(FailureReason::FragmentConflict, events),
            Fragment::ResentCopy => {
                if header.msg_type == HandshakeType::ClientHello {
                    self.duplicate_client_hello_anomaly = true;
                }
            }
            Fragment::Complete(body) => {
                self.deliver(header.msg_type, header.message_seq, &body, direction, events)
            }
        }
    }

    fn deliver(
        &mut self,
        msg_type: HandshakeType,
        message_seq: u16,
        body: &[u8],
        direction: Direction,
        events: &mut Vec<TrackerEvent>,
    ) {
        match msg_type {
            HandshakeType::ClientHello => {
                let features = match parse_client_hello(body) {
                    Ok(f) => f,
                    Err(_) => return self.fail(FailureReason::MalformedHello, events),
                };
                if !is_known_version(features.hello_version) {
                    self.unknown_version = true;
                }
                match self.client_hello {
                    // a later hello (after HelloVerifyRequest) supersedes
                    Some(_) if message_seq > self.client_hello_seq => {
                        self.client_hello = Some(features);
                        self.client_hello_seq = message_seq;
                    }
                    Some(_) => {}
                    None => {
                        self.client_hello = Some(features);
                        self.client_hello_seq = message_seq;
                        self.client_direction = Some(direction);
                        if self.state == HandshakeState::Idle {
                            self.state = HandshakeState::ClientHelloSeen;
                        }
                        events.push(TrackerEvent::ClientHello);
                    }
                }
            }
            HandshakeType::HelloVerifyRequest => self.hello_verify_seen = true,
            HandshakeType::ServerHello if self.is_from_server(direction) => {
                let mut features = match parse_server_hello(body) {
                    Ok(f) => f,
                    Err(_) => return self.fail(FailureReason::MalformedHello, events),
                };
                if !is_known_version(features.negotiated_version) {
                    self.unknown_version = true;
                }
                if let Some(ske) = self.pending_key_exchange.take() {
                    features.chosen_curve = curve_for(features.chosen_cipher_suite, &ske);
                }
                if self.server_hello.is_none() {
                    self.server_hello = Some(features);
                    if matches!(self.state, HandshakeState::Idle | HandshakeState::ClientHelloSeen) {
                        self.state = HandshakeState::ServerHelloSeen;
                    }
                    events.push(TrackerEvent::ServerHello);
                }
            }
            HandshakeType::Certificate if self.is_from_server(direction) && self.certificate.is_none() => {
                match parse_certificate_features(body) {
                    Ok(cert) => {
                        self.certificate = Some(cert);
                        events.push(TrackerEvent::Certificate);
                    }
                    Err(_) => self.certificate_error = true,
                }
            }
            HandshakeType::ServerKeyExchange if self.is_from_server(direction) => match &mut self.server_hello {
                Some(sh) => sh.chosen_curve = curve_for(sh.chosen_cipher_suite, body),
                None => self.pending_key_exchange = Some(body.to_vec()),
            },
            _ => {}
        }
    }

    fn is_from_server(&self, direction: Direction) -> bool {
        self.client_direction != Some(direction)
    }
}

fn curve_for(suite: u16, ske: &[u8]) -> Option<u16> {
    if is_ecdhe_suite(suite) {
        parse_server_key_exchange_curve(ske)
    } else {
        None
    }
}

fn absorb(buf: &mut Reassembly, header: &HandshakeHeader, bytes: &[u8], record_seq: u64) -> Fragment {
    if header.total_length != buf.body.len() {
        return Fragment::Conflict;
    }
    let range = header.fragment_offset..header.fragment_offset + header.fragment_length;
    let overlap_conflict = buf.body[range.clone()]
        .iter()
        .zip(&buf.coverage.covered[range.clone()])
        .zip(bytes)
        .any(|((have, covered), new)| *covered && have != new);
    if overlap_conflict {
        return Fragment::Conflict;
    }

    if buf.delivered {
        if buf.record_seqs.contains(&record_seq) {
            return Fragment::Duplicate;
        }
        let len = buf.body.len();
        let resend = buf.resend.get_or_insert_with(|| Coverage::new(len));
        let was_missing = resend.missing;
        resend.mark(header.fragment_offset, header.fragment_length);
        return if resend.missing == 0 && was_missing > 0 {
            Fragment::ResentCopy
        } else {
            Fragment::Duplicate
        };
    }

    buf.body[range].copy_from_slice(bytes);
    buf.coverage.mark(header.fragment_offset, header.fragment_length);
    buf.record_seqs.insert(record_seq);
    if buf.coverage.missing == 0 {
        buf.delivered = true;
        Fragment::Complete(buf.body.clone())
    } else {
        Fragment::Pending
    }
}
