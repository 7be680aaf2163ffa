//! The packet-to-event pipeline: decapsulate, demux, track, finalize.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::demux::{classify_payload, PayloadClass};
use crate::dtls::{is_known_version, parse_records, HandshakeState};
use crate::fingerprint::{
    canonicalize_client, canonicalize_server, match_fingerprint, Anomaly, FingerprintRecord, KnownAppEntry,
    MatchResult, Observation, Outcome, StunFlowRecord, DEFAULT_MATCH_THRESHOLD,
};
use crate::flow::{FlowState, FlowTable};
use crate::packet::{decapsulate, DropReason, RawPacket};
use crate::stun::parse_stun;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzerConfig {
    pub idle_timeout_micros: u64,
    /// Emit a [`StunFlowRecord`] for STUN-bearing flows without a logged
    /// handshake.
    pub emit_stun_flows: bool,
    /// Classify records against the database.
    pub matching: bool,
    pub match_threshold: f64,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            idle_timeout_micros: 600_000_000,
            emit_stun_flows: false,
            matching: true,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Handshake { record: FingerprintRecord, matched: Option<MatchResult> },
    StunFlow { record: StunFlowRecord, matched: Option<MatchResult> },
}

impl Event {
    pub fn matched(&self) -> Option<&MatchResult> {
        match self {
            Event::Handshake { matched, .. } | Event::StunFlow { matched, .. } => matched.as_ref(),
        }
    }
}

/// Counters. `packets_read == packets_decapsulated + drops.iter().sum()`
/// holds at every point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnalyzerStats {
    pub packets_read: u64,
    pub packets_decapsulated: u64,
    /// Indexed like [`DropReason::ALL`].
    pub drops: [u64; 6],
    /// Indexed like [`PayloadClass::ALL`].
    pub payloads: [u64; 4],
    pub flows: u64,
    pub out_of_order_timestamps: u64,
    pub stun_rejects: u64,
    pub malformed_record_tails: u64,
    pub handshakes_logged: u64,
    pub failed_handshakes: u64,
    /// Flows that saw DTLS but neither finished nor failed.
    pub incomplete_handshakes: u64,
}

impl AnalyzerStats {
    pub fn drops_for(&self, reason: DropReason) -> u64 {
        self.drops[reason.index()]
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.iter().sum()
    }
}

pub struct Analyzer {
    config: AnalyzerConfig,
    db: Vec<KnownAppEntry>,
    flows: FlowTable,
    clock: Option<Timestamp>,
    stats: AnalyzerStats,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig, db: Vec<KnownAppEntry>) -> Self {
        Analyzer { config, db, flows: FlowTable::new(), clock: None, stats: AnalyzerStats::default() }
    }

    pub fn stats(&self) -> &AnalyzerStats {
        &self.stats
    }

    pub fn flow_table(&self) -> &FlowTable {
        &self.flows
    }

    pub fn process(&mut self, packet: &RawPacket, out: &mut Vec<Event>) {
        self.stats.packets_read += 1;
        let now = match self.clock {
            Some(clock) if packet.timestamp < clock => {
                self.stats.out_of_order_timestamps += 1;
                clock
            }
            _ => packet.timestamp,
        };
        self.clock = Some(now);
        for flow in self.flows.evict_idle(now, self.config.idle_timeout_micros) {
            self.finalize(flow, out);
        }

        let datagram = match decapsulate(packet) {
            Ok(d) => d,
            Err(reason) => {
                self.stats.drops[reason.index()] += 1;
                return;
            }
        };
        self.stats.packets_decapsulated += 1;

        let (flow, created) = self.flows.flow_of(datagram.key, datagram.src, packet.timestamp);
        if created {
            self.stats.flows += 1;
        }
        let direction = flow.direction_of(datagram.src);
        let class = classify_payload(datagram.payload);
        self.stats.payloads[class as usize] += 1;
        flow.update_channels(class);

        match class {
            PayloadClass::Stun => match parse_stun(datagram.payload) {
                Ok(msg) => {
                    let responder = flow.responder();
                    flow.stun.accumulate(&msg, responder, direction);
                }
                Err(_) => self.stats.stun_rejects += 1,
            },
            PayloadClass::Dtls => {
                flow.first_dtls.get_or_insert(packet.timestamp);
                let batch = parse_records(datagram.payload);
                if batch.malformed_tail > 0 {
                    flow.malformed_tail = true;
                    self.stats.malformed_record_tails += u64::from(batch.malformed_tail);
                }
                for record in &batch.records {
                    flow.tracker.feed_record(record, direction);
                }
            }
            PayloadClass::Srtp | PayloadClass::Other => {}
        }
    }

    /// Finalizes every remaining flow, oldest `last_seen` first.
    pub fn finish(&mut self, out: &mut Vec<Event>) {
        for flow in self.flows.drain() {
            self.finalize(flow, out);
        }
    }

    fn classify(&self, obs: Observation) -> Option<MatchResult> {
        self.config.matching.then(|| match_fingerprint(&obs, &self.db, self.config.match_threshold))
    }

    fn finalize(&mut self, flow: FlowState, out: &mut Vec<Event>) {
        if let Some(record) = handshake_record(&flow) {
            self.stats.handshakes_logged += 1;
            let matched = self.classify(Observation::from_handshake(&record));
            out.push(Event::Handshake { record, matched });
            return;
        }
        match flow.tracker.state {
            HandshakeState::Failed => self.stats.failed_handshakes += 1,
            _ if flow.first_dtls.is_some() => self.stats.incomplete_handshakes += 1,
            _ => {}
        }
        if self.config.emit_stun_flows && !flow.stun.is_empty() {
            let record = StunFlowRecord {
                timestamp: flow.first_seen,
                flow_uid: flow.uid,
                key: flow.key,
                stun: flow.stun,
                channels: flow.channels,
            };
            let matched = self.classify(Observation::from_stun_flow(&record));
            out.push(Event::StunFlow { record, matched });
        }
    }
}

/// Established or alerted handshakes with a ClientHello become records;
/// anything else is only counted.
fn handshake_record(flow: &FlowState) -> Option<FingerprintRecord> {
    let t = &flow.tracker;
    let outcome = match t.state {
        HandshakeState::Established => Outcome::Established,
        HandshakeState::Alerted => Outcome::Alerted,
        _ => return None,
    };
    let client = t.client_hello.clone()?;
    let mut anomalies = BTreeSet::new();
    if t.duplicate_client_hello_anomaly {
        anomalies.insert(Anomaly::DuplicateClientHello);
    }
    if t.server_hello.as_ref().is_some_and(|s| s.negotiated_version != client.hello_version) {
        anomalies.insert(Anomaly::VersionMismatch);
    }
    if flow.malformed_tail {
        anomalies.insert(Anomaly::MalformedTail);
    }
    if t.unknown_version || !is_known_version(client.hello_version) {
        anomalies.insert(Anomaly::UnknownVersion);
    }
    Some(FingerprintRecord {
        timestamp: flow.first_dtls.unwrap_or(flow.first_seen),
        flow_uid: flow.uid.clone(),
        key: flow.key,
        client_fp: canonicalize_client(&client),
        server_fp: t.server_hello.as_ref().map(|s| canonicalize_server(s, t.certificate.as_ref())),
        client_features: client,
        server_features: t.server_hello.clone(),
        certificate: t.certificate.clone(),
        stun_summary: (!flow.stun.is_empty()).then(|| flow.stun.clone()),
        channels: flow.channels,
        outcome,
        alert: t.alert,
        anomalies,
    })
}
